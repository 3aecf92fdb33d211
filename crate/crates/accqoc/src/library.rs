//! Persistent pulse library.
//!
//! Precompilation pools the groups of a profiling corpus, deduplicates them,
//! and synthesizes one pulse per distinct unitary with similarity-ordered
//! warm starts spread over k workers. Dynamic compilation looks every group
//! up in the library and synthesizes only the misses, again warm-started
//! along a similarity spanning tree, then inserts them for future runs.

use crate::circuit::Circuit;
use crate::config::Config;
use crate::grouping::{canonical_form, dedup, GateGroup, GroupedProgram};
use crate::latency::{
    gate_based_latency, group_start_times, overall_latency, GateLatencyTable,
};
use crate::qoc::{
    binary_search_latency, ControlModel, GradientMode, OptBudget, WarmStart,
};
use crate::unitary::SimilarityFn;
use crate::{CMat, Error, Result, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseEntry {
    pub key: String,
    pub dim: usize,
    /// Step count; duration is steps * dt_ns.
    pub steps: usize,
    /// Step length of this entry (hot groups may use a finer grid).
    pub dt_ns: f64,
    pub num_controls: usize,
    /// Step-major amplitudes, empty for tombstones.
    pub amps: Vec<f64>,
    pub infidelity: f64,
    /// Occurrences observed when the entry was created.
    pub frequency: usize,
    /// Optimizer iterations spent on this entry.
    pub iterations: usize,
    /// Canonical target matrix, row-major re/im pairs.
    pub canonical: Vec<f64>,
    /// Tombstone: synthesis failed up to the duration cap.
    pub infeasible: bool,
    /// Program the class was first seen in, if known.
    pub source_program: Option<String>,
}

impl PulseEntry {
    pub fn duration_ns(&self) -> f64 {
        self.steps as f64 * self.dt_ns
    }

    pub fn canonical_matrix(&self) -> CMat {
        vec_to_cmat(&self.canonical, self.dim)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PulseLibrary {
    pub model_fingerprint: String,
    pub policy: String,
    pub similarity: String,
    /// Sorted by (dim, key) for reproducible files.
    pub entries: Vec<PulseEntry>,
    /// Wall-clock creation time; the only field allowed to differ between
    /// reproduced runs.
    pub created_unix: u64,
}

fn cmat_to_vec(m: &CMat) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m.len());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)].re);
            out.push(m[(r, c)].im);
        }
    }
    out
}

fn vec_to_cmat(v: &[f64], dim: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let i = 2 * (r * dim + c);
            m[(r, c)] = C64::new(v[i], v[i + 1]);
        }
    }
    m
}

impl PulseLibrary {
    pub fn new(cfg: &Config, policy: &str, similarity: SimilarityFn) -> PulseLibrary {
        PulseLibrary {
            model_fingerprint: cfg.model_fingerprint(),
            policy: policy.to_string(),
            similarity: similarity.label().to_string(),
            entries: Vec::new(),
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<PulseLibrary> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn check_model(&self, cfg: &Config) -> Result<()> {
        let current = cfg.model_fingerprint();
        if self.model_fingerprint != current {
            return Err(Error::ModelMismatch {
                library: self.model_fingerprint.clone(),
                current,
            });
        }
        Ok(())
    }

    pub fn check_policy(&self, label: &str) -> Result<()> {
        if self.policy != label {
            return Err(Error::PolicyMismatch {
                library: self.policy.clone(),
                program: label.to_string(),
            });
        }
        Ok(())
    }

    /// Look a group unitary up: exact canonical key first, then a tolerance
    /// scan against stored canonical matrices (covers rounding drift across
    /// runs).
    pub fn lookup(&self, m: &CMat) -> Option<&PulseEntry> {
        let (canon, key) = canonical_form(m);
        if let Some(e) = self.entries.iter().find(|e| e.key == key.0) {
            return Some(e);
        }
        self.entries
            .iter()
            .filter(|e| e.dim == m.nrows())
            .find(|e| crate::grouping::groups_equivalent(&e.canonical_matrix(), &canon))
    }

    fn sort_entries(&mut self) {
        self.entries.sort_by(|a, b| a.dim.cmp(&b.dim).then(a.key.cmp(&b.key)));
    }

    /// Serialized form with the timestamp zeroed, for reproducibility
    /// comparisons.
    pub fn stable_json(&self) -> String {
        let mut copy = self.clone();
        copy.created_unix = 0;
        serde_json::to_string_pretty(&copy).expect("library serializes")
    }
}

/// One synthesized class.
#[derive(Debug, Clone)]
struct ClassSynth {
    steps: usize,
    amps: Vec<f64>,
    infidelity: f64,
    iterations: usize,
    infeasible: bool,
}

pub struct SynthOptions {
    pub similarity: SimilarityFn,
    pub workers: usize,
    pub alpha: f64,
    pub budget: OptBudget,
    pub seed: u64,
    pub mode: GradientMode,
}

/// Synthesize pulses for canonical targets, warm-started along a similarity
/// MST and parallelized over tree parts. Output is index-parallel to input.
fn synthesize_targets(
    targets: &[(String, CMat)],
    cfg: &Config,
    opts: &SynthOptions,
) -> Result<Vec<ClassSynth>> {
    let mut out: Vec<Option<ClassSynth>> = vec![None; targets.len()];
    for dim in [2usize, 4] {
        let idx: Vec<usize> = (0..targets.len())
            .filter(|&i| targets[i].1.nrows() == dim)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let mats: Vec<CMat> = idx.iter().map(|&i| targets[i].1.clone()).collect();
        let graph = crate::scheduler::build_graph(&mats, opts.similarity);
        let plan = crate::scheduler::plan(&graph.weights, opts.workers, opts.alpha)?;
        // vertices per part, kept in global compile order
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); plan.num_parts];
        for &v in &plan.order {
            parts[plan.part_of[v]].push(v);
        }
        let model = ControlModel::<f64>::for_dim(dim, cfg);
        let results: Vec<Vec<(usize, Result<ClassSynth>)>> = parts
            .par_iter()
            .map(|vertices| {
                let mut done: HashMap<usize, WarmStart<f64>> = HashMap::new();
                let mut acc = Vec::with_capacity(vertices.len());
                for &v in vertices {
                    let ti = idx[v - 1];
                    let donor = plan.donor[v].and_then(|d| done.get(&d));
                    let r = binary_search_latency(
                        &model,
                        &targets[ti].1,
                        &opts.budget,
                        opts.seed.wrapping_add(ti as u64),
                        donor,
                        opts.mode,
                        &targets[ti].0,
                    );
                    let synth = match r {
                        Ok(o) => {
                            done.insert(
                                v,
                                WarmStart { amps: o.amps.clone(), steps: o.steps },
                            );
                            Ok(ClassSynth {
                                steps: o.steps,
                                amps: o.amps,
                                infidelity: o.infidelity,
                                iterations: o.iterations_total,
                                infeasible: false,
                            })
                        }
                        Err(Error::Infeasible { .. }) => Ok(ClassSynth {
                            steps: 0,
                            amps: Vec::new(),
                            infidelity: 1.0,
                            iterations: 0,
                            infeasible: true,
                        }),
                        Err(e) => Err(e),
                    };
                    acc.push((ti, synth));
                }
                acc
            })
            .collect();
        for part in results {
            for (ti, r) in part {
                out[ti] = Some(r?);
            }
        }
    }
    Ok(out.into_iter().map(|o| o.expect("all targets synthesized")).collect())
}

/// Build a library from grouped profiling programs.
pub fn precompile(
    programs: &[(String, GroupedProgram)],
    policy_label: &str,
    cfg: &Config,
    opts: &SynthOptions,
) -> Result<PulseLibrary> {
    if programs.is_empty() {
        return Err(Error::EmptyCorpus("no profiling programs".into()));
    }
    let mut pooled: Vec<GateGroup> = Vec::new();
    let mut source: Vec<String> = Vec::new();
    for (name, p) in programs {
        for g in &p.groups {
            pooled.push(g.clone());
            source.push(name.clone());
        }
    }
    let d = dedup(&pooled);
    let mut freq = vec![0usize; d.unique.len()];
    for &c in &d.class_of {
        freq[c] += 1;
    }
    let targets: Vec<(String, CMat)> = d
        .keys
        .iter()
        .zip(&d.canonical)
        .map(|(k, m)| (k.0.clone(), m.clone()))
        .collect();
    let synths = synthesize_targets(&targets, cfg, opts)?;

    let mut lib = PulseLibrary::new(cfg, policy_label, opts.similarity);
    for (c, s) in synths.into_iter().enumerate() {
        let dim = d.canonical[c].nrows();
        lib.entries.push(PulseEntry {
            key: d.keys[c].0.clone(),
            dim,
            steps: s.steps,
            dt_ns: cfg.dt_ns,
            num_controls: if dim == 2 { 2 } else { 5 },
            amps: s.amps,
            infidelity: s.infidelity,
            frequency: freq[c],
            iterations: s.iterations,
            canonical: cmat_to_vec(&d.canonical[c]),
            infeasible: s.infeasible,
            source_program: Some(source[d.unique[c]].clone()),
        });
    }
    lib.sort_entries();
    Ok(lib)
}

/// Fraction of a program's groups whose pulse is already in the library.
/// `unique` counts distinct unitaries instead of group instances.
pub fn coverage(lib: &PulseLibrary, groups: &[GateGroup], unique: bool) -> f64 {
    if groups.is_empty() {
        return 1.0;
    }
    let d = dedup(groups);
    let class_hit: Vec<bool> = d
        .canonical
        .iter()
        .map(|m| lib.lookup(m).map_or(false, |e| !e.infeasible))
        .collect();
    if unique {
        let hits = class_hit.iter().filter(|&&h| h).count();
        hits as f64 / class_hit.len() as f64
    } else {
        let hits = d.class_of.iter().filter(|&&c| class_hit[c]).count();
        hits as f64 / groups.len() as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleItem {
    pub group: usize,
    pub key: String,
    pub start_ns: f64,
    pub duration_ns: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompiledProgram {
    pub items: Vec<ScheduleItem>,
    pub pulse_latency_ns: f64,
    pub gate_latency_ns: f64,
    /// Optimizer iterations spent on cache misses.
    pub iterations: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
}

/// Compile a grouped program against the library: reuse cached pulses,
/// synthesize the misses with similarity warm starts, and insert them.
/// Fails with `Infeasible` when any needed group cannot be realized.
pub fn compile_program(
    lib: &mut PulseLibrary,
    grouped: &GroupedProgram,
    cfg: &Config,
    opts: &SynthOptions,
) -> Result<CompiledProgram> {
    let d = dedup(&grouped.groups);
    let mut class_entry: Vec<Option<usize>> = Vec::with_capacity(d.unique.len());
    for m in &d.canonical {
        let pos = lib
            .lookup(m)
            .map(|e| lib.entries.iter().position(|x| std::ptr::eq(x, e)).unwrap());
        class_entry.push(pos);
    }
    let misses: Vec<usize> =
        (0..d.unique.len()).filter(|&c| class_entry[c].is_none()).collect();
    let mut iterations = 0usize;
    if !misses.is_empty() {
        let targets: Vec<(String, CMat)> = misses
            .iter()
            .map(|&c| (d.keys[c].0.clone(), d.canonical[c].clone()))
            .collect();
        let synths = synthesize_targets(&targets, cfg, opts)?;
        for (i, s) in synths.into_iter().enumerate() {
            let c = misses[i];
            iterations += s.iterations;
            let dim = d.canonical[c].nrows();
            lib.entries.push(PulseEntry {
                key: d.keys[c].0.clone(),
                dim,
                steps: s.steps,
                dt_ns: cfg.dt_ns,
                num_controls: if dim == 2 { 2 } else { 5 },
                amps: s.amps,
                infidelity: s.infidelity,
                frequency: d.class_of.iter().filter(|&&x| x == c).count(),
                iterations: s.iterations,
                canonical: cmat_to_vec(&d.canonical[c]),
                infeasible: s.infeasible,
                source_program: None,
            });
            class_entry[c] = Some(lib.entries.len() - 1);
        }
    }

    let mut durations = Vec::with_capacity(grouped.groups.len());
    let mut keys = Vec::with_capacity(grouped.groups.len());
    for &c in &d.class_of {
        let e = &lib.entries[class_entry[c].expect("all classes resolved")];
        if e.infeasible {
            return Err(Error::Infeasible {
                key: e.key.clone(),
                max_duration: e.duration_ns(),
            });
        }
        durations.push(e.duration_ns());
        keys.push(e.key.clone());
    }
    let starts = group_start_times(&grouped.dag, &durations);
    let items: Vec<ScheduleItem> = (0..grouped.groups.len())
        .map(|g| ScheduleItem {
            group: g,
            key: keys[g].clone(),
            start_ns: starts[g],
            duration_ns: durations[g],
        })
        .collect();
    let pulse_ns = overall_latency(&grouped.dag, &durations);
    let table = GateLatencyTable::from_config(cfg);
    let gate_ns = gate_based_latency(&grouped.mapped, &table);
    lib.sort_entries();
    Ok(CompiledProgram {
        items,
        pulse_latency_ns: pulse_ns,
        gate_latency_ns: gate_ns,
        iterations,
        cache_hits: grouped.groups.len()
            - d.class_of.iter().filter(|&&c| misses.contains(&c)).count(),
        cache_misses: d.class_of.iter().filter(|&&c| misses.contains(&c)).count(),
    })
}

/// Gate-based baseline latency of the unmapped program for reporting.
pub fn baseline_latency(circuit: &Circuit, cfg: &Config) -> f64 {
    gate_based_latency(circuit, &GateLatencyTable::from_config(cfg))
}

/// Re-optimize a frequently used entry on a dt/2 grid. Probes never exceed
/// the entry's current duration, warm-starting from the existing pulse and
/// from fresh restarts. The entry is replaced only when the new pulse is
/// strictly shorter, or equally long with lower infidelity.
pub fn optimize_hot_group(
    lib: &mut PulseLibrary,
    key: &str,
    cfg: &Config,
    budget: &OptBudget,
    restarts: usize,
    seed: u64,
    mode: GradientMode,
) -> Result<bool> {
    let pos = lib
        .entries
        .iter()
        .position(|e| e.key == key && !e.infeasible)
        .ok_or_else(|| Error::MissingLatency(key.to_string()))?;
    let entry = lib.entries[pos].clone();
    let fine_dt = entry.dt_ns / 2.0;
    let mut fine_cfg = cfg.clone();
    fine_cfg.dt_ns = fine_dt;
    let model = ControlModel::<f64>::for_dim(entry.dim, &fine_cfg);
    let target = entry.canonical_matrix();
    let kcount = entry.num_controls;
    let cap = entry.steps * 2; // same duration on the fine grid

    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    let consider = |steps: usize, amps: Vec<f64>, inf: f64, best: &mut Option<(usize, Vec<f64>, f64)>| {
        let better = match best {
            None => true,
            Some((bs, _, bi)) => steps < *bs || (steps == *bs && inf < *bi),
        };
        if better {
            *best = Some((steps, amps, inf));
        }
    };
    for r in 0..restarts.max(1) {
        let donor = if r == 0 {
            Some(WarmStart {
                amps: crate::qoc::resample(&entry.amps, entry.steps, kcount, cap),
                steps: cap,
            })
        } else {
            None
        };
        // feasibility at the cap, then bisect downwards
        let probe = |steps: usize, init_from: Option<&WarmStart<f64>>, it: &mut usize| -> Result<Option<(Vec<f64>, f64)>> {
            let init = match init_from {
                Some(ws) => crate::qoc::resample(&ws.amps, ws.steps, kcount, steps),
                None => crate::qoc::random_init(
                    kcount,
                    steps,
                    model.amp_max,
                    seed.wrapping_add(r as u64),
                ),
            };
            let res = crate::qoc::optimize(&model, &target, init, steps, budget, mode)?;
            *it += res.iterations;
            Ok(res.converged.then_some((res.amps, res.infidelity)))
        };
        let mut iters = 0usize;
        let Some((amps, inf)) = probe(cap, donor.as_ref(), &mut iters)? else {
            continue;
        };
        let mut feasible = (cap, amps, inf);
        let (mut lo, mut hi) = (0usize, cap);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let ws = WarmStart { amps: feasible.1.clone(), steps: feasible.0 };
            match probe(mid, Some(&ws), &mut iters)? {
                Some((amps, inf)) => {
                    hi = mid;
                    feasible = (mid, amps, inf);
                }
                None => lo = mid,
            }
        }
        consider(feasible.0, feasible.1, feasible.2, &mut best);
    }

    let Some((steps, amps, inf)) = best else { return Ok(false) };
    let new_ns = steps as f64 * fine_dt;
    let improved = new_ns < entry.duration_ns()
        || (new_ns == entry.duration_ns() && inf < entry.infidelity);
    if improved {
        let e = &mut lib.entries[pos];
        e.steps = steps;
        e.dt_ns = fine_dt;
        e.amps = amps;
        e.infidelity = inf;
    }
    Ok(improved)
}
