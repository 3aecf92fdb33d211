//! Command line frontend.
//!
//! Exit codes: 0 success, 1 generic failure, 2 empty corpus, 3 control-model
//! fingerprint mismatch, 4 infeasible group.

use accqoc::circuit::{parse_qasm, Circuit};
use accqoc::config::Config;
use accqoc::device::{DeviceTopology, RouterOptions};
use accqoc::grouping::{dedup, group_program, GroupingPolicy};
use accqoc::latency::speedup_report;
use accqoc::library::{
    compile_program, coverage, precompile, PulseLibrary, SynthOptions,
};
use accqoc::qoc::{GradientMode, OptBudget};
use accqoc::unitary::SimilarityFn;
use accqoc::{Error, Result};
use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "accqoc", about = "Pulse-level quantum circuit compiler")]
struct Cli {
    /// Configuration file (JSON); defaults apply when absent.
    #[arg(long, env = "ACCQOC_CONFIG", global = true)]
    config: Option<PathBuf>,

    /// Device topology file; defaults to the bundled 14-qubit device.
    #[arg(long, global = true)]
    topology: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct PipelineArgs {
    /// Grouping policy: {map,swap}2b{2,3,4}l.
    #[arg(long, default_value = "map2b4l")]
    policy: String,

    /// Similarity function: d1, d2, d3, d4 or d4inv.
    #[arg(long, default_value = "d2")]
    similarity: String,

    /// Parallel synthesis workers.
    #[arg(long, default_value_t = 4)]
    workers: usize,

    /// Scaling of cold-start weights in the compile-order tree.
    #[arg(long)]
    alpha: Option<f64>,

    /// Disable crosstalk-aware routing.
    #[arg(long)]
    no_crosstalk: bool,

    /// First-order gradient approximation instead of the exact derivative.
    #[arg(long)]
    fast_gradient: bool,

    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a pulse library from a profiling sample of the corpus.
    Precompile {
        /// Directory of .qasm programs.
        #[arg(long)]
        corpus: PathBuf,

        /// Library output path.
        #[arg(long)]
        out: PathBuf,

        /// Fraction of the corpus used for profiling.
        #[arg(long, default_value_t = 0.333)]
        sample_frac: f64,

        #[command(flatten)]
        pipeline: PipelineArgs,
    },

    /// Compile one program against a library, synthesizing any misses.
    Compile {
        program: PathBuf,

        #[arg(long)]
        library: PathBuf,

        /// Schedule output path (JSON); stdout summary always printed.
        #[arg(long)]
        out: Option<PathBuf>,

        /// Write the updated library (with newly synthesized pulses) back.
        #[arg(long)]
        update_library: bool,

        #[command(flatten)]
        pipeline: PipelineArgs,
    },

    /// Library statistics and optional corpus coverage.
    Stats {
        #[arg(long)]
        library: PathBuf,

        /// When given, report per-program coverage over this corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,

        /// Count distinct unitaries instead of group instances.
        #[arg(long)]
        unique: bool,

        #[command(flatten)]
        pipeline: PipelineArgs,
    },

    /// List corpus programs with their gate statistics.
    CorpusList {
        #[arg(long)]
        corpus: PathBuf,
    },
}

fn load_corpus(dir: &Path) -> Result<Vec<(String, Circuit)>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "qasm"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::EmptyCorpus(dir.display().to_string()));
    }
    let mut out = Vec::new();
    for path in entries {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        out.push((name, parse_qasm(&text)?));
    }
    Ok(out)
}

fn load_topology(cli_path: &Option<PathBuf>) -> Result<DeviceTopology> {
    match cli_path {
        Some(p) => DeviceTopology::load(p),
        None => {
            let bundled = Path::new("data/melbourne.json");
            if bundled.exists() {
                DeviceTopology::load(bundled)
            } else {
                // fallback used when running outside the repository root
                Ok(DeviceTopology::new(
                    14,
                    &[
                        (1, 0), (1, 2), (2, 3), (4, 3), (4, 10), (5, 4), (5, 6),
                        (5, 9), (6, 8), (7, 8), (9, 8), (9, 10), (11, 3), (11, 10),
                        (11, 12), (12, 2), (13, 1), (13, 12),
                    ],
                ))
            }
        }
    }
}

fn load_config(cli_path: &Option<PathBuf>) -> Result<Config> {
    match cli_path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

struct Pipeline {
    policy: GroupingPolicy,
    router: RouterOptions,
    synth: SynthOptions,
}

fn build_pipeline(args: &PipelineArgs, cfg: &Config) -> Result<Pipeline> {
    let policy = GroupingPolicy::parse(&args.policy)?;
    let similarity = SimilarityFn::parse(&args.similarity)
        .ok_or_else(|| Error::BadPolicyLabel(args.similarity.clone()))?;
    let router = RouterOptions {
        crosstalk_on: !args.no_crosstalk,
        threshold: cfg.crosstalk_threshold,
        max_expansions: 100_000,
    };
    let synth = SynthOptions {
        similarity,
        workers: args.workers.max(1),
        alpha: args.alpha.unwrap_or(cfg.alpha),
        budget: OptBudget {
            max_iters: cfg.max_iters,
            target_infidelity: cfg.target_infidelity,
            wall_secs: cfg.probe_budget_secs,
        },
        seed: args.seed,
        mode: if args.fast_gradient {
            GradientMode::FirstOrder
        } else {
            GradientMode::Exact
        },
    };
    Ok(Pipeline { policy, router, synth })
}

/// Deterministic profiling split: seeded shuffle, first ceil(frac * n).
fn profiling_split<'a>(
    corpus: &'a [(String, Circuit)],
    frac: f64,
    seed: u64,
) -> Vec<&'a (String, Circuit)> {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let take = ((frac * corpus.len() as f64).ceil() as usize).clamp(1, corpus.len());
    idx.truncate(take);
    idx.sort_unstable();
    idx.into_iter().map(|i| &corpus[i]).collect()
}

fn cmd_precompile(
    corpus_dir: &Path,
    out: &Path,
    sample_frac: f64,
    args: &PipelineArgs,
    cfg: &Config,
    topo: &DeviceTopology,
) -> Result<()> {
    let corpus = load_corpus(corpus_dir)?;
    let pipe = build_pipeline(args, cfg)?;
    let sample = profiling_split(&corpus, sample_frac, args.seed);
    let mut grouped = Vec::new();
    for (name, circuit) in sample {
        if circuit.num_qubits > topo.num_qubits {
            eprintln!(
                "skipping {name}: {} qubits exceed the {}-qubit device",
                circuit.num_qubits, topo.num_qubits
            );
            continue;
        }
        for w in &circuit.warnings {
            eprintln!("{name}: {w}");
        }
        let g = group_program(circuit, pipe.policy, topo, &pipe.router)?;
        grouped.push((name.clone(), g));
    }
    if grouped.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no program in {} fits the device",
            corpus_dir.display()
        )));
    }
    for (name, g) in &grouped {
        println!("{name}: {} gates -> {} groups", g.mapped.gate_count(), g.groups.len());
    }
    let lib = precompile(&grouped, &args.policy, cfg, &pipe.synth)?;
    let feasible = lib.entries.iter().filter(|e| !e.infeasible).count();
    println!(
        "library: {} distinct groups, {} feasible, policy {}, similarity {}",
        lib.entries.len(),
        feasible,
        lib.policy,
        lib.similarity
    );
    lib.save(out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_compile(
    program: &Path,
    library: &Path,
    out: &Option<PathBuf>,
    update_library: bool,
    args: &PipelineArgs,
    cfg: &Config,
    topo: &DeviceTopology,
) -> Result<()> {
    let text = std::fs::read_to_string(program)
        .map_err(|e| Error::io(program.display().to_string(), e))?;
    let circuit = parse_qasm(&text)?;
    for w in &circuit.warnings {
        eprintln!("{w}");
    }
    let pipe = build_pipeline(args, cfg)?;
    let mut lib = PulseLibrary::load(library)?;
    lib.check_model(cfg)?;
    lib.check_policy(&args.policy)?;
    let grouped = group_program(&circuit, pipe.policy, topo, &pipe.router)?;
    let compiled = compile_program(&mut lib, &grouped, cfg, &pipe.synth)?;
    let report = speedup_report(compiled.pulse_latency_ns, compiled.gate_latency_ns, cfg);
    println!(
        "groups {} (hits {}, misses {}), pulse latency {:.1} ns, gate latency {:.1} ns, ratio {:.3}",
        grouped.groups.len(),
        compiled.cache_hits,
        compiled.cache_misses,
        report.pulse_latency_ns,
        report.gate_latency_ns,
        report.ratio
    );
    if let Some(path) = out {
        let doc = serde_json::json!({
            "program": program.display().to_string(),
            "policy": args.policy,
            "schedule": compiled.items,
            "report": report,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc).unwrap())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        println!("wrote {}", path.display());
    }
    if update_library {
        lib.save(library)?;
    }
    Ok(())
}

fn cmd_stats(
    library: &Path,
    corpus: &Option<PathBuf>,
    unique: bool,
    args: &PipelineArgs,
    cfg: &Config,
    topo: &DeviceTopology,
) -> Result<()> {
    let lib = PulseLibrary::load(library)?;
    let feasible = lib.entries.iter().filter(|e| !e.infeasible).count();
    let one_q = lib.entries.iter().filter(|e| e.dim == 2).count();
    println!(
        "policy {}, similarity {}, model `{}`",
        lib.policy, lib.similarity, lib.model_fingerprint
    );
    println!(
        "{} entries ({} single-qubit, {} two-qubit), {} feasible",
        lib.entries.len(),
        one_q,
        lib.entries.len() - one_q,
        feasible
    );
    let mut by_freq: Vec<&accqoc::library::PulseEntry> =
        lib.entries.iter().filter(|e| !e.infeasible).collect();
    by_freq.sort_by(|a, b| b.frequency.cmp(&a.frequency).then(a.key.cmp(&b.key)));
    for e in by_freq.iter().take(5) {
        println!(
            "  freq {:4}  dim {}  {:7.1} ns  infidelity {:.2e}",
            e.frequency,
            e.dim,
            e.duration_ns(),
            e.infidelity
        );
    }
    if let Some(dir) = corpus {
        lib.check_policy(&args.policy)?;
        let pipe = build_pipeline(args, cfg)?;
        let mut total = 0.0;
        let mut counted = 0usize;
        for (name, circuit) in load_corpus(dir)? {
            if circuit.num_qubits > topo.num_qubits {
                continue;
            }
            let g = group_program(&circuit, pipe.policy, topo, &pipe.router)?;
            let c = coverage(&lib, &g.groups, unique);
            println!("coverage {name}: {c:.3}");
            total += c;
            counted += 1;
        }
        if counted > 0 {
            println!("mean coverage: {:.3}", total / counted as f64);
        }
    }
    Ok(())
}

fn cmd_corpus_list(dir: &Path) -> Result<()> {
    for (name, c) in load_corpus(dir)? {
        let dag = accqoc::circuit::build_dag(&c);
        let d = dedup(
            &accqoc::grouping::layer_divide(
                &c,
                &dag,
                &accqoc::grouping::bit_divide(&c, &dag, 2),
                4,
            ),
        );
        println!(
            "{name}: {} qubits, {} gates ({} cx), depth {}, {} distinct 2b4l groups",
            c.num_qubits,
            c.gate_count(),
            c.count_kind("cx"),
            dag.max_depth(),
            d.unique.len()
        );
    }
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = load_config(&cli.config)?;
    let topo = load_topology(&cli.topology)?;
    match &cli.cmd {
        Cmd::Precompile { corpus, out, sample_frac, pipeline } => {
            cmd_precompile(corpus, out, *sample_frac, pipeline, &cfg, &topo)
        }
        Cmd::Compile { program, library, out, update_library, pipeline } => {
            cmd_compile(program, library, out, *update_library, pipeline, &cfg, &topo)
        }
        Cmd::Stats { library, corpus, unique, pipeline } => {
            cmd_stats(library, corpus, *unique, pipeline, &cfg, &topo)
        }
        Cmd::CorpusList { corpus } => cmd_corpus_list(corpus),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::EmptyCorpus(_) => 2,
                Error::ModelMismatch { .. } => 3,
                Error::Infeasible { .. } => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
