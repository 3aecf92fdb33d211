//! Gate aggregation under the 2bnl policies.
//!
//! Bit dividing greedily merges a node into its predecessors' groups while
//! the qubit union stays within the bit constraint and the merged group
//! remains contiguous on every member qubit. Layer dividing then splits each
//! large group so no output group spans more than the layer constraint of
//! consecutive depth values. Groups are deduplicated up to global phase and
//! simultaneous qubit permutation.

use crate::circuit::{build_dag, Circuit, CircuitDag, Gate, GateKind};
use crate::device::{
    emit_cx, route_units, DeviceTopology, MappingState, RoutedOp, RouteUnit, RouterOptions,
};
use crate::unitary::{eq_up_to_phase, gates_unitary_local, phase_normalize};
use crate::{CMat, Error, Result};
use std::collections::{BTreeSet, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SwapHandling {
    /// Decompose SWAP into 3 CX before grouping ("swap then group").
    Map,
    /// Keep SWAP native; group first, then insert swaps ("group then swap").
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GroupingPolicy {
    pub swap_handling: SwapHandling,
    pub bit_constraint: usize,
    pub layer_constraint: usize,
}

impl GroupingPolicy {
    pub fn parse(label: &str) -> Result<GroupingPolicy> {
        let (handling, rest) = if let Some(r) = label.strip_prefix("map") {
            (SwapHandling::Map, r)
        } else if let Some(r) = label.strip_prefix("swap") {
            (SwapHandling::Swap, r)
        } else {
            return Err(Error::BadPolicyLabel(label.to_string()));
        };
        let lc = match rest {
            "2b2l" => 2,
            "2b3l" => 3,
            "2b4l" => 4,
            _ => return Err(Error::BadPolicyLabel(label.to_string())),
        };
        Ok(GroupingPolicy { swap_handling: handling, bit_constraint: 2, layer_constraint: lc })
    }

    pub fn label(&self) -> String {
        let prefix = match self.swap_handling {
            SwapHandling::Map => "map",
            SwapHandling::Swap => "swap",
        };
        format!("{}{}b{}l", prefix, self.bit_constraint, self.layer_constraint)
    }

    /// The six policies of the 2bnl cataloging system.
    pub fn all() -> Vec<GroupingPolicy> {
        let mut out = Vec::new();
        for handling in [SwapHandling::Map, SwapHandling::Swap] {
            for lc in [2, 3, 4] {
                out.push(GroupingPolicy {
                    swap_handling: handling,
                    bit_constraint: 2,
                    layer_constraint: lc,
                });
            }
        }
        out
    }
}

/// Output of bit dividing: gate ids only, before the layer split.
#[derive(Debug, Clone)]
pub struct LargeGroup {
    pub gates: Vec<usize>,
    pub qubits: BTreeSet<usize>,
}

#[derive(Debug, Clone)]
pub struct GateGroup {
    pub gates: Vec<Gate>,
    /// Distinct qubits touched, sorted ascending.
    pub qubits: Vec<usize>,
    pub layer_span: usize,
    pub source_depth_start: usize,
}

impl GateGroup {
    pub fn unitary(&self) -> crate::unitary::Unitary<f64> {
        gates_unitary_local(&self.gates, &self.qubits)
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits.len()
    }
}

/// Canonical fingerprint of a group's unitary after phase normalization,
/// minimized over qubit permutations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub struct CanonicalKey(pub String);

impl std::fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Per-qubit gate timelines and positions, used for contiguity checks.
struct Timelines {
    position: HashMap<(usize, usize), usize>, // (gate, qubit) -> index in that qubit's timeline
}

impl Timelines {
    fn new(circuit: &Circuit) -> Timelines {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        let mut position = HashMap::new();
        for g in &circuit.gates {
            for &q in &g.qubits {
                let idx = counts.entry(q).or_insert(0);
                position.insert((g.id, q), *idx);
                *idx += 1;
            }
        }
        Timelines { position }
    }

    /// A gate set is contiguous on qubit `q` when its timeline positions form
    /// an unbroken range.
    fn contiguous(&self, gates: &[usize], q: usize) -> bool {
        let mut min = usize::MAX;
        let mut max = 0usize;
        let mut count = 0usize;
        for &g in gates {
            if let Some(&p) = self.position.get(&(g, q)) {
                min = min.min(p);
                max = max.max(p);
                count += 1;
            }
        }
        count == 0 || max - min + 1 == count
    }
}

/// Alg. 1 "Bit Dividing": greedy merge with both predecessors, one
/// predecessor, or a fresh group, in that order.
pub fn bit_divide(circuit: &Circuit, dag: &CircuitDag, bc: usize) -> Vec<LargeGroup> {
    let timelines = Timelines::new(circuit);
    let mut groups: Vec<Option<LargeGroup>> = Vec::new();
    let mut group_of: Vec<usize> = vec![usize::MAX; circuit.gates.len()];

    let merge_ok = |groups: &[Option<LargeGroup>],
                    members: &[usize],
                    node: &Gate|
     -> Option<(Vec<usize>, BTreeSet<usize>)> {
        let mut gates: Vec<usize> = vec![node.id];
        let mut qubits: BTreeSet<usize> = node.qubits.iter().copied().collect();
        for &gi in members {
            let g = groups[gi].as_ref().unwrap();
            gates.extend(&g.gates);
            qubits.extend(&g.qubits);
        }
        if qubits.len() > bc {
            return None;
        }
        gates.sort_unstable();
        for &q in &qubits {
            if !timelines.contiguous(&gates, q) {
                return None;
            }
        }
        Some((gates, qubits))
    };

    for gate in &circuit.gates {
        let mut pred_groups: Vec<usize> =
            dag.preds[gate.id].iter().map(|&p| group_of[p]).collect();
        pred_groups.sort_unstable();
        pred_groups.dedup();

        let mut placed = false;
        if pred_groups.len() == 2 {
            if let Some((gates, qubits)) = merge_ok(&groups, &pred_groups, gate) {
                let target = pred_groups[0];
                for &g in &gates {
                    group_of[g] = target;
                }
                groups[target] = Some(LargeGroup { gates, qubits });
                groups[pred_groups[1]] = None;
                placed = true;
            }
        }
        if !placed {
            for &gi in &pred_groups {
                if let Some((gates, qubits)) = merge_ok(&groups, &[gi], gate) {
                    for &g in &gates {
                        group_of[g] = gi;
                    }
                    groups[gi] = Some(LargeGroup { gates, qubits });
                    placed = true;
                    break;
                }
            }
        }
        if !placed {
            group_of[gate.id] = groups.len();
            groups.push(Some(LargeGroup {
                gates: vec![gate.id],
                qubits: gate.qubits.iter().copied().collect(),
            }));
        }
    }
    groups.into_iter().flatten().collect()
}

/// Alg. 2 "Layer Dividing": split each large group so every output group
/// spans at most `lc` consecutive depth values from its shallowest node.
pub fn layer_divide(
    circuit: &Circuit,
    dag: &CircuitDag,
    large_groups: &[LargeGroup],
    lc: usize,
) -> Vec<GateGroup> {
    let mut out = Vec::new();
    for lg in large_groups {
        let mut nodes: Vec<usize> = lg.gates.clone();
        nodes.sort_by_key(|&g| (dag.depth[g], g));
        let start = dag.depth[nodes[0]];
        let mut buckets: Vec<Vec<usize>> = Vec::new();
        for &g in &nodes {
            let b = (dag.depth[g] - start) / lc;
            if b >= buckets.len() {
                buckets.resize(b + 1, Vec::new());
            }
            buckets[b].push(g);
        }
        for bucket in buckets.into_iter().filter(|b| !b.is_empty()) {
            let gates: Vec<Gate> =
                bucket.iter().map(|&g| circuit.gates[g].clone()).collect();
            let mut qubits: Vec<usize> =
                gates.iter().flat_map(|g| g.qubits.iter().copied()).collect();
            qubits.sort_unstable();
            qubits.dedup();
            let min_d = dag.depth[bucket[0]];
            let max_d = bucket.iter().map(|&g| dag.depth[g]).max().unwrap();
            out.push(GateGroup {
                gates,
                qubits,
                layer_span: max_d - min_d + 1,
                source_depth_start: min_d,
            });
        }
    }
    out
}

fn swap_conjugate(m: &CMat) -> CMat {
    let swap = crate::unitary::gate_unitary::<f64>(&GateKind::Swap).into_matrix();
    &swap * m * &swap
}

/// All matrices a group's unitary may be identified with: phase-normalized,
/// under each admissible qubit permutation.
fn permutation_variants(m: &CMat) -> Vec<CMat> {
    let mut variants = vec![phase_normalize(m)];
    if m.nrows() == 4 {
        variants.push(phase_normalize(&swap_conjugate(m)));
    }
    variants
}

fn matrix_fingerprint(m: &CMat) -> String {
    let mut s = String::with_capacity(m.len() * 8);
    for z in m.iter() {
        // round to 1e-6 for a stable textual form; -0.0 folds into 0.0
        let re = (z.re * 1e6).round() / 1e6 + 0.0;
        let im = (z.im * 1e6).round() / 1e6 + 0.0;
        s.push_str(&format!("{re:.6},{im:.6};"));
    }
    s
}

/// Canonical form: the lexicographically smallest fingerprint over the
/// permutation variants, together with the matrix realizing it.
pub fn canonical_form(m: &CMat) -> (CMat, CanonicalKey) {
    let variants = permutation_variants(m);
    let mut best: Option<(String, &CMat)> = None;
    for v in &variants {
        let fp = matrix_fingerprint(v);
        if best.as_ref().map_or(true, |(bfp, _)| fp < *bfp) {
            best = Some((fp, v));
        }
    }
    let (fp, v) = best.unwrap();
    (v.clone(), CanonicalKey(fp))
}

/// Two group unitaries are duplicates when equal up to global phase and a
/// simultaneous qubit permutation, within absolute tolerance 1e-9.
pub fn groups_equivalent(a: &CMat, b: &CMat) -> bool {
    if a.nrows() != b.nrows() {
        return false;
    }
    permutation_variants(b).iter().any(|v| eq_up_to_phase(a, v, 1e-9))
}

pub struct DedupResult {
    /// First occurrence of each distinct unitary, in input order.
    pub unique: Vec<usize>,
    /// Index into `unique` for every input group.
    pub class_of: Vec<usize>,
    /// Canonical key per unique class.
    pub keys: Vec<CanonicalKey>,
    /// Canonical matrix per unique class.
    pub canonical: Vec<CMat>,
}

pub fn dedup(groups: &[GateGroup]) -> DedupResult {
    let mut unique: Vec<usize> = Vec::new();
    let mut class_of = Vec::with_capacity(groups.len());
    let mut keys = Vec::new();
    let mut canonical = Vec::new();
    let mut raw: Vec<CMat> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let m = g.unitary().into_matrix();
        let class = raw.iter().position(|r| groups_equivalent(r, &m));
        match class {
            Some(c) => class_of.push(c),
            None => {
                let (canon, key) = canonical_form(&m);
                class_of.push(unique.len());
                unique.push(i);
                keys.push(key);
                canonical.push(canon);
                raw.push(m);
            }
        }
    }
    DedupResult { unique, class_of, keys, canonical }
}

/// Coarsened dependency DAG whose nodes are groups.
#[derive(Debug, Clone)]
pub struct GroupDag {
    pub preds: Vec<Vec<usize>>,
    pub succs: Vec<Vec<usize>>,
    /// Deterministic topological order (Kahn, ties by smallest first gate id).
    pub topo: Vec<usize>,
}

fn build_group_dag(gates: &[Gate], owner: &[usize], num_groups: usize) -> GroupDag {
    let mut preds: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_groups];
    let mut succs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_groups];
    let mut last_on_qubit: HashMap<usize, usize> = HashMap::new();
    let mut first_gate: Vec<usize> = vec![usize::MAX; num_groups];
    for (i, g) in gates.iter().enumerate() {
        let og = owner[i];
        first_gate[og] = first_gate[og].min(i);
        for &q in &g.qubits {
            if let Some(&p) = last_on_qubit.get(&q) {
                let op = owner[p];
                if op != og {
                    preds[og].insert(op);
                    succs[op].insert(og);
                }
            }
            last_on_qubit.insert(q, i);
        }
    }
    // Kahn with a min-heap keyed by first gate index
    let mut indeg: Vec<usize> = preds.iter().map(|p| p.len()).collect();
    let mut heap = std::collections::BinaryHeap::new();
    for (g, &d) in indeg.iter().enumerate() {
        if d == 0 {
            heap.push(std::cmp::Reverse((first_gate[g], g)));
        }
    }
    let mut topo = Vec::with_capacity(num_groups);
    while let Some(std::cmp::Reverse((_, g))) = heap.pop() {
        topo.push(g);
        for &s in &succs[g] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                heap.push(std::cmp::Reverse((first_gate[s], s)));
            }
        }
    }
    assert_eq!(topo.len(), num_groups, "group DAG has a cycle");
    GroupDag {
        preds: preds.into_iter().map(|s| s.into_iter().collect()).collect(),
        succs: succs.into_iter().map(|s| s.into_iter().collect()).collect(),
        topo,
    }
}

/// A grouped, hardware-compatible program.
pub struct GroupedProgram {
    pub groups: Vec<GateGroup>,
    pub dag: GroupDag,
    /// Final gate list on physical qubits (what the groups partition).
    pub mapped: Circuit,
    pub mapping: MappingState,
}

/// Cancel adjacent identical CX pairs (same control and target with no
/// intervening gate on either qubit).
pub fn cancel_cx_pairs(gates: Vec<(GateKind, Vec<usize>)>) -> Vec<(GateKind, Vec<usize>)> {
    let mut out: Vec<Option<(GateKind, Vec<usize>)>> = Vec::new();
    let mut stacks: HashMap<usize, Vec<usize>> = HashMap::new();
    for (kind, qubits) in gates {
        if let GateKind::Cx = kind {
            let prev_c = stacks.get(&qubits[0]).and_then(|s| s.last()).copied();
            let prev_t = stacks.get(&qubits[1]).and_then(|s| s.last()).copied();
            if let (Some(pc), Some(pt)) = (prev_c, prev_t) {
                if pc == pt {
                    if let Some((GateKind::Cx, q2)) = &out[pc] {
                        if *q2 == qubits {
                            out[pc] = None;
                            stacks.get_mut(&qubits[0]).unwrap().pop();
                            stacks.get_mut(&qubits[1]).unwrap().pop();
                            continue;
                        }
                    }
                }
            }
        }
        let idx = out.len();
        for &q in &qubits {
            stacks.entry(q).or_default().push(idx);
        }
        out.push(Some((kind, qubits)));
    }
    out.into_iter().flatten().collect()
}

fn decompose_swaps(
    gates: &[Gate],
    topo: &DeviceTopology,
) -> Vec<(GateKind, Vec<usize>)> {
    let mut out = Vec::new();
    for g in gates {
        match g.kind {
            GateKind::Swap => {
                let (p, q) = (g.qubits[0], g.qubits[1]);
                emit_cx(&mut out, p, q, topo);
                emit_cx(&mut out, q, p, topo);
                emit_cx(&mut out, p, q, topo);
            }
            k => out.push((k, g.qubits.clone())),
        }
    }
    out
}

/// Group a program under `policy`.
///
/// MAP policies map first, decompose SWAPs into CX triples, cancel adjacent
/// inverse CX pairs, then group the physical circuit. SWAP policies group
/// the logical circuit, then route at group granularity with native SWAP
/// groups appended.
pub fn group_program(
    circuit: &Circuit,
    policy: GroupingPolicy,
    topo: &DeviceTopology,
    opts: &RouterOptions,
) -> Result<GroupedProgram> {
    match policy.swap_handling {
        SwapHandling::Map => {
            let (mapped, mapping) = crate::device::map_circuit(circuit, topo, opts)?;
            let decomposed = decompose_swaps(&mapped.gates, topo);
            let cancelled = cancel_cx_pairs(decomposed);
            let final_circuit = Circuit::from_gates(cancelled, topo.num_qubits);
            let dag = build_dag(&final_circuit);
            let large = bit_divide(&final_circuit, &dag, policy.bit_constraint);
            let groups = layer_divide(&final_circuit, &dag, &large, policy.layer_constraint);
            let mut owner = vec![usize::MAX; final_circuit.gates.len()];
            for (gi, g) in groups.iter().enumerate() {
                for gate in &g.gates {
                    owner[gate.id] = gi;
                }
            }
            let gdag = build_group_dag(&final_circuit.gates, &owner, groups.len());
            Ok(GroupedProgram { groups, dag: gdag, mapped: final_circuit, mapping })
        }
        SwapHandling::Swap => {
            let dag = build_dag(circuit);
            let large = bit_divide(circuit, &dag, policy.bit_constraint);
            let unsorted = layer_divide(circuit, &dag, &large, policy.layer_constraint);
            // route_units reads the unit list as program order per qubit, so
            // the groups must be dependency-sorted first
            let mut owner_logical = vec![usize::MAX; circuit.gates.len()];
            for (gi, g) in unsorted.iter().enumerate() {
                for gate in &g.gates {
                    owner_logical[gate.id] = gi;
                }
            }
            let logical_dag =
                build_group_dag(&circuit.gates, &owner_logical, unsorted.len());
            let mut logical_groups: Vec<GateGroup> = Vec::with_capacity(unsorted.len());
            {
                let mut slot: Vec<Option<GateGroup>> =
                    unsorted.into_iter().map(Some).collect();
                for &gi in &logical_dag.topo {
                    logical_groups.push(slot[gi].take().unwrap());
                }
            }
            let units: Vec<RouteUnit> = logical_groups
                .iter()
                .map(|g| RouteUnit { qubits: g.qubits.clone() })
                .collect();
            let (ops, mapping) = route_units(&units, circuit.num_qubits, topo, opts)?;
            let mut gates: Vec<(GateKind, Vec<usize>)> = Vec::new();
            let mut owner: Vec<usize> = Vec::new();
            let mut groups: Vec<GateGroup> = Vec::new();
            for op in &ops {
                match op {
                    RoutedOp::Swap { phys: (p, q), .. } => {
                        let gi = groups.len();
                        groups.push(GateGroup {
                            gates: vec![Gate {
                                kind: GateKind::Swap,
                                qubits: vec![*p, *q],
                                id: gates.len(),
                            }],
                            qubits: vec![(*p).min(*q), (*p).max(*q)],
                            layer_span: 1,
                            source_depth_start: 0,
                        });
                        gates.push((GateKind::Swap, vec![*p, *q]));
                        owner.push(gi);
                    }
                    RoutedOp::Unit { index, phys } => {
                        let src = &logical_groups[*index];
                        let gi = groups.len();
                        let relabel: HashMap<usize, usize> =
                            src.qubits.iter().copied().zip(phys.iter().copied()).collect();
                        let mut new_gates = Vec::with_capacity(src.gates.len());
                        for g in &src.gates {
                            let qubits: Vec<usize> =
                                g.qubits.iter().map(|q| relabel[q]).collect();
                            new_gates.push(Gate { kind: g.kind, qubits: qubits.clone(), id: gates.len() });
                            gates.push((g.kind, qubits));
                            owner.push(gi);
                        }
                        let mut qubits: Vec<usize> = phys.clone();
                        qubits.sort_unstable();
                        groups.push(GateGroup {
                            gates: new_gates,
                            qubits,
                            layer_span: src.layer_span,
                            source_depth_start: src.source_depth_start,
                        });
                    }
                }
            }
            let final_circuit = Circuit::from_gates(gates, topo.num_qubits);
            let gdag = build_group_dag(&final_circuit.gates, &owner, groups.len());
            Ok(GroupedProgram { groups, dag: gdag, mapped: final_circuit, mapping })
        }
    }
}

/// JSON-lines dump: one group per line.
pub fn groups_to_jsonl(groups: &[GateGroup], keys: &[CanonicalKey], class_of: &[usize]) -> String {
    let mut out = String::new();
    for (i, g) in groups.iter().enumerate() {
        let gates: Vec<String> = g
            .gates
            .iter()
            .map(|gate| format!("{} {:?}", gate.kind, gate.qubits))
            .collect();
        let line = serde_json::json!({
            "key": keys[class_of[i]].0,
            "gates": gates,
            "qubits": g.qubits,
            "layer_span": g.layer_span,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_qasm;
    use crate::unitary::{circuit_unitary, embed, eq_up_to_phase};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn same_qubit_gates_form_one_group() {
        let c = parse_qasm("qreg q[1];\nh q[0];\nx q[0];\n").unwrap();
        let dag = build_dag(&c);
        let large = bit_divide(&c, &dag, 2);
        assert_eq!(large.len(), 1);
        assert_eq!(large[0].gates, vec![0, 1]);
    }

    #[test]
    fn bit_constraint_splits_three_qubit_chain() {
        let c = parse_qasm("qreg q[3];\ncx q[0],q[1];\ncx q[1],q[2];\n").unwrap();
        let dag = build_dag(&c);
        let large = bit_divide(&c, &dag, 2);
        assert_eq!(large.len(), 2);
    }

    #[test]
    fn layer_divide_split_points() {
        // chain of 5 single-qubit gates: depths 1..5 in one large group
        let c = parse_qasm("qreg q[1];\nh q[0];\nt q[0];\nh q[0];\nt q[0];\nh q[0];\n").unwrap();
        let dag = build_dag(&c);
        let large = bit_divide(&c, &dag, 2);
        assert_eq!(large.len(), 1);
        let four = layer_divide(&c, &dag, &large, 4);
        assert_eq!(four.len(), 2);
        assert_eq!(four[0].gates.len(), 4);
        assert_eq!(four[1].gates.len(), 1);
        // span 4 fits in lc=4 when the group only has 4 depths
        let c2 = parse_qasm("qreg q[1];\nh q[0];\nt q[0];\nh q[0];\nt q[0];\n").unwrap();
        let dag2 = build_dag(&c2);
        let large2 = bit_divide(&c2, &dag2, 2);
        let groups2 = layer_divide(&c2, &dag2, &large2, 4);
        assert_eq!(groups2.len(), 1);
    }

    #[test]
    fn dedup_one_qubit_translation() {
        let c = parse_qasm("qreg q[6];\nh q[0];\nh q[5];\n").unwrap();
        let dag = build_dag(&c);
        let groups = layer_divide(&c, &dag, &bit_divide(&c, &dag, 2), 4);
        assert_eq!(groups.len(), 2);
        let d = dedup(&groups);
        assert_eq!(d.unique.len(), 1);
        assert_eq!(d.class_of, vec![0, 0]);
    }

    #[test]
    fn dedup_cx_under_permutation() {
        let c = parse_qasm("qreg q[4];\ncx q[0],q[1];\ncx q[3],q[2];\n").unwrap();
        let dag = build_dag(&c);
        let groups = layer_divide(&c, &dag, &bit_divide(&c, &dag, 2), 4);
        assert_eq!(groups.len(), 2);
        // cx q3,q2 has control on the higher qubit: equal to cx q0,q1 only
        // under the swap permutation
        let d = dedup(&groups);
        assert_eq!(d.unique.len(), 1);
    }

    #[test]
    fn dedup_distinguishes_h_position() {
        let a = parse_qasm("qreg q[2];\nh q[0];\ncx q[0],q[1];\n").unwrap();
        let b = parse_qasm("qreg q[2];\nh q[1];\ncx q[0],q[1];\n").unwrap();
        let dag_a = build_dag(&a);
        let dag_b = build_dag(&b);
        let ga = layer_divide(&a, &dag_a, &bit_divide(&a, &dag_a, 2), 4);
        let gb = layer_divide(&b, &dag_b, &bit_divide(&b, &dag_b, 2), 4);
        assert_eq!(ga.len(), 1);
        assert_eq!(gb.len(), 1);
        assert!(!groups_equivalent(
            &ga[0].unitary().into_matrix(),
            &gb[0].unitary().into_matrix()
        ));
    }

    #[test]
    fn distinct_rz_angles_stay_distinct() {
        let c = parse_qasm("qreg q[2];\nrz(0.5) q[0];\nrz(0.5000001) q[1];\n").unwrap();
        let dag = build_dag(&c);
        let groups = layer_divide(&c, &dag, &bit_divide(&c, &dag, 2), 4);
        let d = dedup(&groups);
        assert_eq!(d.unique.len(), 2);
    }

    /// Straight-line reference implementation of Alg. 1 kept independent of
    /// the production code path: tracks groups as plain vectors and checks
    /// contiguity by scanning the gate list directly.
    fn bit_divide_oracle(c: &Circuit, dag: &CircuitDag, bc: usize) -> Vec<Vec<usize>> {
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut member: HashMap<usize, usize> = HashMap::new();
        let contiguous_set = |members: &Vec<usize>| -> bool {
            let qubits: BTreeSet<usize> = members
                .iter()
                .flat_map(|&g| c.gates[g].qubits.iter().copied())
                .collect();
            if qubits.len() > bc {
                return false;
            }
            for &q in &qubits {
                let timeline: Vec<usize> = c
                    .gates
                    .iter()
                    .filter(|g| g.qubits.contains(&q))
                    .map(|g| g.id)
                    .collect();
                let flags: Vec<bool> =
                    timeline.iter().map(|g| members.contains(g)).collect();
                let first = flags.iter().position(|&f| f);
                let last = flags.iter().rposition(|&f| f);
                if let (Some(a), Some(b)) = (first, last) {
                    if flags[a..=b].iter().any(|&f| !f) {
                        return false;
                    }
                }
            }
            true
        };
        for gate in &c.gates {
            let mut pgs: Vec<usize> =
                dag.preds[gate.id].iter().map(|&p| member[&p]).collect();
            pgs.sort_unstable();
            pgs.dedup();
            let try_merge = |groups: &Vec<Vec<usize>>, gs: &[usize]| -> Option<Vec<usize>> {
                let mut all = vec![gate.id];
                for &g in gs {
                    all.extend(&groups[g]);
                }
                all.sort_unstable();
                contiguous_set(&all).then_some(all)
            };
            let mut placed = false;
            if pgs.len() == 2 {
                if let Some(all) = try_merge(&groups, &pgs) {
                    for &g in &all {
                        member.insert(g, pgs[0]);
                    }
                    groups[pgs[0]] = all;
                    groups[pgs[1]].clear();
                    placed = true;
                }
            }
            if !placed {
                for &gi in &pgs {
                    if let Some(all) = try_merge(&groups, &[gi]) {
                        for &g in &all {
                            member.insert(g, gi);
                        }
                        groups[gi] = all;
                        placed = true;
                        break;
                    }
                }
            }
            if !placed {
                member.insert(gate.id, groups.len());
                groups.push(vec![gate.id]);
            }
        }
        groups.into_iter().filter(|g| !g.is_empty()).collect()
    }

    fn random_circuit(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Circuit {
        let mut gates = Vec::new();
        for _ in 0..len {
            let two_q = rng.gen_bool(0.4);
            if two_q {
                let a = rng.gen_range(0..n);
                let mut b = rng.gen_range(0..n);
                while b == a {
                    b = rng.gen_range(0..n);
                }
                gates.push((GateKind::Cx, vec![a, b]));
            } else {
                let kinds = [
                    GateKind::H,
                    GateKind::T,
                    GateKind::Tdg,
                    GateKind::X,
                    GateKind::Rz(rng.gen_range(-3.0..3.0)),
                ];
                gates.push((*kinds.choose(rng).unwrap(), vec![rng.gen_range(0..n)]));
            }
        }
        Circuit::from_gates(gates, n)
    }

    #[test]
    fn bit_divide_matches_oracle_on_random_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let c = random_circuit(&mut rng, 4, 30);
            let dag = build_dag(&c);
            let ours: Vec<Vec<usize>> =
                bit_divide(&c, &dag, 2).into_iter().map(|g| g.gates).collect();
            let oracle = bit_divide_oracle(&c, &dag, 2);
            assert_eq!(ours, oracle);
        }
    }

    #[test]
    fn partition_property_and_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_circuit(&mut rng, 4, 40);
        let dag = build_dag(&c);
        for lc in [2, 3, 4] {
            let groups = layer_divide(&c, &dag, &bit_divide(&c, &dag, 2), lc);
            let mut seen: Vec<usize> =
                groups.iter().flat_map(|g| g.gates.iter().map(|x| x.id)).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..c.gates.len()).collect::<Vec<_>>());
            for g in &groups {
                assert!(g.qubits.len() <= 2);
                assert!(g.layer_span <= lc);
            }
        }
    }

    /// Product of group unitaries along the group DAG's topological order
    /// equals the full circuit unitary up to global phase.
    fn check_group_product(program: &GroupedProgram, n: usize) {
        let full = circuit_unitary::<f64>(&program.mapped.gates, n);
        let dim = 1usize << n;
        let mut prod = CMat::identity(dim, dim);
        for &gi in &program.dag.topo {
            let g = &program.groups[gi];
            let u = g.unitary().into_matrix();
            prod = embed(&u, &g.qubits, n) * prod;
        }
        assert!(eq_up_to_phase(&full, &prod, 1e-8));
    }

    #[test]
    fn group_product_equals_circuit_unitary_all_policies() {
        let topo = DeviceTopology::line(4);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let c = random_circuit(&mut rng, 4, 25);
            for policy in GroupingPolicy::all() {
                let program =
                    group_program(&c, policy, &topo, &RouterOptions::default()).unwrap();
                check_group_product(&program, 4);
            }
        }
    }

    #[test]
    fn map_and_swap_agree_on_compatible_circuit() {
        let topo = DeviceTopology::line(3);
        let c = parse_qasm("qreg q[3];\nh q[0];\ncx q[0],q[1];\ncx q[1],q[2];\n").unwrap();
        let map = group_program(
            &c,
            GroupingPolicy::parse("map2b4l").unwrap(),
            &topo,
            &RouterOptions::default(),
        )
        .unwrap();
        let swap = group_program(
            &c,
            GroupingPolicy::parse("swap2b4l").unwrap(),
            &topo,
            &RouterOptions::default(),
        )
        .unwrap();
        assert_eq!(map.groups.len(), swap.groups.len());
    }

    #[test]
    fn cx_cancellation() {
        let gates = vec![
            (GateKind::Cx, vec![0, 1]),
            (GateKind::Cx, vec![0, 1]),
            (GateKind::H, vec![0]),
        ];
        assert_eq!(cancel_cx_pairs(gates).len(), 1);
        // intervening gate blocks cancellation
        let blocked = vec![
            (GateKind::Cx, vec![0, 1]),
            (GateKind::T, vec![1]),
            (GateKind::Cx, vec![0, 1]),
        ];
        assert_eq!(cancel_cx_pairs(blocked).len(), 3);
    }

    #[test]
    fn policy_labels_round_trip() {
        for p in GroupingPolicy::all() {
            assert_eq!(GroupingPolicy::parse(&p.label()).unwrap(), p);
        }
        assert!(GroupingPolicy::parse("map2b5l").is_err());
    }

    #[test]
    fn larger_layer_constraint_never_more_groups() {
        let topo = DeviceTopology::line(4);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c = random_circuit(&mut rng, 4, 40);
        let g2 = group_program(
            &c,
            GroupingPolicy::parse("map2b2l").unwrap(),
            &topo,
            &RouterOptions::default(),
        )
        .unwrap();
        let g4 = group_program(
            &c,
            GroupingPolicy::parse("map2b4l").unwrap(),
            &topo,
            &RouterOptions::default(),
        )
        .unwrap();
        assert!(g4.groups.len() <= g2.groups.len());
    }
}
