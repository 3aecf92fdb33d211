//! Device topology and qubit mapping.
//!
//! SWAPs are inserted per layer by an A* search whose heuristic sums the
//! physical distances of the layer's 2-qubit gates plus, when enabled, an
//! indicator per pair of close CX gates. The search therefore trades extra
//! SWAPs against crosstalk-prone placements.

use crate::circuit::{build_dag, Circuit, CircuitDag, Gate, GateKind};
use crate::{Error, Result};
use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct DeviceTopology {
    pub num_qubits: usize,
    pub directed_edges: BTreeSet<(usize, usize)>,
    /// Undirected adjacency lists, sorted.
    pub adj: Vec<Vec<usize>>,
    /// All-pairs undirected shortest-path distance in hops.
    pub distance: Vec<Vec<usize>>,
}

impl DeviceTopology {
    pub fn new(num_qubits: usize, edges: &[(usize, usize)]) -> DeviceTopology {
        let mut directed = BTreeSet::new();
        let mut adj = vec![BTreeSet::new(); num_qubits];
        for &(c, t) in edges {
            assert!(c < num_qubits && t < num_qubits, "edge references invalid qubit");
            directed.insert((c, t));
            adj[c].insert(t);
            adj[t].insert(c);
        }
        let adj: Vec<Vec<usize>> = adj.into_iter().map(|s| s.into_iter().collect()).collect();
        let distance = all_pairs_bfs(num_qubits, &adj);
        DeviceTopology { num_qubits, directed_edges: directed, adj, distance }
    }

    /// Topology file: JSON `{n:14, edges:[[c,t],...]}`.
    pub fn load(path: &Path) -> Result<DeviceTopology> {
        #[derive(serde::Deserialize)]
        struct File {
            n: usize,
            edges: Vec<(usize, usize)>,
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let f: File = serde_json::from_str(&text)
            .map_err(|e| Error::json(path.display().to_string(), e))?;
        Ok(DeviceTopology::new(f.n, &f.edges))
    }

    /// A directed line 0 -> 1 -> ... -> n-1, handy for tests.
    pub fn line(n: usize) -> DeviceTopology {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        DeviceTopology::new(n, &edges)
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.distance[a][b] == 1
    }

    pub fn dist(&self, a: usize, b: usize) -> usize {
        self.distance[a][b]
    }
}

fn all_pairs_bfs(n: usize, adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut dist = vec![vec![usize::MAX / 2; n]; n];
    for start in 0..n {
        dist[start][start] = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[start][v] > dist[start][u] + 1 {
                    dist[start][v] = dist[start][u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    dist
}

/// Logical-to-physical assignment and the SWAPs the router inserted.
#[derive(Debug, Clone)]
pub struct MappingState {
    pub initial: Vec<usize>,
    pub final_sigma: Vec<usize>,
    /// (layer index, physical pair)
    pub inserted_swaps: Vec<(usize, (usize, usize))>,
}

/// ASAP layering: each gate sits in the layer of its DAG depth. Gates within
/// a layer are qubit-disjoint by construction.
pub fn layerize(dag: &CircuitDag) -> Vec<Vec<usize>> {
    let mut layers = vec![Vec::new(); dag.max_depth()];
    for id in dag.topological_order() {
        layers[dag.depth[id] - 1].push(id);
    }
    layers
}

/// Heuristic cost of placing `layer` under mapping `sigma`: sum of physical
/// distances of 2-qubit gates plus one per close pair of 2-qubit gates when
/// `crosstalk_on`.
pub fn heuristic_cost(
    layer: &[&[usize]],
    sigma: &[usize],
    topo: &DeviceTopology,
    crosstalk_on: bool,
    threshold: usize,
) -> f64 {
    let mut cost = 0.0;
    for qubits in layer {
        if qubits.len() == 2 {
            cost += topo.dist(sigma[qubits[0]], sigma[qubits[1]]) as f64;
        }
    }
    if crosstalk_on {
        cost += close_pair_count(layer, sigma, topo, threshold) as f64;
    }
    cost
}

fn close_pair_count(
    layer: &[&[usize]],
    sigma: &[usize],
    topo: &DeviceTopology,
    threshold: usize,
) -> usize {
    let two_q: Vec<&&[usize]> = layer.iter().filter(|q| q.len() == 2).collect();
    let mut count = 0;
    for i in 0..two_q.len() {
        for j in i + 1..two_q.len() {
            if pair_close(two_q[i], two_q[j], sigma, topo, threshold) {
                count += 1;
            }
        }
    }
    count
}

fn pair_close(
    a: &[usize],
    b: &[usize],
    sigma: &[usize],
    topo: &DeviceTopology,
    threshold: usize,
) -> bool {
    let mut min = usize::MAX;
    for &x in a {
        for &y in b {
            min = min.min(topo.dist(sigma[x], sigma[y]));
        }
    }
    min <= threshold
}

/// One schedulable unit for the router: a gate or a gate group.
#[derive(Debug, Clone)]
pub struct RouteUnit {
    pub qubits: Vec<usize>,
}

#[derive(Debug, Clone)]
pub enum RoutedOp {
    /// Input unit `index` placed on physical qubits (same order as its
    /// logical qubit list).
    Unit { index: usize, phys: Vec<usize> },
    /// Router-inserted SWAP on a physical pair.
    Swap { layer: usize, phys: (usize, usize) },
}

pub struct RouterOptions {
    pub crosstalk_on: bool,
    pub threshold: usize,
    /// Expanded-state cap per layer before falling back to greedy routing.
    pub max_expansions: usize,
}

impl Default for RouterOptions {
    fn default() -> Self {
        RouterOptions { crosstalk_on: true, threshold: 1, max_expansions: 100_000 }
    }
}

/// Route a dependency-ordered sequence of units onto the topology, inserting
/// SWAPs so every 2-qubit unit lands on adjacent physical qubits.
/// Deterministic: ties are broken by smallest swap pair.
pub fn route_units(
    units: &[RouteUnit],
    num_logical: usize,
    topo: &DeviceTopology,
    opts: &RouterOptions,
) -> Result<(Vec<RoutedOp>, MappingState)> {
    if num_logical > topo.num_qubits {
        return Err(Error::CircuitTooWide { circuit: num_logical, device: topo.num_qubits });
    }
    // layering over the unit dependency DAG
    let mut depth = vec![1usize; units.len()];
    let mut last_on_qubit: HashMap<usize, usize> = HashMap::new();
    for (i, u) in units.iter().enumerate() {
        for &q in &u.qubits {
            if let Some(&p) = last_on_qubit.get(&q) {
                depth[i] = depth[i].max(depth[p] + 1);
            }
            last_on_qubit.insert(q, i);
        }
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let mut layers: Vec<Vec<usize>> = vec![Vec::new(); max_depth];
    for (i, &d) in depth.iter().enumerate() {
        layers[d - 1].push(i);
    }

    let mut sigma: Vec<usize> = (0..num_logical).collect();
    let initial = sigma.clone();
    let mut ops = Vec::new();
    let mut inserted = Vec::new();

    for (layer_idx, layer) in layers.iter().enumerate() {
        let cur: Vec<&[usize]> = layer.iter().map(|&i| units[i].qubits.as_slice()).collect();
        let next: Vec<&[usize]> = layers
            .get(layer_idx + 1)
            .map(|l| l.iter().map(|&i| units[i].qubits.as_slice()).collect())
            .unwrap_or_default();
        let swaps = solve_layer(&cur, &next, &sigma, topo, opts);
        for (p, q) in swaps {
            apply_swap(&mut sigma, p, q);
            ops.push(RoutedOp::Swap { layer: layer_idx, phys: (p, q) });
            inserted.push((layer_idx, (p, q)));
        }
        for &i in layer {
            let phys: Vec<usize> = units[i].qubits.iter().map(|&q| sigma[q]).collect();
            debug_assert!(phys.len() < 2 || topo.adjacent(phys[0], phys[1]));
            ops.push(RoutedOp::Unit { index: i, phys });
        }
    }
    Ok((ops, MappingState { initial, final_sigma: sigma, inserted_swaps: inserted }))
}

fn apply_swap(sigma: &mut [usize], p: usize, q: usize) {
    for s in sigma.iter_mut() {
        if *s == p {
            *s = q;
        } else if *s == q {
            *s = p;
        }
    }
}

fn layer_satisfied(layer: &[&[usize]], sigma: &[usize], topo: &DeviceTopology) -> bool {
    layer
        .iter()
        .filter(|q| q.len() == 2)
        .all(|q| topo.adjacent(sigma[q[0]], sigma[q[1]]))
}

/// Search heuristic: remaining-distance estimate for the layer plus the
/// crosstalk indicator and a half-weighted one-layer lookahead.
fn search_h(
    layer: &[&[usize]],
    next: &[&[usize]],
    sigma: &[usize],
    topo: &DeviceTopology,
    opts: &RouterOptions,
) -> f64 {
    let mut h = 0.0;
    for q in layer.iter().filter(|q| q.len() == 2) {
        h += (topo.dist(sigma[q[0]], sigma[q[1]]) - 1) as f64;
    }
    for q in next.iter().filter(|q| q.len() == 2) {
        h += 0.5 * (topo.dist(sigma[q[0]], sigma[q[1]]) - 1) as f64;
    }
    if opts.crosstalk_on {
        h += close_pair_count(layer, sigma, topo, opts.threshold) as f64;
    }
    h
}

#[derive(PartialEq)]
struct QueueEntry {
    f: f64,
    g: f64,
    tie: u64,
    sigma: Vec<usize>,
    path: Vec<(usize, usize)>,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.f
            .total_cmp(&other.f)
            .then(self.g.total_cmp(&other.g))
            .then(self.tie.cmp(&other.tie))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn solve_layer(
    layer: &[&[usize]],
    next: &[&[usize]],
    sigma0: &[usize],
    topo: &DeviceTopology,
    opts: &RouterOptions,
) -> Vec<(usize, usize)> {
    // An already-executable layer never spends swaps purely on crosstalk.
    if layer_satisfied(layer, sigma0, topo) {
        return Vec::new();
    }

    let undirected: Vec<(usize, usize)> = topo
        .directed_edges
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut heap: BinaryHeap<Reverse<QueueEntry>> = BinaryHeap::new();
    let mut best_g: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut counter = 0u64;
    let h0 = search_h(layer, next, sigma0, topo, opts);
    heap.push(Reverse(QueueEntry {
        f: h0,
        g: 0.0,
        tie: counter,
        sigma: sigma0.to_vec(),
        path: Vec::new(),
    }));
    best_g.insert(sigma0.to_vec(), 0.0);
    let mut expansions = 0usize;

    while let Some(Reverse(entry)) = heap.pop() {
        if layer_satisfied(layer, &entry.sigma, topo) {
            return entry.path;
        }
        expansions += 1;
        if expansions > opts.max_expansions {
            break;
        }
        for &(p, q) in &undirected {
            let mut sigma = entry.sigma.clone();
            apply_swap(&mut sigma, p, q);
            let g = entry.g + 1.0;
            if best_g.get(&sigma).map_or(true, |&bg| g < bg) {
                best_g.insert(sigma.clone(), g);
                counter += 1;
                let h = search_h(layer, next, &sigma, topo, opts);
                let mut path = entry.path.clone();
                path.push((p, q));
                heap.push(Reverse(QueueEntry { f: g + h, g, tie: counter, sigma, path }));
            }
        }
    }
    greedy_route(layer, sigma0, topo)
}

/// Fallback when the search cap is hit: walk the first unsatisfied gate's
/// control one hop towards its target, smallest neighbor first.
fn greedy_route(
    layer: &[&[usize]],
    sigma0: &[usize],
    topo: &DeviceTopology,
) -> Vec<(usize, usize)> {
    let mut sigma = sigma0.to_vec();
    let mut path = Vec::new();
    loop {
        let unsat = layer
            .iter()
            .filter(|q| q.len() == 2)
            .find(|q| !topo.adjacent(sigma[q[0]], sigma[q[1]]));
        let Some(q) = unsat else { return path };
        let (pa, pb) = (sigma[q[0]], sigma[q[1]]);
        let step = topo.adj[pa]
            .iter()
            .copied()
            .min_by_key(|&nb| (topo.dist(nb, pb), nb))
            .expect("connected topology");
        apply_swap(&mut sigma, pa, step);
        path.push((pa.min(step), pa.max(step)));
    }
}

/// Insert SWAPs to make `circuit` hardware-compatible. CX gates against the
/// edge direction are wrapped in 4 H gates. The returned circuit acts on
/// physical qubit indices.
pub fn map_circuit(
    circuit: &Circuit,
    topo: &DeviceTopology,
    opts: &RouterOptions,
) -> Result<(Circuit, MappingState)> {
    let units: Vec<RouteUnit> =
        circuit.gates.iter().map(|g| RouteUnit { qubits: g.qubits.clone() }).collect();
    let (ops, state) = route_units(&units, circuit.num_qubits, topo, opts)?;
    let mut gates: Vec<(GateKind, Vec<usize>)> = Vec::new();
    for op in &ops {
        match op {
            RoutedOp::Swap { phys: (p, q), .. } => {
                gates.push((GateKind::Swap, vec![*p, *q]));
            }
            RoutedOp::Unit { index, phys } => {
                let kind = circuit.gates[*index].kind;
                match kind {
                    GateKind::Cx => emit_cx(&mut gates, phys[0], phys[1], topo),
                    GateKind::Swap => gates.push((GateKind::Swap, phys.clone())),
                    k => gates.push((k, phys.clone())),
                }
            }
        }
    }
    Ok((Circuit::from_gates(gates, topo.num_qubits), state))
}

pub(crate) fn emit_cx(
    gates: &mut Vec<(GateKind, Vec<usize>)>,
    pc: usize,
    pt: usize,
    topo: &DeviceTopology,
) {
    if topo.directed_edges.contains(&(pc, pt)) {
        gates.push((GateKind::Cx, vec![pc, pt]));
    } else {
        assert!(
            topo.directed_edges.contains(&(pt, pc)),
            "cx emitted on non-adjacent qubits {pc},{pt}"
        );
        gates.push((GateKind::H, vec![pc]));
        gates.push((GateKind::H, vec![pt]));
        gates.push((GateKind::Cx, vec![pt, pc]));
        gates.push((GateKind::H, vec![pc]));
        gates.push((GateKind::H, vec![pt]));
    }
}

/// Total occurrences of close CX pairs per layer of a mapped circuit.
pub fn crosstalk_metric(mapped: &Circuit, topo: &DeviceTopology, threshold: usize) -> usize {
    let dag = build_dag(mapped);
    let layers = layerize(&dag);
    let identity: Vec<usize> = (0..topo.num_qubits).collect();
    let mut total = 0;
    for layer in &layers {
        let cx_gates: Vec<&[usize]> = layer
            .iter()
            .map(|&id| &mapped.gates[id])
            .filter(|g| matches!(g.kind, GateKind::Cx))
            .map(|g: &Gate| g.qubits.as_slice())
            .collect();
        total += close_pair_count(&cx_gates, &identity, topo, threshold);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_qasm;
    use crate::unitary::{circuit_unitary, eq_up_to_phase};
    use crate::CMat;

    fn melbourne() -> DeviceTopology {
        let edges = [
            (1, 0), (1, 2), (2, 3), (4, 3), (4, 10), (5, 4), (5, 6), (5, 9),
            (6, 8), (7, 8), (9, 8), (9, 10), (11, 3), (11, 10), (11, 12),
            (12, 2), (13, 1), (13, 12),
        ];
        DeviceTopology::new(14, &edges)
    }

    #[test]
    fn distance_matrix_invariants() {
        let topo = melbourne();
        for a in 0..14 {
            assert_eq!(topo.dist(a, a), 0);
            for b in 0..14 {
                assert_eq!(topo.dist(a, b), topo.dist(b, a));
                for c in 0..14 {
                    assert!(topo.dist(a, c) <= topo.dist(a, b) + topo.dist(b, c));
                }
            }
        }
    }

    #[test]
    fn layerize_chain_and_parallel() {
        let c = parse_qasm("qreg q[3];\nh q[0];\ncx q[0],q[1];\ncx q[1],q[2];\n").unwrap();
        let dag = build_dag(&c);
        assert_eq!(layerize(&dag), vec![vec![0], vec![1], vec![2]]);
        let c2 = parse_qasm("qreg q[2];\nh q[0];\nh q[1];\n").unwrap();
        assert_eq!(layerize(&build_dag(&c2)), vec![vec![0, 1]]);
    }

    #[test]
    fn heuristic_single_cx_adjacent() {
        let topo = melbourne();
        let sigma: Vec<usize> = (0..14).collect();
        let layer: Vec<&[usize]> = vec![&[1, 0]];
        assert_eq!(heuristic_cost(&layer, &sigma, &topo, true, 1), 1.0);
    }

    #[test]
    fn heuristic_far_pairs_no_indicator() {
        let topo = melbourne();
        let sigma: Vec<usize> = (0..14).collect();
        // (1,0) and (7,8): min cross distance > 1 on Melbourne
        let layer: Vec<&[usize]> = vec![&[1, 0], &[7, 8]];
        let expect = (topo.dist(1, 0) + topo.dist(7, 8)) as f64;
        assert_eq!(heuristic_cost(&layer, &sigma, &topo, true, 1), expect);
    }

    #[test]
    fn heuristic_close_pairs_counted() {
        let topo = melbourne();
        let sigma: Vec<usize> = (0..14).collect();
        // (1,0) and (2,3) share the neighbor relation 1-2
        let layer: Vec<&[usize]> = vec![&[1, 0], &[2, 3]];
        let base = (topo.dist(1, 0) + topo.dist(2, 3)) as f64;
        assert_eq!(heuristic_cost(&layer, &sigma, &topo, true, 1), base + 1.0);
        assert_eq!(heuristic_cost(&layer, &sigma, &topo, false, 1), base);
    }

    #[test]
    fn compatible_circuit_needs_no_swaps() {
        let topo = melbourne();
        let c = parse_qasm("qreg q[2];\ncx q[1],q[0];\n").unwrap();
        let (mapped, state) = map_circuit(&c, &topo, &RouterOptions::default()).unwrap();
        assert!(state.inserted_swaps.is_empty());
        assert_eq!(mapped.gate_count(), 1);
    }

    #[test]
    fn distance_two_cx_needs_one_swap() {
        let topo = melbourne();
        // qubits 0 and 2 are at distance 2 on Melbourne
        let c = parse_qasm("qreg q[3];\ncx q[0],q[2];\n").unwrap();
        let (_, state) = map_circuit(&c, &topo, &RouterOptions::default()).unwrap();
        assert_eq!(state.inserted_swaps.len(), 1);
    }

    #[test]
    fn too_wide_rejected() {
        let topo = DeviceTopology::line(3);
        let c = parse_qasm("qreg q[4];\nh q[0];\n").unwrap();
        assert!(matches!(
            map_circuit(&c, &topo, &RouterOptions::default()),
            Err(Error::CircuitTooWide { .. })
        ));
    }

    #[test]
    fn crosstalk_metric_simple_cases() {
        let topo = melbourne();
        let one_per_layer =
            parse_qasm("qreg q[4];\ncx q[1],q[0];\ncx q[1],q[2];\n").unwrap();
        assert_eq!(crosstalk_metric(&one_per_layer, &topo, 1), 0);
        let close_pair = parse_qasm("qreg q[4];\ncx q[1],q[0];\ncx q[2],q[3];\n").unwrap();
        assert_eq!(crosstalk_metric(&close_pair, &topo, 1), 1);
    }

    /// Mapped circuit equals the original up to the final qubit permutation.
    #[test]
    fn mapping_preserves_unitary_on_line() {
        let topo = DeviceTopology::line(4);
        let c = parse_qasm(
            "qreg q[4];\nh q[0];\ncx q[0],q[3];\nt q[1];\ncx q[2],q[0];\ncx q[1],q[3];\n",
        )
        .unwrap();
        let (mapped, state) = map_circuit(&c, &topo, &RouterOptions::default()).unwrap();
        let u_orig: CMat = circuit_unitary(&c.gates, 4);
        let u_mapped: CMat = circuit_unitary(&mapped.gates, 4);
        // P embeds logical basis into physical: logical qubit q lives at
        // physical position sigma[q].
        let mut perm = CMat::zeros(16, 16);
        for basis in 0..16usize {
            let mut phys = 0usize;
            for q in 0..4 {
                let bit = (basis >> (3 - q)) & 1;
                phys |= bit << (3 - state.final_sigma[q]);
            }
            perm[(phys, basis)] = crate::C64::new(1.0, 0.0);
        }
        let expect = perm * u_orig;
        assert!(eq_up_to_phase(&u_mapped, &expect, 1e-9));
    }

    #[test]
    fn crosstalk_on_cost_dominates_plain() {
        let topo = melbourne();
        let sigma: Vec<usize> = (0..14).collect();
        let layer: Vec<&[usize]> = vec![&[1, 0], &[2, 3], &[4, 10]];
        assert!(
            heuristic_cost(&layer, &sigma, &topo, true, 1)
                >= heuristic_cost(&layer, &sigma, &topo, false, 1)
        );
    }
}
