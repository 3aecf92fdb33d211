//! Schedule length and decoherence estimates.
//!
//! Latency of a grouped program is the longest weighted path through its
//! dependency DAG, computed by one forward DP pass. The gate-based baseline
//! runs the same DP over the gate DAG with a fixed per-gate latency table.

use crate::circuit::{build_dag, Circuit, GateKind};
use crate::config::Config;
use crate::grouping::GroupDag;

#[derive(Debug, Clone, Copy)]
pub struct GateLatencyTable {
    pub cx_ns: f64,
    pub one_q_ns: f64,
    pub swap_ns: f64,
}

impl GateLatencyTable {
    pub fn from_config(cfg: &Config) -> GateLatencyTable {
        GateLatencyTable {
            cx_ns: cfg.latency_cx_ns,
            one_q_ns: cfg.latency_1q_ns,
            swap_ns: cfg.latency_swap_ns,
        }
    }

    pub fn gate_ns(&self, kind: &GateKind) -> f64 {
        match kind {
            GateKind::Cx => self.cx_ns,
            GateKind::Swap => self.swap_ns,
            _ => self.one_q_ns,
        }
    }
}

/// Earliest finish time per node over a DAG given per-node durations; the
/// overall latency is the maximum finish time.
fn longest_path(preds: &[Vec<usize>], topo: &[usize], durations: &[f64]) -> (Vec<f64>, f64) {
    let mut finish = vec![0.0f64; durations.len()];
    let mut total = 0.0f64;
    for &g in topo {
        let start = preds[g].iter().map(|&p| finish[p]).fold(0.0f64, f64::max);
        finish[g] = start + durations[g];
        total = total.max(finish[g]);
    }
    (finish, total)
}

/// Total latency of a grouped program, ns.
pub fn overall_latency(dag: &GroupDag, durations: &[f64]) -> f64 {
    longest_path(&dag.preds, &dag.topo, durations).1
}

/// Absolute start time per group, ns.
pub fn group_start_times(dag: &GroupDag, durations: &[f64]) -> Vec<f64> {
    let (finish, _) = longest_path(&dag.preds, &dag.topo, durations);
    finish.iter().zip(durations).map(|(f, d)| f - d).collect()
}

/// Latency of the same circuit executed gate by gate from the fixed table.
pub fn gate_based_latency(circuit: &Circuit, table: &GateLatencyTable) -> f64 {
    let dag = build_dag(circuit);
    let durations: Vec<f64> =
        circuit.gates.iter().map(|g| table.gate_ns(&g.kind)).collect();
    let topo: Vec<usize> = (0..circuit.gates.len()).collect();
    longest_path(&dag.preds, &topo, &durations).1
}

/// Probability that a qubit decays during the schedule: 1 - exp(-t/T1).
pub fn coherence_error(latency_ns: f64, t1_us: f64) -> f64 {
    1.0 - (-latency_ns / (t1_us * 1e3)).exp()
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SpeedupReport {
    pub pulse_latency_ns: f64,
    pub gate_latency_ns: f64,
    /// pulse / gate; below 1 means the pulse schedule is shorter.
    pub ratio: f64,
    pub pulse_coherence_error: f64,
    pub gate_coherence_error: f64,
}

pub fn speedup_report(pulse_ns: f64, gate_ns: f64, cfg: &Config) -> SpeedupReport {
    SpeedupReport {
        pulse_latency_ns: pulse_ns,
        gate_latency_ns: gate_ns,
        ratio: pulse_ns / gate_ns,
        pulse_coherence_error: coherence_error(pulse_ns, cfg.t1_us),
        gate_coherence_error: coherence_error(gate_ns, cfg.t1_us),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::parse_qasm;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn make_dag(n: usize, edges: &[(usize, usize)]) -> GroupDag {
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for &(a, b) in edges {
            preds[b].push(a);
            succs[a].push(b);
        }
        // edges always go low -> high in these tests
        GroupDag { preds, succs, topo: (0..n).collect() }
    }

    #[test]
    fn chain_sums_and_diamond_takes_max() {
        let chain = make_dag(3, &[(0, 1), (1, 2)]);
        assert_eq!(overall_latency(&chain, &[1.0, 2.0, 3.0]), 6.0);
        let diamond = make_dag(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert_eq!(overall_latency(&diamond, &[1.0, 5.0, 2.0, 1.0]), 7.0);
        let starts = group_start_times(&diamond, &[1.0, 5.0, 2.0, 1.0]);
        assert_eq!(starts, vec![0.0, 1.0, 1.0, 6.0]);
    }

    #[test]
    fn parallel_nodes_overlap() {
        let dag = make_dag(2, &[]);
        assert_eq!(overall_latency(&dag, &[4.0, 9.0]), 9.0);
    }

    /// Every source-to-sink path enumerated explicitly.
    fn exhaustive_longest(preds: &[Vec<usize>], durations: &[f64]) -> f64 {
        fn walk(node: usize, preds: &[Vec<usize>], durations: &[f64]) -> f64 {
            durations[node]
                + preds[node]
                    .iter()
                    .map(|&p| walk(p, preds, durations))
                    .fold(0.0f64, f64::max)
        }
        (0..durations.len())
            .map(|v| walk(v, preds, durations))
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn dp_matches_path_enumeration_on_random_dags() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..25 {
            let n = rng.gen_range(2..15);
            let mut edges = Vec::new();
            for b in 1..n {
                for a in 0..b {
                    if rng.gen_bool(0.3) {
                        edges.push((a, b));
                    }
                }
            }
            let dag = make_dag(n, &edges);
            let durations: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..10.0)).collect();
            let dp = overall_latency(&dag, &durations);
            let brute = exhaustive_longest(&dag.preds, &durations);
            assert!((dp - brute).abs() < 1e-9);
        }
    }

    #[test]
    fn gate_baseline_uses_table() {
        let cfg = Config::default();
        let table = GateLatencyTable::from_config(&cfg);
        let c = parse_qasm("qreg q[2];\nh q[0];\ncx q[0],q[1];\nh q[1];\n").unwrap();
        let expect = cfg.latency_1q_ns + cfg.latency_cx_ns + cfg.latency_1q_ns;
        assert!((gate_based_latency(&c, &table) - expect).abs() < 1e-9);
        // parallel single-qubit gates do not add up
        let p = parse_qasm("qreg q[2];\nh q[0];\nh q[1];\n").unwrap();
        assert!((gate_based_latency(&p, &table) - cfg.latency_1q_ns).abs() < 1e-9);
    }

    #[test]
    fn coherence_error_monotone_and_bounded() {
        assert_eq!(coherence_error(0.0, 57.35), 0.0);
        let a = coherence_error(1000.0, 57.35);
        let b = coherence_error(2000.0, 57.35);
        assert!(0.0 < a && a < b && b < 1.0);
        // 1 us at T1 = 57.35 us
        assert!((coherence_error(1000.0, 57.35) - (1.0 - (-1.0f64 / 57.35).exp())).abs() < 1e-12);
    }
}
