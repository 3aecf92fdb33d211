//! Run-wide configuration. A single JSON file keeps the control model,
//! optimizer budgets, error model and latency table internally consistent.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Pulse time step in ns.
    pub dt_ns: f64,
    /// Control amplitude bound (angular frequency, rad/ns).
    pub amp_max: f64,
    /// Fixed two-qubit coupling J/2pi in MHz.
    pub j_coupling_mhz: f64,
    /// Qubit frequency omega/2pi in GHz (drops out in the rotating frame,
    /// kept as part of the model fingerprint).
    pub qubit_freq_ghz: f64,
    /// Synthesis stops once infidelity falls below this.
    pub target_infidelity: f64,
    /// Iteration cap per optimization run.
    pub max_iters: usize,
    /// Wall-clock budget per binary-search probe, seconds.
    pub probe_budget_secs: f64,
    /// Two CX gates in a layer count as close when the minimum physical
    /// distance between their qubits is at most this many hops.
    pub crosstalk_threshold: usize,
    /// Scaling of the first MST node's identity-edge weight.
    pub alpha: f64,
    /// Latency of a CX gate in the gate-based baseline, ns.
    pub latency_cx_ns: f64,
    /// Latency of any 1-qubit gate in the gate-based baseline, ns.
    pub latency_1q_ns: f64,
    /// Latency of a native SWAP in the gate-based baseline, ns.
    pub latency_swap_ns: f64,
    /// Relaxation time, microseconds.
    pub t1_us: f64,
    /// Coherence time, microseconds.
    pub t2_us: f64,
    /// Average CX gate error.
    pub gate_error_cx: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            dt_ns: 0.1,
            amp_max: 1.0,
            j_coupling_mhz: 20.0,
            qubit_freq_ghz: 3.9,
            target_infidelity: 1e-4,
            max_iters: 5000,
            probe_budget_secs: 600.0,
            crosstalk_threshold: 1,
            alpha: 1.0,
            latency_cx_ns: 974.9,
            latency_1q_ns: 100.0,
            latency_swap_ns: 3.0 * 974.9,
            t1_us: 57.35,
            t2_us: 61.82,
            gate_error_cx: 2.46e-2,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    /// Pulses are hardware-model-specific; this string identifies the model
    /// a library was built against.
    pub fn model_fingerprint(&self) -> String {
        format!(
            "dt={};amp={};j={};freq={}",
            self.dt_ns, self.amp_max, self.j_coupling_mhz, self.qubit_freq_ghz
        )
    }
}
