use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("unsupported gate `{0}` at line {1}")]
    UnsupportedGate(String, usize),

    #[error("circuit uses {circuit} qubits but device has only {device}")]
    CircuitTooWide { circuit: usize, device: usize },

    #[error("duration {duration} ns is not a multiple of dt {dt} ns")]
    DurationNotOnGrid { duration: f64, dt: f64 },

    #[error("non-finite gradient encountered: {0}")]
    NonFiniteGradient(String),

    #[error("pulse synthesis infeasible for group {key} up to {max_duration} ns")]
    Infeasible { key: String, max_duration: f64 },

    #[error("missing latency for group {0}")]
    MissingLatency(String),

    #[error("unknown gate kind `{0}` in latency table")]
    UnknownGateKind(String),

    #[error("partition count {k} exceeds vertex count {n}")]
    BadPartitionCount { k: usize, n: usize },

    #[error("grouping policy mismatch: library uses {library}, program grouped with {program}")]
    PolicyMismatch { library: String, program: String },

    #[error("control-model fingerprint mismatch: library `{library}` vs current `{current}`")]
    ModelMismatch { library: String, current: String },

    #[error("unknown policy label `{0}` (expected e.g. map2b4l)")]
    BadPolicyLabel(String),

    #[error("empty corpus: {0}")]
    EmptyCorpus(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
