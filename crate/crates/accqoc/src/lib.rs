//! Pulse-level quantum circuit compiler.
//!
//! The pipeline parses OpenQASM 2.0 programs, maps them onto a directed
//! coupling graph with a crosstalk-aware A* router, aggregates gates into
//! small groups, and synthesizes one control pulse per unique group with
//! gradient-based optimal control. A pre-compiled pulse library removes the
//! synthesis cost for groups seen during profiling; uncovered groups are
//! ordered along a similarity MST so each optimization warm-starts from the
//! pulse of its nearest neighbor.

pub mod circuit;
pub mod config;
pub mod device;
pub mod grouping;
pub mod latency;
pub mod library;
pub mod qoc;
pub mod scalar;
pub mod scheduler;
pub mod unitary;

mod error;

pub use error::Error;
pub use scalar::Scalar;

/// Default real scalar for the compiler pipeline.
pub type Real = f64;
/// Complex number over the default scalar.
pub type C64 = num_complex::Complex<Real>;
/// Dense complex matrix over the default scalar.
pub type CMat = nalgebra::DMatrix<C64>;

pub type Result<T> = std::result::Result<T, Error>;
