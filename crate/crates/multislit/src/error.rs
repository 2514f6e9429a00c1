//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by slit geometry operations.
#[derive(Debug, Clone, Error)]
pub enum GeometryError {
    #[error("prefix fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("slit {slit}: extension blocked by {obstruction} after {appended} appended points")]
    ExtensionBlocked {
        slit: usize,
        obstruction: String,
        appended: usize,
    },
    #[error("system failed validation: {0}")]
    Invalid(String),
    #[error("malformed system JSON: {0}")]
    Parse(String),
}

/// Errors raised by the conformal mapping engine.
#[derive(Debug, Clone, Error)]
pub enum ZipperError {
    #[error("geometric conflict at unzip step {step}: {detail}")]
    GeometricConflict { step: usize, detail: String },
    #[error("kernel is only available for connectivity 0, got {0}")]
    UnsupportedConnectivity(usize),
    #[error("kernel pole: w coincides with the boundary point u")]
    KernelPole,
    #[error("kernel precondition violated: {0}")]
    KernelDomain(String),
}

/// Errors raised by the lmr oracle.
#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error(transparent)]
    Zipper(#[from] ZipperError),
    #[error("prefix fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("expected {expected} prefix fractions, got {got}")]
    Arity { expected: usize, got: usize },
    #[error("partition is not sorted or does not span [0, t]")]
    BadPartition,
    #[error("continuity modulus: accuracy floor reached before certifying eps={eps}")]
    FloorReached { eps: f64 },
    #[error("operation requires a two-slit system, got m={0}")]
    NotTwoSlits(usize),
}

/// Errors raised by the constant-coefficient construction.
#[derive(Debug, Clone, Error)]
pub enum ConstructError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(
        "root bracket exhausted at level n={n}, step {step}, slit {slit}: \
         extension headroom insufficient (needed lmr increment {target:.3e})"
    )]
    BracketFailure {
        n: usize,
        step: usize,
        slit: usize,
        target: f64,
    },
    #[error("coefficient solve did not converge after {iterations} iterations; residuals {residuals:?}")]
    NonConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },
    #[error("refinement stalled: level differences {diffs:?} stopped decreasing")]
    RefinementStall { diffs: Vec<f64> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Errors raised by the forward Loewner solver.
#[derive(Debug, Clone, Error)]
pub enum SolveError {
    #[error("step size underflow at t={t}: equation too stiff near a driving point")]
    StepUnderflow { t: f64 },
    #[error("driving points for slits {a} and {b} collide at t={t}")]
    DrivingCollision { a: usize, b: usize, t: f64 },
    #[error("invalid solver input: {0}")]
    BadInput(String),
}

/// Crate-wide error, used by the CLI surface.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Zipper(#[from] ZipperError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}
