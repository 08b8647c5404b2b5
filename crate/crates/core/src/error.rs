use thiserror::Error;

/// Errors raised by the scenario, quantum, analytic and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported scenario: {0}")]
    UnsupportedScenario(String),

    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    #[error("zero-probability branch (p = {0:e})")]
    ZeroProbabilityBranch(f64),

    #[error("measurement index {index} out of range for N = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("symmetry breach: {0}")]
    SymmetryBreach(String),

    #[error("pairing error: protocol {protocol} cannot evaluate inequality {ineq}")]
    PairingError { protocol: String, ineq: String },

    #[error("decomposition failure: residual {residual:e} outside span{{F, I}}")]
    DecompositionFailure { residual: f64 },

    #[error("no convergence within {0} players")]
    NoConvergence(usize),

    #[error("insufficient runs: {runs} < {floor}")]
    InsufficientRuns { runs: u64, floor: u64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
