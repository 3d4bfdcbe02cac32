use thiserror::Error;

/// Errors raised while loading networks, evaluating the objective or optimizing it.
#[derive(Debug, Error)]
pub enum GridError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed network document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("network is disconnected: node {node} is unreachable from node 1")]
    Disconnected { node: usize },

    #[error("supply deficit: total capacity {capacity} is below total demand {demand}")]
    SupplyDeficit { capacity: f64, demand: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("direction vector is zero")]
    ZeroDirection,

    #[error("point lies outside the supply polytope (largest violation {violation:e})")]
    Infeasible { violation: f64 },

    #[error("p + v leaves the supply polytope (largest violation {violation:e})")]
    InfeasibleDirection { violation: f64 },

    #[error("line {edge} ({from}-{to}) is saturated: sine of the mean phase difference is {value}")]
    Saturation {
        edge: usize,
        from: usize,
        to: usize,
        value: f64,
    },

    #[error("matrix is not Hurwitz: eigenvalue {re} + {im}i has real part above -{margin:e}")]
    NotHurwitz { re: f64, im: f64, margin: f64 },

    #[error("Lyapunov residual {residual:e} exceeds the tolerance {tolerance:e}")]
    LyapunovResidual { residual: f64, tolerance: f64 },

    #[error("degenerate spectrum: eigenvalues {index} and {next} ({lower}, {upper}) are closer than {gap:e}")]
    DegenerateSpectrum {
        index: usize,
        next: usize,
        lower: f64,
        upper: f64,
        gap: f64,
    },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("standard deviation of line {edge} is {sigma:e}; cannot divide by it")]
    VanishingSigma { edge: usize, sigma: f64 },

    #[error("projection onto the supply polytope failed: {0}")]
    Projection(String),

    #[error("line search exceeded {halvings} halvings without sufficient decrease")]
    LineSearchCap { halvings: usize },

    #[error("iteration cap of {0} reached")]
    IterationCap(usize),
}

pub type Result<T> = std::result::Result<T, GridError>;
