//! Numerical thresholds shared across modules.
//!
//! Every constant here is absolute unless its name says otherwise. They sit far
//! below the magnitudes of the bundled twelve-node example, where supplies are
//! tens of units and the objective is of order one.

/// Eigenvalues of a system matrix must have real part below `-HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-10;

/// Relative residual allowed for a Lyapunov solve:
/// `||A X + X A^T + Q||_F <= LYAPUNOV_RESIDUAL * max(1, ||Q||_F)`.
pub const LYAPUNOV_RESIDUAL: f64 = 1e-10;

/// Relative asymmetry allowed in a Lyapunov right-hand side.
pub const SYMMETRY: f64 = 1e-12;

/// Membership tolerance for the supply polytope.
pub const MEMBERSHIP: f64 = 1e-9;

/// KKT residual tolerance of the projection.
pub const PROJECTION_KKT: f64 = 1e-10;

/// `|A(k) p + b_k|` at or below this counts as zero (non-smooth branch of the mean term).
pub const ZERO_MEAN: f64 = 1e-10;

/// Relative tolerance for membership in the maximizing edge set,
/// `f_k >= f - MAX_SET * max(1, |f|)`.
pub const MAX_SET: f64 = 1e-9;

/// Distance kept from `|sin| = 1`; evaluation is refused closer to it.
pub const SATURATION_MARGIN: f64 = 1e-9;

/// Eigenvalues of the Laplacian below `ZERO_EIGENVALUE * lambda_max` count as zero.
pub const ZERO_EIGENVALUE: f64 = 1e-10;

/// Smallest admissible gap between consecutive eigenvalues of the scaled stiffness
/// matrix when eigenvectors are differentiated numerically.
pub const SPECTRAL_GAP: f64 = 1e-6;

/// Default central-difference step for the eigenbasis derivatives.
pub const DELTA_FD: f64 = 1e-4;

/// A directional derivative with magnitude below this is treated as zero.
pub const FPRIME_ZERO: f64 = 1e-10;

/// Second directional derivatives with magnitude below this are treated as zero.
pub const FSECOND_ZERO: f64 = 1e-9;

/// Standard deviations at or below this value cannot be differentiated.
pub const SIGMA_FLOOR: f64 = 1e-12;
