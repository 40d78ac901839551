//! Numerical tolerances and defaults shared across modules.

/// Absolute tolerance of adaptive quadrature.
pub const QUAD_ABS_TOL: f64 = 1e-10;
/// Relative tolerance of adaptive quadrature.
pub const QUAD_REL_TOL: f64 = 1e-8;
/// Maximum bisection depth of adaptive quadrature.
pub const QUAD_MAX_DEPTH: usize = 60;

/// Points per sign in the tempered-stable inverse-cdf tables.
pub const INVERSE_CDF_POINTS: usize = 2048;
/// Tail mass (relative) discarded beyond the largest tabulated jump size.
pub const INVERSE_CDF_TAIL: f64 = 1e-13;
/// Gauss-Legendre panels per sign for per-step jump-size integrals.
pub const JUMP_QUAD_PANELS: usize = 16;

/// Slope below which the order-exponent estimate reports failure.
pub const ORDER_EXPONENT_FLOOR: f64 = 0.05;

/// Default lower bound on |a| and |d_z b| in assumption checks.
pub const ELLIPTICITY_FLOOR: f64 = 1e-6;
/// Default lower bound on |1 + d_y b| in assumption checks.
pub const INVERTIBILITY_FLOOR: f64 = 1e-6;

/// Paths per reduction chunk. Fixed so the reduction order never depends on
/// the worker count.
pub const CHUNK_PATHS: usize = 1024;
/// Maximum fraction of aborted paths before an estimate is rejected.
pub const MAX_ABORT_FRACTION: f64 = 0.01;
/// Relative standard error above which a finite-difference estimate is flagged.
pub const FD_HIGH_VARIANCE_RATIO: f64 = 0.5;
/// Relative spot bump for first-order finite differences.
pub const FD_REL_BUMP: f64 = 1e-3;
/// Relative spot bump for second-order finite differences.
pub const FD_REL_BUMP2: f64 = 0.5;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Environment variable that sets the worker count.
pub const WORKERS_ENV: &str = "LEVY_GREEKS_WORKERS";
/// Version string embedded in every report record.
pub const ARTIFACT_VERSION: &str = concat!("levy-greeks-", env!("CARGO_PKG_VERSION"));
