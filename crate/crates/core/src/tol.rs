//! Numerical tolerances used across the crate.
//!
//! These are deliberate defaults, not tuning knobs scattered through call
//! sites; routines that accept an explicit tolerance document which of these
//! they default to.

/// Margin around the unit circle inside which a pole is treated as "on" the
/// circle. Stability classification and stable/anti-stable splitting refuse
/// to make a call for poles inside this band.
pub const EPS_STAB: f64 = 1e-8;

/// Smallest singular value of a state matrix accepted by `conjugate`.
pub const SIGMA_MIN_TOL: f64 = 1e-10;

/// Relative accuracy of the bisection-certified H-infinity norm.
pub const TOL_NORM: f64 = 1e-6;

/// Normalized residual demanded of a Riccati solution.
pub const TOL_DARE: f64 = 1e-10;

/// Iteration cap for the Riccati solvers.
pub const MAX_ITER_DARE: usize = 200;

/// Residual demanded of a discrete Lyapunov solution.
pub const TOL_DLYAP: f64 = 1e-12;

/// Relative Hankel singular value cutoff for balanced truncation.
pub const TOL_MINIMAL: f64 = 1e-8;

/// State dimension beyond which composition operators reduce their result
/// automatically (stable operands only).
pub const AUTO_MINIMAL_DIM: usize = 200;

/// Strictness margin for the LMI feasibility program: feasible means every
/// block clears this margin.
pub const EPS_STRICT: f64 = 1e-7;

/// Step-size floor for the interior-point line search.
pub const IPM_STEP_FLOOR: f64 = 1e-12;

/// Newton iteration cap for the interior-point solver.
pub const IPM_MAX_ITER: usize = 500;

/// Relative accuracy of gamma bisection.
pub const TOL_GAMMA: f64 = 1e-3;

/// Absolute slack allowed when re-verifying a synthesized closed loop.
pub const TOL_VERIFY: f64 = 1e-3;

/// Magnitude below which a Markov tap entry counts as structurally zero when
/// inferring propagation delays.
pub const TOL_DELAY_TAP: f64 = 1e-9;

/// Grid size used by test oracles.
pub const ORACLE_GRID: usize = 512;

/// Grid size used to initialize the H-infinity norm lower bound.
pub const NORM_INIT_GRID: usize = 1024;
