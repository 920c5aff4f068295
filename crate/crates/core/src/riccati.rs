//! Discrete Lyapunov and generalized discrete algebraic Riccati solvers.
//!
//! Every Riccati instance in the pipeline is an instance of
//!
//!   X = A' X A + Qm - (A' X B + S)(R + B' X B)^-1 (B' X A + S')
//!
//! with a stabilizing solution: the closed loop A + B F must be stable for
//! F = -(R + B' X B)^-1 (B' X A + S'). The primary solver is structured
//! doubling; a plain fixed-point iteration acts as fallback for cases where
//! doubling breaks down but the map is still a contraction. Both paths are
//! gated by the same residual and closed-loop checks, so a returned solution
//! is always certified.

use crate::error::Error;
use crate::linalg;
use crate::tol;
use crate::Result;
use nalgebra::DMatrix;

/// Solve X = A X A' + Q for stable A by squared Smith iteration.
pub fn solve_dlyap(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::dim("dlyap: A and Q must be square of equal size"));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let rho = linalg::spectral_radius(a);
    if rho >= 1.0 - tol::EPS_STAB {
        return Err(Error::NotStable(format!(
            "dlyap requires a stable state matrix (spectral radius {rho:.6})"
        )));
    }
    let mut x = linalg::sym(q);
    let mut ak = a.clone();
    for _ in 0..200 {
        let incr = &ak * &x * ak.transpose();
        let step = linalg::max_abs(&incr);
        x += incr;
        ak = &ak * &ak;
        if step <= tol::TOL_DLYAP * linalg::max_abs(&x).max(1.0) {
            return Ok(linalg::sym(&x));
        }
    }
    Err(Error::NumericalBreakdown(
        "dlyap: Smith iteration failed to converge".into(),
    ))
}

/// Solve W = Al' W Ar + Q for the cross-Gramian of two stable systems by
/// squared Smith on the pair. Al and Ar may differ in size; Q is
/// rows(Al) x rows(Ar).
pub fn solve_stein_cross(
    al: &DMatrix<f64>,
    ar: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let nl = al.nrows();
    let nr = ar.nrows();
    if al.ncols() != nl || ar.ncols() != nr || q.nrows() != nl || q.ncols() != nr {
        return Err(Error::dim("stein: dimensions of Al, Ar, Q disagree"));
    }
    if nl == 0 || nr == 0 {
        return Ok(DMatrix::zeros(nl, nr));
    }
    for (m, side) in [(al, "left"), (ar, "right")] {
        let rho = linalg::spectral_radius(m);
        if rho >= 1.0 - tol::EPS_STAB {
            return Err(Error::NotStable(format!(
                "stein requires stable factors ({side} spectral radius {rho:.6})"
            )));
        }
    }
    let mut x = q.clone();
    let mut lk = al.transpose();
    let mut rk = ar.clone();
    for _ in 0..200 {
        let incr = &lk * &x * &rk;
        let step = linalg::max_abs(&incr);
        x += incr;
        lk = &lk * &lk;
        rk = &rk * &rk;
        if step <= tol::TOL_DLYAP * linalg::max_abs(&x).max(1.0) {
            return Ok(x);
        }
    }
    Err(Error::NumericalBreakdown(
        "stein: Smith iteration failed to converge".into(),
    ))
}

/// Data for the generalized Riccati equation; see the module doc for the
/// fixed-point form. `s` couples state and input costs and may be zero.
#[derive(Debug, Clone)]
pub struct GdareProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub qm: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub s: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GdareSolution {
    pub x: DMatrix<f64>,
    /// Stabilizing feedback, F = -(R + B'XB)^-1 (B'XA + S').
    pub f: DMatrix<f64>,
    /// Spectral radius of A + BF.
    pub closed_loop_radius: f64,
    /// Max-abs residual of the fixed-point form.
    pub residual: f64,
    pub iterations: usize,
}

impl GdareProblem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        qm: DMatrix<f64>,
        r: DMatrix<f64>,
        s: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        if a.ncols() != n || b.nrows() != n {
            return Err(Error::dim("gdare: A square, B conformal"));
        }
        if qm.shape() != (n, n) || r.shape() != (m, m) || s.shape() != (n, m) {
            return Err(Error::dim(format!(
                "gdare: Qm must be {n}x{n}, R {m}x{m}, S {n}x{m}"
            )));
        }
        Ok(GdareProblem { a, b, qm, r, s })
    }

    fn residual_at(&self, x: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let rx = &self.r + self.b.transpose() * x * &self.b;
        let k_num = self.a.transpose() * x * &self.b + &self.s;
        let gain = linalg::solve(&rx, &(k_num.transpose()), "gdare: R + B'XB")?;
        let next = self.a.transpose() * x * &self.a + &self.qm - &k_num * &gain;
        let res = linalg::max_abs(&(&next - x));
        let f = -gain;
        Ok((res, f))
    }

    fn certify(&self, x: DMatrix<f64>, iterations: usize) -> Result<GdareSolution> {
        let x = linalg::sym(&x);
        let (residual, f) = self.residual_at(&x)?;
        if residual > 1e-8 * linalg::max_abs(&x).max(1.0) {
            return Err(Error::NoStabilizingSolution {
                iterations,
                residual,
            });
        }
        let closed = &self.a + &self.b * &f;
        let closed_loop_radius = linalg::spectral_radius(&closed);
        if closed_loop_radius >= 1.0 {
            return Err(Error::NoStabilizingSolution {
                iterations,
                residual: closed_loop_radius,
            });
        }
        Ok(GdareSolution {
            x,
            f,
            closed_loop_radius,
            residual,
            iterations,
        })
    }
}

/// Stabilizing solution of the generalized Riccati equation.
pub fn solve_gdare(p: &GdareProblem) -> Result<GdareSolution> {
    let n = p.a.nrows();
    let m = p.b.ncols();
    if n == 0 {
        // Static problem: X is empty, F maps states (none) to inputs.
        linalg::inverse(&p.r, "gdare: R")?;
        return Ok(GdareSolution {
            x: DMatrix::zeros(0, 0),
            f: DMatrix::zeros(m, 0),
            closed_loop_radius: 0.0,
            residual: 0.0,
            iterations: 0,
        });
    }
    if m == 0 {
        // No inputs: Stein equation X = A'XA + Qm.
        let x = solve_dlyap(&p.a.transpose(), &p.qm)?;
        return p.certify(x, 0);
    }
    match sda(p) {
        Ok((x, iters)) => match p.certify(x, iters) {
            Ok(sol) => return Ok(sol),
            Err(e) => log::debug!("gdare: doubling produced uncertified solution: {e}"),
        },
        Err(e) => log::debug!("gdare: doubling failed: {e}"),
    }
    let (x, iters) = fixed_point(p)?;
    p.certify(x, iters)
}

/// Structured doubling iteration. Eliminates the cross term first, then
/// doubles (A_k, G_k, H_k); H_k increases to the stabilizing X.
fn sda(p: &GdareProblem) -> Result<(DMatrix<f64>, usize)> {
    let rinv_st = linalg::solve(&p.r, &p.s.transpose(), "gdare: R")?;
    let a_hat = &p.a - &p.b * &rinv_st;
    let q_hat = linalg::sym(&(&p.qm - &p.s * &rinv_st));
    let rinv_bt = linalg::solve(&p.r, &p.b.transpose(), "gdare: R")?;
    let g0 = linalg::sym(&(&p.b * rinv_bt));

    let n = p.a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let mut ak = a_hat;
    let mut gk = g0;
    let mut hk = q_hat;
    for iter in 1..=tol::MAX_ITER_DARE {
        let w = &id + &gk * &hk;
        let winv_ak = linalg::solve(&w, &ak, "gdare: I + GH")?;
        let winv_g = linalg::solve(&w, &gk, "gdare: I + GH")?;
        let a_next = &ak * &winv_ak;
        let g_next = linalg::sym(&(&gk + &ak * winv_g * ak.transpose()));
        let h_incr = ak.transpose() * &hk * &winv_ak;
        let h_next = linalg::sym(&(&hk + h_incr));
        let step = linalg::max_abs(&(&h_next - &hk));
        let scale = linalg::max_abs(&h_next).max(1.0);
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if step <= tol::TOL_DARE * scale {
            return Ok((hk, iter));
        }
        if !hk.iter().all(|v| v.is_finite()) || !gk.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBreakdown("gdare: doubling diverged".into()));
        }
    }
    Err(Error::NoStabilizingSolution {
        iterations: tol::MAX_ITER_DARE,
        residual: f64::NAN,
    })
}

fn fixed_point(p: &GdareProblem) -> Result<(DMatrix<f64>, usize)> {
    let n = p.a.nrows();
    // Starting from the Stein solution keeps R + B'XB invertible from the
    // first step when R itself is singular (inner-outer of systems with
    // rank-deficient feedthrough).
    let mut x = DMatrix::<f64>::zeros(n, n);
    if linalg::max_abs(&p.qm) > 0.0 && linalg::spectral_radius(&p.a) < 1.0 - tol::EPS_STAB {
        if let Ok(x0) = solve_dlyap(&p.a.transpose(), &linalg::sym(&p.qm)) {
            x = x0;
        }
    }
    for iter in 1..=2000 {
        let rx = &p.r + p.b.transpose() * &x * &p.b;
        let k_num = p.a.transpose() * &x * &p.b + &p.s;
        let gain = linalg::solve(&rx, &k_num.transpose(), "gdare: R + B'XB")?;
        let next = linalg::sym(&(p.a.transpose() * &x * &p.a + &p.qm - &k_num * gain));
        let step = linalg::max_abs(&(&next - &x));
        x = next;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericalBreakdown("gdare: iteration diverged".into()));
        }
        if step <= tol::TOL_DARE * linalg::max_abs(&x).max(1.0) {
            return Ok((x, iter));
        }
    }
    Err(Error::NoStabilizingSolution {
        iterations: 2000,
        residual: f64::NAN,
    })
}
