//! Inner-outer, bi-stable spectral, and Nehari constructions.
//!
//! All four factorizations reduce to one stabilizing Riccati solution each:
//!
//! * inner-outer: G = U_i U_o with U_i~ U_i = I and U_o square with a stable
//!   inverse, from the output-normalizing Riccati equation of (A, B, C, D);
//! * co-inner-outer: the transposed dual, G = V_co V_ci with V_ci V_ci~ = I;
//! * spectral factor: bistable M with M~M = gamma^2 I - Y~Y, from the
//!   para-Hermitian expansion of Y~Y (so Y may carry anti-stable content);
//! * co-spectral factor: bistable N with N N~ = gamma^2 I - Z Z~, by
//!   transposition of the previous one;
//! * the Nehari step: the central suboptimal approximation of G~ by a stable
//!   system, whose error is all-pass at the requested level.

use crate::error::Error;
use crate::linalg;
use crate::norms::{self, ParaHermitian};
use crate::realization::{MixedSystem, RealizationSS};
use crate::riccati::{solve_gdare, GdareProblem};
use crate::Result;
use nalgebra::DMatrix;

/// Result of an inner-outer factorization: G = inner * outer.
#[derive(Debug, Clone)]
pub struct InnerOuter {
    /// Tall inner factor, inner~ inner = I on the circle.
    pub inner: RealizationSS,
    /// Square outer factor with stable inverse.
    pub outer: RealizationSS,
    /// Cached stable realization of outer^-1.
    pub outer_inv: RealizationSS,
}

/// Result of a co-inner-outer factorization: G = co_outer * co_inner.
#[derive(Debug, Clone)]
pub struct CoInnerOuter {
    /// Wide co-inner factor, co_inner co_inner~ = I on the circle.
    pub co_inner: RealizationSS,
    /// Square co-outer factor with stable inverse.
    pub co_outer: RealizationSS,
    /// Cached stable realization of co_outer^-1.
    pub co_outer_inv: RealizationSS,
}

/// Factor a stable G (p >= m inputs required) as inner times outer.
///
/// With X the stabilizing solution of the Riccati equation for
/// (Qm, R, S) = (C'C, D'D, C'D) and F its feedback, H = (R + B'XB)^{1/2}:
/// U_i = (A+BF, B H^-1, C+DF, D H^-1), U_o = (A, B, -HF, H), and
/// U_o^-1 = (A+BF, B H^-1, F, H^-1) is stable because A+BF is.
pub fn inner_outer(g: &RealizationSS) -> Result<InnerOuter> {
    if !g.is_stable() {
        return Err(Error::NotStable("inner-outer input must be stable".into()));
    }
    if g.outputs() < g.inputs() {
        return Err(Error::dim(format!(
            "inner-outer needs a tall system, got {}x{}",
            g.outputs(),
            g.inputs()
        )));
    }
    let prob = GdareProblem::new(
        g.a().clone(),
        g.b().clone(),
        g.c().transpose() * g.c(),
        g.d().transpose() * g.d(),
        g.c().transpose() * g.d(),
    )?;
    let sol = solve_gdare(&prob).map_err(|e| Error::FactorizationFailed {
        stage: "inner-outer".into(),
        detail: e.to_string(),
    })?;
    let w = g.d().transpose() * g.d() + g.b().transpose() * &sol.x * g.b();
    let h = linalg::pd_sqrt(&w, "inner-outer: R + B'XB")?;
    let h_inv = linalg::pd_inverse(&h, "inner-outer: H")?;
    let a_cl = g.a() + g.b() * &sol.f;
    let inner = RealizationSS::new(
        a_cl.clone(),
        g.b() * &h_inv,
        g.c() + g.d() * &sol.f,
        g.d() * &h_inv,
    )?;
    let outer = RealizationSS::new(
        g.a().clone(),
        g.b().clone(),
        -&h * &sol.f,
        h.clone(),
    )?;
    let outer_inv = RealizationSS::new(a_cl, g.b() * &h_inv, sol.f.clone(), h_inv)?;
    if !inner.is_stable() || !outer_inv.is_stable() {
        return Err(Error::FactorizationFailed {
            stage: "inner-outer".into(),
            detail: "closed loop failed the stability check".into(),
        });
    }
    Ok(InnerOuter {
        inner,
        outer,
        outer_inv,
    })
}

/// Factor a stable wide G (p <= m) as co-outer times co-inner, by
/// transposing the inner-outer factorization of G^T.
pub fn co_inner_outer(g: &RealizationSS) -> Result<CoInnerOuter> {
    let io = inner_outer(&g.transpose())?;
    Ok(CoInnerOuter {
        co_inner: io.inner.transpose(),
        co_outer: io.outer.transpose(),
        co_outer_inv: io.outer_inv.transpose(),
    })
}

/// Bistable spectral factor M with M~M = gamma^2 I - Y~Y on the circle.
///
/// Writing Y~Y = Phi0 + S + S~ with S = (A, B, C, 0) stable strictly proper,
/// the right-hand side is (gamma^2 I - Phi0) + (-S) + (-S)~ and the factor
/// comes from the stabilizing solution of the Riccati equation with
/// (Qm, R, Scross) = (0, gamma^2 I - Phi0, -C'). Requires gamma > ||Y||.
pub fn spectral_factor(y: &MixedSystem, gamma: f64) -> Result<RealizationSS> {
    let ph = ParaHermitian::product(y)?;
    spectral_factor_of_product(&ph, gamma)
}

/// As [`spectral_factor`], but from an already-assembled para-Hermitian
/// product Phi0 + S + S~.
pub fn spectral_factor_of_product(ph: &ParaHermitian, gamma: f64) -> Result<RealizationSS> {
    let m = ph.phi0.nrows();
    let r0 = DMatrix::<f64>::identity(m, m) * (gamma * gamma) - &ph.phi0;
    let r0_min = linalg::sym_eig_min(&r0);
    if r0_min <= 0.0 {
        return Err(Error::FactorizationFailed {
            stage: "spectral factor".into(),
            detail: format!(
                "gamma^2 I - Phi0 has minimum eigenvalue {r0_min:.3e}; the bound is not cleared"
            ),
        });
    }
    if ph.s.state_dim() == 0 {
        let h = linalg::pd_sqrt(&r0, "spectral factor: constant block")?;
        return Ok(RealizationSS::from_static(h));
    }
    let prob = GdareProblem::new(
        ph.s.a().clone(),
        ph.s.b().clone(),
        DMatrix::zeros(ph.s.state_dim(), ph.s.state_dim()),
        r0.clone(),
        -ph.s.c().transpose(),
    )?;
    let sol = solve_gdare(&prob).map_err(|e| Error::FactorizationFailed {
        stage: "spectral factor".into(),
        detail: e.to_string(),
    })?;
    let w = &r0 + ph.s.b().transpose() * &sol.x * ph.s.b();
    let h = linalg::pd_sqrt(&w, "spectral factor: R + B'XB")?;
    // F = -W^-1 (B'XA - C), so C_M = -H F reproduces M~M = gamma^2 I - Y~Y.
    let m_fac = RealizationSS::new(
        ph.s.a().clone(),
        ph.s.b().clone(),
        -&h * &sol.f,
        h,
    )?;
    let m_inv = m_fac.invert()?;
    if !m_fac.is_stable() || !m_inv.is_stable() {
        return Err(Error::FactorizationFailed {
            stage: "spectral factor".into(),
            detail: "factor or its inverse failed the stability check".into(),
        });
    }
    Ok(m_fac)
}

/// Bistable co-spectral factor N with N N~ = gamma^2 I - Z Z~ on the circle,
/// by transposing the spectral factor of Z^T.
pub fn co_spectral_factor(z: &MixedSystem, gamma: f64) -> Result<RealizationSS> {
    let m = spectral_factor(&z.transpose(), gamma)?;
    Ok(m.transpose())
}

/// Central suboptimal Nehari step: for stable strictly proper G and a level
/// `bound` strictly above the Hankel norm of G, a stable Q such that
/// G~ - Q is all-pass with norm exactly `bound`.
pub fn nehari_fit(g: &RealizationSS, bound: f64) -> Result<RealizationSS> {
    if !g.is_stable() {
        return Err(Error::NotStable("nehari input must be stable".into()));
    }
    if linalg::max_abs(g.d()) != 0.0 {
        return Err(Error::InvalidConfig(
            "nehari input must be strictly proper".into(),
        ));
    }
    if g.outputs() < g.inputs() {
        // Wide systems go through the transposed problem.
        let q = nehari_fit(&g.transpose(), bound)?;
        return Ok(q.transpose());
    }
    let hankel = norms::hankel_norm(g)?;
    if hankel >= bound * (1.0 - 1e-12) {
        return Err(Error::HankelBoundExceeded {
            hankel,
            bound,
        });
    }
    let (p, m) = (g.outputs(), g.inputs());
    let n = g.state_dim();
    if n == 0 {
        // Degenerate limit of the formulas below: Q = -bound * U'.
        let mut u = DMatrix::zeros(p, m);
        for i in 0..m {
            u[(i, i)] = 1.0;
        }
        return Ok(RealizationSS::from_static(-(u.transpose()) * bound));
    }
    let (x, y) = g.gramians()?;
    let n_mat = linalg::inverse(
        &(DMatrix::<f64>::identity(n, n) * (bound * bound) - &x * &y),
        "nehari: gamma^2 I - XY",
    )?;
    let nx = &n_mat * &x;
    let yn = &y * &n_mat;
    let cnx = g.c() * &nx * g.c().transpose();
    let byn = g.b().transpose() * &yn * g.b();
    let ip = DMatrix::<f64>::identity(p, p) + cnx;
    let im = DMatrix::<f64>::identity(m, m) + byn;
    let ip_inv = linalg::pd_inverse(&linalg::sym(&ip), "nehari: I + C N X C'")?;
    let ip_inv_half = linalg::pd_sqrt(&ip_inv, "nehari: (I + C N X C')^-1/2")?;
    let im_inv_half = {
        let inv = linalg::pd_inverse(&linalg::sym(&im), "nehari: I + B' Y N B")?;
        linalg::pd_sqrt(&inv, "nehari: (I + B' Y N B)^-1/2")?
    };
    let mut u = DMatrix::zeros(p, m);
    for i in 0..m {
        u[(i, i)] = 1.0;
    }
    let e = -&ip_inv * g.c() * &nx * g.a().transpose() * &y * g.b()
        + ip_inv_half * u * im_inv_half * bound;
    let c_q = (e.transpose() * g.c() + g.b().transpose() * &y * g.a()) * &n_mat;
    let a_q = g.a() - g.b() * &c_q;
    let b_q = g.a() * &x * g.c().transpose() + g.b() * e.transpose();
    let q = RealizationSS::new(a_q, b_q, c_q, -e.transpose())?;
    if !q.is_stable() {
        return Err(Error::FactorizationFailed {
            stage: "nehari".into(),
            detail: format!(
                "approximant has spectral radius {:.6}",
                q.spectral_radius()
            ),
        });
    }
    Ok(q)
}
