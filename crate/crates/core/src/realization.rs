//! State-space realizations of discrete-time systems and the operator algebra
//! the synthesis pipeline is built from.
//!
//! A realization (A, B, C, D) denotes the transfer function
//! G(z) = D + C (zI - A)^-1 B. Systems with zero states (n = 0) are legal
//! everywhere and denote static gains. All operations are pure: they return
//! new realizations and never mutate their operands.
//!
//! Systems with poles on both sides of the unit circle are represented by
//! [`MixedSystem`], a pair (r1, r2) of stable realizations standing for
//! r1~ + r2, where G~(z) = G^T(1/z) is the conjugate system. The anti-stable
//! content is always carried in conjugated form so that downstream algebra
//! never needs to realize an anti-stable state matrix directly.

use crate::error::Error;
use crate::linalg::{self, CMatrix};
use crate::tol;
use crate::Result;
use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Location of a realization's poles relative to the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    /// All poles strictly inside the unit circle.
    Stable,
    /// All poles strictly outside the unit circle.
    AntiStable,
    /// Poles on both sides, none within the classification margin of the circle.
    Mixed,
    /// At least one pole within the classification margin of the circle.
    Unknown,
}

/// A discrete-time state-space realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSS {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    stability: StabilityClass,
}

impl RealizationSS {
    /// Build a realization, validating dimensions and classifying stability.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dim(format!(
                "state matrix must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        if b.nrows() != n {
            return Err(Error::dim(format!(
                "B has {} rows, expected {} (state dimension)",
                b.nrows(),
                n
            )));
        }
        if c.ncols() != n {
            return Err(Error::dim(format!(
                "C has {} columns, expected {} (state dimension)",
                c.ncols(),
                n
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::dim(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        let stability = classify(&a);
        Ok(RealizationSS {
            a,
            b,
            c,
            d,
            stability,
        })
    }

    /// Static gain: zero states, transfer function identically `d`.
    pub fn from_static(d: DMatrix<f64>) -> Self {
        let (p, m) = d.shape();
        RealizationSS {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, m),
            c: DMatrix::zeros(p, 0),
            d,
            stability: StabilityClass::Stable,
        }
    }

    /// The k x k identity as a static system.
    pub fn identity(k: usize) -> Self {
        Self::from_static(DMatrix::identity(k, k))
    }

    /// The p x m zero system.
    pub fn zero(p: usize, m: usize) -> Self {
        Self::from_static(DMatrix::zeros(p, m))
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// State dimension n.
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    /// Output dimension p.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }
    /// Input dimension m.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn stability(&self) -> StabilityClass {
        self.stability
    }

    pub fn is_stable(&self) -> bool {
        self.stability == StabilityClass::Stable
    }

    /// Spectral radius of the state matrix.
    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }

    /// Series interconnection: the transfer function self(z) * rhs(z), with
    /// the signal passing through `rhs` first. Stable results beyond
    /// `tol::AUTO_MINIMAL_DIM` states are reduced automatically.
    pub fn series(&self, rhs: &RealizationSS) -> Result<RealizationSS> {
        if self.inputs() != rhs.outputs() {
            return Err(Error::dim(format!(
                "series: left factor has {} inputs, right factor has {} outputs",
                self.inputs(),
                rhs.outputs()
            )));
        }
        let (n1, n2) = (self.state_dim(), rhs.state_dim());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((0, n1), (n1, n2)).copy_from(&(&self.b * &rhs.c));
        a.view_mut((n1, n1), (n2, n2)).copy_from(&rhs.a);
        let mut b = DMatrix::zeros(n, rhs.inputs());
        b.view_mut((0, 0), (n1, rhs.inputs()))
            .copy_from(&(&self.b * &rhs.d));
        b.view_mut((n1, 0), (n2, rhs.inputs())).copy_from(&rhs.b);
        let mut c = DMatrix::zeros(self.outputs(), n);
        c.view_mut((0, 0), (self.outputs(), n1)).copy_from(&self.c);
        c.view_mut((0, n1), (self.outputs(), n2))
            .copy_from(&(&self.d * &rhs.c));
        let d = &self.d * &rhs.d;
        let g = RealizationSS::new(a, b, c, d)?;
        Ok(g.maybe_reduce())
    }

    /// Parallel interconnection: self(z) + rhs(z).
    pub fn add(&self, rhs: &RealizationSS) -> Result<RealizationSS> {
        if self.outputs() != rhs.outputs() || self.inputs() != rhs.inputs() {
            return Err(Error::dim(format!(
                "add: {}x{} vs {}x{}",
                self.outputs(),
                self.inputs(),
                rhs.outputs(),
                rhs.inputs()
            )));
        }
        let (n1, n2) = (self.state_dim(), rhs.state_dim());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&rhs.a);
        let mut b = DMatrix::zeros(n, self.inputs());
        b.view_mut((0, 0), (n1, self.inputs())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.inputs())).copy_from(&rhs.b);
        let mut c = DMatrix::zeros(self.outputs(), n);
        c.view_mut((0, 0), (self.outputs(), n1)).copy_from(&self.c);
        c.view_mut((0, n1), (self.outputs(), n2)).copy_from(&rhs.c);
        let d = &self.d + &rhs.d;
        let g = RealizationSS::new(a, b, c, d)?;
        Ok(g.maybe_reduce())
    }

    /// self(z) - rhs(z).
    pub fn sub(&self, rhs: &RealizationSS) -> Result<RealizationSS> {
        self.add(&rhs.negate())
    }

    /// -self(z).
    pub fn negate(&self) -> RealizationSS {
        self.scale(-1.0)
    }

    /// alpha * self(z).
    pub fn scale(&self, alpha: f64) -> RealizationSS {
        RealizationSS {
            a: self.a.clone(),
            b: self.b.clone(),
            c: &self.c * alpha,
            d: &self.d * alpha,
            stability: self.stability,
        }
    }

    /// The transposed transfer function self(z)^T.
    pub fn transpose(&self) -> RealizationSS {
        RealizationSS {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
            stability: self.stability,
        }
    }

    /// Constant gain applied at the output: M * self(z).
    pub fn premul_gain(&self, m: &DMatrix<f64>) -> Result<RealizationSS> {
        if m.ncols() != self.outputs() {
            return Err(Error::dim(format!(
                "premul_gain: gain has {} columns, system has {} outputs",
                m.ncols(),
                self.outputs()
            )));
        }
        RealizationSS::new(self.a.clone(), self.b.clone(), m * &self.c, m * &self.d)
    }

    /// Constant gain applied at the input: self(z) * M.
    pub fn postmul_gain(&self, m: &DMatrix<f64>) -> Result<RealizationSS> {
        if m.nrows() != self.inputs() {
            return Err(Error::dim(format!(
                "postmul_gain: gain has {} rows, system has {} inputs",
                m.nrows(),
                self.inputs()
            )));
        }
        RealizationSS::new(self.a.clone(), &self.b * m, self.c.clone(), &self.d * m)
    }

    /// The conjugate system G~(z) = G^T(1/z), realized as
    /// (A^-T, A^-T C^T, -B^T A^-T, D^T - B^T A^-T C^T).
    ///
    /// Requires an invertible state matrix; errors if the smallest singular
    /// value of A is at or below `tol::SIGMA_MIN_TOL`. Delay blocks have
    /// nilpotent state matrices, so composites containing them cannot be
    /// conjugated this way; the pipeline keeps those advances symbolic.
    pub fn conjugate(&self) -> Result<RealizationSS> {
        let n = self.state_dim();
        if n == 0 {
            return Ok(RealizationSS::from_static(self.d.transpose()));
        }
        let smin = linalg::sigma_min(&self.a);
        if smin <= tol::SIGMA_MIN_TOL {
            return Err(Error::SingularStateMap {
                sigma_min: smin,
                context: "conjugate requires an invertible state matrix".into(),
            });
        }
        let ainv_t = linalg::inverse(&self.a.transpose(), "conjugate: A^T")?;
        let a = ainv_t.clone();
        let b = &ainv_t * self.c.transpose();
        let c = -self.b.transpose() * &ainv_t;
        let d = self.d.transpose() - self.b.transpose() * &ainv_t * self.c.transpose();
        RealizationSS::new(a, b, c, d)
    }

    /// self~ * rhs for stable self and rhs, split directly into causal and
    /// anti-causal parts through the cross Gramian W = A'WAh + C'Ch. This
    /// never forms a conjugate realization, so nilpotent state matrices are
    /// fine on both sides.
    pub fn conj_times(&self, rhs: &RealizationSS) -> Result<MixedSystem> {
        if self.outputs() != rhs.outputs() {
            return Err(Error::dim(format!(
                "conj_times: left has {} outputs, right has {}",
                self.outputs(),
                rhs.outputs()
            )));
        }
        if !self.is_stable() || !rhs.is_stable() {
            return Err(Error::NotStable("conj_times requires stable factors".into()));
        }
        let w = crate::riccati::solve_stein_cross(
            &self.a,
            &rhs.a,
            &(self.c.transpose() * &rhs.c),
        )?;
        let r1 = RealizationSS::new(
            self.a.clone(),
            self.b.clone(),
            rhs.d.transpose() * &self.c + rhs.b.transpose() * w.transpose() * &self.a,
            DMatrix::zeros(rhs.inputs(), self.inputs()),
        )?;
        let r2 = RealizationSS::new(
            rhs.a.clone(),
            rhs.b.clone(),
            self.d.transpose() * &rhs.c + self.b.transpose() * &w * &rhs.a,
            self.d.transpose() * &rhs.d + self.b.transpose() * &w * &rhs.b,
        )?;
        MixedSystem::new(r1, r2)
    }

    /// self * rhs~ for stable self and rhs, via the controllability-side
    /// cross Gramian W = A W Ah' + B Bh'.
    pub fn times_conj(&self, rhs: &RealizationSS) -> Result<MixedSystem> {
        if self.inputs() != rhs.inputs() {
            return Err(Error::dim(format!(
                "times_conj: left has {} inputs, right has {}",
                self.inputs(),
                rhs.inputs()
            )));
        }
        if !self.is_stable() || !rhs.is_stable() {
            return Err(Error::NotStable("times_conj requires stable factors".into()));
        }
        let w = crate::riccati::solve_stein_cross(
            &self.a.transpose(),
            &rhs.a.transpose(),
            &(&self.b * rhs.b.transpose()),
        )?;
        let r1 = RealizationSS::new(
            rhs.a.clone(),
            &rhs.a * w.transpose() * self.c.transpose() + &rhs.b * self.d.transpose(),
            rhs.c.clone(),
            DMatrix::zeros(rhs.outputs(), self.outputs()),
        )?;
        let r2 = RealizationSS::new(
            self.a.clone(),
            &self.b * rhs.d.transpose() + &self.a * &w * rhs.c.transpose(),
            self.c.clone(),
            &self.d * rhs.d.transpose() + &self.c * &w * rhs.c.transpose(),
        )?;
        MixedSystem::new(r1, r2)
    }

    /// z^-N * self(z), realized with an N-stage shift register at the input.
    pub fn delay(&self, n_delay: usize) -> Result<RealizationSS> {
        if n_delay == 0 {
            return Ok(self.clone());
        }
        self.series(&delay_block(n_delay, self.inputs()))
    }

    /// Inverse system; requires square invertible feedthrough.
    pub fn invert(&self) -> Result<RealizationSS> {
        if self.outputs() != self.inputs() {
            return Err(Error::dim(format!(
                "invert: system is {}x{}, must be square",
                self.outputs(),
                self.inputs()
            )));
        }
        let dinv = linalg::inverse(&self.d, "invert: feedthrough")?;
        let a = &self.a - &self.b * &dinv * &self.c;
        let b = &self.b * &dinv;
        let c = -&dinv * &self.c;
        RealizationSS::new(a, b, c, dinv)
    }

    /// Frequency response at z = e^{i theta}.
    pub fn evaluate(&self, theta: f64) -> Result<CMatrix> {
        linalg::freq_response(&self.a, &self.b, &self.c, &self.d, theta)
    }

    /// First `count` Markov parameters: D, CB, CAB, CA^2 B, ...
    pub fn markov(&self, count: usize) -> MarkovSequence {
        let mut taps = Vec::with_capacity(count);
        if count == 0 {
            return MarkovSequence { taps };
        }
        taps.push(self.d.clone());
        if count == 1 {
            return MarkovSequence { taps };
        }
        let mut power = self.b.clone();
        taps.push(&self.c * &power);
        for _ in 2..count {
            power = &self.a * power;
            taps.push(&self.c * &power);
        }
        MarkovSequence { taps }
    }

    /// Copy with the feedthrough zeroed.
    pub fn strictly_proper_part(&self) -> RealizationSS {
        RealizationSS {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            d: DMatrix::zeros(self.outputs(), self.inputs()),
            stability: self.stability,
        }
    }

    /// Controllability and observability Gramians of a stable realization.
    pub fn gramians(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !self.is_stable() {
            return Err(Error::NotStable(
                "Gramians are defined for stable realizations only".into(),
            ));
        }
        let xc = crate::riccati::solve_dlyap(&self.a, &(&self.b * self.b.transpose()))?;
        let yo = crate::riccati::solve_dlyap(&self.a.transpose(), &(self.c.transpose() * &self.c))?;
        Ok((xc, yo))
    }

    /// Balanced truncation to the states whose Hankel singular values exceed
    /// `tol_rel` times the largest. The input must be stable.
    pub fn minimal(&self, tol_rel: f64) -> Result<RealizationSS> {
        if self.state_dim() == 0 {
            return Ok(self.clone());
        }
        if !self.is_stable() {
            return Err(Error::NotStable("minimal applies to stable realizations".into()));
        }
        let (xc, yo) = self.gramians()?;
        let lc = linalg::psd_sqrt(&xc);
        let lo = linalg::psd_sqrt(&yo);
        let svd = (&lo * &lc).svd(true, true);
        let sigma = &svd.singular_values;
        let smax = sigma.iter().copied().fold(0.0_f64, f64::max);
        let cutoff = (tol_rel * smax).max(1e-14);
        let k = sigma.iter().filter(|&&s| s > cutoff).count();
        if k == 0 {
            return Ok(RealizationSS::from_static(self.d.clone()));
        }
        let u = svd.u.as_ref().expect("svd with u");
        let vt = svd.v_t.as_ref().expect("svd with v_t");
        let uk = u.columns(0, k);
        let vk = vt.rows(0, k).transpose();
        let s_inv_half = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            k,
            sigma.iter().take(k).map(|&s| 1.0 / s.sqrt()),
        ));
        let t = &lc * vk * &s_inv_half;
        let ti = &s_inv_half * uk.transpose() * &lo;
        RealizationSS::new(&ti * &self.a * &t, &ti * &self.b, &self.c * &t, self.d.clone())
    }

    fn maybe_reduce(self) -> RealizationSS {
        if self.state_dim() > tol::AUTO_MINIMAL_DIM && self.is_stable() {
            match self.minimal(tol::TOL_MINIMAL) {
                Ok(r) => return r,
                Err(e) => log::warn!("automatic reduction skipped: {e}"),
            }
        }
        self
    }

    /// Split into stable and anti-stable content: returns the pair (r1, r2)
    /// with r1 stable and strictly proper, r2 stable, and
    /// self(z) = r1~(z) + r2(z). Errors if any pole lies within
    /// `tol::EPS_STAB` of the unit circle.
    pub fn split_stable_antistable(&self) -> Result<MixedSystem> {
        let (p, m) = (self.outputs(), self.inputs());
        match self.stability {
            StabilityClass::Stable => {
                return MixedSystem::new(RealizationSS::zero(m, p), self.clone());
            }
            StabilityClass::Unknown => {
                let worst = linalg::eig_moduli(&self.a)
                    .into_iter()
                    .min_by(|x, y| {
                        (x - 1.0).abs().partial_cmp(&(y - 1.0).abs()).unwrap()
                    })
                    .unwrap_or(1.0);
                return Err(Error::PoleNearUnitCircle {
                    modulus: worst,
                    margin: tol::EPS_STAB,
                    context: "split_stable_antistable".into(),
                });
            }
            _ => {}
        }
        let n = self.state_dim();
        let (proj, k) = linalg::stable_projector(&self.a, "split_stable_antistable")?;
        let id = DMatrix::<f64>::identity(n, n);
        let u1 = linalg::range_basis(&proj, k);
        let u2 = linalg::range_basis(&(&id - &proj), n - k);
        let mut t = DMatrix::zeros(n, n);
        t.view_mut((0, 0), (n, k)).copy_from(&u1);
        t.view_mut((0, k), (n, n - k)).copy_from(&u2);
        let ti = linalg::inverse(&t, "split: similarity transform")?;
        let a_hat = &ti * &self.a * &t;
        let off = linalg::max_abs(&a_hat.view((0, k), (k, n - k)).into_owned())
            .max(linalg::max_abs(&a_hat.view((k, 0), (n - k, k)).into_owned()));
        if off > 1e-6 * (1.0 + linalg::max_abs(&self.a)) {
            return Err(Error::NumericalBreakdown(format!(
                "split: invariant subspaces failed to decouple (off-diagonal {off:.3e})"
            )));
        }
        let b_hat = &ti * &self.b;
        let c_hat = &self.c * &t;
        let a_s = a_hat.view((0, 0), (k, k)).into_owned();
        let b_s = b_hat.view((0, 0), (k, m)).into_owned();
        let c_s = c_hat.view((0, 0), (p, k)).into_owned();
        let a_a = a_hat.view((k, k), (n - k, n - k)).into_owned();
        let b_a = b_hat.view((k, 0), (n - k, m)).into_owned();
        let c_a = c_hat.view((0, k), (p, n - k)).into_owned();

        // Anti-stable term C_a (zI - A_a)^-1 B_a rewritten as r1~(z) - C_a A_a^-1 B_a
        // with r1 = (A_a^-T, A_a^-T C_a^T, -B_a^T A_a^-T, 0), which is stable and
        // strictly proper; the constant lands in r2's feedthrough.
        let a_a_inv = linalg::inverse(&a_a, "split: anti-stable block")?;
        let a_a_inv_t = a_a_inv.transpose();
        let r1 = RealizationSS::new(
            a_a_inv_t.clone(),
            &a_a_inv_t * c_a.transpose(),
            -b_a.transpose() * &a_a_inv_t,
            DMatrix::zeros(m, p),
        )?;
        let d2 = &self.d - &c_a * &a_a_inv * &b_a;
        let r2 = RealizationSS::new(a_s, b_s, c_s, d2)?;
        let mixed = MixedSystem::new(r1, r2)?;

        // Cheap reconstruction audit at a few frequencies; the similarity can
        // silently lose accuracy when badly conditioned.
        let mut scale: f64 = 1.0;
        let mut worst: f64 = 0.0;
        for i in 0..8 {
            let theta = 0.31 + 0.71 * i as f64;
            let lhs = self.evaluate(theta)?;
            let rhs = mixed.evaluate(theta)?;
            scale = scale.max(linalg::sigma_max_complex(&lhs));
            worst = worst.max(linalg::sigma_max_complex(&(lhs - rhs)));
        }
        if worst > 1e-6 * scale {
            return Err(Error::NumericalBreakdown(format!(
                "split: reconstruction residual {worst:.3e} exceeds tolerance"
            )));
        }
        Ok(mixed)
    }
}

fn classify(a: &DMatrix<f64>) -> StabilityClass {
    if a.nrows() == 0 {
        return StabilityClass::Stable;
    }
    let moduli = linalg::eig_moduli(a);
    let mut inside = false;
    let mut outside = false;
    for m in &moduli {
        if (m - 1.0).abs() < tol::EPS_STAB {
            return StabilityClass::Unknown;
        }
        if *m < 1.0 {
            inside = true;
        } else {
            outside = true;
        }
    }
    match (inside, outside) {
        (_, false) => StabilityClass::Stable,
        (false, true) => StabilityClass::AntiStable,
        (true, true) => StabilityClass::Mixed,
    }
}

/// Pure delay z^-N on an m-dimensional signal, as an N-stage shift register.
pub fn delay_block(n_delay: usize, m: usize) -> RealizationSS {
    if n_delay == 0 {
        return RealizationSS::identity(m);
    }
    let n = n_delay * m;
    let mut a = DMatrix::zeros(n, n);
    for stage in 1..n_delay {
        for i in 0..m {
            a[(stage * m + i, (stage - 1) * m + i)] = 1.0;
        }
    }
    let mut b = DMatrix::zeros(n, m);
    for i in 0..m {
        b[(i, i)] = 1.0;
    }
    let mut c = DMatrix::zeros(m, n);
    for i in 0..m {
        c[(i, (n_delay - 1) * m + i)] = 1.0;
    }
    RealizationSS {
        a,
        b,
        c,
        d: DMatrix::zeros(m, m),
        stability: StabilityClass::Stable,
    }
}

/// FIR system sum_i taps[i] z^-i (taps[0] is the feedthrough).
pub fn fir_causal(taps: &[DMatrix<f64>]) -> Result<RealizationSS> {
    if taps.is_empty() {
        return Err(Error::dim("fir_causal: need at least one tap"));
    }
    let (p, m) = taps[0].shape();
    for t in taps {
        if t.shape() != (p, m) {
            return Err(Error::dim("fir_causal: taps must share dimensions"));
        }
    }
    let k = taps.len() - 1;
    if k == 0 {
        return Ok(RealizationSS::from_static(taps[0].clone()));
    }
    let n = k * m;
    let mut a = DMatrix::zeros(n, n);
    for stage in 1..k {
        for i in 0..m {
            a[(stage * m + i, (stage - 1) * m + i)] = 1.0;
        }
    }
    let mut b = DMatrix::zeros(n, m);
    for i in 0..m {
        b[(i, i)] = 1.0;
    }
    let mut c = DMatrix::zeros(p, n);
    for (j, t) in taps.iter().enumerate().skip(1) {
        c.view_mut((0, (j - 1) * m), (p, m)).copy_from(t);
    }
    RealizationSS::new(a, b, c, taps[0].clone())
}

/// Strictly proper FIR system sum_{i=1..taps.len()} taps[i-1] z^-i.
pub fn fir_strictly_proper(taps: &[DMatrix<f64>]) -> Result<RealizationSS> {
    if taps.is_empty() {
        return Err(Error::dim("fir_strictly_proper: need at least one tap"));
    }
    let (p, m) = taps[0].shape();
    let mut padded = Vec::with_capacity(taps.len() + 1);
    padded.push(DMatrix::zeros(p, m));
    padded.extend(taps.iter().cloned());
    fir_causal(&padded)
}

/// A finite prefix of a system's impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSequence {
    pub taps: Vec<DMatrix<f64>>,
}

impl MarkovSequence {
    pub fn len(&self) -> usize {
        self.taps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// A system with poles on both sides of the unit circle, stored as
/// r1~ + r2 with both r1 and r2 stable and r1 strictly proper.
#[derive(Debug, Clone)]
pub struct MixedSystem {
    r1: RealizationSS,
    r2: RealizationSS,
}

impl MixedSystem {
    pub fn new(r1: RealizationSS, r2: RealizationSS) -> Result<Self> {
        if r1.outputs() != r2.inputs() || r1.inputs() != r2.outputs() {
            return Err(Error::dim(format!(
                "mixed system: r1 is {}x{} but r2 is {}x{} (r1 must be the transposed shape)",
                r1.outputs(),
                r1.inputs(),
                r2.outputs(),
                r2.inputs()
            )));
        }
        if !r1.is_stable() || !r2.is_stable() {
            return Err(Error::NotStable(
                "mixed system components must be stable".into(),
            ));
        }
        if linalg::max_abs(r1.d()) != 0.0 {
            return Err(Error::InvalidConfig(
                "mixed system: r1 must be strictly proper".into(),
            ));
        }
        Ok(MixedSystem { r1, r2 })
    }

    /// Wrap a stable realization (no anti-stable content).
    pub fn from_stable(g: RealizationSS) -> Result<Self> {
        if !g.is_stable() {
            return Err(Error::NotStable("from_stable requires a stable system".into()));
        }
        let (p, m) = (g.outputs(), g.inputs());
        MixedSystem::new(RealizationSS::zero(m, p), g)
    }

    /// The conjugated (anti-stable) component r1; the full system is r1~ + r2.
    pub fn r1(&self) -> &RealizationSS {
        &self.r1
    }

    /// The stable component r2.
    pub fn r2(&self) -> &RealizationSS {
        &self.r2
    }

    /// Output dimension of the represented system.
    pub fn outputs(&self) -> usize {
        self.r2.outputs()
    }

    /// Input dimension of the represented system.
    pub fn inputs(&self) -> usize {
        self.r2.inputs()
    }

    /// Value r1~(e^{i theta}) + r2(e^{i theta}); the conjugate evaluates as
    /// the conjugate transpose of r1's response.
    pub fn evaluate(&self, theta: f64) -> Result<CMatrix> {
        let v1 = self.r1.evaluate(theta)?;
        let v2 = self.r2.evaluate(theta)?;
        Ok(v1.adjoint() + v2)
    }

    /// Reduce both components by balanced truncation.
    pub fn reduced(&self, tol_rel: f64) -> Result<MixedSystem> {
        MixedSystem::new(self.r1.minimal(tol_rel)?, self.r2.minimal(tol_rel)?)
    }

    /// Transposed system: (r1~ + r2)^T = (r1^T)~ + r2^T.
    pub fn transpose(&self) -> MixedSystem {
        MixedSystem {
            r1: self.r1.transpose(),
            r2: self.r2.transpose(),
        }
    }

    /// self + rhs, componentwise.
    pub fn add(&self, rhs: &MixedSystem) -> Result<MixedSystem> {
        MixedSystem::new(self.r1.add(&rhs.r1)?, self.r2.add(&rhs.r2)?)
    }

    /// self - rhs, componentwise.
    pub fn sub(&self, rhs: &MixedSystem) -> Result<MixedSystem> {
        MixedSystem::new(self.r1.sub(&rhs.r1)?, self.r2.sub(&rhs.r2)?)
    }

    /// z^N * self(z): the N-step advance. The anti-stable part absorbs
    /// z^N r1~ = (z^-N r1)~ directly; the causal part splits into the
    /// polynomial coefficients that move across (folded into r1) and the
    /// advanced tail (A, A^N B, C, C A^{N-1} B).
    pub fn advance(&self, n_adv: usize) -> Result<MixedSystem> {
        if n_adv == 0 {
            return Ok(self.clone());
        }
        let r1_delayed = self.r1.delay(n_adv)?;
        let taps = self.r2.markov(n_adv);
        // q = sum_{j=1..N} taps[N-j]^T z^-j, strictly proper and stable.
        let q_taps: Vec<DMatrix<f64>> = (1..=n_adv)
            .map(|j| taps.taps[n_adv - j].transpose())
            .collect();
        let q = fir_strictly_proper(&q_taps)?;
        let r1_new = r1_delayed.add(&q)?;
        let r2_new = advanced_tail(&self.r2, n_adv)?;
        MixedSystem::new(r1_new, r2_new)
    }

    /// g * self for stable g: g r1~ resolves through times_conj, g r2 stays
    /// causal.
    pub fn left_mul(&self, g: &RealizationSS) -> Result<MixedSystem> {
        let anti = g.times_conj(&self.r1)?;
        let causal = MixedSystem::from_stable(g.series(&self.r2)?)?;
        anti.add(&causal)
    }

    /// self * g for stable g: r1~ g resolves through conj_times.
    pub fn right_mul(&self, g: &RealizationSS) -> Result<MixedSystem> {
        let anti = self.r1.conj_times(g)?;
        let causal = MixedSystem::from_stable(self.r2.series(g)?)?;
        anti.add(&causal)
    }

    /// self * g~ for stable g: r1~ g~ = (g r1)~ stays anti-causal, r2 g~
    /// resolves through times_conj.
    pub fn right_mul_conj(&self, g: &RealizationSS) -> Result<MixedSystem> {
        let anti = MixedSystem::new(
            g.series(&self.r1)?,
            RealizationSS::zero(self.outputs(), g.outputs()),
        )?;
        let causal = self.r2.times_conj(g)?;
        anti.add(&causal)
    }
}

/// The causal tail of z^N G(z) for stable G: realization
/// (A, A^N B, C, C A^{N-1} B), whose Markov taps are those of G shifted
/// forward by N.
pub fn advanced_tail(g: &RealizationSS, n_adv: usize) -> Result<RealizationSS> {
    if n_adv == 0 {
        return Ok(g.clone());
    }
    let n = g.state_dim();
    if n == 0 {
        return Ok(RealizationSS::zero(g.outputs(), g.inputs()));
    }
    let mut a_pow_nm1 = DMatrix::<f64>::identity(n, n);
    for _ in 0..(n_adv - 1) {
        a_pow_nm1 = g.a() * a_pow_nm1;
    }
    let a_pow_n = g.a() * &a_pow_nm1;
    RealizationSS::new(
        g.a().clone(),
        &a_pow_n * g.b(),
        g.c().clone(),
        g.c() * &a_pow_nm1 * g.b(),
    )
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], cols_hint: usize) -> std::result::Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = if nrows == 0 {
        cols_hint
    } else {
        rows[0].len()
    };
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(format!("row {i} has {} entries, expected {ncols}", r.len()));
        }
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

impl Serialize for RealizationSS {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("RealizationSS", 4)?;
        s.serialize_field("A", &matrix_to_rows(&self.a))?;
        s.serialize_field("B", &matrix_to_rows(&self.b))?;
        s.serialize_field("C", &matrix_to_rows(&self.c))?;
        s.serialize_field("D", &matrix_to_rows(&self.d))?;
        s.end()
    }
}

#[derive(Deserialize)]
struct RawRealization {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
}

impl<'de> Deserialize<'de> for RealizationSS {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = RawRealization::deserialize(deserializer)?;
        let n = raw.a.len();
        let p = raw.d.len();
        let m = raw.d.first().map(|r| r.len()).unwrap_or(0);
        let a = rows_to_matrix(&raw.a, n).map_err(D::Error::custom)?;
        let b = rows_to_matrix(&raw.b, m).map_err(D::Error::custom)?;
        let c = rows_to_matrix(&raw.c, n).map_err(D::Error::custom)?;
        let d = rows_to_matrix(&raw.d, m).map_err(D::Error::custom)?;
        if d.nrows() != p {
            return Err(D::Error::custom("inconsistent feedthrough rows"));
        }
        RealizationSS::new(a, b, c, d).map_err(|e| D::Error::custom(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;
    use num_complex::Complex;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> RealizationSS {
        RealizationSS::new(dmatrix![a], dmatrix![b], dmatrix![c], dmatrix![d]).unwrap()
    }

    fn max_dev(g: &RealizationSS, f: impl Fn(f64) -> Complex<f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..128 {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / 128.0;
            let v = g.evaluate(theta).unwrap()[(0, 0)];
            worst = worst.max((v - f(theta)).norm());
        }
        worst
    }

    fn random_stable(rng: &mut ChaCha8Rng, n: usize, p: usize, m: usize) -> RealizationSS {
        let mut a = DMatrix::zeros(n, n);
        a.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let rho = linalg::spectral_radius(&a);
        if rho > 0.0 {
            a *= 0.8 / rho.max(0.8);
        }
        let mut b = DMatrix::zeros(n, m);
        b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let mut c = DMatrix::zeros(p, n);
        c.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let mut d = DMatrix::zeros(p, m);
        d.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        RealizationSS::new(a, b, c, d).unwrap()
    }

    #[test]
    fn static_systems_have_no_states() {
        let g = RealizationSS::identity(3);
        assert_eq!(g.state_dim(), 0);
        assert!(g.is_stable());
        let v = g.evaluate(0.7).unwrap();
        assert_abs_diff_eq!(v[(1, 1)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v[(1, 0)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn classification_bands() {
        assert_eq!(scalar(0.5, 1.0, 1.0, 0.0).stability(), StabilityClass::Stable);
        assert_eq!(scalar(2.0, 1.0, 1.0, 0.0).stability(), StabilityClass::AntiStable);
        assert_eq!(scalar(1.0 - 1e-10, 1.0, 1.0, 0.0).stability(), StabilityClass::Unknown);
        let mixed = RealizationSS::new(
            dmatrix![0.5, 0.0; 0.0, 2.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![0.0],
        )
        .unwrap();
        assert_eq!(mixed.stability(), StabilityClass::Mixed);
    }

    #[test]
    fn series_matches_pointwise_product() {
        let g = scalar(0.5, 1.0, 1.0, 0.2); // 0.2 + 1/(z-0.5)
        let h = scalar(-0.3, 2.0, 1.0, 0.0); // 2/(z+0.3)
        let gh = g.series(&h).unwrap();
        let dev = max_dev(&gh, |t| {
            let z = Complex::from_polar(1.0, t);
            (0.2 + 1.0 / (z - 0.5)) * (2.0 / (z + 0.3))
        });
        assert!(dev < 1e-12, "series deviation {dev}");
    }

    #[test]
    fn add_and_negate_match_pointwise() {
        let g = scalar(0.5, 1.0, 1.0, 0.0);
        let h = scalar(-0.3, 2.0, 1.0, 1.0);
        let s = g.add(&h).unwrap();
        let dev = max_dev(&s, |t| {
            let z = Complex::from_polar(1.0, t);
            1.0 / (z - 0.5) + 1.0 + 2.0 / (z + 0.3)
        });
        assert!(dev < 1e-12, "add deviation {dev}");
        let n = g.sub(&g).unwrap();
        let dev0 = max_dev(&n, |_| Complex::new(0.0, 0.0));
        assert!(dev0 < 1e-13);
    }

    #[test]
    fn conjugate_is_adjoint_on_circle() {
        // 1/(z-0.5) conjugated: closed form -2 - 4/(z-2).
        let g = scalar(0.5, 1.0, 1.0, 0.0);
        let gc = g.conjugate().unwrap();
        assert_abs_diff_eq!(gc.a()[(0, 0)], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gc.d()[(0, 0)], -2.0, epsilon = 1e-14);
        let dev = max_dev(&gc, |t| {
            let z = Complex::from_polar(1.0, t);
            (1.0 / (z - 0.5)).conj()
        });
        assert!(dev < 1e-12, "conjugate deviation {dev}");

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut g = random_stable(&mut rng, 4, 2, 3);
            // Keep A invertible; shift eigenvalues off zero if needed.
            if linalg::sigma_min(g.a()) < 1e-3 {
                let shifted = g.a() + DMatrix::identity(4, 4) * 0.11;
                g = RealizationSS::new(shifted, g.b().clone(), g.c().clone(), g.d().clone())
                    .unwrap();
            }
            if linalg::sigma_min(g.a()) <= tol::SIGMA_MIN_TOL {
                continue;
            }
            let gc = g.conjugate().unwrap();
            for i in 0..16 {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
                let lhs = gc.evaluate(theta).unwrap();
                let rhs = g.evaluate(theta).unwrap().adjoint();
                assert!(linalg::sigma_max_complex(&(lhs - rhs)) < 1e-9);
            }
        }
    }

    #[test]
    fn conjugate_rejects_nilpotent_state_matrix() {
        let d = delay_block(2, 1);
        assert!(matches!(
            d.conjugate(),
            Err(Error::SingularStateMap { .. })
        ));
    }

    #[test]
    fn delay_block_taps_are_shifted_identity() {
        let d = delay_block(3, 2);
        let taps = d.markov(5).taps;
        for k in 0..5 {
            let expect = if k == 3 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(taps[k][(0, 0)], expect, epsilon = 1e-15);
            assert_abs_diff_eq!(taps[k][(1, 1)], expect, epsilon = 1e-15);
            assert_abs_diff_eq!(taps[k][(0, 1)], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn delay_matches_phase_factor() {
        let g = scalar(0.4, 1.0, 1.0, 0.5);
        let gd = g.delay(3).unwrap();
        let dev = max_dev(&gd, |t| {
            let z = Complex::from_polar(1.0, t);
            (0.5 + 1.0 / (z - 0.4)) / (z * z * z)
        });
        assert!(dev < 1e-12, "delay deviation {dev}");
    }

    #[test]
    fn invert_round_trips() {
        let g = RealizationSS::new(
            dmatrix![0.5, 0.1; 0.0, -0.2],
            dmatrix![1.0, 0.0; 0.5, 1.0],
            dmatrix![1.0, 0.0; 0.0, 1.0],
            dmatrix![2.0, 0.3; 0.1, 1.5],
        )
        .unwrap();
        let gi = g.invert().unwrap();
        let prod = g.series(&gi).unwrap();
        for i in 0..32 {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / 32.0;
            let v = prod.evaluate(theta).unwrap();
            let id = CMatrix::identity(2, 2);
            assert!(linalg::sigma_max_complex(&(v - id)) < 1e-12);
        }
    }

    #[test]
    fn markov_matches_impulse_response() {
        let g = scalar(0.5, 2.0, 3.0, 7.0);
        let taps = g.markov(4).taps;
        assert_abs_diff_eq!(taps[0][(0, 0)], 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(taps[1][(0, 0)], 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(taps[2][(0, 0)], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(taps[3][(0, 0)], 1.5, epsilon = 1e-15);
    }

    #[test]
    fn scalar_gramians_match_closed_form() {
        // x = a^2 x + b^2 with a = 0.5, b = 1 gives 4/3 exactly.
        let g = scalar(0.5, 1.0, 1.0, 0.0);
        let (xc, yo) = g.gramians().unwrap();
        assert_abs_diff_eq!(xc[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(yo[(0, 0)], 4.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn minimal_strips_cancelling_states() {
        let g = scalar(0.5, 1.0, 1.0, 0.3);
        let z = g.sub(&g).unwrap();
        assert_eq!(z.state_dim(), 2);
        let zm = z.minimal(tol::TOL_MINIMAL).unwrap();
        assert_eq!(zm.state_dim(), 0);
        assert_abs_diff_eq!(zm.d()[(0, 0)], 0.0, epsilon = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_stable(&mut rng, 5, 2, 2);
        let padded = h.add(&RealizationSS::zero(2, 2)).unwrap();
        let hm = padded.minimal(tol::TOL_MINIMAL).unwrap();
        assert!(hm.state_dim() <= 5);
        for i in 0..64 {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
            let dev = linalg::sigma_max_complex(
                &(h.evaluate(theta).unwrap() - hm.evaluate(theta).unwrap()),
            );
            assert!(dev < 1e-8, "reduction deviation {dev}");
        }
    }

    #[test]
    fn split_pure_antistable_matches_hand_computation() {
        // -2z/(z-2): the split is r1 = 1/(w-0.5), r2 = 0.
        let g = scalar(2.0, 1.0, -4.0, -2.0);
        let mixed = g.split_stable_antistable().unwrap();
        assert_eq!(mixed.r2().state_dim(), 0);
        assert_abs_diff_eq!(mixed.r2().d()[(0, 0)], 0.0, epsilon = 1e-12);
        let dev = max_dev(mixed.r1(), |t| {
            let w = Complex::from_polar(1.0, t);
            1.0 / (w - 0.5)
        });
        assert!(dev < 1e-12, "split r1 deviation {dev}");
    }

    #[test]
    fn split_reconstructs_mixed_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..20 {
            // Assemble g = stable + anti-stable with a random coupling rotation.
            let ns = 3;
            let na = 2;
            let n = ns + na;
            let mut diag = DMatrix::zeros(n, n);
            for i in 0..ns {
                diag[(i, i)] = rng.random_range(-0.8..0.8);
            }
            for i in ns..n {
                diag[(i, i)] = rng.random_range(1.3..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            }
            let mut w = DMatrix::zeros(n, n);
            w.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let q = w.qr().q();
            let a = &q * diag * q.transpose();
            let mut b = DMatrix::zeros(n, 2);
            b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let mut c = DMatrix::zeros(2, n);
            c.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let mut d = DMatrix::zeros(2, 2);
            d.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let g = RealizationSS::new(a, b, c, d).unwrap();
            assert_eq!(g.stability(), StabilityClass::Mixed, "trial {trial}");
            let mixed = g.split_stable_antistable().unwrap();
            assert!(mixed.r1().is_stable());
            assert!(mixed.r2().is_stable());
            assert_eq!(mixed.r1().state_dim(), na);
            assert_eq!(mixed.r2().state_dim(), ns);
            for i in 0..64 {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 64.0 + 0.013;
                let dev = linalg::sigma_max_complex(
                    &(g.evaluate(theta).unwrap() - mixed.evaluate(theta).unwrap()),
                );
                assert!(dev < 1e-8, "trial {trial}: reconstruction deviation {dev}");
            }
        }
    }

    #[test]
    fn split_of_stable_system_is_trivial() {
        let g = scalar(0.5, 1.0, 1.0, 0.25);
        let mixed = g.split_stable_antistable().unwrap();
        assert_eq!(mixed.r1().state_dim(), 0);
        let dev = max_dev(mixed.r2(), |t| {
            let z = Complex::from_polar(1.0, t);
            0.25 + 1.0 / (z - 0.5)
        });
        assert!(dev < 1e-13);
    }

    #[test]
    fn split_rejects_unit_circle_pole() {
        let g = scalar(1.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            g.split_stable_antistable(),
            Err(Error::PoleNearUnitCircle { .. })
        ));
    }

    #[test]
    fn advance_multiplies_by_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for n_adv in [1usize, 2, 5] {
            let g = random_stable(&mut rng, 3, 2, 2);
            let mixed = MixedSystem::from_stable(g.clone()).unwrap();
            let adv = mixed.advance(n_adv).unwrap();
            for i in 0..64 {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 64.0;
                let phase = Complex::from_polar(1.0, n_adv as f64 * theta);
                let want = g.evaluate(theta).unwrap() * phase;
                let got = adv.evaluate(theta).unwrap();
                let dev = linalg::sigma_max_complex(&(want - got));
                assert!(dev < 1e-10, "advance {n_adv} deviation {dev}");
            }
        }
    }

    #[test]
    fn advanced_tail_shifts_markov_taps() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let g = random_stable(&mut rng, 4, 2, 3);
        let tail = advanced_tail(&g, 2).unwrap();
        let full = g.markov(8).taps;
        let shifted = tail.markov(6).taps;
        for k in 0..6 {
            let dev = linalg::max_abs(&(&full[k + 2] - &shifted[k]));
            assert!(dev < 1e-13, "tap {k} deviation {dev}");
        }
    }

    #[test]
    fn fir_taps_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let taps: Vec<DMatrix<f64>> = (0..4)
            .map(|_| {
                let mut t = DMatrix::zeros(2, 3);
                t.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                t
            })
            .collect();
        let g = fir_causal(&taps).unwrap();
        let got = g.markov(6).taps;
        for k in 0..4 {
            assert!(linalg::max_abs(&(&got[k] - &taps[k])) < 1e-14);
        }
        assert!(linalg::max_abs(&got[4]) < 1e-14);
        assert!(linalg::max_abs(&got[5]) < 1e-14);

        let sp = fir_strictly_proper(&taps).unwrap();
        let got = sp.markov(6).taps;
        assert!(linalg::max_abs(&got[0]) < 1e-14);
        for k in 0..4 {
            assert!(linalg::max_abs(&(&got[k + 1] - &taps[k])) < 1e-14);
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let g = random_stable(&mut rng, 3, 2, 2);
        let text = serde_json::to_string(&g).unwrap();
        let back: RealizationSS = serde_json::from_str(&text).unwrap();
        assert_eq!(g.a(), back.a());
        assert_eq!(g.b(), back.b());
        assert_eq!(g.c(), back.c());
        assert_eq!(g.d(), back.d());

        let s = RealizationSS::from_static(dmatrix![1.0, 2.0; 3.0, 4.0]);
        let text = serde_json::to_string(&s).unwrap();
        let back: RealizationSS = serde_json::from_str(&text).unwrap();
        assert_eq!(back.state_dim(), 0);
        assert_eq!(back.outputs(), 2);
        assert_eq!(back.inputs(), 2);
        assert_eq!(s.d(), back.d());
    }

    #[test]
    fn transpose_matches_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let g = random_stable(&mut rng, 3, 2, 4);
        let gt = g.transpose();
        assert_eq!(gt.outputs(), 4);
        assert_eq!(gt.inputs(), 2);
        for i in 0..16 {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / 16.0;
            let lhs = gt.evaluate(theta).unwrap();
            let rhs = g.evaluate(theta).unwrap().transpose();
            assert!(linalg::sigma_max_complex(&(lhs - rhs)) < 1e-12);
        }
    }

    #[test]
    fn conjugate_products_match_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..8 {
            let g = random_stable(&mut rng, 3, 2, 2);
            let h = random_stable(&mut rng, 2, 2, 3);
            let gh = g.conj_times(&h).unwrap();
            let k = random_stable(&mut rng, 2, 3, 2);
            let gk = g.times_conj(&k).unwrap();
            for i in 0..48 {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 48.0;
                let gv = g.evaluate(theta).unwrap();
                let hv = h.evaluate(theta).unwrap();
                let kv = k.evaluate(theta).unwrap();
                let d1 = gh.evaluate(theta).unwrap() - gv.adjoint() * hv;
                assert!(linalg::sigma_max_complex(&d1) < 1e-9);
                let d2 = gk.evaluate(theta).unwrap() - gv * kv.adjoint();
                assert!(linalg::sigma_max_complex(&d2) < 1e-9);
            }
        }
    }

    #[test]
    fn nilpotent_factors_are_fine_in_products() {
        // A pure delay cannot be conjugated as a realization, but products
        // with its conjugate must still come out right.
        let d2 = delay_block(2, 1);
        let g = scalar(0.4, 1.0, 1.0, 0.5);
        let gd = g.times_conj(&d2).unwrap();
        for i in 0..48 {
            let theta = 2.0 * std::f64::consts::PI * i as f64 / 48.0;
            let gv = g.evaluate(theta).unwrap();
            let dv = d2.evaluate(theta).unwrap();
            let diff = gd.evaluate(theta).unwrap() - gv * dv.adjoint();
            assert!(linalg::sigma_max_complex(&diff) < 1e-10);
        }
    }

    #[test]
    fn mixed_multiplications_match_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..6 {
            let mut r1 = random_stable(&mut rng, 2, 3, 2);
            r1 = RealizationSS::new(
                r1.a().clone(),
                r1.b().clone(),
                r1.c().clone(),
                DMatrix::zeros(3, 2),
            )
            .unwrap();
            let r2 = random_stable(&mut rng, 3, 2, 3);
            let m = MixedSystem::new(r1, r2).unwrap();
            let gl = random_stable(&mut rng, 2, 4, 2);
            let gr = random_stable(&mut rng, 2, 3, 2);
            let gc = random_stable(&mut rng, 2, 4, 3);
            let lm = m.left_mul(&gl).unwrap();
            let rm = m.right_mul(&gr).unwrap();
            let rc = m.right_mul_conj(&gc).unwrap();
            for i in 0..48 {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / 48.0;
                let mv = m.evaluate(theta).unwrap();
                let dl = lm.evaluate(theta).unwrap() - gl.evaluate(theta).unwrap() * &mv;
                assert!(linalg::sigma_max_complex(&dl) < 1e-9);
                let dr = rm.evaluate(theta).unwrap() - &mv * gr.evaluate(theta).unwrap();
                assert!(linalg::sigma_max_complex(&dr) < 1e-9);
                let dc =
                    rc.evaluate(theta).unwrap() - &mv * gc.evaluate(theta).unwrap().adjoint();
                assert!(linalg::sigma_max_complex(&dc) < 1e-9);
            }
        }
    }
}
