//! Dense linear-algebra helpers shared by the realization algebra and the
//! solvers: spectral radii, symmetric square roots, the matrix sign function,
//! and invariant-subspace projectors for the unit circle.

use crate::error::Error;
use crate::tol;
use crate::Result;
use nalgebra::linalg::Schur;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type CMatrix = DMatrix<Complex<f64>>;

/// Symmetrize: (M + M^T) / 2.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

fn try_moduli(a: &DMatrix<f64>) -> Option<Vec<f64>> {
    let n = a.nrows();
    // Machine epsilon makes the QR deflation test unreachable for some
    // well-conditioned matrices; step the tolerance up before giving up on a
    // candidate. 1e-11 relative is still far inside the 1e-8 stability band.
    for eps in [f64::EPSILON, 1e-13, 1e-11] {
        if let Some(s) = Schur::try_new(a.clone(), eps, 120 * n.max(4)) {
            return Some(s.complex_eigenvalues().iter().map(|l| l.norm()).collect());
        }
    }
    None
}

/// Moduli of the eigenvalues of a square real matrix.
///
/// The QR iteration can fail to converge on exactly structured matrices —
/// shift registers (nilpotent subdiagonal blocks) are the repeat offender in
/// this code base — so the decomposition runs with a stepped deflation
/// tolerance and an iteration cap, and on failure the matrix is retried under
/// a random orthogonal similarity, which preserves the spectrum while
/// breaking the structure. As a last resort the moduli are reported as all 1,
/// which downstream classification treats as "on the unit circle" and turns
/// into an honest error.
pub fn eig_moduli(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![a[(0, 0)].abs()];
    }
    if let Some(m) = try_moduli(a) {
        return m;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x0051_C0DE);
    for _ in 0..4 {
        let mut w = DMatrix::<f64>::zeros(n, n);
        w.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let q = w.qr().q();
        if let Some(m) = try_moduli(&(q.transpose() * a * &q)) {
            return m;
        }
    }
    log::warn!("eigenvalue iteration failed to converge for a {n}x{n} matrix");
    vec![1.0; n]
}

/// Spectral radius; 0 for the empty matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eig_moduli(a).into_iter().fold(0.0, f64::max)
}

/// Smallest singular value; +inf for an empty matrix (an empty state map is
/// trivially invertible).
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return f64::INFINITY;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Largest singular value of a real matrix; 0 for an empty matrix.
pub fn sigma_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().copied().fold(0.0, f64::max)
}

/// Largest singular value of a complex matrix, computed through the real
/// embedding [Re -Im; Im Re] whose singular values are those of the complex
/// matrix, each doubled in multiplicity.
pub fn sigma_max_complex(m: &CMatrix) -> f64 {
    let (p, q) = m.shape();
    if p == 0 || q == 0 {
        return 0.0;
    }
    let mut e = DMatrix::<f64>::zeros(2 * p, 2 * q);
    for i in 0..p {
        for j in 0..q {
            let v = m[(i, j)];
            e[(i, j)] = v.re;
            e[(i, j + q)] = -v.im;
            e[(i + p, j)] = v.im;
            e[(i + p, j + q)] = v.re;
        }
    }
    sigma_max(&e)
}

/// Solve M X = B for real square M; errors if M is singular.
pub fn solve(m: &DMatrix<f64>, b: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    m.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::SingularMatrix(context.to_string()))
}

/// Invert a real square matrix; errors if singular.
pub fn inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::SingularMatrix(context.to_string()))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = sym(m).symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

/// Largest eigenvalue of a symmetric matrix; -inf when empty.
pub fn sym_eig_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(f64::NEG_INFINITY)
}

/// Smallest eigenvalue of a symmetric matrix; +inf when empty.
pub fn sym_eig_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Symmetric PSD square root with negative eigenvalues clamped to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return DMatrix::zeros(0, 0);
    }
    let eig = sym(m).symmetric_eigen();
    let d = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Symmetric positive definite square root; errors unless the smallest
/// eigenvalue clears a relative floor of 1e-12.
pub fn pd_sqrt(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = sym(m).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin <= 1e-12 * lmax.max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "{context}: eigenvalue range [{lmin:.3e}, {lmax:.3e}]"
        )));
    }
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| l.sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Inverse of a symmetric positive definite matrix via its eigendecomposition,
/// with the same relative floor as [`pd_sqrt`].
pub fn pd_inverse(m: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let eig = sym(m).symmetric_eigen();
    let lmax = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin <= 1e-12 * lmax.max(1.0) {
        return Err(Error::NotPositiveDefinite(format!(
            "{context}: eigenvalue range [{lmin:.3e}, {lmax:.3e}]"
        )));
    }
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| 1.0 / l));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose())
}

/// Matrix sign function by the scaled Newton iteration
/// S <- (c S + (c S)^-1) / 2 with determinant scaling. Requires that no
/// eigenvalue lies on the imaginary axis.
pub fn matrix_sign(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let mut s = a.clone();
    let mut prev_diff = f64::INFINITY;
    for iter in 0..100 {
        let lu = s.clone().lu();
        let det: f64 = lu.determinant();
        if !det.is_finite() || det == 0.0 {
            return Err(Error::SingularMatrix(
                "matrix sign iteration produced a singular iterate".into(),
            ));
        }
        let sinv = lu
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("matrix sign iteration: inverse failed".into()))?;
        // Determinant scaling accelerates the early phase; drop it near
        // convergence where it only adds noise.
        let c = if prev_diff > 1e-2 {
            det.abs().powf(-1.0 / n as f64).clamp(1e-8, 1e8)
        } else {
            1.0
        };
        let next = (&s * c + sinv / c) * 0.5;
        let diff = (&next - &s).norm() / next.norm().max(1.0);
        s = next;
        if diff < 1e-14 && iter >= 2 {
            break;
        }
        prev_diff = diff;
    }
    let resid = (&s * &s - DMatrix::<f64>::identity(n, n)).norm();
    if resid > 1e-8 * (n as f64).sqrt().max(1.0) {
        return Err(Error::NumericalBreakdown(format!(
            "matrix sign iteration did not converge (||S^2 - I|| = {resid:.3e})"
        )));
    }
    Ok(s)
}

/// Spectral projector onto the invariant subspace of eigenvalues strictly
/// inside the unit circle, with the count of such eigenvalues.
///
/// Uses the Cayley transform C = (A - I)(A + I)^-1, which maps the open unit
/// disc to the open left half-plane, followed by the matrix sign function.
/// Errors if any eigenvalue modulus lies within `tol::EPS_STAB` of 1.
pub fn stable_projector(a: &DMatrix<f64>, context: &str) -> Result<(DMatrix<f64>, usize)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((DMatrix::zeros(0, 0), 0));
    }
    for m in eig_moduli(a) {
        if (m - 1.0).abs() < tol::EPS_STAB {
            return Err(Error::PoleNearUnitCircle {
                modulus: m,
                margin: tol::EPS_STAB,
                context: context.to_string(),
            });
        }
    }
    let id = DMatrix::<f64>::identity(n, n);
    let apime = inverse(&(a + &id), "stable_projector: A + I")?;
    let cayley = (a - &id) * apime;
    let s = matrix_sign(&cayley)?;
    let p = (&id - s) * 0.5;
    let k = p.trace().round();
    if !(0.0..=n as f64).contains(&k) || (p.trace() - k).abs() > 1e-6 {
        return Err(Error::NumericalBreakdown(format!(
            "stable projector has non-integral trace {:.6}",
            p.trace()
        )));
    }
    Ok((p, k as usize))
}

/// Orthonormal basis for the range of a (numerical) rank-k projector, as the
/// leading k columns of a column-pivoted QR factorization.
pub fn range_basis(p: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = p.nrows();
    if k == 0 {
        return DMatrix::zeros(n, 0);
    }
    let qr = p.clone().col_piv_qr();
    let q = qr.q();
    q.columns(0, k).into_owned()
}

/// Frequency response helper: D + C (zI - A)^-1 B at z = e^{i theta}.
pub fn freq_response(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    theta: f64,
) -> Result<CMatrix> {
    let n = a.nrows();
    let to_c = |m: &DMatrix<f64>| m.map(|x| Complex::new(x, 0.0));
    let dc = to_c(d);
    if n == 0 {
        return Ok(dc);
    }
    let z = Complex::from_polar(1.0, theta);
    let mut zia = to_c(a).map(|x| -x);
    for i in 0..n {
        zia[(i, i)] += z;
    }
    let x = zia
        .lu()
        .solve(&to_c(b))
        .ok_or_else(|| Error::SingularMatrix(format!("frequency response at theta = {theta}")))?;
    Ok(to_c(c) * x + dc)
}
