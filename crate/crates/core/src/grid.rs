//! Frequency-grid sampling helpers: uniform circle grids, peak-gain scans,
//! and golden-section refinement of a scalar frequency response.

use crate::Result;

/// `count` equispaced angles on [0, 2*pi).
pub fn uniform(count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / count as f64)
        .collect()
}

/// Maximum of `f` over the given angles, returned as (value, argmax).
pub fn peak_over<F>(mut f: F, thetas: &[f64]) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut best = (f64::NEG_INFINITY, 0.0);
    for &theta in thetas {
        let v = f(theta)?;
        if v > best.0 {
            best = (v, theta);
        }
    }
    Ok(best)
}

/// Golden-section maximization of `f` on [a, b]; assumes the restriction is
/// unimodal, which holds once [a, b] brackets a single peak of a smooth gain
/// curve. Returns (value, argmax).
pub fn golden_max<F>(mut f: F, mut a: f64, mut b: f64, iters: usize) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..iters {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2)?;
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid)?;
    if fm >= f1 && fm >= f2 {
        Ok((fm, mid))
    } else if f1 >= f2 {
        Ok((f1, x1))
    } else {
        Ok((f2, x2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_covers_circle() {
        let t = uniform(8);
        assert_eq!(t.len(), 8);
        assert!((t[4] - std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn golden_finds_cosine_peak() {
        let (v, x) = golden_max(|t| Ok((t - 1.3).cos()), 0.5, 2.5, 80).unwrap();
        // Abscissa localization at a smooth peak is sqrt(eps)-limited.
        assert!((x - 1.3).abs() < 1e-6);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn peak_scan_returns_argmax() {
        let thetas = uniform(64);
        let (v, x) = peak_over(|t| Ok(-(t - 3.0) * (t - 3.0)), &thetas).unwrap();
        assert!(v <= 0.0);
        assert!((x - 3.0).abs() < 0.1);
    }
}
