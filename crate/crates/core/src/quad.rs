//! Numerical integration helpers on top of the double-exponential rule.

use crate::denoise::threshold::norm_pdf;
use crate::{Error, Result};

/// Standard-normal expectations are truncated to |z| ≤ this bound; the
/// neglected mass is below 1e−32.
pub const GAUSS_CUTOFF: f64 = 12.0;

/// ∫_a^b f, split at `breaks` (kinks or jumps of f) so each piece is smooth.
/// Fails if the estimated error of any piece exceeds `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    pts.extend(inner);
    pts.push(b);
    let pieces = (pts.len() - 1) as f64;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let out = quadrature::integrate(&f, w[0], w[1], tol / pieces);
        if !out.integral.is_finite() || out.error_estimate > tol {
            return Err(Error::Numerical(format!(
                "quadrature on [{}, {}] did not reach {tol:e} (estimate {:e})",
                w[0], w[1], out.error_estimate
            )));
        }
        total += out.integral;
    }
    Ok(total)
}

/// E f(Z) for Z ~ N(0, 1).
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F, breaks: &[f64], tol: f64) -> Result<f64> {
    integrate(|z| f(z) * norm_pdf(z), -GAUSS_CUTOFF, GAUSS_CUTOFF, breaks, tol)
}
