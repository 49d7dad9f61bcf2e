//! Scalar and block thresholding, plus closed-form soft-threshold risk.

use statrs::function::erf::erfc;

use crate::{Error, Result};

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0) {
        return Err(Error::param(format!("threshold must be non-negative, got {tau}")));
    }
    Ok(())
}

#[inline]
pub fn soft(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// η_τ(y) = (|y| − τ)₊ sign(y).
pub fn soft_threshold(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(v.iter().map(|&x| soft(x, tau)).collect())
}

/// y · I(|y| ≥ τ).
pub fn hard_threshold(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(v.iter().map(|&x| if x.abs() >= tau { x } else { 0.0 }).collect())
}

/// Per block: (‖x_B‖ − τ)₊ · x_B/‖x_B‖. The positive part keeps blocks
/// below threshold at zero instead of flipping their sign.
pub fn block_soft_threshold(v: &[f64], tau: f64, block_len: usize) -> Result<Vec<f64>> {
    check_tau(tau)?;
    check_blocks(v.len(), block_len)?;
    let mut out = vec![0.0; v.len()];
    for (src, dst) in v.chunks_exact(block_len).zip(out.chunks_exact_mut(block_len)) {
        let norm = src.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > tau {
            let s = (norm - tau) / norm;
            for (d, x) in dst.iter_mut().zip(src) {
                *d = s * x;
            }
        }
    }
    Ok(out)
}

pub(crate) fn check_blocks(n: usize, block_len: usize) -> Result<()> {
    if block_len == 0 || !n.is_multiple_of(block_len) {
        return Err(Error::dim(format!("length {n} is not a multiple of block length {block_len}")));
    }
    Ok(())
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// E(η(μ + ε; τ) − μ)² for ε ~ N(0, 1).
pub fn soft_risk_unit(mu: f64, tau: f64) -> f64 {
    let mu = mu.abs();
    let a = norm_cdf(tau - mu) - norm_cdf(-tau - mu);
    1.0 + tau * tau + (mu * mu - tau * tau - 1.0) * a
        - (tau - mu) * norm_pdf(tau + mu)
        - (tau + mu) * norm_pdf(tau - mu)
}

/// E η(ε; τ)² for ε ~ N(0, 1): 2[(1 + τ²)Φ(−τ) − τφ(τ)].
pub fn soft_null_risk(tau: f64) -> f64 {
    2.0 * ((1.0 + tau * tau) * norm_cdf(-tau) - tau * norm_pdf(tau))
}

/// Worst-case soft-threshold risk over k-sparse signals with sparsity ρ = k/n,
/// normalised by σ²: (1 + τ²)ρ + (1 − ρ)E η(ε; τ)².
pub fn soft_minimax_risk(rho: f64, tau: f64) -> f64 {
    (1.0 + tau * tau) * rho + (1.0 - rho) * soft_null_risk(tau)
}

/// The threshold multiplier minimising [`soft_minimax_risk`] and the level it
/// attains. Golden-section search on τ ∈ [0, 10]; the objective is unimodal.
pub fn optimal_soft_level(rho: f64) -> (f64, f64) {
    let f = |t: f64| soft_minimax_risk(rho, t);
    let (mut a, mut b) = (0.0f64, 10.0f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let tau = 0.5 * (a + b);
    (f(tau), tau)
}

/// Max-min threshold for AMP at undersampling δ: the largest sparsity ρ* whose
/// optimal level equals δ, and the threshold multiplier attaining it.
/// Returns (ρ*, τ).
pub fn maxmin_soft_threshold(delta: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if optimal_soft_level(mid).0 < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    (rho, optimal_soft_level(rho).1)
}
