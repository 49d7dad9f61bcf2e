//! Divergence (Jacobian trace) of denoisers: closed forms and the
//! Monte-Carlo probe estimator.

use serde::{Deserialize, Serialize};

use crate::denoise::svt::singular_values;
use crate::denoise::threshold::check_blocks;
use crate::denoise::Denoiser;
use crate::par;
use crate::rng::{normals, subkey, Consumer};
use crate::sensing::dot;
use crate::signal::Signal;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivMethod {
    Exact,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub method: DivMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DivergenceEstimate {
    pub fn exact(value: f64) -> Self {
        DivergenceEstimate { value, method: DivMethod::Exact, mc_samples: None, epsilon: None, seed: None }
    }
}

/// #{i : |v_i| > τ}.
pub fn div_soft(v: &[f64], tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::param(format!("threshold must be non-negative, got {tau}")));
    }
    Ok(v.iter().filter(|x| x.abs() > tau).count() as f64)
}

/// Σ over blocks with ‖x_B‖ > τ of B − τ(B − 1)/‖x_B‖.
pub fn div_block_soft(v: &[f64], tau: f64, block_len: usize) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::param(format!("threshold must be non-negative, got {tau}")));
    }
    check_blocks(v.len(), block_len)?;
    let b = block_len as f64;
    Ok(v.chunks_exact(block_len)
        .map(|blk| blk.iter().map(|x| x * x).sum::<f64>().sqrt())
        .filter(|&norm| norm > tau)
        .map(|norm| b - tau * (b - 1.0) / norm)
        .sum())
}

/// Relative gap below which two squared singular values count as equal.
pub const SVT_GAP_TOL: f64 = 1e-10;

/// Divergence of singular value thresholding on a square matrix:
/// Σ_i I(σ_i > λ) + 2 Σ_{i≠j} σ_i(σ_i − λ)₊/(σ_i² − σ_j²).
pub fn div_svt(values: &[f64], side: usize, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("lambda must be non-negative, got {lambda}")));
    }
    let s = singular_values(values, side)?;
    let scale = s.first().map_or(0.0, |s1| s1 * s1);
    let mut div = 0.0;
    for i in 0..s.len() {
        let shrink = (s[i] - lambda).max(0.0);
        if s[i] > lambda {
            div += 1.0;
        }
        if shrink == 0.0 {
            continue;
        }
        for j in 0..s.len() {
            if i == j {
                continue;
            }
            let gap = s[i] * s[i] - s[j] * s[j];
            if gap.abs() <= SVT_GAP_TOL * scale {
                return Err(Error::DegenerateSpectrum { i, j, gap: gap.abs() });
            }
            div += 2.0 * s[i] * shrink / gap;
        }
    }
    Ok(div)
}

/// ε = ‖v‖∞/1000, or 1e-3 for the zero vector.
pub fn default_epsilon(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if m > 0.0 {
        m / 1000.0
    } else {
        1e-3
    }
}

/// 10 probes below n = 1000, one from n = 10⁴, linear in between.
pub fn default_samples(n: usize) -> usize {
    if n < 1000 {
        10
    } else if n >= 10_000 {
        1
    } else {
        let t = (n - 1000) as f64 / 9000.0;
        (10.0 - 9.0 * t).round() as usize
    }
}

/// Monte-Carlo divergence: mean over probes b of bᵀ(D(v + εb) − D(v))/ε.
pub fn mc_divergence(
    d: &dyn Denoiser,
    v: &Signal,
    sigma: f64,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<DivergenceEstimate> {
    let base = d.denoise(v, sigma, 0)?;
    mc_divergence_at(d, v, &base, sigma, epsilon, samples, seed, 0)
}

/// As [`mc_divergence`], reusing `base = D(v)` computed with the same `key`.
/// Probes are drawn from the divergence stream keyed by (key, sample index),
/// and every perturbed evaluation uses `key` so a stochastic denoiser is
/// differenced against the same realisation.
#[allow(clippy::too_many_arguments)]
pub fn mc_divergence_at(
    d: &dyn Denoiser,
    v: &Signal,
    base: &Signal,
    sigma: f64,
    epsilon: f64,
    samples: usize,
    seed: u64,
    key: u64,
) -> Result<DivergenceEstimate> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::param(format!("epsilon must be positive, got {epsilon}")));
    }
    if samples == 0 {
        return Err(Error::param("at least one MC sample is required"));
    }
    if base.len() != v.len() {
        return Err(Error::dim("baseline and input lengths differ"));
    }
    let terms = par::try_map_indexed(samples, |i| {
        let b = normals(seed, Consumer::McDivergence, subkey(key, i as u64), v.len());
        let probe: Vec<f64> = v.values().iter().zip(&b).map(|(x, bi)| x + epsilon * bi).collect();
        let out = d.denoise(&v.like(probe), sigma, key)?;
        let diff: Vec<f64> = out.values().iter().zip(base.values()).map(|(a, c)| a - c).collect();
        Ok::<f64, Error>(dot(&b, &diff) / epsilon)
    })?;
    let value = terms.iter().sum::<f64>() / samples as f64;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("MC divergence is {value}")));
    }
    Ok(DivergenceEstimate {
        value,
        method: DivMethod::MonteCarlo,
        mc_samples: Some(samples),
        epsilon: Some(epsilon),
        seed: Some(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoise::DenoiserHandle;

    struct Identity;
    impl Denoiser for Identity {
        fn denoise(&self, v: &Signal, _: f64, _: u64) -> Result<Signal> {
            Ok(v.clone())
        }
    }

    struct Zero;
    impl Denoiser for Zero {
        fn denoise(&self, v: &Signal, _: f64, _: u64) -> Result<Signal> {
            Ok(v.like(vec![0.0; v.len()]))
        }
    }

    #[test]
    fn soft_examples() {
        assert_eq!(div_soft(&[3.0, -1.0, 0.5], 1.0).unwrap(), 1.0);
        assert_eq!(div_soft(&[0.3, -2.0, 0.1], 0.0).unwrap(), 3.0);
        assert_eq!(div_soft(&[0.3, -2.0], 2.5).unwrap(), 0.0);
    }

    #[test]
    fn block_examples() {
        let v = [0.3, -1.0, 2.0, 0.5];
        assert_eq!(div_block_soft(&v, 0.0, 2).unwrap(), 4.0);
        assert!((div_block_soft(&[3.0, 4.0], 2.5, 2).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(div_block_soft(&v, 10.0, 2).unwrap(), 0.0);
        assert!(div_block_soft(&v, 1.0, 3).is_err());
    }

    #[test]
    fn svt_examples() {
        let d = div_svt(&[3.0, 0.0, 0.0, 1.0], 2, 2.0).unwrap();
        assert!((d - 1.75).abs() < 1e-12);
        assert_eq!(div_svt(&[3.0, 0.0, 0.0, 1.0], 2, 5.0).unwrap(), 0.0);
        assert!(matches!(div_svt(&[2.0, 0.0, 0.0, 2.0], 2, 1.0), Err(Error::DegenerateSpectrum { .. })));
    }

    #[test]
    fn defaults() {
        assert_eq!(default_samples(500), 10);
        assert_eq!(default_samples(1000), 10);
        assert_eq!(default_samples(5500), 6);
        assert_eq!(default_samples(10_000), 1);
        assert_eq!(default_epsilon(&[0.5, -4.0]), 0.004);
    }

    #[test]
    fn identity_and_zero() {
        let v = Signal::flat(normals(1, Consumer::Signal, 0, 2000));
        let est = mc_divergence(&Identity, &v, 1.0, 1e-3, 4, 9).unwrap();
        // E bᵀb = n with sd √(2n/samples)
        assert!((est.value - 2000.0).abs() < 4.0 * (2.0 * 2000.0 / 4.0f64).sqrt());
        assert_eq!(mc_divergence(&Zero, &v, 1.0, 1e-3, 3, 9).unwrap().value, 0.0);
    }

    #[test]
    fn mc_is_deterministic() {
        let v = Signal::flat(normals(2, Consumer::Signal, 0, 300));
        let d = DenoiserHandle::soft(1.0);
        let a = mc_divergence(&d, &v, 1.0, 1e-3, 5, 42).unwrap();
        let b = mc_divergence(&d, &v, 1.0, 1e-3, 5, 42).unwrap();
        assert_eq!(a, b);
        assert!(mc_divergence(&d, &v, 1.0, 0.0, 5, 42).is_err());
        assert!(mc_divergence(&d, &v, 1.0, 1e-3, 0, 42).is_err());
    }
}
