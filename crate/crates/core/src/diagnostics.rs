//! Effective-noise extraction, normality statistics and trace comparison.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::denoise::threshold::norm_cdf;
use crate::recovery::{Algorithm, RecoveryState, RecoveryTrace};
use crate::sensing::MeasurementMatrix;
use crate::signal::Signal;
use crate::state_evolution::SeTrace;
use crate::{Error, Result};

/// vᵗ = xᵗ + Aᵀzᵗ − x_o.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSnapshot {
    pub v: Vec<f64>,
    pub iter: usize,
    pub algorithm: Algorithm,
}

impl NoiseSnapshot {
    pub(crate) fn from_pseudo_data(r: &Signal, x_true: &Signal, iter: usize, algorithm: Algorithm) -> Self {
        let v = r.values().iter().zip(x_true.values()).map(|(a, b)| a - b).collect();
        NoiseSnapshot { v, iter, algorithm }
    }

    pub(crate) fn of_state(
        state: &RecoveryState,
        a: &MeasurementMatrix,
        x_true: &Signal,
        algorithm: Algorithm,
    ) -> Result<Self> {
        effective_noise(state, a, x_true, algorithm)
    }
}

pub fn effective_noise(
    state: &RecoveryState,
    a: &MeasurementMatrix,
    x_true: &Signal,
    algorithm: Algorithm,
) -> Result<NoiseSnapshot> {
    if state.x.len() != a.n() || x_true.len() != a.n() {
        return Err(Error::dim(format!(
            "estimate length {} / truth length {} vs n = {}",
            state.x.len(),
            x_true.len(),
            a.n()
        )));
    }
    let atz = a.apply_adjoint(&state.z)?;
    let v = state
        .x
        .values()
        .iter()
        .zip(&atz)
        .zip(x_true.values())
        .map(|((x, g), o)| x + g - o)
        .collect();
    Ok(NoiseSnapshot { v, iter: state.iter, algorithm })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub excess_kurtosis: f64,
    pub skewness: f64,
    pub anderson_darling: f64,
    /// (theoretical, empirical) quantiles at probabilities (i − 0.5)/n.
    pub qq: Vec<(f64, f64)>,
}

/// Moment statistics, Anderson-Darling A² against N(μ̂, σ̂²), and QQ pairs.
pub fn normality(v: &[f64]) -> Result<NormalityReport> {
    let n = v.len();
    if n < 8 {
        return Err(Error::param(format!("normality needs at least 8 samples, got {n}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite sample".into()));
    }
    let nf = n as f64;
    let mean = v.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in v {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) || m2 <= 1e-28 * mean.abs().max(1.0).powi(2) {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let std = (m2 * nf / (nf - 1.0)).sqrt();

    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let z: Vec<f64> = sorted.iter().map(|x| (x - mean) / std).collect();
    let mut s = 0.0;
    for i in 0..n {
        let lo = norm_cdf(z[i]).max(f64::MIN_POSITIVE).ln();
        let hi = norm_cdf(-z[n - 1 - i]).max(f64::MIN_POSITIVE).ln();
        s += (2 * i + 1) as f64 * (lo + hi);
    }
    let anderson_darling = -nf - s / nf;

    let std_normal = Normal::standard();
    let qq = sorted
        .iter()
        .enumerate()
        .map(|(i, &e)| (std_normal.inverse_cdf((i as f64 + 0.5) / nf), e))
        .collect();
    Ok(NormalityReport { n, mean, std, excess_kurtosis, skewness, anderson_darling, qq })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceComparison {
    /// |mse_t − θ_t|/θ_t, with the empirical trace as the measured quantity.
    pub rel_error: Vec<f64>,
    pub max_rel_error: f64,
    pub terminal_rel_error: f64,
}

/// Compare MSE series against a predicted series, truncated to the shorter.
pub fn compare_series(empirical: &[f64], predicted: &[f64]) -> TraceComparison {
    let rel_error: Vec<f64> = empirical
        .iter()
        .zip(predicted)
        .map(|(&e, &p)| {
            if p == 0.0 {
                if e == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                (e - p).abs() / p.abs()
            }
        })
        .collect();
    let max_rel_error = rel_error.iter().copied().fold(0.0, f64::max);
    let terminal_rel_error = rel_error.last().copied().unwrap_or(0.0);
    TraceComparison { rel_error, max_rel_error, terminal_rel_error }
}

pub fn compare_traces(empirical: &RecoveryTrace, predicted: &SeTrace) -> TraceComparison {
    compare_series(&empirical.mse_series(), &predicted.theta)
}
