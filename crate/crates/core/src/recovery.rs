//! IST, AMP, D-IT and D-AMP, plus exhaustive search over zero-one k-sparse
//! signals.
//!
//! All four iterations share one loop, started from x⁰ = 0, z⁰ = y:
//!
//! ```text
//! σ̂ᵗ     = ‖zᵗ‖/√m
//! rᵗ     = xᵗ + Aᵀzᵗ
//! xᵗ⁺¹   = D_{c·σ̂ᵗ}(rᵗ)                      (c = oversmooth factor for D-IT, else 1)
//! zᵗ⁺¹   = y − A xᵗ⁺¹ + zᵗ · div D_{c·σ̂ᵗ}(rᵗ)/m   (last term only for AMP/D-AMP)
//! ```

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::denoise::{Denoiser, DenoiserHandle, DenoiserKind};
use crate::diagnostics::NoiseSnapshot;
use crate::divergence::{default_epsilon, default_samples, mc_divergence_at, DivergenceEstimate};
use crate::sensing::{norm, Measurement, MeasurementMatrix};
use crate::signal::{mse, psnr_from_mse, Layout, Signal};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ist,
    Amp,
    Dit,
    Damp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Onsager {
    Exact,
    MonteCarlo,
    None,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    /// Probe step; `None` uses ‖r‖∞/1000 at each iteration.
    pub epsilon: Option<f64>,
    /// Probe step c·σ̂ instead; falls back to the default when σ̂ = 0.
    #[serde(default)]
    pub epsilon_sigma: Option<f64>,
    /// Probe count; `None` uses [`default_samples`].
    pub samples: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}


#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryConfig {
    pub algorithm: Algorithm,
    pub denoiser: DenoiserHandle,
    pub onsager: Onsager,
    pub max_iters: usize,
    pub stop_rel_change: f64,
    pub oversmooth_factor: f64,
    pub mc: McSettings,
    /// Iterations at which the effective noise xᵗ + Aᵀzᵗ − x_o is stored.
    pub snapshot_iters: Vec<usize>,
    /// Peak used for the PSNR column (1 for unit-range signals, 255 for images).
    pub psnr_peak: f64,
    /// Layout handed to the denoiser; defaults to the truth's layout, else flat.
    pub layout: Option<Layout>,
}

pub const DEFAULT_MAX_ITERS: usize = 30;
pub const DEFAULT_OVERSMOOTH: f64 = 2.0;
/// Default cap on C(n, k) for [`exhaustive_bk_recover`].
pub const DEFAULT_BK_BUDGET: u128 = 1_000_000;

impl RecoveryConfig {
    pub fn new(algorithm: Algorithm, denoiser: DenoiserHandle, onsager: Onsager) -> Self {
        RecoveryConfig {
            algorithm,
            denoiser,
            onsager,
            max_iters: DEFAULT_MAX_ITERS,
            stop_rel_change: 0.0,
            oversmooth_factor: DEFAULT_OVERSMOOTH,
            mc: McSettings::default(),
            snapshot_iters: Vec::new(),
            psnr_peak: 1.0,
            layout: None,
        }
    }

    /// AMP with soft thresholding at τ = k_τ·σ̂.
    pub fn amp(k_tau: f64) -> Self {
        Self::new(Algorithm::Amp, DenoiserHandle::soft(k_tau), Onsager::Exact)
    }

    pub fn ist(k_tau: f64) -> Self {
        Self::new(Algorithm::Ist, DenoiserHandle::soft(k_tau), Onsager::None)
    }

    pub fn damp(denoiser: DenoiserHandle, onsager: Onsager) -> Self {
        Self::new(Algorithm::Damp, denoiser, onsager)
    }

    pub fn dit(denoiser: DenoiserHandle) -> Self {
        Self::new(Algorithm::Dit, denoiser, Onsager::None)
    }

    pub fn with_iters(mut self, iters: usize) -> Self {
        self.max_iters = iters;
        self
    }

    /// Checks the pairing rules: IST and AMP need a thresholding denoiser,
    /// IST and D-IT run without the Onsager term, AMP needs it. D-AMP with
    /// `Onsager::None` is accepted as an ablation; it equals D-IT with
    /// oversmooth factor 1.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let thresholding = matches!(
            self.denoiser.kind,
            DenoiserKind::SoftThreshold | DenoiserKind::HardThreshold | DenoiserKind::BlockSoft { .. }
        );
        match self.algorithm {
            Algorithm::Ist | Algorithm::Amp if !thresholding => {
                errs.push(format!("{:?} needs a thresholding denoiser, got {}", self.algorithm, self.denoiser.label()))
            }
            _ => {}
        }
        match (self.algorithm, self.onsager) {
            (Algorithm::Ist | Algorithm::Dit, o) if o != Onsager::None => {
                errs.push(format!("{:?} runs without the Onsager term, got onsager = {o:?}", self.algorithm))
            }
            (Algorithm::Amp, Onsager::None) => errs.push("AMP needs an Onsager term".into()),
            _ => {}
        }
        if !(self.stop_rel_change >= 0.0) {
            errs.push(format!("stop_rel_change must be non-negative, got {}", self.stop_rel_change));
        }
        if !(self.oversmooth_factor > 0.0) {
            errs.push(format!("oversmooth_factor must be positive, got {}", self.oversmooth_factor));
        }
        if !(self.psnr_peak > 0.0) {
            errs.push(format!("psnr_peak must be positive, got {}", self.psnr_peak));
        }
        if let Some(e) = self.mc.epsilon {
            if !(e > 0.0) {
                errs.push(format!("mc.epsilon must be positive, got {e}"));
            }
        }
        if let Some(c) = self.mc.epsilon_sigma {
            if !(c > 0.0) {
                errs.push(format!("mc.epsilon_sigma must be positive, got {c}"));
            }
            if self.mc.epsilon.is_some() {
                errs.push("set at most one of mc.epsilon and mc.epsilon_sigma".into());
            }
        }
        if self.mc.samples == Some(0) {
            errs.push("mc.samples must be at least 1".into());
        }
        if let Err(e) = self.denoiser.validate() {
            errs.push(e.to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn sigma_factor(&self) -> f64 {
        if self.algorithm == Algorithm::Dit {
            self.oversmooth_factor
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryState {
    pub x: Signal,
    pub z: Vec<f64>,
    pub sigma_hat: f64,
    pub iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub mse: Option<f64>,
    pub psnr: Option<f64>,
    pub sigma_hat: f64,
    /// Divergence that entered the residual producing this iterate.
    pub div: Option<DivergenceEstimate>,
    pub rel_change: Option<f64>,
    pub wallclock_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    RelChange,
    Aborted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryTrace {
    pub algorithm: Algorithm,
    pub denoiser: String,
    pub records: Vec<IterRecord>,
    pub snapshots: Vec<NoiseSnapshot>,
    pub state: RecoveryState,
    pub stop: StopReason,
}

impl RecoveryTrace {
    pub fn estimate(&self) -> &Signal {
        &self.state.x
    }

    pub fn mse_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.mse).collect()
    }

    pub fn final_mse(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.mse)
    }

    pub fn final_psnr(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.psnr)
    }

    pub fn snapshot(&self, iter: usize) -> Option<&NoiseSnapshot> {
        self.snapshots.iter().find(|s| s.iter == iter)
    }
}

/// A run that stopped early; `partial` holds everything up to `iter`.
#[derive(Debug, ThisError)]
#[error("recovery aborted at iteration {iter}: {error}")]
pub struct RecoveryFailure {
    pub iter: usize,
    pub error: Error,
    pub partial: Box<RecoveryTrace>,
}

/// zᵗ · div/m.
pub fn onsager_term(z_prev: &[f64], div_value: f64, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::param("m must be at least 1"));
    }
    let c = div_value / m as f64;
    Ok(z_prev.iter().map(|z| z * c).collect())
}

/// Run the configured recovery.
pub fn run_recovery(
    y: &Measurement,
    a: &MeasurementMatrix,
    cfg: &RecoveryConfig,
    x_true: Option<&Signal>,
) -> std::result::Result<RecoveryTrace, RecoveryFailure> {
    run_recovery_with(y, a, cfg, &cfg.denoiser, x_true)
}

/// As [`run_recovery`] with any [`Denoiser`] in place of `cfg.denoiser`
/// (the config's denoiser then only serves validation and labelling).
pub fn run_recovery_with(
    y: &Measurement,
    a: &MeasurementMatrix,
    cfg: &RecoveryConfig,
    denoiser: &dyn Denoiser,
    x_true: Option<&Signal>,
) -> std::result::Result<RecoveryTrace, RecoveryFailure> {
    let (m, n) = (a.m(), a.n());
    let layout = cfg.layout.or_else(|| x_true.map(Signal::layout)).unwrap_or(Layout::Flat(n));
    let start = Instant::now();
    let mut trace = RecoveryTrace {
        algorithm: cfg.algorithm,
        denoiser: denoiser.label(),
        records: Vec::new(),
        snapshots: Vec::new(),
        state: RecoveryState { x: Signal::zeros(layout), z: y.y.clone(), sigma_hat: 0.0, iter: 0 },
        stop: StopReason::MaxIters,
    };
    let fail = |trace: RecoveryTrace, iter: usize, error: Error| RecoveryFailure {
        iter,
        error,
        partial: Box::new(RecoveryTrace { stop: StopReason::Aborted, ..trace }),
    };

    let mut errs = Vec::new();
    if let Err(e) = cfg.validate() {
        errs.push(e);
    }
    if y.y.len() != m {
        errs.push(Error::dim(format!("y has length {}, A has {m} rows", y.y.len())));
    }
    if layout.len() != n {
        errs.push(Error::dim(format!("layout {layout:?} does not match n = {n}")));
    }
    if let Some(x) = x_true {
        if x.len() != n {
            errs.push(Error::dim(format!("truth has length {}, A has {n} columns", x.len())));
        }
    }
    if let Some(e) = errs.into_iter().next() {
        return Err(fail(trace, 0, e));
    }

    let sqrt_m = (m as f64).sqrt();
    let record = |state: &RecoveryState, div: Option<DivergenceEstimate>, rel: Option<f64>| {
        let e = x_true.map(|x| mse(state.x.values(), x.values()).expect("lengths checked"));
        IterRecord {
            iter: state.iter,
            mse: e,
            psnr: e.map(|e| psnr_from_mse(e, cfg.psnr_peak)),
            sigma_hat: state.sigma_hat,
            div,
            rel_change: rel,
            wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    };
    trace.state.sigma_hat = norm(&trace.state.z) / sqrt_m;
    trace.records.push(record(&trace.state, None, None));
    let factor = cfg.sigma_factor();

    for t in 0..cfg.max_iters {
        let state = &trace.state;
        let sigma_hat = state.sigma_hat;
        let atz = a.apply_adjoint(&state.z).expect("dimensions checked");
        let r: Vec<f64> = state.x.values().iter().zip(&atz).map(|(x, v)| x + v).collect();
        let r = Signal::with_layout(r, layout).expect("layout checked");
        if let Some(x) = x_true {
            if cfg.snapshot_iters.contains(&t) {
                trace.snapshots.push(NoiseSnapshot::from_pseudo_data(&r, x, t, cfg.algorithm));
            }
        }
        let sigma = factor * sigma_hat;
        let key = t as u64;
        let x_next = match denoiser.denoise(&r, sigma, key) {
            Ok(x) => x,
            Err(e) => return Err(fail(trace, t, e)),
        };
        if let Some(i) = x_next.values().iter().position(|v| !v.is_finite()) {
            return Err(fail(trace, t + 1, Error::Numerical(format!("non-finite estimate entry {i}"))));
        }
        let div = match cfg.onsager {
            Onsager::None => None,
            Onsager::Exact => match denoiser.exact_divergence(&r, sigma) {
                Some(Ok(d)) => Some(DivergenceEstimate::exact(d)),
                Some(Err(e)) => return Err(fail(trace, t, e)),
                None => {
                    let e = Error::Config(vec![format!("{} has no exact divergence", denoiser.label())]);
                    return Err(fail(trace, t, e));
                }
            },
            Onsager::MonteCarlo => {
                let eps = match (cfg.mc.epsilon, cfg.mc.epsilon_sigma) {
                    (Some(e), _) => e,
                    (None, Some(c)) if c * sigma > 0.0 => c * sigma,
                    _ => default_epsilon(r.values()),
                };
                let samples = cfg.mc.samples.unwrap_or_else(|| default_samples(n));
                match mc_divergence_at(denoiser, &r, &x_next, sigma, eps, samples, cfg.mc.seed, key) {
                    Ok(d) => Some(d),
                    Err(e) => return Err(fail(trace, t, e)),
                }
            }
        };
        let ax = a.apply(x_next.values()).expect("dimensions checked");
        let c = div.as_ref().map_or(0.0, |d| d.value / m as f64);
        let z_next: Vec<f64> = y.y.iter().zip(&ax).zip(&state.z).map(|((yi, ai), zi)| yi - ai + c * zi).collect();
        if let Some(i) = z_next.iter().position(|v| !v.is_finite()) {
            return Err(fail(trace, t + 1, Error::Numerical(format!("non-finite residual entry {i}"))));
        }
        let diff: f64 = x_next.values().iter().zip(state.x.values()).map(|(p, q)| (p - q) * (p - q)).sum();
        let xn = x_next.norm_sq();
        let rel = if xn > 0.0 { (diff / xn).sqrt() } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
        let sigma_next = norm(&z_next) / sqrt_m;
        trace.state = RecoveryState { x: x_next, z: z_next, sigma_hat: sigma_next, iter: t + 1 };
        trace.records.push(record(&trace.state, div, Some(rel)));
        if cfg.stop_rel_change > 0.0 && rel < cfg.stop_rel_change {
            trace.stop = StopReason::RelChange;
            break;
        }
    }
    let last = trace.state.iter;
    if let Some(x) = x_true {
        if cfg.snapshot_iters.contains(&last) && trace.snapshot(last).is_none() {
            let snap = NoiseSnapshot::of_state(&trace.state, a, x, cfg.algorithm).expect("dimensions checked");
            trace.snapshots.push(snap);
        }
    }
    Ok(trace)
}

/// C(n, k), saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// argmin over zero-one k-sparse x of ‖y − Ax‖², ties to the
/// lexicographically smallest support.
pub fn exhaustive_bk_recover(y: &Measurement, a: &MeasurementMatrix, k: usize) -> Result<Signal> {
    exhaustive_bk_recover_with_budget(y, a, k, DEFAULT_BK_BUDGET)
}

pub fn exhaustive_bk_recover_with_budget(
    y: &Measurement,
    a: &MeasurementMatrix,
    k: usize,
    budget: u128,
) -> Result<Signal> {
    let (m, n) = (a.m(), a.n());
    if y.y.len() != m {
        return Err(Error::dim(format!("y has length {}, A has {m} rows", y.y.len())));
    }
    if k > n {
        return Err(Error::param(format!("k = {k} exceeds n = {n}")));
    }
    let count = binomial(n, k);
    if count > budget {
        return Err(Error::Budget { count, budget });
    }
    let cols: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut idx: Vec<usize> = (0..k).collect();
    let mut best = (f64::INFINITY, idx.clone());
    let mut resid = vec![0.0; m];
    loop {
        resid.copy_from_slice(&y.y);
        for &j in &idx {
            for (r, c) in resid.iter_mut().zip(&cols[j]) {
                *r -= c;
            }
        }
        let err: f64 = resid.iter().map(|r| r * r).sum();
        if err < best.0 {
            best = (err, idx.clone());
        }
        // next combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                let mut x = vec![0.0; n];
                for &j in &best.1 {
                    x[j] = 1.0;
                }
                return Ok(Signal::flat(x));
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for l in i + 1..k {
                    idx[l] = idx[l - 1] + 1;
                }
                break;
            }
        }
    }
}
