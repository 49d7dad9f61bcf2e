//! Deterministic state evolution θᵗ⁺¹ = (1/n) E‖D_σᵗ(x_o + σᵗε) − x_o‖²,
//! (σᵗ)² = θᵗ/δ + σ_w², θ⁰ = ‖x_o‖²/n, and the analyses built on it.

use serde::{Deserialize, Serialize};

use crate::denoise::Denoiser;
use crate::par;
use crate::quad::gauss_expect;
use crate::rng::{normals, subkey, Consumer};
use crate::signal::Signal;
use crate::{Error, Result};

/// How the expectation in one SE step is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum SeEngine {
    /// Closed form when the denoiser offers one, Monte Carlo otherwise.
    Auto { trials: usize, seed: u64 },
    MonteCarlo { trials: usize, seed: u64 },
    /// Closed form only; fails for denoisers without one.
    Exact,
}

impl SeEngine {
    pub fn auto(trials: usize, seed: u64) -> Self {
        SeEngine::Auto { trials, seed }
    }

    pub fn mc(trials: usize, seed: u64) -> Self {
        SeEngine::MonteCarlo { trials, seed }
    }

    pub fn trials(&self) -> usize {
        match *self {
            SeEngine::Auto { trials, .. } | SeEngine::MonteCarlo { trials, .. } => trials,
            SeEngine::Exact => 0,
        }
    }
}

/// 20 trials from n = 10⁴ up, 400 up to n = 10³, log-linear in between.
pub fn default_trials(n: usize) -> usize {
    if n <= 1000 {
        400
    } else if n >= 10_000 {
        20
    } else {
        let t = ((n as f64).log10() - 3.0).clamp(0.0, 1.0);
        (400f64.ln() * (1.0 - t) + 20f64.ln() * t).exp().round() as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeTrace {
    pub theta: Vec<f64>,
    pub sigma: Vec<f64>,
    pub delta: f64,
    pub sigma_w2: f64,
    pub mc_trials: usize,
}

impl SeTrace {
    pub fn last(&self) -> f64 {
        *self.theta.last().expect("trace holds θ⁰")
    }
}

/// Risk estimate with its Monte-Carlo standard error (0 for closed forms).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Risk {
    pub mean: f64,
    pub std_err: f64,
}

pub fn effective_sigma(theta: f64, delta: f64, sigma_w2: f64) -> f64 {
    (theta / delta + sigma_w2).sqrt()
}

fn check_inputs(theta: f64, delta: f64, sigma_w2: f64) -> Result<()> {
    if !(theta >= 0.0) {
        return Err(Error::param(format!("theta must be non-negative, got {theta}")));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1], got {delta}")));
    }
    if !(sigma_w2 >= 0.0) {
        return Err(Error::param(format!("sigma_w2 must be non-negative, got {sigma_w2}")));
    }
    Ok(())
}

/// (1/n) E‖D_σ(x_o + σε) − x_o‖². `key` selects the Monte-Carlo draws, so
/// different denoisers evaluated with the same key see the same noise.
pub fn risk(d: &dyn Denoiser, x_o: &Signal, sigma: f64, engine: SeEngine, key: u64) -> Result<Risk> {
    if !(sigma >= 0.0) {
        return Err(Error::param(format!("sigma must be non-negative, got {sigma}")));
    }
    let (trials, seed) = match engine {
        SeEngine::Exact => {
            return match d.closed_form_risk(x_o, sigma) {
                Some(r) => r.map(|mean| Risk { mean, std_err: 0.0 }),
                None => Err(Error::param(format!("{} has no closed-form risk", d.label()))),
            }
        }
        SeEngine::Auto { trials, seed } => {
            if let Some(r) = d.closed_form_risk(x_o, sigma) {
                return r.map(|mean| Risk { mean, std_err: 0.0 });
            }
            (trials, seed)
        }
        SeEngine::MonteCarlo { trials, seed } => (trials, seed),
    };
    if trials == 0 {
        return Err(Error::param("mc_trials must be at least 1"));
    }
    let n = x_o.len() as f64;
    let errs = par::try_map_indexed(trials, |j| {
        let k = subkey(key, j as u64);
        let eps = normals(seed, Consumer::StateEvolution, k, x_o.len());
        let noisy: Vec<f64> = x_o.values().iter().zip(&eps).map(|(x, e)| x + sigma * e).collect();
        let out = d.denoise(&x_o.like(noisy), sigma, k)?;
        Ok::<f64, Error>(out.values().iter().zip(x_o.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
    })?;
    let t = trials as f64;
    let mean = errs.iter().sum::<f64>() / t;
    let std_err = if trials > 1 {
        (errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (t - 1.0) / t).sqrt()
    } else {
        0.0
    };
    if !mean.is_finite() {
        return Err(Error::Numerical(format!("SE risk is {mean}")));
    }
    Ok(Risk { mean, std_err })
}

/// One SE step from θ.
pub fn se_step(
    d: &dyn Denoiser,
    x_o: &Signal,
    theta: f64,
    delta: f64,
    sigma_w2: f64,
    engine: SeEngine,
    key: u64,
) -> Result<f64> {
    check_inputs(theta, delta, sigma_w2)?;
    Ok(risk(d, x_o, effective_sigma(theta, delta, sigma_w2), engine, key)?.mean)
}

pub fn initial_theta(x_o: &Signal) -> f64 {
    if x_o.is_empty() {
        0.0
    } else {
        x_o.norm_sq() / x_o.len() as f64
    }
}

/// θ⁰ … θ^iters; step t uses draw key t.
pub fn se_trace(
    d: &dyn Denoiser,
    x_o: &Signal,
    delta: f64,
    sigma_w2: f64,
    iters: usize,
    engine: SeEngine,
) -> Result<SeTrace> {
    let mut theta = vec![initial_theta(x_o)];
    check_inputs(theta[0], delta, sigma_w2)?;
    for t in 0..iters {
        let next = se_step(d, x_o, theta[t], delta, sigma_w2, engine, t as u64)?;
        theta.push(next);
    }
    let sigma = theta.iter().map(|&th| effective_sigma(th, delta, sigma_w2)).collect();
    Ok(SeTrace { theta, sigma, delta, sigma_w2, mc_trials: engine.trials() })
}

pub const DEFAULT_FP_TOL: f64 = 1e-8;
pub const DEFAULT_FP_ITERS: usize = 200;

/// Iterate until |θᵗ⁺¹ − θᵗ| < tol·max(θᵗ, 1e−12).
pub fn se_fixed_point(
    d: &dyn Denoiser,
    x_o: &Signal,
    delta: f64,
    sigma_w2: f64,
    tol: f64,
    max_iters: usize,
    engine: SeEngine,
) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tol must be positive, got {tol}")));
    }
    let mut theta = initial_theta(x_o);
    check_inputs(theta, delta, sigma_w2)?;
    let mut prev = theta;
    for t in 0..max_iters {
        let next = se_step(d, x_o, theta, delta, sigma_w2, engine, t as u64)?;
        if (next - theta).abs() < tol * theta.max(1e-12) {
            return Ok(next);
        }
        prev = theta;
        theta = next;
    }
    Err(Error::NonConvergence { iters: max_iters, prev, last: theta })
}

/// (κ, B) with risk(σ) ≤ κσ² + B on the probed grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserLevel {
    pub kappa: f64,
    pub bias_b: f64,
    /// (σ, risk, standard error) per grid point.
    pub risks: Vec<(f64, f64, f64)>,
    pub warnings: Vec<String>,
}

/// Fit the least upper envelope κσ² + B (κ, B ≥ 0) minimising the total gap
/// over the grid, a two-variable linear program solved by enumerating its
/// vertices. B is set to 0 when the pure-slope bound max risk/σ² is within
/// the estimation tolerance of the fitted κ.
pub fn estimate_level(
    d: &dyn Denoiser,
    x_o: &Signal,
    sigma_grid: &[f64],
    engine: SeEngine,
) -> Result<DenoiserLevel> {
    if sigma_grid.is_empty() || sigma_grid.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::param("sigma grid must be non-empty and positive"));
    }
    if sigma_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param("sigma grid must be ascending"));
    }
    // common random numbers across the grid
    let risks: Vec<Risk> = sigma_grid.iter().map(|&s| risk(d, x_o, s, engine, 0)).collect::<Result<_>>()?;
    let s2: Vec<f64> = sigma_grid.iter().map(|s| s * s).collect();
    let r: Vec<f64> = risks.iter().map(|r| r.mean).collect();

    let mut warnings = Vec::new();
    for i in 1..r.len() {
        let se = (risks[i].std_err.powi(2) + risks[i - 1].std_err.powi(2)).sqrt();
        if r[i] < r[i - 1] - 3.0 * se - 1e-12 * r[i - 1].abs() {
            warnings.push(format!(
                "risk decreases from {:.6e} at sigma {} to {:.6e} at sigma {}: denoiser not monotone",
                r[i - 1],
                sigma_grid[i - 1],
                r[i],
                sigma_grid[i]
            ));
        }
    }

    let feasible = |k: f64, b: f64| {
        k >= 0.0 && b >= 0.0 && s2.iter().zip(&r).all(|(s, ri)| k * s + b >= ri - 1e-12 * ri.abs().max(1e-300))
    };
    let total_s2: f64 = s2.iter().sum();
    let cost = |k: f64, b: f64| k * total_s2 + b * s2.len() as f64;
    let mut cands: Vec<(f64, f64)> = Vec::new();
    for i in 0..r.len() {
        cands.push((r[i] / s2[i], 0.0));
        cands.push((0.0, r[i]));
        for j in i + 1..r.len() {
            let k = (r[j] - r[i]) / (s2[j] - s2[i]);
            cands.push((k, r[i] - k * s2[i]));
        }
    }
    let (mut kappa, mut bias) = cands
        .into_iter()
        .filter(|&(k, b)| k.is_finite() && b.is_finite() && feasible(k, b))
        .min_by(|a, b| cost(a.0, a.1).total_cmp(&cost(b.0, b.1)))
        .ok_or_else(|| Error::Numerical("no feasible level fit".into()))?;

    let kappa0 = r.iter().zip(&s2).map(|(ri, s)| ri / s).fold(0.0, f64::max);
    let rel_tol = risks
        .iter()
        .map(|x| if x.mean > 0.0 { 3.0 * x.std_err / x.mean } else { 0.0 })
        .fold(1e-9, f64::max);
    if kappa0 <= kappa * (1.0 + rel_tol) {
        kappa = kappa0;
        bias = 0.0;
    }
    if kappa >= 1.0 {
        warnings.push(format!("fitted level kappa = {kappa} is not below 1"));
    }
    let risks = sigma_grid.iter().zip(&risks).map(|(s, x)| (*s, x.mean, x.std_err)).collect();
    Ok(DenoiserLevel { kappa, bias_b: bias, risks, warnings })
}

/// NS(σ_w², δ) ≤ (κσ_w² + B)/(1 − κ/δ).
pub fn noise_sensitivity_bound(kappa: f64, b: f64, delta: f64, sigma_w2: f64) -> Result<f64> {
    if !(delta > kappa) {
        return Err(Error::param(format!("bound undefined for delta = {delta} <= kappa = {kappa}")));
    }
    Ok((kappa * sigma_w2 + b) / (1.0 - kappa / delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaStarOptions {
    pub bracket: (f64, f64),
    /// Bisection stops when the bracket is narrower than this.
    pub tol: f64,
    /// SE iterations per predicate evaluation.
    pub max_iters: usize,
    /// Success means θᵗ < success_tol·θ⁰ within `max_iters`.
    pub success_tol: f64,
    /// Extra δ points checked after bisection for monotonicity of success.
    pub check_points: usize,
}

impl Default for DeltaStarOptions {
    fn default() -> Self {
        DeltaStarOptions { bracket: (0.01, 0.99), tol: 1e-3, max_iters: 5000, success_tol: 1e-6, check_points: 8 }
    }
}

fn noiseless_success(d: &dyn Denoiser, x_o: &Signal, delta: f64, opts: &DeltaStarOptions, engine: SeEngine) -> Result<bool> {
    let theta0 = initial_theta(x_o);
    let mut theta = theta0;
    for t in 0..opts.max_iters {
        theta = se_step(d, x_o, theta, delta, 0.0, engine, t as u64)?;
        if theta < opts.success_tol * theta0 {
            return Ok(true);
        }
        if theta > 1e6 * theta0 {
            return Ok(false);
        }
    }
    Ok(false)
}

/// Smallest δ for which noiseless SE drives θ to zero, by bisection.
pub fn delta_star(d: &dyn Denoiser, x_o: &Signal, opts: &DeltaStarOptions, engine: SeEngine) -> Result<f64> {
    let (mut lo, mut hi) = opts.bracket;
    if !(0.0 < lo && lo < hi && hi <= 1.0) {
        return Err(Error::param(format!("bad bracket {:?}", opts.bracket)));
    }
    if initial_theta(x_o) == 0.0 || noiseless_success(d, x_o, lo, opts, engine)? {
        return Ok(lo);
    }
    if !noiseless_success(d, x_o, hi, opts, engine)? {
        return Err(Error::Numerical(format!("SE does not converge at the upper bracket edge {hi}")));
    }
    let (a, b) = (lo, hi);
    while hi - lo > opts.tol {
        let mid = 0.5 * (lo + hi);
        if noiseless_success(d, x_o, mid, opts, engine)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let star = 0.5 * (lo + hi);
    for i in 1..=opts.check_points {
        let delta = a + (b - a) * i as f64 / (opts.check_points + 1) as f64;
        if (delta - star).abs() <= opts.tol {
            continue;
        }
        if noiseless_success(d, x_o, delta, opts, engine)? != (delta > star) {
            return Err(Error::Numerical(format!(
                "success is not monotone in delta: delta = {delta} disagrees with delta* = {star}"
            )));
        }
    }
    Ok(star)
}

/// Greedy per-step parameter choice: at each step pick the grid value with
/// the smallest one-step risk at the current σᵗ (first wins ties).
pub fn greedy_tune<D, F>(
    family: F,
    x_o: &Signal,
    delta: f64,
    sigma_w2: f64,
    iters: usize,
    param_grid: &[f64],
    engine: SeEngine,
) -> Result<(Vec<f64>, SeTrace)>
where
    D: Denoiser,
    F: Fn(f64) -> D,
{
    if param_grid.is_empty() {
        return Err(Error::param("parameter grid is empty"));
    }
    let members: Vec<D> = param_grid.iter().map(|&p| family(p)).collect();
    let mut theta = vec![initial_theta(x_o)];
    check_inputs(theta[0], delta, sigma_w2)?;
    let mut chosen = Vec::with_capacity(iters);
    for t in 0..iters {
        let sigma = effective_sigma(theta[t], delta, sigma_w2);
        let mut best: Option<(f64, f64)> = None;
        for (p, d) in param_grid.iter().zip(&members) {
            let r = risk(d, x_o, sigma, engine, t as u64)?.mean;
            if best.is_none_or(|(_, br)| r < br) {
                best = Some((*p, r));
            }
        }
        let (p, r) = best.expect("grid is non-empty");
        chosen.push(p);
        theta.push(r);
    }
    let sigma = theta.iter().map(|&th| effective_sigma(th, delta, sigma_w2)).collect();
    Ok((chosen, SeTrace { theta, sigma, delta, sigma_w2, mc_trials: engine.trials() }))
}

/// Quadrature tolerance used by [`kappa_mm_binary_sparse`].
pub const KAPPA_MM_TOL: f64 = 1e-8;

/// Posterior mean E[X | X + σZ = y] for P(X = 1) = ρ, P(X = 0) = 1 − ρ.
pub fn binary_posterior_mean(y: f64, rho: f64, sigma: f64) -> f64 {
    let logit = (rho / (1.0 - rho)).ln() + (2.0 * y - 1.0) / (2.0 * sigma * sigma);
    1.0 / (1.0 + (-logit).exp())
}

/// Bayes risk of the posterior mean for the two-point prior, per coordinate.
pub fn binary_bayes_risk(rho: f64, sigma: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::param(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    // the posterior switches where y crosses 1/2 + σ² log((1 − ρ)/ρ)
    let y_mid = 0.5 + sigma * sigma * ((1.0 - rho) / rho).ln();
    let on = gauss_expect(
        |z| (binary_posterior_mean(1.0 + sigma * z, rho, sigma) - 1.0).powi(2),
        &[(y_mid - 1.0) / sigma],
        KAPPA_MM_TOL,
    )?;
    let off = gauss_expect(|z| binary_posterior_mean(sigma * z, rho, sigma).powi(2), &[y_mid / sigma], KAPPA_MM_TOL)?;
    Ok(rho * on + (1.0 - rho) * off)
}

/// sup over the grid of (posterior-mean Bayes risk)/σ²; returns (κ_MM, σ at the sup).
pub fn kappa_mm_binary_sparse(rho: f64, sigma_grid: &[f64]) -> Result<(f64, f64)> {
    if sigma_grid.is_empty() {
        return Err(Error::param("sigma grid is empty"));
    }
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for &s in sigma_grid {
        let k = binary_bayes_risk(rho, s)? / (s * s);
        if k > best.0 {
            best = (k, s);
        }
    }
    Ok(best)
}
