//! Denoisers behind one interface: (noisy signal, noise level) → estimate.

pub mod config;
pub mod filters;
pub mod nlm;
pub mod svt;
pub mod threshold;
pub mod wavelet;

use serde::{Deserialize, Serialize};

use crate::divergence::{div_block_soft, div_soft, div_svt};
use crate::signal::{Layout, Signal};
use crate::smoothing::SmoothedDenoiser;
use crate::{Error, Result};

pub use filters::{bilateral, gaussian_filter};
pub use nlm::nlm;
pub use svt::svt;
pub use threshold::{block_soft_threshold, hard_threshold, soft_threshold};
pub use wavelet::{wavelet_threshold, Basis, ThresholdMode};

/// A family D_σ of denoisers indexed by the noise standard deviation.
///
/// `key` feeds stochastic denoisers (randomised smoothing): calls with equal
/// `(v, sigma, key)` return identical output. Deterministic denoisers ignore it.
pub trait Denoiser: Send + Sync {
    fn denoise(&self, v: &Signal, sigma: f64, key: u64) -> Result<Signal>;

    /// Exact Jacobian trace at `v`, when a closed form exists.
    fn exact_divergence(&self, _v: &Signal, _sigma: f64) -> Option<Result<f64>> {
        None
    }

    /// (1/n) E‖D_σ(x + σε) − x‖² in closed form, when available.
    fn closed_form_risk(&self, _x: &Signal, _sigma: f64) -> Option<Result<f64>> {
        None
    }

    fn label(&self) -> String {
        "custom".into()
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, v: &Signal, sigma: f64, key: u64) -> Result<Signal> {
        (**self).denoise(v, sigma, key)
    }
    fn exact_divergence(&self, v: &Signal, sigma: f64) -> Option<Result<f64>> {
        (**self).exact_divergence(v, sigma)
    }
    fn closed_form_risk(&self, x: &Signal, sigma: f64) -> Option<Result<f64>> {
        (**self).closed_form_risk(x, sigma)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// Piecewise-constant parameter schedule over σ̂. Row `i` covers
/// `[breakpoints[i-1], breakpoints[i])`; the first and last rows extend to 0
/// and ∞. With `relative` the row value multiplies σ̂.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningTable {
    #[serde(default)]
    pub version: u32,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub relative: bool,
}

impl TuningTable {
    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.breakpoints.len() + 1 {
            return Err(Error::param(format!(
                "tuning table needs {} rows for {} breakpoints, has {}",
                self.breakpoints.len() + 1,
                self.breakpoints.len(),
                self.values.len()
            )));
        }
        if self.breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::param("tuning breakpoints must be strictly increasing"));
        }
        if self.values.iter().chain(&self.breakpoints).any(|v| !v.is_finite()) {
            return Err(Error::param("tuning table entries must be finite"));
        }
        Ok(())
    }

    pub fn row(&self, sigma: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= sigma)
    }

    pub fn lookup(&self, sigma: f64) -> f64 {
        let v = self.values[self.row(sigma)];
        if self.relative {
            v * sigma
        } else {
            v
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let t: TuningTable = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        t.validate()?;
        Ok(t)
    }

    /// Tables shipped with the crate.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "nlm_image_v1" => Self::from_toml(include_str!("../../data/tuning/nlm_image_v1.toml")),
            other => Err(Error::param(format!("unknown tuning table {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tuning {
    /// The parameter is used as given.
    Fixed { value: f64 },
    /// Parameter = value · σ̂.
    ScaleWithSigma { value: f64 },
    LookupTable { table: TuningTable },
}

impl Tuning {
    pub fn resolve(&self, sigma: f64) -> Result<f64> {
        if !(sigma >= 0.0) {
            return Err(Error::param(format!("noise level must be non-negative, got {sigma}")));
        }
        Ok(match self {
            Tuning::Fixed { value } => *value,
            Tuning::ScaleWithSigma { value } => value * sigma,
            Tuning::LookupTable { table } => table.lookup(sigma),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DenoiserKind {
    SoftThreshold,
    HardThreshold,
    BlockSoft { block_len: usize },
    /// Signal read as a square matrix (square grid, or flat with n = side²).
    Svt,
    GaussianFilter,
    /// `spatial_sigma = None` is the range-only variant.
    Bilateral { window_radius: usize, spatial_sigma: Option<f64> },
    Nlm { patch_radius: usize, window_radius: usize, normalize: bool },
    Wavelet { basis: Basis, mode: ThresholdMode, levels: usize },
    /// Orthogonal projection onto the coordinate subspace `support`.
    Projection { support: Vec<usize> },
    Smoothed(Box<SmoothedDenoiser>),
}

/// A configured denoiser: kind plus how its main parameter (τ, λ, width or h)
/// follows σ̂.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserHandle {
    pub kind: DenoiserKind,
    pub tuning: Tuning,
}

impl DenoiserHandle {
    pub fn new(kind: DenoiserKind, tuning: Tuning) -> Self {
        DenoiserHandle { kind, tuning }
    }

    /// Soft thresholding at τ = k_τ·σ̂.
    pub fn soft(k_tau: f64) -> Self {
        Self::new(DenoiserKind::SoftThreshold, Tuning::ScaleWithSigma { value: k_tau })
    }

    pub fn hard(k_tau: f64) -> Self {
        Self::new(DenoiserKind::HardThreshold, Tuning::ScaleWithSigma { value: k_tau })
    }

    pub fn projection(mut support: Vec<usize>) -> Self {
        support.sort_unstable();
        support.dedup();
        Self::new(DenoiserKind::Projection { support }, Tuning::Fixed { value: 0.0 })
    }

    /// Projection onto the coordinates of the `k` largest |x_i|.
    pub fn oracle_top_k(x: &[f64], k: usize) -> Self {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
        idx.truncate(k);
        Self::projection(idx)
    }

    pub fn smoothed(sd: SmoothedDenoiser) -> Self {
        Self::new(DenoiserKind::Smoothed(Box::new(sd)), Tuning::Fixed { value: 0.0 })
    }

    /// Same handle as [`Denoiser::denoise`] with key 0.
    pub fn apply(&self, v: &Signal, sigma: f64) -> Result<Signal> {
        self.denoise(v, sigma, 0)
    }

    pub fn param(&self, sigma: f64) -> Result<f64> {
        self.tuning.resolve(sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if let Tuning::LookupTable { table } = &self.tuning {
            table.validate()?;
        }
        match &self.kind {
            DenoiserKind::BlockSoft { block_len: 0 } => Err(Error::param("block length must be positive")),
            DenoiserKind::Nlm { patch_radius, window_radius, .. } if patch_radius > window_radius => {
                Err(Error::param("nlm patch radius exceeds window radius"))
            }
            DenoiserKind::Smoothed(sd) => sd.validate(),
            _ => Ok(()),
        }
    }
}

fn square_side(layout: Layout) -> Result<usize> {
    match layout {
        Layout::Grid { height, width } if height == width => Ok(height),
        Layout::Flat(n) => {
            let s = (n as f64).sqrt().round() as usize;
            if s * s == n {
                Ok(s)
            } else {
                Err(Error::Layout(format!("svt needs a square matrix, length {n} is not a square")))
            }
        }
        other => Err(Error::Layout(format!("svt needs a square matrix, got {other:?}"))),
    }
}

fn grid_dims(layout: Layout, what: &str) -> Result<(usize, usize)> {
    match layout {
        Layout::Grid { height, width } => Ok((height, width)),
        Layout::Flat(_) => Err(Error::Layout(format!("{what} needs a grid signal"))),
    }
}

impl Denoiser for DenoiserHandle {
    fn denoise(&self, v: &Signal, sigma: f64, key: u64) -> Result<Signal> {
        if let DenoiserKind::Smoothed(sd) = &self.kind {
            return sd.denoise(v, sigma, key);
        }
        let p = self.param(sigma)?;
        let x = v.values();
        let layout = v.layout();
        let (h, w) = layout.dims();
        let out = match &self.kind {
            DenoiserKind::SoftThreshold => soft_threshold(x, p)?,
            DenoiserKind::HardThreshold => hard_threshold(x, p)?,
            DenoiserKind::BlockSoft { block_len } => block_soft_threshold(x, p, *block_len)?,
            DenoiserKind::Svt => svt(x, square_side(layout)?, p)?,
            DenoiserKind::GaussianFilter => {
                let (gh, gw) = grid_dims(layout, "gaussian filter")?;
                if p == 0.0 {
                    x.to_vec()
                } else {
                    gaussian_filter(x, gh, gw, p)?
                }
            }
            DenoiserKind::Bilateral { window_radius, spatial_sigma } => {
                if p == 0.0 {
                    x.to_vec()
                } else {
                    bilateral(x, h, w, p, *window_radius, *spatial_sigma)?
                }
            }
            DenoiserKind::Nlm { patch_radius, window_radius, normalize } => {
                if p == 0.0 {
                    x.to_vec()
                } else {
                    nlm(x, h, w, p, *patch_radius, *window_radius, *normalize)?
                }
            }
            DenoiserKind::Wavelet { basis, mode, levels } => {
                return wavelet_threshold(v, p, *basis, *mode, *levels);
            }
            DenoiserKind::Projection { support } => {
                let mut out = vec![0.0; x.len()];
                for &i in support {
                    if i >= x.len() {
                        return Err(Error::dim(format!("support index {i} outside length {}", x.len())));
                    }
                    out[i] = x[i];
                }
                out
            }
            DenoiserKind::Smoothed(_) => unreachable!(),
        };
        Signal::with_layout(out, layout)
    }

    fn exact_divergence(&self, v: &Signal, sigma: f64) -> Option<Result<f64>> {
        let p = match self.param(sigma) {
            Ok(p) => p,
            Err(e) => return Some(Err(e)),
        };
        let x = v.values();
        match &self.kind {
            DenoiserKind::SoftThreshold => Some(div_soft(x, p)),
            DenoiserKind::HardThreshold => {
                Some(Ok(x.iter().filter(|a| a.abs() >= p).count() as f64))
            }
            DenoiserKind::BlockSoft { block_len } => Some(div_block_soft(x, p, *block_len)),
            DenoiserKind::Svt => Some(square_side(v.layout()).and_then(|s| div_svt(x, s, p))),
            DenoiserKind::GaussianFilter => Some(grid_dims(v.layout(), "gaussian filter").and_then(|(h, w)| {
                if p == 0.0 {
                    Ok(x.len() as f64)
                } else {
                    filters::gaussian_filter_trace(h, w, p)
                }
            })),
            DenoiserKind::Wavelet { basis, mode, levels } => {
                wavelet::wavelet_threshold_divergence(v, p, *basis, *mode, *levels)
            }
            DenoiserKind::Projection { support } => Some(Ok(support.len() as f64)),
            _ => None,
        }
    }

    fn closed_form_risk(&self, x: &Signal, sigma: f64) -> Option<Result<f64>> {
        let n = x.len() as f64;
        match &self.kind {
            DenoiserKind::Projection { support } => {
                let mut keep = vec![false; x.len()];
                for &i in support {
                    if i >= x.len() {
                        return Some(Err(Error::dim(format!("support index {i} outside length {}", x.len()))));
                    }
                    keep[i] = true;
                }
                let off: f64 = x.values().iter().zip(&keep).filter(|(_, &k)| !k).map(|(v, _)| v * v).sum();
                Some(Ok((off + support.len() as f64 * sigma * sigma) / n))
            }
            DenoiserKind::SoftThreshold => Some(self.param(sigma).map(|tau| {
                if sigma == 0.0 {
                    x.values().iter().map(|v| v.abs().min(tau).powi(2)).sum::<f64>() / n
                } else {
                    let t = tau / sigma;
                    sigma * sigma * x.values().iter().map(|v| threshold::soft_risk_unit(v / sigma, t)).sum::<f64>()
                        / n
                }
            })),
            _ => None,
        }
    }

    fn label(&self) -> String {
        match &self.kind {
            DenoiserKind::SoftThreshold => "soft_threshold".into(),
            DenoiserKind::HardThreshold => "hard_threshold".into(),
            DenoiserKind::BlockSoft { .. } => "block_soft".into(),
            DenoiserKind::Svt => "svt".into(),
            DenoiserKind::GaussianFilter => "gaussian_filter".into(),
            DenoiserKind::Bilateral { .. } => "bilateral".into(),
            DenoiserKind::Nlm { .. } => "nlm".into(),
            DenoiserKind::Wavelet { mode: ThresholdMode::Soft, .. } => "wavelet_soft".into(),
            DenoiserKind::Wavelet { mode: ThresholdMode::Hard, .. } => "wavelet_hard".into(),
            DenoiserKind::Projection { .. } => "projection".into(),
            DenoiserKind::Smoothed(sd) => format!("smoothed({})", sd.inner.label()),
        }
    }
}
