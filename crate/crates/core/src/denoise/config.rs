//! Declarative denoiser configuration (TOML).
//!
//! ```toml
//! kind = "nlm"            # soft_threshold | hard_threshold | block_soft | svt |
//!                         # gaussian_filter | bilateral | nlm | wavelet_soft |
//!                         # wavelet_hard | projection_oracle
//! [tuning]
//! mode = "scale_with_sigma"   # fixed | scale_with_sigma | lookup_table | builtin
//! value = 1.5
//!
//! [params]
//! patch_radius = 5
//! window_radius = 10
//!
//! [smooth]                # optional; wraps the denoiser in Gaussian smoothing
//! r = 0.1                 # multiple of sigma_hat unless r_absolute = true
//! samples = 100
//! seed = 3
//! ```

use serde::{Deserialize, Serialize};

use super::{Basis, DenoiserHandle, DenoiserKind, ThresholdMode, Tuning, TuningTable};
use crate::signal::Signal;
use crate::smoothing::{SmoothWidth, SmoothedDenoiser};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindName {
    SoftThreshold,
    HardThreshold,
    BlockSoft,
    Svt,
    GaussianFilter,
    Bilateral,
    Nlm,
    WaveletSoft,
    WaveletHard,
    /// Projection onto the k largest entries of the ground truth.
    ProjectionOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TuningSpec {
    Fixed { value: f64 },
    ScaleWithSigma { value: f64 },
    LookupTable { table: TuningTable },
    /// A table shipped with the crate, e.g. `nlm_image_v1`.
    Builtin { name: String },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub block_len: Option<usize>,
    pub patch_radius: Option<usize>,
    pub window_radius: Option<usize>,
    pub normalize_patch: Option<bool>,
    pub spatial_sigma: Option<f64>,
    pub range_only: Option<bool>,
    pub basis: Option<Basis>,
    pub levels: Option<usize>,
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothSpec {
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default)]
    pub r_absolute: bool,
    #[serde(default = "default_smooth_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_r() -> f64 {
    0.1
}

fn default_smooth_samples() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    pub kind: KindName,
    pub tuning: Option<TuningSpec>,
    #[serde(default)]
    pub params: Params,
    pub smooth: Option<SmoothSpec>,
}

impl DenoiserConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn simple(kind: KindName) -> Self {
        DenoiserConfig { kind, tuning: None, params: Params::default(), smooth: None }
    }

    fn default_tuning(&self) -> Tuning {
        match self.kind {
            KindName::Nlm => Tuning::ScaleWithSigma { value: 1.5 },
            KindName::Bilateral => Tuning::ScaleWithSigma { value: 2.0 },
            KindName::GaussianFilter => Tuning::Fixed { value: 1.0 },
            KindName::ProjectionOracle => Tuning::Fixed { value: 0.0 },
            _ => Tuning::ScaleWithSigma { value: 1.0 },
        }
    }

    /// Build a handle; `truth` is only needed by `projection_oracle`.
    /// All problems are reported together.
    pub fn build(&self, truth: Option<&Signal>) -> Result<DenoiserHandle> {
        let mut errs = Vec::new();
        let p = &self.params;
        let allowed: &[&str] = match self.kind {
            KindName::BlockSoft => &["block_len"],
            KindName::Bilateral => &["window_radius", "spatial_sigma", "range_only"],
            KindName::Nlm => &["patch_radius", "window_radius", "normalize_patch"],
            KindName::WaveletSoft | KindName::WaveletHard => &["basis", "levels"],
            KindName::ProjectionOracle => &["k"],
            _ => &[],
        };
        let present = [
            ("block_len", p.block_len.is_some()),
            ("patch_radius", p.patch_radius.is_some()),
            ("window_radius", p.window_radius.is_some()),
            ("normalize_patch", p.normalize_patch.is_some()),
            ("spatial_sigma", p.spatial_sigma.is_some()),
            ("range_only", p.range_only.is_some()),
            ("basis", p.basis.is_some()),
            ("levels", p.levels.is_some()),
            ("k", p.k.is_some()),
        ];
        for (name, set) in present {
            if set && !allowed.contains(&name) {
                errs.push(format!("params.{name} does not apply to {:?}", self.kind));
            }
        }

        let tuning = match &self.tuning {
            None => self.default_tuning(),
            Some(TuningSpec::Fixed { value }) => Tuning::Fixed { value: *value },
            Some(TuningSpec::ScaleWithSigma { value }) => Tuning::ScaleWithSigma { value: *value },
            Some(TuningSpec::LookupTable { table }) => Tuning::LookupTable { table: table.clone() },
            Some(TuningSpec::Builtin { name }) => match TuningTable::builtin(name) {
                Ok(table) => Tuning::LookupTable { table },
                Err(e) => {
                    errs.push(format!("tuning.name: {e}"));
                    self.default_tuning()
                }
            },
        };
        match &tuning {
            Tuning::Fixed { value } | Tuning::ScaleWithSigma { value } if !(*value >= 0.0) => {
                errs.push(format!("tuning.value must be non-negative, got {value}"))
            }
            Tuning::LookupTable { table } => {
                if let Err(e) = table.validate() {
                    errs.push(format!("tuning.table: {e}"));
                }
            }
            _ => {}
        }

        let kind = match self.kind {
            KindName::SoftThreshold => DenoiserKind::SoftThreshold,
            KindName::HardThreshold => DenoiserKind::HardThreshold,
            KindName::BlockSoft => {
                let block_len = p.block_len.unwrap_or(0);
                if block_len == 0 {
                    errs.push("params.block_len must be a positive integer".into());
                }
                DenoiserKind::BlockSoft { block_len }
            }
            KindName::Svt => DenoiserKind::Svt,
            KindName::GaussianFilter => DenoiserKind::GaussianFilter,
            KindName::Bilateral => {
                let window_radius = p.window_radius.unwrap_or(3);
                let spatial_sigma = if p.range_only.unwrap_or(false) {
                    if p.spatial_sigma.is_some() {
                        errs.push("params.spatial_sigma conflicts with range_only = true".into());
                    }
                    None
                } else {
                    let s = p.spatial_sigma.unwrap_or(2.0);
                    if !(s > 0.0) {
                        errs.push(format!("params.spatial_sigma must be positive, got {s}"));
                    }
                    Some(s)
                };
                DenoiserKind::Bilateral { window_radius, spatial_sigma }
            }
            KindName::Nlm => {
                let patch_radius = p.patch_radius.unwrap_or(5);
                let window_radius = p.window_radius.unwrap_or(10);
                if patch_radius > window_radius {
                    errs.push(format!(
                        "params.patch_radius {patch_radius} exceeds window_radius {window_radius}"
                    ));
                }
                DenoiserKind::Nlm { patch_radius, window_radius, normalize: p.normalize_patch.unwrap_or(true) }
            }
            KindName::WaveletSoft | KindName::WaveletHard => DenoiserKind::Wavelet {
                basis: p.basis.unwrap_or(Basis::Haar),
                mode: if self.kind == KindName::WaveletSoft { ThresholdMode::Soft } else { ThresholdMode::Hard },
                levels: p.levels.unwrap_or(4),
            },
            KindName::ProjectionOracle => match truth {
                None => {
                    errs.push("projection_oracle needs the ground-truth signal".into());
                    DenoiserKind::Projection { support: Vec::new() }
                }
                Some(x) => {
                    let k = p.k.unwrap_or_else(|| x.values().iter().filter(|v| **v != 0.0).count());
                    if k > x.len() {
                        errs.push(format!("params.k = {k} exceeds signal length {}", x.len()));
                    }
                    DenoiserHandle::oracle_top_k(x.values(), k.min(x.len())).kind
                }
            },
        };

        let handle = DenoiserHandle::new(kind, tuning);
        let handle = match &self.smooth {
            None => handle,
            Some(s) => {
                if !(s.r > 0.0) {
                    errs.push(format!("smooth.r must be positive, got {}", s.r));
                }
                if s.samples == 0 {
                    errs.push("smooth.samples must be at least 1".into());
                }
                let r = if s.r_absolute { SmoothWidth::Absolute(s.r) } else { SmoothWidth::Relative(s.r) };
                DenoiserHandle::smoothed(SmoothedDenoiser::new(handle, r, s.samples, s.seed))
            }
        };
        if errs.is_empty() {
            Ok(handle)
        } else {
            Err(Error::Config(errs))
        }
    }
}
