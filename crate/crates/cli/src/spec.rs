//! Declarative experiment files (TOML). Every seed is explicit and unknown
//! keys are rejected, so a spec file pins its outputs.

use std::path::{Path, PathBuf};

use damp_core::denoise::config::DenoiserConfig;
use damp_core::recovery::{McSettings, DEFAULT_MAX_ITERS};
use damp_core::sensing::Normalization;
use damp_core::signal::gen_signal;
use damp_core::state_evolution::SeEngine;
use damp_core::{Algorithm, Onsager, RecoveryConfig, Signal, SignalClass};
use serde::{Deserialize, Serialize};

use crate::error::{field_errors, CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BUDGET: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub name: String,
    pub signal: SignalSpec,
    pub matrix: MatrixSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub algorithms: Vec<AlgorithmSpec>,
    pub sweep: Option<SweepSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    /// Required except for image files, where it defaults to the pixel count.
    pub n: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub class: SignalClass,
    /// [top, left, height, width] window of an image signal.
    pub crop: Option<[usize; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    /// Exactly one of `delta` (m = round(δn)) and `m`.
    pub delta: Option<f64>,
    pub m: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub normalization: Normalization,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub sigma_w: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub label: String,
    pub algorithm: Algorithm,
    pub denoiser: DenoiserConfig,
    /// Defaults: exact for AMP, Monte Carlo for D-AMP, none for IST and D-IT.
    pub onsager: Option<Onsager>,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default)]
    pub stop_rel_change: f64,
    pub oversmooth_factor: Option<f64>,
    #[serde(default)]
    pub mc: McSettings,
    #[serde(default)]
    pub snapshot_iters: Vec<usize>,
    #[serde(default = "default_peak")]
    pub psnr_peak: f64,
    /// State-evolution prediction for this algorithm's denoiser.
    pub se: Option<SeEngine>,
}

fn default_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_peak() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Empty axes fall back to the base value.
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub sigma_ws: Vec<f64>,
    /// Replicate offsets added to the signal, matrix and noise seeds.
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Maximum number of recoveries (cells × algorithms).
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    DEFAULT_BUDGET
}

impl AlgorithmSpec {
    pub fn onsager(&self) -> Onsager {
        self.onsager.unwrap_or(match self.algorithm {
            Algorithm::Amp => Onsager::Exact,
            Algorithm::Damp => Onsager::MonteCarlo,
            Algorithm::Ist | Algorithm::Dit => Onsager::None,
        })
    }

    pub fn config(&self, truth: &Signal) -> damp_core::Result<RecoveryConfig> {
        let mut cfg = RecoveryConfig::new(self.algorithm, self.denoiser.build(Some(truth))?, self.onsager());
        cfg.max_iters = self.iters;
        cfg.stop_rel_change = self.stop_rel_change;
        if let Some(f) = self.oversmooth_factor {
            cfg.oversmooth_factor = f;
        }
        cfg.mc = self.mc.clone();
        cfg.snapshot_iters = self.snapshot_iters.clone();
        cfg.psnr_peak = self.psnr_peak;
        Ok(cfg)
    }
}

/// A spec that passed validation, with paths resolved against its directory.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub spec: ExperimentSpec,
    pub text: String,
    /// Base truth (replicate 0), used for validation and `run`.
    pub truth: Signal,
    pub base_delta: f64,
}

impl Loaded {
    /// Files outside the artifact directory that the run reads.
    pub fn inputs(&self) -> Vec<PathBuf> {
        match &self.spec.signal.class {
            SignalClass::ImageFile { path } => vec![path.canonicalize().unwrap_or_else(|_| path.clone())],
            _ => Vec::new(),
        }
    }
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut spec: ExperimentSpec =
        toml::from_str(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    if let SignalClass::ImageFile { path: img } = &mut spec.signal.class {
        if img.is_relative() {
            *img = path.parent().unwrap_or(Path::new(".")).join(&*img);
        }
    }
    let (truth, base_delta) = validate(&spec)?;
    Ok(Loaded { spec, text, truth, base_delta })
}

pub fn signal(s: &SignalSpec, replicate: u64) -> damp_core::Result<Signal> {
    let seed = s.seed.wrapping_add(replicate);
    match &s.class {
        SignalClass::ImageFile { path } => {
            let img = damp_core::signal::read_pgm_or_image(path)?;
            let img = match s.crop {
                Some([top, left, h, w]) => img.crop(top, left, h, w)?,
                None => img,
            };
            match s.n {
                Some(n) if n != img.len() => Err(damp_core::Error::Dimension(format!(
                    "image {} has {} pixels, n = {n}",
                    path.display(),
                    img.len()
                ))),
                _ => Ok(img),
            }
        }
        class => gen_signal(class, s.n.unwrap_or(0), seed),
    }
}

pub fn rows(delta: f64, n: usize) -> usize {
    ((delta * n as f64).round() as usize).max(1)
}

/// Every offending field is reported, not just the first.
pub fn validate(spec: &ExperimentSpec) -> CliResult<(Signal, f64)> {
    let mut errs = Vec::new();
    if spec.schema_version != SCHEMA_VERSION {
        errs.push(format!("schema_version: expected {SCHEMA_VERSION}, got {}", spec.schema_version));
    }
    if spec.name.trim().is_empty() {
        errs.push("name: must not be empty".into());
    }
    let is_image = matches!(spec.signal.class, SignalClass::ImageFile { .. });
    if spec.signal.n.is_none() && !is_image {
        errs.push("signal.n: required for generated signals".into());
    }
    if spec.signal.crop.is_some() && !is_image {
        errs.push("signal.crop: only applies to image_file signals".into());
    }
    let truth = match signal(&spec.signal, 0) {
        Ok(t) => Some(t),
        Err(e) => {
            if spec.signal.n.is_some() || is_image {
                errs.extend(field_errors("signal", e));
            }
            None
        }
    };
    let n = truth.as_ref().map(Signal::len);

    let mut delta = None;
    match (spec.matrix.delta, spec.matrix.m) {
        (Some(d), None) => {
            if d > 0.0 && d <= 1.0 {
                delta = n.map(|n| rows(d, n) as f64 / n as f64);
            } else {
                errs.push(format!("matrix.delta: {d} outside (0, 1]"));
            }
        }
        (None, Some(m)) => match n {
            Some(n) if m == 0 || m > n => errs.push(format!("matrix.m: {m} outside [1, n = {n}]")),
            Some(n) => delta = Some(m as f64 / n as f64),
            None => {}
        },
        _ => errs.push("matrix: set exactly one of delta and m".into()),
    }
    if !(spec.noise.sigma_w >= 0.0) || !spec.noise.sigma_w.is_finite() {
        errs.push(format!("noise.sigma_w: must be finite and non-negative, got {}", spec.noise.sigma_w));
    }

    if spec.algorithms.is_empty() {
        errs.push("algorithms: at least one entry required".into());
    }
    for (i, a) in spec.algorithms.iter().enumerate() {
        let field = format!("algorithms[{i}]");
        if a.label.is_empty() || !a.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            errs.push(format!("{field}.label: {:?} must be non-empty [A-Za-z0-9_-]", a.label));
        }
        if spec.algorithms[..i].iter().any(|b| b.label == a.label) {
            errs.push(format!("{field}.label: duplicate {:?}", a.label));
        }
        if a.snapshot_iters.iter().any(|&t| t == 0 || t > a.iters) {
            errs.push(format!("{field}.snapshot_iters: entries must lie in [1, iters = {}]", a.iters));
        }
        if let Some(truth) = &truth {
            match a.config(truth) {
                Ok(cfg) => {
                    if let Err(e) = cfg.validate() {
                        errs.extend(field_errors(&field, e));
                    }
                }
                Err(e) => errs.extend(field_errors(&format!("{field}.denoiser"), e)),
            }
        }
        if let Some(SeEngine::Auto { trials: 0, .. } | SeEngine::MonteCarlo { trials: 0, .. }) = a.se {
            errs.push(format!("{field}.se.trials: must be positive"));
        }
    }

    if let Some(sw) = &spec.sweep {
        for d in sw.deltas.iter().filter(|d| !(**d > 0.0 && **d <= 1.0)) {
            errs.push(format!("sweep.deltas: {d} outside (0, 1]"));
        }
        for s in sw.sigma_ws.iter().filter(|s| !(**s >= 0.0) || !s.is_finite()) {
            errs.push(format!("sweep.sigma_ws: {s} must be finite and non-negative"));
        }
        let mut seen = sw.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != sw.seeds.len() {
            errs.push("sweep.seeds: duplicate replicate offsets".into());
        }
    }

    match (truth, delta) {
        (Some(t), Some(d)) if errs.is_empty() => Ok((t, d)),
        _ => Err(CliError::Validation(errs)),
    }
}
