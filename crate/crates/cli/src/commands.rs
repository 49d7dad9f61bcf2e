//! Single-step subcommands: gen-signal, gen-matrix, measure, recover, se, diag.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use damp_core::denoise::config::DenoiserConfig;
use damp_core::diagnostics::normality;
use damp_core::recovery::{run_recovery, RecoveryConfig};
use damp_core::sensing::{gen_matrix_with, measure, Measurement, Normalization};
use damp_core::signal::{gen_signal, read_csv, read_pgm_or_image};
use damp_core::state_evolution::{se_trace, SeEngine};
use damp_core::{Algorithm, Layout, MeasurementMatrix, Onsager, Signal, SignalClass};

use crate::artifacts::{normality_json, qq_table, se_table, trace_jsonl, write_atomic, write_matrix, write_signal};
use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ClassArg {
    KSparseBinary,
    KSparseGaussian,
    PiecewiseConstant,
    LpBall,
    Image,
}

#[derive(Args, Debug)]
pub struct GenSignal {
    #[arg(long, value_enum)]
    pub class: ClassArg,
    /// Length (ignored for images).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub pieces: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; grid signals also get a .pgm beside it.
    #[arg(long)]
    pub out: PathBuf,
}

fn need<T>(v: Option<T>, flag: &str, class: ClassArg) -> CliResult<T> {
    v.ok_or_else(|| CliError::invalid(format!("--{flag} is required for --class {class:?}")))
}

pub fn gen_signal_cmd(a: &GenSignal) -> CliResult<()> {
    let sig = match a.class {
        ClassArg::Image => read_pgm_or_image(&need(a.image.clone(), "image", a.class)?)?,
        c => {
            let class = match c {
                ClassArg::KSparseBinary => SignalClass::KSparseBinary { k: need(a.k, "k", c)? },
                ClassArg::KSparseGaussian => SignalClass::KSparseGaussian { k: need(a.k, "k", c)? },
                ClassArg::PiecewiseConstant => SignalClass::PiecewiseConstant { pieces: need(a.pieces, "pieces", c)? },
                ClassArg::LpBall => SignalClass::LpBall { p: need(a.p, "p", c)? },
                ClassArg::Image => unreachable!(),
            };
            gen_signal(&class, need(a.n, "n", c)?, a.seed)?
        }
    };
    write_signal(&a.out, &sig)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NormArg {
    Columns,
    None,
    InvSqrtM,
}

#[derive(Args, Debug)]
pub struct GenMatrix {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "columns")]
    pub normalization: NormArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen_matrix_cmd(a: &GenMatrix) -> CliResult<()> {
    let norm = match a.normalization {
        NormArg::Columns => Normalization::Columns,
        NormArg::None => Normalization::None,
        NormArg::InvSqrtM => Normalization::InvSqrtM,
    };
    write_matrix(&a.out, &gen_matrix_with(a.m, a.n, a.seed, norm)?)
}

#[derive(Args, Debug)]
pub struct Measure {
    #[arg(long)]
    pub matrix: PathBuf,
    /// CSV, or a PGM/PNG image.
    #[arg(long)]
    pub signal: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_w: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// CSV values, or an image for any other extension.
pub fn read_signal(path: &Path, grid: Option<(usize, usize)>) -> CliResult<Signal> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let sig = if is_csv { Signal::flat(read_csv(path)?) } else { read_pgm_or_image(path)? };
    match grid {
        Some((height, width)) => Ok(Signal::with_layout(sig.into_values(), Layout::Grid { height, width })?),
        None => Ok(sig),
    }
}

pub fn measure_cmd(a: &Measure) -> CliResult<()> {
    let mat = MeasurementMatrix::read(&a.matrix)?;
    let x = read_signal(&a.signal, None)?;
    let y = measure(&mat, x.values(), a.sigma_w, a.seed)?;
    crate::artifacts::write_values(&a.out, &y.y)
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HEIGHTxWIDTH")?;
    Ok((h.parse().map_err(|e| format!("{e}"))?, w.parse().map_err(|e| format!("{e}"))?))
}

/// Denoiser selection shared by `recover` and `se`.
#[derive(Args, Debug)]
pub struct DenoiserArgs {
    /// Denoiser kind, e.g. soft_threshold, nlm, wavelet_soft.
    #[arg(long, default_value = "soft_threshold")]
    pub denoiser: String,
    /// TOML denoiser configuration; overrides --denoiser.
    #[arg(long)]
    pub denoiser_config: Option<PathBuf>,
    /// Main parameter as a multiple of the noise level (τ/σ, h/σ, ...).
    #[arg(long)]
    pub tuning: Option<f64>,
}

impl DenoiserArgs {
    fn config(&self) -> CliResult<DenoiserConfig> {
        let mut cfg = match &self.denoiser_config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                DenoiserConfig::from_toml(&text)?
            }
            None => DenoiserConfig::from_toml(&format!("kind = {:?}", self.denoiser.replace('-', "_")))?,
        };
        if let Some(v) = self.tuning {
            cfg.tuning = Some(damp_core::denoise::config::TuningSpec::ScaleWithSigma { value: v });
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlgoArg {
    Ist,
    Amp,
    Dit,
    Damp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OnsagerArg {
    Exact,
    MonteCarlo,
    None,
}

#[derive(Args, Debug)]
pub struct Recover {
    #[arg(long, value_enum, default_value = "damp")]
    pub algo: AlgoArg,
    #[command(flatten)]
    pub denoiser: DenoiserArgs,
    /// Default: exact for amp, monte-carlo for damp, none otherwise.
    #[arg(long, value_enum)]
    pub onsager: Option<OnsagerArg>,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    /// Seed of the Monte-Carlo divergence probes.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Treat flat signals as HEIGHTxWIDTH images.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Store the effective noise at these iterations (needs --truth).
    #[arg(long = "snapshot")]
    pub snapshots: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub psnr_peak: f64,
    #[arg(long, default_value_t = 0.0)]
    pub stop_rel_change: f64,
    /// JSON-lines trace.
    #[arg(long)]
    pub out: PathBuf,
    /// Final estimate (CSV, plus PGM for grids).
    #[arg(long)]
    pub estimate: Option<PathBuf>,
}

pub fn recover_cmd(a: &Recover) -> CliResult<()> {
    let mat = MeasurementMatrix::read(&a.matrix)?;
    let y = Measurement { y: read_csv(&a.y)?, sigma_w: 0.0, noise_seed: 0 };
    let truth = a.truth.as_deref().map(|p| read_signal(p, a.grid)).transpose()?;
    let algorithm = match a.algo {
        AlgoArg::Ist => Algorithm::Ist,
        AlgoArg::Amp => Algorithm::Amp,
        AlgoArg::Dit => Algorithm::Dit,
        AlgoArg::Damp => Algorithm::Damp,
    };
    let onsager = match a.onsager {
        Some(OnsagerArg::Exact) => Onsager::Exact,
        Some(OnsagerArg::MonteCarlo) => Onsager::MonteCarlo,
        Some(OnsagerArg::None) => Onsager::None,
        None => match algorithm {
            Algorithm::Amp => Onsager::Exact,
            Algorithm::Damp => Onsager::MonteCarlo,
            _ => Onsager::None,
        },
    };
    if !a.snapshots.is_empty() && truth.is_none() {
        return Err(CliError::invalid("--snapshot needs --truth"));
    }
    let mut cfg = RecoveryConfig::new(algorithm, a.denoiser.config()?.build(truth.as_ref())?, onsager);
    cfg.max_iters = a.iters;
    cfg.mc.seed = a.seed;
    cfg.mc.samples = a.mc_samples;
    cfg.snapshot_iters = a.snapshots.clone();
    cfg.psnr_peak = a.psnr_peak;
    cfg.stop_rel_change = a.stop_rel_change;
    cfg.layout = a.grid.map(|(height, width)| Layout::Grid { height, width });
    let (trace, err) = match run_recovery(&y, &mat, &cfg, truth.as_ref()) {
        Ok(t) => (t, None),
        Err(f) => (*f.partial, Some(f.error)),
    };
    write_atomic(&a.out, &trace_jsonl(&trace))?;
    if let Some(p) = &a.estimate {
        write_signal(p, trace.estimate())?;
    }
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EngineArg {
    Auto,
    Exact,
    MonteCarlo,
}

#[derive(Args, Debug)]
pub struct Se {
    #[command(flatten)]
    pub denoiser: DenoiserArgs,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Sampling ratio m/n; taken from --matrix when omitted.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    pub sigma_w: f64,
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    #[arg(long, value_enum, default_value = "auto")]
    pub engine: EngineArg,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV with columns iter, theta, sigma.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn se_cmd(a: &Se) -> CliResult<()> {
    let truth = read_signal(&a.truth, a.grid)?;
    let delta = match (a.delta, &a.matrix) {
        (Some(d), _) => d,
        (None, Some(p)) => MeasurementMatrix::read(p)?.delta(),
        (None, None) => return Err(CliError::invalid("give --delta or --matrix")),
    };
    let engine = match a.engine {
        EngineArg::Auto => SeEngine::auto(a.trials, a.seed),
        EngineArg::Exact => SeEngine::Exact,
        EngineArg::MonteCarlo => SeEngine::mc(a.trials, a.seed),
    };
    let d = a.denoiser.config()?.build(Some(&truth))?;
    let se = se_trace(&d, &truth, delta, a.sigma_w * a.sigma_w, a.iters, engine)?;
    se_table(&se).write(&a.out)
}

#[derive(Args, Debug)]
pub struct Qq {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub iter: usize,
    /// QQ pairs as CSV; the normality report goes to stdout as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn qq_cmd(a: &Qq) -> CliResult<()> {
    let v = crate::artifacts::read_snapshot(&a.trace, a.iter)?;
    let rep = normality(&v)?;
    if let Some(p) = &a.out {
        qq_table(&rep).write(p)?;
    }
    println!("{}", serde_json::to_string_pretty(&normality_json(&rep)).expect("report serializes"));
    Ok(())
}
