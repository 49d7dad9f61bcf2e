//! Test signals, error metrics and signal file formats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Consumer};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Flat(usize),
    Grid { height: usize, width: usize },
}

impl Layout {
    pub fn len(&self) -> usize {
        match *self {
            Layout::Flat(n) => n,
            Layout::Grid { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (height, width) treating a flat signal as a single row.
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Layout::Flat(n) => (1, n),
            Layout::Grid { height, width } => (height, width),
        }
    }
}

/// A real signal with an optional image layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    values: Vec<f64>,
    layout: Layout,
}

impl Signal {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if layout.len() != values.len() {
            return Err(Error::dim(format!(
                "layout {:?} needs {} values, got {}",
                layout,
                layout.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite signal entry at {i}")));
        }
        Ok(Signal { values, layout })
    }

    /// Flat signal without the finiteness check; used for iterates, which are
    /// checked by the caller.
    pub fn flat(values: Vec<f64>) -> Self {
        let layout = Layout::Flat(values.len());
        Signal { values, layout }
    }

    pub fn with_layout(values: Vec<f64>, layout: Layout) -> Result<Self> {
        if layout.len() != values.len() {
            return Err(Error::dim(format!(
                "layout {:?} needs {} values, got {}",
                layout,
                layout.len(),
                values.len()
            )));
        }
        Ok(Signal { values, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        Signal { values: vec![0.0; layout.len()], layout }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_grid(&self) -> bool {
        matches!(self.layout, Layout::Grid { .. })
    }

    /// Same layout, new values.
    pub fn like(&self, values: Vec<f64>) -> Signal {
        debug_assert_eq!(values.len(), self.values.len());
        Signal { values, layout: self.layout }
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// Rectangular crop of a grid signal.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Signal> {
        let (h, w) = match self.layout {
            Layout::Grid { height, width } => (height, width),
            Layout::Flat(_) => return Err(Error::Layout("crop needs a grid signal".into())),
        };
        if top + height > h || left + width > w || height == 0 || width == 0 {
            return Err(Error::dim(format!(
                "crop {height}x{width} at ({top},{left}) outside {h}x{w}"
            )));
        }
        let mut out = Vec::with_capacity(height * width);
        for r in top..top + height {
            out.extend_from_slice(&self.values[r * w + left..r * w + left + width]);
        }
        Ok(Signal { values: out, layout: Layout::Grid { height, width } })
    }
}

impl AsRef<[f64]> for Signal {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum SignalClass {
    KSparseBinary { k: usize },
    KSparseGaussian { k: usize },
    PiecewiseConstant { pieces: usize },
    LpBall { p: f64 },
    ImageFile { path: PathBuf },
}

impl SignalClass {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::param("n must be at least 1"));
        }
        match *self {
            SignalClass::KSparseBinary { k } | SignalClass::KSparseGaussian { k } if k > n => {
                Err(Error::param(format!("k = {k} exceeds n = {n}")))
            }
            SignalClass::PiecewiseConstant { pieces } if pieces == 0 || pieces > n => Err(
                Error::param(format!("piece count {pieces} must lie in [1, {n}]")),
            ),
            SignalClass::LpBall { p } if !(p > 0.0 && p <= 1.0) => {
                Err(Error::param(format!("p = {p} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// Generate a signal of the requested class. For `image_file` the image is
/// loaded and `n` must match its pixel count.
pub fn gen_signal(class: &SignalClass, n: usize, seed: u64) -> Result<Signal> {
    class.validate(n)?;
    let mut rng = stream(seed, Consumer::Signal, 0);
    let values = match class {
        SignalClass::KSparseBinary { k } => {
            let mut x = vec![0.0; n];
            for i in sample(&mut rng, n, *k) {
                x[i] = 1.0;
            }
            x
        }
        SignalClass::KSparseGaussian { k } => {
            let mut x = vec![0.0; n];
            let mut support = sample(&mut rng, n, *k).into_vec();
            support.sort_unstable();
            for i in support {
                // a draw of exactly zero would drop the support size
                let mut a: f64 = StandardNormal.sample(&mut rng);
                while a == 0.0 {
                    a = StandardNormal.sample(&mut rng);
                }
                x[i] = a;
            }
            x
        }
        SignalClass::PiecewiseConstant { pieces } => {
            let mut cuts: Vec<usize> = if *pieces > 1 {
                sample(&mut rng, n - 1, pieces - 1).into_iter().map(|c| c + 1).collect()
            } else {
                Vec::new()
            };
            cuts.sort_unstable();
            cuts.push(n);
            let mut x = Vec::with_capacity(n);
            let mut prev_level = f64::NAN;
            for &end in &cuts {
                let mut level: f64 = rng.random();
                while level == prev_level {
                    level = rng.random();
                }
                prev_level = level;
                x.resize(end, level);
            }
            x
        }
        SignalClass::LpBall { p } => {
            let mut x: Vec<f64> = (0..n)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    if g == 0.0 {
                        f64::MIN_POSITIVE
                    } else {
                        g
                    }
                })
                .collect();
            let norm = lp_norm(&x, *p);
            for v in x.iter_mut() {
                *v /= norm;
            }
            x
        }
        SignalClass::ImageFile { path } => {
            let img = read_pgm_or_image(path)?;
            if img.len() != n {
                return Err(Error::dim(format!(
                    "image {} has {} pixels, requested n = {n}",
                    path.display(),
                    img.len()
                )));
            }
            return Ok(img);
        }
    };
    Signal::new(values, Layout::Flat(n))
}

/// (Σ|x_i|^p)^{1/p}.
pub fn lp_norm(x: &[f64], p: f64) -> f64 {
    x.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// (1/n)‖a − b‖².
pub fn mse(a: impl AsRef<[f64]>, b: impl AsRef<[f64]>) -> Result<f64> {
    let (a, b) = (a.as_ref(), b.as_ref());
    if a.len() != b.len() {
        return Err(Error::dim(format!("lengths {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

/// 10·log10(peak²/mse). Identical inputs give `f64::INFINITY`.
pub fn psnr(estimate: impl AsRef<[f64]>, reference: impl AsRef<[f64]>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::param(format!("peak must be positive, got {peak}")));
    }
    let e = mse(estimate, reference)?;
    Ok(psnr_from_mse(e, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Write one value per line.
pub fn write_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    for v in values {
        w.write_record([v.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a one-column CSV (a single header line is skipped if it is not numeric).
pub fn read_csv(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .from_reader(BufReader::new(File::open(path)?));
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = rec.get(0).unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if line == 0 => continue,
            Err(_) => {
                return Err(Error::Format(format!(
                    "{}:{}: not a number: {field:?}",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Load an 8-bit grayscale image (PGM, PNG); values stay in [0, 255].
pub fn read_pgm_or_image(path: &Path) -> Result<Signal> {
    let img = image::open(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = img.dimensions();
    let values = img.into_raw().into_iter().map(f64::from).collect();
    Signal::new(values, Layout::Grid { height: h as usize, width: w as usize })
}

/// Write a grid signal as binary PGM (P5), rounding and clamping to [0, 255].
pub fn write_pgm(path: &Path, sig: &Signal) -> Result<()> {
    let (h, w) = sig.layout().dims();
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = sig.values().iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}
