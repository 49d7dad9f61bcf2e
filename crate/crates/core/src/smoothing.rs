//! Randomised Gaussian smoothing: η̃(v) ≈ (1/M) Σ η(v + hⁱ), hⁱ ~ N(0, r²I).

use serde::{Deserialize, Serialize};

use crate::denoise::{Denoiser, DenoiserHandle};
use crate::par;
use crate::rng::{normals, subkey, Consumer};
use crate::signal::Signal;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothWidth {
    /// r = value · σ̂.
    Relative(f64),
    Absolute(f64),
}

impl Default for SmoothWidth {
    fn default() -> Self {
        SmoothWidth::Relative(0.1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedDenoiser {
    pub inner: DenoiserHandle,
    pub r: SmoothWidth,
    pub samples: usize,
    pub seed: u64,
}

impl SmoothedDenoiser {
    pub fn new(inner: DenoiserHandle, r: SmoothWidth, samples: usize, seed: u64) -> Self {
        SmoothedDenoiser { inner, r, samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let w = match self.r {
            SmoothWidth::Relative(w) | SmoothWidth::Absolute(w) => w,
        };
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::param(format!("smoothing width must be positive, got {w}")));
        }
        if self.samples == 0 {
            return Err(Error::param("smoothing needs at least one sample"));
        }
        self.inner.validate()
    }

    pub fn width(&self, sigma: f64) -> f64 {
        match self.r {
            SmoothWidth::Relative(w) => w * sigma,
            SmoothWidth::Absolute(w) => w,
        }
    }
}

impl Denoiser for SmoothedDenoiser {
    fn denoise(&self, v: &Signal, sigma: f64, key: u64) -> Result<Signal> {
        self.validate()?;
        let r = self.width(sigma);
        let n = v.len();
        let outs = par::try_map_indexed(self.samples, |i| {
            let k = subkey(key, i as u64);
            let h = normals(self.seed, Consumer::Smoothing, k, n);
            let shifted: Vec<f64> = v.values().iter().zip(&h).map(|(x, hi)| x + r * hi).collect();
            self.inner.denoise(&v.like(shifted), sigma, k)
        })?;
        let mut acc = vec![0.0; n];
        for o in &outs {
            for (a, b) in acc.iter_mut().zip(o.values()) {
                *a += b;
            }
        }
        let m = self.samples as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        Ok(v.like(acc))
    }

    fn label(&self) -> String {
        format!("smoothed({})", self.inner.label())
    }
}

/// (1/M) Σ inner(v + hⁱ, σ̂) with the draws of call key 0.
pub fn smooth_apply(sd: &SmoothedDenoiser, v: &Signal, sigma_hat: f64) -> Result<Signal> {
    sd.denoise(v, sigma_hat, 0)
}
