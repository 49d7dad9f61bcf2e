//! Orthonormal periodic wavelet transforms (Haar, Daubechies-4 with eight
//! taps) and coefficient thresholding.

use serde::{Deserialize, Serialize};

use super::filters::reflect;
use super::threshold::soft;
use crate::signal::{Layout, Signal};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Haar,
    Db4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Soft,
    Hard,
}

const HAAR: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

const DB4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

impl Basis {
    fn lowpass(self) -> &'static [f64] {
        match self {
            Basis::Haar => &HAAR,
            Basis::Db4 => &DB4,
        }
    }

    fn highpass(self) -> Vec<f64> {
        let h = self.lowpass();
        let l = h.len();
        (0..l).map(|j| if j % 2 == 0 { h[l - 1 - j] } else { -h[l - 1 - j] }).collect()
    }
}

fn analysis_step(x: &[f64], h: &[f64], g: &[f64], out: &mut [f64]) {
    let n = x.len();
    let half = n / 2;
    for k in 0..half {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..h.len() {
            let v = x[(2 * k + j) % n];
            a += h[j] * v;
            d += g[j] * v;
        }
        out[k] = a;
        out[half + k] = d;
    }
}

fn synthesis_step(c: &[f64], h: &[f64], g: &[f64], out: &mut [f64]) {
    let n = c.len();
    let half = n / 2;
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..half {
        let (a, d) = (c[k], c[half + k]);
        for j in 0..h.len() {
            out[(2 * k + j) % n] += h[j] * a + g[j] * d;
        }
    }
}

fn check_len(n: usize, levels: usize) -> Result<()> {
    if levels >= usize::BITS as usize || !n.is_multiple_of(1usize << levels) || n == 0 {
        return Err(Error::dim(format!("length {n} is not a multiple of 2^{levels}")));
    }
    Ok(())
}

/// Multi-level 1-D transform. Output layout: [a_L | d_L | … | d_1].
pub fn dwt(x: &[f64], basis: Basis, levels: usize) -> Result<Vec<f64>> {
    check_len(x.len(), levels)?;
    let (h, g) = (basis.lowpass(), basis.highpass());
    let mut c = x.to_vec();
    let mut tmp = vec![0.0; x.len()];
    let mut len = x.len();
    for _ in 0..levels {
        analysis_step(&c[..len], h, &g, &mut tmp[..len]);
        c[..len].copy_from_slice(&tmp[..len]);
        len /= 2;
    }
    Ok(c)
}

pub fn idwt(c: &[f64], basis: Basis, levels: usize) -> Result<Vec<f64>> {
    check_len(c.len(), levels)?;
    let (h, g) = (basis.lowpass(), basis.highpass());
    let mut x = c.to_vec();
    let mut tmp = vec![0.0; c.len()];
    for l in (0..levels).rev() {
        let len = c.len() >> l;
        synthesis_step(&x[..len], h, &g, &mut tmp[..len]);
        x[..len].copy_from_slice(&tmp[..len]);
    }
    Ok(x)
}

fn rows_step(x: &mut [f64], stride: usize, rows: usize, cols: usize, f: &dyn Fn(&[f64], &mut [f64])) {
    let mut line = vec![0.0; cols];
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        line.copy_from_slice(&x[r * stride..r * stride + cols]);
        f(&line, &mut out);
        x[r * stride..r * stride + cols].copy_from_slice(&out);
    }
}

fn cols_step(x: &mut [f64], stride: usize, rows: usize, cols: usize, f: &dyn Fn(&[f64], &mut [f64])) {
    let mut line = vec![0.0; rows];
    let mut out = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            line[r] = x[r * stride + c];
        }
        f(&line, &mut out);
        for r in 0..rows {
            x[r * stride + c] = out[r];
        }
    }
}

/// Separable 2-D transform in Mallat layout (approximation band top-left).
pub fn dwt2(x: &[f64], height: usize, width: usize, basis: Basis, levels: usize) -> Result<Vec<f64>> {
    check_len(height, levels)?;
    check_len(width, levels)?;
    let (h, g) = (basis.lowpass(), basis.highpass());
    let step = |a: &[f64], o: &mut [f64]| analysis_step(a, h, &g, o);
    let mut c = x.to_vec();
    let (mut rh, mut rw) = (height, width);
    for _ in 0..levels {
        rows_step(&mut c, width, rh, rw, &step);
        cols_step(&mut c, width, rh, rw, &step);
        rh /= 2;
        rw /= 2;
    }
    Ok(c)
}

pub fn idwt2(c: &[f64], height: usize, width: usize, basis: Basis, levels: usize) -> Result<Vec<f64>> {
    check_len(height, levels)?;
    check_len(width, levels)?;
    let (h, g) = (basis.lowpass(), basis.highpass());
    let step = |a: &[f64], o: &mut [f64]| synthesis_step(a, h, &g, o);
    let mut x = c.to_vec();
    for l in (0..levels).rev() {
        let (rh, rw) = (height >> l, width >> l);
        cols_step(&mut x, width, rh, rw, &step);
        rows_step(&mut x, width, rh, rw, &step);
    }
    Ok(x)
}

fn is_approx(idx: usize, layout: (usize, usize, bool), levels: usize) -> bool {
    let (h, w, grid) = layout;
    if grid {
        let (r, c) = (idx / w, idx % w);
        r < (h >> levels) && c < (w >> levels)
    } else {
        idx < (w >> levels)
    }
}

fn padded_len(n: usize, levels: usize) -> usize {
    let b = 1usize << levels;
    n.div_ceil(b) * b
}

/// Forward transform, threshold detail coefficients, inverse. Lengths that
/// are not multiples of 2^levels are padded by symmetric reflection and the
/// result is cropped back.
pub fn wavelet_threshold(
    sig: &Signal,
    tau: f64,
    basis: Basis,
    mode: ThresholdMode,
    levels: usize,
) -> Result<Signal> {
    if !(tau >= 0.0) {
        return Err(Error::param(format!("threshold must be non-negative, got {tau}")));
    }
    let grid = sig.is_grid();
    let (h, w) = sig.layout().dims();
    let (ph, pw) = if grid { (padded_len(h, levels), padded_len(w, levels)) } else { (1, padded_len(w, levels)) };
    let mut x = vec![0.0; ph * pw];
    for r in 0..ph {
        let sr = reflect(r as isize, h);
        for c in 0..pw {
            x[r * pw + c] = sig.values()[sr * w + reflect(c as isize, w)];
        }
    }
    let mut coef = if grid { dwt2(&x, ph, pw, basis, levels)? } else { dwt(&x, basis, levels)? };
    for (i, c) in coef.iter_mut().enumerate() {
        if is_approx(i, (ph, pw, grid), levels) {
            continue;
        }
        *c = match mode {
            ThresholdMode::Soft => soft(*c, tau),
            ThresholdMode::Hard => {
                if c.abs() >= tau {
                    *c
                } else {
                    0.0
                }
            }
        };
    }
    let y = if grid { idwt2(&coef, ph, pw, basis, levels)? } else { idwt(&coef, basis, levels)? };
    let mut out = Vec::with_capacity(sig.len());
    for r in 0..h {
        out.extend_from_slice(&y[r * pw..r * pw + w]);
    }
    Signal::with_layout(out, sig.layout())
}

/// Divergence of wavelet thresholding: the map is orthonormal, so its
/// Jacobian trace is #approx + #{active details}. `None` when padding is
/// needed (the map is then no longer an orthogonal conjugation).
pub fn wavelet_threshold_divergence(
    sig: &Signal,
    tau: f64,
    basis: Basis,
    mode: ThresholdMode,
    levels: usize,
) -> Option<Result<f64>> {
    let grid = sig.is_grid();
    let (h, w) = sig.layout().dims();
    let fits = w % (1usize << levels) == 0 && (!grid || h % (1usize << levels) == 0);
    if !fits {
        return None;
    }
    let coef = if grid { dwt2(sig.values(), h, w, basis, levels) } else { dwt(sig.values(), basis, levels) };
    Some(coef.map(|coef| {
        coef.iter()
            .enumerate()
            .filter(|(i, c)| {
                is_approx(*i, (h, w, grid), levels)
                    || match mode {
                        ThresholdMode::Soft => c.abs() > tau,
                        ThresholdMode::Hard => c.abs() >= tau,
                    }
            })
            .count() as f64
    }))
}

/// Largest level count the signal supports without padding.
pub fn max_levels(layout: Layout) -> usize {
    let (h, w) = layout.dims();
    let tz = |n: usize| if n == 0 { 0 } else { n.trailing_zeros() as usize };
    match layout {
        Layout::Flat(_) => tz(w),
        Layout::Grid { .. } => tz(h).min(tz(w)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_signal(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * i) as f64 * 0.013).sin() + 0.1 * i as f64).collect()
    }

    #[test]
    fn filters_are_orthonormal() {
        for b in [Basis::Haar, Basis::Db4] {
            let h = b.lowpass();
            let g = b.highpass();
            let e: f64 = h.iter().map(|v| v * v).sum();
            assert!((e - 1.0).abs() < 1e-12);
            assert!((h.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-12);
            assert!(g.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_reconstruction_and_energy() {
        for b in [Basis::Haar, Basis::Db4] {
            for (n, lv) in [(64, 3), (32, 5), (8, 1)] {
                let x = test_signal(n);
                let c = dwt(&x, b, lv).unwrap();
                let ex: f64 = x.iter().map(|v| v * v).sum();
                let ec: f64 = c.iter().map(|v| v * v).sum();
                assert!((ex.sqrt() - ec.sqrt()).abs() < 1e-9);
                let y = idwt(&c, b, lv).unwrap();
                assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
            }
            let x = test_signal(16 * 8);
            let c = dwt2(&x, 16, 8, b, 2).unwrap();
            let y = idwt2(&c, 16, 8, b, 2).unwrap();
            assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn zero_threshold_identity_with_padding() {
        let s = Signal::flat(test_signal(50));
        for b in [Basis::Haar, Basis::Db4] {
            let out = wavelet_threshold(&s, 0.0, b, ThresholdMode::Soft, 3).unwrap();
            assert!(out.values().iter().zip(s.values()).all(|(a, b)| (a - b).abs() < 1e-9));
        }
        let g = Signal::new(test_signal(12 * 10), Layout::Grid { height: 12, width: 10 }).unwrap();
        let out = wavelet_threshold(&g, 0.0, Basis::Db4, ThresholdMode::Hard, 2).unwrap();
        assert!(out.values().iter().zip(g.values()).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn constant_unchanged() {
        let s = Signal::flat(vec![4.5; 64]);
        for b in [Basis::Haar, Basis::Db4] {
            let out = wavelet_threshold(&s, 100.0, b, ThresholdMode::Soft, 4).unwrap();
            assert!(out.values().iter().all(|v| (v - 4.5).abs() < 1e-9));
        }
    }

    #[test]
    fn divergence_counts() {
        let s = Signal::flat(test_signal(64));
        let d = wavelet_threshold_divergence(&s, 1e9, Basis::Haar, ThresholdMode::Soft, 3)
            .unwrap()
            .unwrap();
        assert_eq!(d, 8.0);
        let d0 = wavelet_threshold_divergence(&s, 0.0, Basis::Haar, ThresholdMode::Hard, 3)
            .unwrap()
            .unwrap();
        assert_eq!(d0, 64.0);
        assert!(wavelet_threshold_divergence(&Signal::flat(vec![0.0; 50]), 1.0, Basis::Haar, ThresholdMode::Soft, 3)
            .is_none());
    }

    #[test]
    fn levels_supported() {
        assert_eq!(max_levels(Layout::Flat(1024)), 10);
        assert_eq!(max_levels(Layout::Grid { height: 64, width: 48 }), 4);
    }
}
