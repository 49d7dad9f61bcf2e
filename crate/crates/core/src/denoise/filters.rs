//! Gaussian and bilateral filtering on grid signals. Borders use symmetric
//! (half-sample) reflection. Flat signals are treated as a single row.

use crate::par;
use crate::{Error, Result};

/// Half-sample symmetric reflection of index `i` into `0..n`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Normalised 1-D Gaussian taps on [−⌈3w⌉, ⌈3w⌉].
pub fn gaussian_kernel(width: f64) -> Result<Vec<f64>> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(Error::param(format!("filter width must be positive, got {width}")));
    }
    let r = (3.0 * width).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|t| (-(t * t) as f64 / (2.0 * width * width)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    Ok(k)
}

fn convolve_rows(src: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    let mut out = vec![0.0; h * w];
    par::for_each_chunk(&mut out, w, |row, dst| {
        let line = &src[row * w..(row + 1) * w];
        for (j, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, kt) in k.iter().enumerate() {
                acc += kt * line[reflect(j as isize + t as isize - r, w)];
            }
            *d = acc;
        }
    });
    out
}

fn transpose(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[j * h + i] = src[i * w + j];
        }
    }
    out
}

/// Separable 2-D Gaussian convolution of an `h`×`w` image.
pub fn gaussian_filter(img: &[f64], h: usize, w: usize, width: f64) -> Result<Vec<f64>> {
    if img.len() != h * w {
        return Err(Error::dim(format!("{} values for a {h}x{w} image", img.len())));
    }
    let k = gaussian_kernel(width)?;
    let rows = convolve_rows(img, h, w, &k);
    let cols = convolve_rows(&transpose(&rows, h, w), w, h, &k);
    Ok(transpose(&cols, w, h))
}

/// Diagonal of the 1-D filter matrix (weight each sample keeps of itself,
/// reflections included).
fn kernel_self_weights(n: usize, k: &[f64]) -> Vec<f64> {
    let r = (k.len() / 2) as isize;
    (0..n)
        .map(|j| {
            k.iter()
                .enumerate()
                .filter(|(t, _)| reflect(j as isize + *t as isize - r, n) == j)
                .map(|(_, kt)| kt)
                .sum()
        })
        .collect()
}

/// Trace of the (linear) Gaussian filter operator.
pub fn gaussian_filter_trace(h: usize, w: usize, width: f64) -> Result<f64> {
    let k = gaussian_kernel(width)?;
    let dr: f64 = kernel_self_weights(w, &k).iter().sum();
    let dc: f64 = kernel_self_weights(h, &k).iter().sum();
    Ok(dr * dc)
}

/// Bilateral filter. Weights are exp(−(f_i − f_j)²/h²) times
/// exp(−‖i − j‖²/(2s²)) when `spatial_sigma = Some(s)`; `None` gives the
/// range-only form. The window is square with the given radius.
pub fn bilateral(
    img: &[f64],
    height: usize,
    width: usize,
    h: f64,
    window_radius: usize,
    spatial_sigma: Option<f64>,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::param(format!("bilateral h must be positive, got {h}")));
    }
    if let Some(s) = spatial_sigma {
        if !(s > 0.0) {
            return Err(Error::param(format!("spatial sigma must be positive, got {s}")));
        }
    }
    if img.len() != height * width {
        return Err(Error::dim(format!("{} values for a {height}x{width} image", img.len())));
    }
    let ry = if height == 1 { 0 } else { window_radius as isize };
    let rx = window_radius as isize;
    let inv_h2 = 1.0 / (h * h);
    let mut out = vec![0.0; img.len()];
    par::for_each_chunk(&mut out, width, |i, dst| {
        for (j, d) in dst.iter_mut().enumerate() {
            let c = img[i * width + j];
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -ry..=ry {
                let yi = reflect(i as isize + dy, height);
                for dx in -rx..=rx {
                    let v = img[yi * width + reflect(j as isize + dx, width)];
                    let mut wgt = (-(v - c) * (v - c) * inv_h2).exp();
                    if let Some(s) = spatial_sigma {
                        wgt *= (-((dy * dy + dx * dx) as f64) / (2.0 * s * s)).exp();
                    }
                    num += wgt * v;
                    den += wgt;
                }
            }
            *d = num / den;
        }
    });
    Ok(out)
}
