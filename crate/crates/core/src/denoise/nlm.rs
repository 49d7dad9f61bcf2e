//! Non-local means.

use super::filters::reflect;
use crate::par;
use crate::{Error, Result};

/// Non-local means over a square search window. Patch distances are squared
/// ℓ₂ over the whole patch, divided by the patch size when `normalize` is
/// set. Weights are exp(−d²/h²), the centre pixel included. A 1-row image
/// (flat signal) uses 1-D patches and windows.
pub fn nlm(
    img: &[f64],
    height: usize,
    width: usize,
    h: f64,
    patch_radius: usize,
    window_radius: usize,
    normalize: bool,
) -> Result<Vec<f64>> {
    if !(h > 0.0) {
        return Err(Error::param(format!("nlm h must be positive, got {h}")));
    }
    if patch_radius > window_radius {
        return Err(Error::param(format!(
            "patch radius {patch_radius} exceeds window radius {window_radius}"
        )));
    }
    if img.len() != height * width {
        return Err(Error::dim(format!("{} values for a {height}x{width} image", img.len())));
    }
    let one_d = height == 1;
    let (py, wy) = if one_d { (0, 0) } else { (patch_radius, window_radius) };
    let (px, wx) = (patch_radius, window_radius);
    let (pad_y, pad_x) = (py + wy, px + wx);
    let pw = width + 2 * pad_x;
    let ph = height + 2 * pad_y;
    let mut padded = vec![0.0; ph * pw];
    for yy in 0..ph {
        let sy = reflect(yy as isize - pad_y as isize, height);
        for xx in 0..pw {
            padded[yy * pw + xx] = img[sy * width + reflect(xx as isize - pad_x as isize, width)];
        }
    }
    let patch_size = ((2 * py + 1) * (2 * px + 1)) as f64;
    let scale = if normalize { 1.0 / (patch_size * h * h) } else { 1.0 / (h * h) };
    let (py, px, wy, wx) = (py as isize, px as isize, wy as isize, wx as isize);

    let mut out = vec![0.0; img.len()];
    par::for_each_chunk(&mut out, width, |i, dst| {
        let cy = i as isize + pad_y as isize;
        for (j, d) in dst.iter_mut().enumerate() {
            let cx = j as isize + pad_x as isize;
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -wy..=wy {
                for dx in -wx..=wx {
                    let mut dist = 0.0;
                    for oy in -py..=py {
                        let a = ((cy + oy) as usize) * pw;
                        let b = ((cy + dy + oy) as usize) * pw;
                        for ox in -px..=px {
                            let u = padded[a + (cx + ox) as usize];
                            let v = padded[b + (cx + dx + ox) as usize];
                            dist += (u - v) * (u - v);
                        }
                    }
                    let wgt = (-dist * scale).exp();
                    num += wgt * padded[((cy + dy) as usize) * pw + (cx + dx) as usize];
                    den += wgt;
                }
            }
            *d = num / den;
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normals, Consumer};

    #[test]
    fn constant_unchanged() {
        let img = vec![-1.5; 7 * 6];
        let out = nlm(&img, 7, 6, 0.5, 1, 3, false).unwrap();
        assert!(out.iter().all(|v| (v + 1.5).abs() < 1e-12));
    }

    #[test]
    fn infinite_h_is_window_mean() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = nlm(&x, 1, 30, 1e12, 2, 4, false).unwrap();
        for j in 0..30isize {
            let s: f64 = (-4..=4).map(|d| x[reflect(j + d, 30)]).sum();
            assert!((out[j as usize] - s / 9.0).abs() < 1e-9);
        }
    }

    #[test]
    fn denoises_piecewise_constant() {
        let n = 512;
        let clean: Vec<f64> = (0..n).map(|i| if (i / 64) % 2 == 0 { 0.2 } else { 0.9 }).collect();
        let sigma = 0.1;
        let noise = normals(3, Consumer::Noise, 0, n);
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(c, e)| c + sigma * e).collect();
        let out = nlm(&noisy, 1, n, 1.5 * sigma, 5, 10, true).unwrap();
        let err = |v: &[f64]| v.iter().zip(&clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        assert!(err(&out) < 0.5 * err(&noisy));
    }

    #[test]
    fn parameter_checks() {
        assert!(nlm(&[1.0; 4], 2, 2, 0.0, 0, 1, false).is_err());
        assert!(nlm(&[1.0; 4], 2, 2, 1.0, 2, 1, false).is_err());
    }
}
