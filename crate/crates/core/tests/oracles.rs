use damp_core::denoise::threshold::{hard_threshold, norm_cdf, norm_pdf};
use damp_core::denoise::wavelet::{Basis, ThresholdMode};
use damp_core::divergence::{default_epsilon, mc_divergence};
use damp_core::quad::gauss_expect;
use damp_core::rng::{normals, Consumer};
use damp_core::signal::gen_signal;
use damp_core::smoothing::{SmoothWidth, SmoothedDenoiser};
use damp_core::state_evolution::{risk, SeEngine};
use damp_core::{Denoiser, DenoiserHandle, DenoiserKind, Layout, Signal, SignalClass, Tuning};

fn fd_trace(d: &dyn Denoiser, v: &Signal, sigma: f64) -> f64 {
    let h = 1e-5 * v.values().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut w = v.values().to_vec();
    let mut total = 0.0;
    for i in 0..v.len() {
        let x0 = w[i];
        w[i] = x0 + h;
        let up = d.denoise(&v.like(w.clone()), sigma, 0).unwrap().values()[i];
        w[i] = x0 - h;
        let down = d.denoise(&v.like(w.clone()), sigma, 0).unwrap().values()[i];
        w[i] = x0;
        total += (up - down) / (2.0 * h);
    }
    total
}

fn grid(side: usize, seed: u64) -> Signal {
    let v: Vec<f64> = normals(seed, Consumer::Signal, 0, side * side).iter().map(|z| 3.0 + z).collect();
    Signal::new(v, Layout::Grid { height: side, width: side }).unwrap()
}

#[test]
fn wavelet_and_gaussian_divergence_match_finite_differences() {
    let haar = DenoiserHandle::new(
        DenoiserKind::Wavelet { basis: Basis::Haar, mode: ThresholdMode::Soft, levels: 3 },
        Tuning::Fixed { value: 0.7 },
    );
    let db4 = DenoiserHandle::new(
        DenoiserKind::Wavelet { basis: Basis::Db4, mode: ThresholdMode::Soft, levels: 2 },
        Tuning::Fixed { value: 0.5 },
    );
    let gauss = DenoiserHandle::new(DenoiserKind::GaussianFilter, Tuning::Fixed { value: 1.2 });
    for seed in 0..5 {
        let flat = Signal::flat(normals(seed, Consumer::Signal, 1, 64));
        let img = grid(16, seed);
        for (d, v) in [(&haar, &flat), (&db4, &flat), (&haar, &img), (&gauss, &img)] {
            let exact = d.exact_divergence(v, 1.0).unwrap().unwrap();
            let fd = fd_trace(d, v, 1.0);
            assert!((exact - fd).abs() < 1e-4 * exact.abs().max(1.0), "{}: {exact} vs {fd}", d.label());
        }
    }
}

#[test]
fn monte_carlo_divergence_unbiased_for_projection() {
    let n = 400;
    let support: Vec<usize> = (0..n).step_by(5).collect();
    let k = support.len() as f64;
    let d = DenoiserHandle::projection(support);
    let v = Signal::flat(normals(3, Consumer::Signal, 0, n));
    let est: Vec<f64> = (0..300).map(|s| mc_divergence(&d, &v, 1.0, 1e-3, 1, s).unwrap().value).collect();
    let mean = est.iter().sum::<f64>() / est.len() as f64;
    let sd = (est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
    let se = sd / (est.len() as f64).sqrt();
    assert!((mean - k).abs() < 3.0 * se, "{mean} +/- {se} vs {k}");
}

#[test]
fn monte_carlo_divergence_insensitive_to_epsilon() {
    let img = grid(16, 4);
    let d = DenoiserHandle::new(
        DenoiserKind::Bilateral { window_radius: 2, spatial_sigma: Some(1.5) },
        Tuning::Fixed { value: 1.0 },
    );
    let eps = default_epsilon(img.values());
    let a = mc_divergence(&d, &img, 1.0, eps, 10, 1).unwrap().value;
    let b = mc_divergence(&d, &img, 1.0, eps / 10.0, 10, 1).unwrap().value;
    assert!((a - b).abs() < 0.01 * a.abs(), "{a} vs {b}");
}

/// E[hard(v + rZ)] and its variance by quadrature.
fn smoothed_hard_oracle(v: f64, tau: f64, r: f64) -> (f64, f64) {
    let breaks = [(-tau - v) / r, (tau - v) / r];
    let h = |z: f64| {
        let u = v + r * z;
        if u.abs() >= tau {
            u
        } else {
            0.0
        }
    };
    let m1 = gauss_expect(h, &breaks, 1e-10).unwrap();
    let m2 = gauss_expect(|z| h(z).powi(2), &breaks, 1e-10).unwrap();
    (m1, m2 - m1 * m1)
}

#[test]
fn smoothed_hard_matches_quadrature() {
    let (tau, r, samples) = (2.0, 0.5, 10_000);
    let points: Vec<f64> = (0..20).map(|i| 1.0 + 2.0 * i as f64 / 19.0).collect();
    let sd = SmoothedDenoiser::new(
        DenoiserHandle::new(DenoiserKind::HardThreshold, Tuning::Fixed { value: tau }),
        SmoothWidth::Absolute(r),
        samples,
        3,
    );
    let out = sd.denoise(&Signal::flat(points.clone()), 1.0, 0).unwrap();
    for (v, got) in points.iter().zip(out.values()) {
        let (mean, var) = smoothed_hard_oracle(*v, tau, r);
        let se = (var / samples as f64).sqrt();
        assert!((got - mean).abs() < 3.0 * se + 1e-12, "v = {v}: {got} vs {mean} (se {se})");
    }
    // at the jump v = τ the mean is τ/2 + rφ(0) up to a Φ(−2τ/r) tail
    let (m, _) = smoothed_hard_oracle(tau, tau, r);
    assert!((m - (tau * norm_cdf(0.0) + r * norm_pdf(0.0))).abs() < 1e-8);
}

#[test]
fn smoothing_bounds_the_lipschitz_ratio() {
    let tau = 1.0;
    let sd = SmoothedDenoiser::new(
        DenoiserHandle::new(DenoiserKind::HardThreshold, Tuning::Fixed { value: tau }),
        SmoothWidth::Absolute(0.3),
        400,
        5,
    );
    let mut smooth_max = 0.0f64;
    let mut hard_max = 0.0f64;
    for s in 0..50 {
        let base = normals(s, Consumer::Signal, 0, 8);
        let step = normals(s, Consumer::Signal, 1, 8);
        for scale in [1e-1, 1e-2, 1e-3] {
            // pairs placed across the jump at |v| = τ
            let v1: Vec<f64> = base.iter().map(|b| tau.copysign(*b) - 0.5 * scale).collect();
            let v2: Vec<f64> = v1.iter().zip(&step).map(|(a, d)| a + scale * (1.0 + d.abs())).collect();
            let dist = v1.iter().zip(&v2).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let ratio = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / dist;
            let s1 = sd.denoise(&Signal::flat(v1.clone()), 1.0, 0).unwrap();
            let s2 = sd.denoise(&Signal::flat(v2.clone()), 1.0, 0).unwrap();
            smooth_max = smooth_max.max(ratio(s1.values(), s2.values()));
            hard_max = hard_max.max(ratio(&hard_threshold(&v1, tau).unwrap(), &hard_threshold(&v2, tau).unwrap()));
        }
    }
    assert!(smooth_max < 10.0, "{smooth_max}");
    assert!(hard_max > 100.0, "{hard_max}");
}

#[test]
fn risk_is_monotone_in_noise() {
    let sparse = gen_signal(&SignalClass::KSparseGaussian { k: 20 }, 200, 1).unwrap();
    let pc = gen_signal(&SignalClass::PiecewiseConstant { pieces: 3 }, 256, 2).unwrap();
    let img = Signal::new(pc.values().to_vec(), Layout::Grid { height: 16, width: 16 }).unwrap();
    let cases: Vec<(DenoiserHandle, &Signal)> = vec![
        (DenoiserHandle::soft(1.2), &sparse),
        (DenoiserHandle::hard(2.0), &sparse),
        (DenoiserHandle::new(DenoiserKind::GaussianFilter, Tuning::Fixed { value: 1.0 }), &img),
        (
            DenoiserHandle::new(
                DenoiserKind::Nlm { patch_radius: 1, window_radius: 3, normalize: true },
                Tuning::ScaleWithSigma { value: 1.5 },
            ),
            &img,
        ),
        (
            DenoiserHandle::new(
                DenoiserKind::Bilateral { window_radius: 2, spatial_sigma: Some(2.0) },
                Tuning::ScaleWithSigma { value: 2.0 },
            ),
            &img,
        ),
    ];
    let sigmas = [0.05, 0.1, 0.2, 0.4, 0.8];
    for (d, x) in cases {
        let r: Vec<_> = sigmas.iter().map(|&s| risk(&d, x, s, SeEngine::mc(200, 7), 0).unwrap()).collect();
        for w in r.windows(2) {
            let tol = 3.0 * (w[0].std_err.powi(2) + w[1].std_err.powi(2)).sqrt();
            assert!(w[1].mean >= w[0].mean - tol, "{}: {:?}", d.label(), r);
        }
    }
}
