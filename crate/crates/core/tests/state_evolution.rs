use damp_core::denoise::threshold::{optimal_soft_level, soft_null_risk};
use damp_core::rng::{normals, stream, Consumer};
use damp_core::signal::gen_signal;
use damp_core::state_evolution::{
    binary_bayes_risk, binary_posterior_mean, delta_star, estimate_level, greedy_tune, kappa_mm_binary_sparse,
    noise_sensitivity_bound, risk, se_fixed_point, se_step, se_trace, DeltaStarOptions, SeEngine,
};
use damp_core::{DenoiserHandle, Signal, SignalClass};
use rand::Rng;

fn sparse(n: usize, k: usize, seed: u64) -> Signal {
    gen_signal(&SignalClass::KSparseGaussian { k }, n, seed).unwrap()
}

fn support(x: &Signal) -> Vec<usize> {
    (0..x.len()).filter(|&i| x.values()[i] != 0.0).collect()
}

/// k-sparse with amplitudes far above any noise level used here.
fn spiky(n: usize, k: usize) -> Signal {
    let mut v = vec![0.0; n];
    for i in 0..k {
        v[i * (n / k)] = if i % 2 == 0 { 1e4 } else { -1e4 };
    }
    Signal::flat(v)
}

#[test]
fn projection_step_is_exact() {
    let x = sparse(1000, 100, 1);
    let d = DenoiserHandle::projection(support(&x));
    for (theta, delta, w2) in [(0.3, 0.5, 0.0), (0.05, 0.25, 0.2), (1.0, 1.0, 1.0)] {
        let next = se_step(&d, &x, theta, delta, w2, SeEngine::Exact, 0).unwrap();
        let expect = 0.1 / delta * theta + 0.1 * w2;
        assert!((next - expect).abs() <= 1e-14 * expect, "{next} vs {expect}");
    }
}

#[test]
fn zero_noise_is_a_fixed_point() {
    let x = sparse(500, 50, 2);
    for engine in [SeEngine::Exact, SeEngine::mc(20, 1)] {
        assert_eq!(se_step(&DenoiserHandle::soft(1.5), &x, 0.0, 0.5, 0.0, engine, 0).unwrap(), 0.0);
    }
}

#[test]
fn soft_risk_with_huge_amplitudes() {
    let (n, k, tau) = (2000, 200, 1.4);
    let x = spiky(n, k);
    let d = DenoiserHandle::soft(tau);
    let sigma = 0.7;
    let expect = ((1.0 + tau * tau) * k as f64 / n as f64 + (n - k) as f64 / n as f64 * soft_null_risk(tau)) * sigma * sigma;
    let exact = risk(&d, &x, sigma, SeEngine::Exact, 0).unwrap().mean;
    assert!((exact - expect).abs() < 1e-9 * expect, "{exact} vs {expect}");
    let mc = risk(&d, &x, sigma, SeEngine::mc(400, 9), 0).unwrap();
    assert!((mc.mean - expect).abs() < 3.0 * mc.std_err, "{} +/- {} vs {expect}", mc.mean, mc.std_err);
}

#[test]
fn closed_form_and_monte_carlo_agree() {
    let x = sparse(1000, 100, 4);
    for d in [DenoiserHandle::soft(1.2), DenoiserHandle::projection(support(&x))] {
        for sigma in [0.1, 0.5, 2.0] {
            let exact = risk(&d, &x, sigma, SeEngine::Exact, 0).unwrap().mean;
            let mc = risk(&d, &x, sigma, SeEngine::mc(400, 5), 0).unwrap();
            assert!((mc.mean - exact).abs() < 4.0 * mc.std_err + 1e-12, "{} vs {exact}", mc.mean);
        }
    }
}

#[test]
fn monte_carlo_error_shrinks_with_trials() {
    let x = sparse(200, 20, 6);
    let d = DenoiserHandle::soft(1.0);
    let small = risk(&d, &x, 0.5, SeEngine::mc(100, 1), 0).unwrap().std_err;
    let large = risk(&d, &x, 0.5, SeEngine::mc(400, 1), 0).unwrap().std_err;
    let ratio = small / large;
    assert!((1.6..2.5).contains(&ratio), "{ratio}");
}

#[test]
fn projection_trace_closed_form() {
    let x = sparse(1000, 100, 7);
    let d = DenoiserHandle::projection(support(&x));
    let tr = se_trace(&d, &x, 0.4, 0.0, 20, SeEngine::Exact).unwrap();
    for (t, th) in tr.theta.iter().enumerate() {
        let expect = 0.25f64.powi(t as i32) * tr.theta[0];
        assert!((th - expect).abs() <= 1e-12 * expect);
    }
    let grows = se_trace(&d, &x, 0.05, 0.0, 10, SeEngine::Exact).unwrap();
    assert!(grows.theta.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn fixed_points() {
    let x = sparse(1000, 200, 8);
    let d = DenoiserHandle::projection(support(&x));
    let fp = se_fixed_point(&d, &x, 0.5, 0.3, 1e-12, 500, SeEngine::Exact).unwrap();
    let oracle = noise_sensitivity_bound(0.2, 0.0, 0.5, 0.3).unwrap();
    assert!((fp - 0.2 * 0.3 / 0.6).abs() < 1e-10);
    assert!((fp - oracle).abs() < 1e-10);
    let zero = se_fixed_point(&d, &x, 0.5, 0.0, 1e-8, 200, SeEngine::Exact).unwrap();
    assert!(zero < 1e-12 * x.norm_sq());
}

#[test]
fn noise_sensitivity_examples() {
    assert_eq!(noise_sensitivity_bound(0.2, 0.0, 0.4, 0.0).unwrap(), 0.0);
    assert!((noise_sensitivity_bound(0.2, 0.0, 0.4, 1.0).unwrap() - 0.4).abs() < 1e-15);
    assert!(noise_sensitivity_bound(0.5, 0.0, 0.4, 1.0).is_err());
}

#[test]
fn projection_level() {
    let x = sparse(1000, 150, 9);
    let d = DenoiserHandle::projection(support(&x));
    let grid = [0.1, 0.3, 1.0, 3.0];
    for engine in [SeEngine::Exact, SeEngine::mc(200, 2)] {
        let lvl = estimate_level(&d, &x, &grid, engine).unwrap();
        assert!((lvl.kappa - 0.15).abs() < 0.01, "{engine:?}: {}", lvl.kappa);
        assert!(lvl.bias_b < 1e-3, "{engine:?}: {}", lvl.bias_b);
    }
}

#[test]
fn top_k_on_lp_ball_is_near_proper() {
    let (n, k, p) = (1000, 50, 0.5);
    let x = gen_signal(&SignalClass::LpBall { p }, n, 10).unwrap();
    let d = DenoiserHandle::oracle_top_k(x.values(), k);
    let lvl = estimate_level(&d, &x, &[1e-3, 1e-2, 0.1, 1.0], SeEngine::Exact).unwrap();
    let bound = (k as f64).powf(1.0 - 2.0 / p) / (n as f64 * (2.0 / p - 1.0));
    assert!((lvl.kappa - k as f64 / n as f64).abs() < 1e-9);
    assert!(lvl.bias_b <= bound, "{} > {bound}", lvl.bias_b);
    // noiseless error bounded through the bias
    let delta = 0.3;
    let fp = se_fixed_point(&d, &x, delta, 0.0, 1e-10, 500, SeEngine::Exact).unwrap();
    assert!(fp <= lvl.bias_b / (delta - lvl.kappa) * (1.0 + 1e-8));
}

#[test]
fn optimal_soft_level_curve_increases() {
    let n = 2000;
    let grid = [0.01, 0.03, 0.1, 0.3, 1.0];
    let mut prev = 0.0;
    for rho in [0.05, 0.1, 0.2, 0.3] {
        let x = spiky(n, (rho * n as f64) as usize);
        let (_, tau) = optimal_soft_level(rho);
        let lvl = estimate_level(&DenoiserHandle::soft(tau), &x, &grid, SeEngine::Exact).unwrap();
        assert!(lvl.kappa > prev && lvl.kappa < 1.0, "rho {rho}: {}", lvl.kappa);
        assert!((lvl.kappa - optimal_soft_level(rho).0).abs() < 1e-3);
        prev = lvl.kappa;
    }
}

#[test]
fn contraction_at_level() {
    let x = spiky(2000, 200);
    let (kappa, tau) = optimal_soft_level(0.1);
    let delta = 0.5;
    let tr = se_trace(&DenoiserHandle::soft(tau), &x, delta, 0.0, 25, SeEngine::Exact).unwrap();
    for w in tr.theta.windows(2) {
        assert!(w[1] <= kappa / delta * w[0] * (1.0 + 1e-6));
    }
}

#[test]
fn final_theta_monotone_in_delta() {
    let x = sparse(1000, 100, 12);
    let d = DenoiserHandle::soft(1.3);
    let mut prev = f64::INFINITY;
    for delta in [0.2, 0.3, 0.4, 0.5, 0.7] {
        let th = se_trace(&d, &x, delta, 0.01, 20, SeEngine::Exact).unwrap().last();
        assert!(th <= prev * (1.0 + 1e-9), "delta {delta}: {th} > {prev}");
        prev = th;
    }
}

#[test]
fn delta_star_examples() {
    let x = sparse(1000, 200, 13);
    let d = DenoiserHandle::projection(support(&x));
    let opts = DeltaStarOptions::default();
    let star = delta_star(&d, &x, &opts, SeEngine::Exact).unwrap();
    assert!((star - 0.2).abs() < 2e-3, "{star}");

    let zero = Signal::flat(vec![0.0; 100]);
    assert_eq!(delta_star(&DenoiserHandle::soft(1.0), &zero, &opts, SeEngine::Exact).unwrap(), opts.bracket.0);

    let x = spiky(2000, 200);
    let (_, tau) = optimal_soft_level(0.1);
    let d = DenoiserHandle::soft(tau);
    let star = delta_star(&d, &x, &opts, SeEngine::Exact).unwrap();
    let lvl = estimate_level(&d, &x, &[0.01, 0.1, 1.0], SeEngine::Exact).unwrap();
    assert!((star - lvl.kappa).abs() < 0.02 * lvl.kappa, "{star} vs {}", lvl.kappa);
}

#[test]
fn greedy_single_element_grid_is_fixed_trace() {
    let x = sparse(500, 50, 14);
    let engine = SeEngine::mc(30, 4);
    let (chosen, g) = greedy_tune(DenoiserHandle::soft, &x, 0.4, 0.01, 10, &[1.5], engine).unwrap();
    let fixed = se_trace(&DenoiserHandle::soft(1.5), &x, 0.4, 0.01, 10, engine).unwrap();
    assert_eq!(chosen, vec![1.5; 10]);
    assert_eq!(g.theta, fixed.theta);
}

#[test]
fn kappa_mm_quadrature_matches_monte_carlo() {
    let (rho, sigma) = (0.1, 1.0);
    let q = binary_bayes_risk(rho, sigma).unwrap();
    let mut rng = stream(1, Consumer::StateEvolution, 0);
    let z = normals(2, Consumer::StateEvolution, 0, 1_000_000);
    let errs: Vec<f64> = z
        .iter()
        .map(|zi| {
            let x = if rng.random::<f64>() < rho { 1.0 } else { 0.0 };
            (binary_posterior_mean(x + sigma * zi, rho, sigma) - x).powi(2)
        })
        .collect();
    let n = errs.len() as f64;
    let mean = errs.iter().sum::<f64>() / n;
    let se = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - q).abs() < 3.0 * se, "{mean} +/- {se} vs {q}");
}

#[test]
fn kappa_mm_limits() {
    let grid: Vec<f64> = (0..40).map(|i| 10f64.powf(-2.0 + i as f64 * 0.1)).collect();
    let (k, s) = kappa_mm_binary_sparse(0.1, &grid).unwrap();
    assert!(k > 0.0 && k < 1.0);
    assert!(s > grid[0] && s < grid[grid.len() - 1], "sup at the edge: {s}");
    let lo = binary_bayes_risk(0.1, 1e-2).unwrap() / 1e-4;
    let hi = binary_bayes_risk(0.1, 1e2).unwrap() / 1e4;
    assert!(lo < 1e-6 && hi < 1e-4 && lo < k && hi < k);
    let (tiny, _) = kappa_mm_binary_sparse(1e-6, &grid).unwrap();
    assert!(tiny < 1e-3 * k);
}
