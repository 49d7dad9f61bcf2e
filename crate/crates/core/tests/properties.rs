use damp_core::denoise::threshold::{block_soft_threshold, soft_threshold};
use damp_core::denoise::wavelet::{dwt, dwt2, idwt, idwt2, Basis};
use damp_core::rng::{normals, Consumer};
use damp_core::sensing::gen_matrix;
use damp_core::signal::{gen_signal, mse, psnr};
use damp_core::SignalClass;
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn basis() -> impl Strategy<Value = Basis> {
    prop_oneof![Just(Basis::Haar), Just(Basis::Db4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn adjoint_identity(m in 1usize..40, extra in 0usize..30, seed in any::<u64>(), normalize in any::<bool>()) {
        let n = m + extra;
        let a = gen_matrix(m, n, seed, normalize).unwrap();
        let v = normals(seed, Consumer::Signal, 1, n);
        let u = normals(seed, Consumer::Noise, 1, m);
        let lhs = dot(&a.apply(&v).unwrap(), &u);
        let rhs = dot(&v, &a.apply_adjoint(&u).unwrap());
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn apply_matches_naive_product(m in 1usize..30, extra in 0usize..30, seed in any::<u64>()) {
        let n = m + extra;
        let a = gen_matrix(m, n, seed, true).unwrap();
        let v = normals(seed, Consumer::Signal, 2, n);
        let got = a.apply(&v).unwrap();
        for (i, g) in got.iter().enumerate() {
            let naive: f64 = (0..n).map(|j| a.get(i, j) * v[j]).sum();
            prop_assert!((g - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_is_deterministic(m in 1usize..20, extra in 0usize..20, seed in any::<u64>()) {
        let n = m + extra;
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        let a1 = gen_matrix(m, n, seed, true).unwrap();
        let a2 = gen_matrix(m, n, seed, true).unwrap();
        prop_assert_eq!(bits(a1.data()), bits(a2.data()));
        let class = SignalClass::KSparseGaussian { k: n / 2 };
        let s1 = gen_signal(&class, n, seed).unwrap();
        let s2 = gen_signal(&class, n, seed).unwrap();
        prop_assert_eq!(bits(s1.values()), bits(s2.values()));
    }

    #[test]
    fn sparse_classes_have_exact_support(n in 1usize..300, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = (frac * n as f64) as usize;
        for class in [SignalClass::KSparseBinary { k }, SignalClass::KSparseGaussian { k }] {
            let x = gen_signal(&class, n, seed).unwrap();
            prop_assert_eq!(x.values().iter().filter(|v| **v != 0.0).count(), k);
        }
    }

    #[test]
    fn metrics_are_symmetric(n in 1usize..100, seed in any::<u64>()) {
        let a = normals(seed, Consumer::Signal, 3, n);
        let b = normals(seed, Consumer::Signal, 4, n);
        prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn thresholds_are_non_expansive(n in 1usize..30, block in 1usize..5, tau in 0.0f64..3.0, seed in any::<u64>()) {
        let len = n * block;
        let u = normals(seed, Consumer::Signal, 5, len);
        let v = normals(seed, Consumer::Signal, 6, len);
        let d = dist(&u, &v);
        let s = dist(&soft_threshold(&u, tau).unwrap(), &soft_threshold(&v, tau).unwrap());
        let b = dist(&block_soft_threshold(&u, tau, block).unwrap(), &block_soft_threshold(&v, tau, block).unwrap());
        prop_assert!(s <= d + 1e-12);
        prop_assert!(b <= d + 1e-12);
    }

    #[test]
    fn wavelet_roundtrip_preserves_energy(levels in 1usize..4, mult in 1usize..6, basis in basis(), seed in any::<u64>()) {
        let n = mult << levels;
        let x = normals(seed, Consumer::Signal, 7, n);
        let c = dwt(&x, basis, levels).unwrap();
        prop_assert!((dot(&c, &c) - dot(&x, &x)).abs() < 1e-9 * dot(&x, &x).max(1.0));
        let back = idwt(&c, basis, levels).unwrap();
        prop_assert!(dist(&back, &x) < 1e-9);
    }

    #[test]
    fn wavelet2_roundtrip_preserves_energy(levels in 1usize..3, hm in 1usize..4, wm in 1usize..4, basis in basis(), seed in any::<u64>()) {
        let (h, w) = (hm << levels, wm << levels);
        let x = normals(seed, Consumer::Signal, 8, h * w);
        let c = dwt2(&x, h, w, basis, levels).unwrap();
        prop_assert!((dot(&c, &c) - dot(&x, &x)).abs() < 1e-9 * dot(&x, &x).max(1.0));
        let back = idwt2(&c, h, w, basis, levels).unwrap();
        prop_assert!(dist(&back, &x) < 1e-9);
    }
}
