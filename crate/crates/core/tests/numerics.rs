use proptest::prelude::{prop, prop_assert, proptest};
use saswise::numerics::*;
use saswise::Error;

fn random_image(h: usize, w: usize, rng: &mut Rng) -> Tensor {
    Tensor::image(h, w, |_, _| rng.uniform_range(-1.0, 1.0))
}

#[test]
fn fft_round_trip_up_to_64() {
    let mut rng = Rng::new(1);
    for &(h, w) in &[(1, 1), (2, 3), (7, 5), (16, 16), (31, 17), (45, 64), (64, 64), (63, 61)] {
        let x = random_image(h, w, &mut rng);
        let back = ifft2d(&fft2d(&x).unwrap());
        assert!(back.max_abs_diff(&x) < 1e-9, "{h}x{w}");
    }
}

#[test]
fn fft_parseval_random() {
    let mut rng = Rng::new(2);
    for &(h, w) in &[(9, 11), (32, 24), (13, 64)] {
        let x = random_image(h, w, &mut rng);
        let ks = fft2d(&x).unwrap();
        let lhs: f64 = x.data().iter().map(|v| v * v).sum();
        let rhs = ks.energy() / (h * w) as f64;
        assert!((lhs - rhs).abs() <= 1e-8 * lhs, "{h}x{w}");
    }
}

#[test]
fn fft_matches_direct_dft() {
    let mut rng = Rng::new(3);
    let (h, w) = (5, 6);
    let x = random_image(h, w, &mut rng);
    let ks = fft2d(&x).unwrap();
    for u in 0..h {
        for v in 0..w {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..h {
                for c in 0..w {
                    let a = -2.0 * std::f64::consts::PI * ((u * r) as f64 / h as f64 + (v * c) as f64 / w as f64);
                    re += x.at2(r, c) * a.cos();
                    im += x.at2(r, c) * a.sin();
                }
            }
            let i = u * w + v;
            assert!((ks.re[i] - re).abs() < 1e-10 && (ks.im[i] - im).abs() < 1e-10);
        }
    }
}

/// Exhaustive two-sided p: fraction of sign assignments whose min rank sum is
/// at most the observed one.
fn exhaustive_wilcoxon(diffs: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = diffs.iter().copied().filter(|v| *v != 0.0).collect();
    let n = d.len();
    let ranks: Vec<f64> = d
        .iter()
        .map(|x| {
            let less = d.iter().filter(|y| y.abs() < x.abs()).count() as f64;
            let eq = d.iter().filter(|y| y.abs() == x.abs()).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect();
    let total: f64 = ranks.iter().sum();
    let plus: f64 = d.iter().zip(&ranks).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let w = plus.min(total - plus);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let s: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        if s.min(total - s) <= w + 1e-9 {
            hits += 1;
        }
    }
    (w, hits as f64 / (1u64 << n) as f64)
}

#[test]
fn wilcoxon_exact_matches_enumeration() {
    let mut rng = Rng::new(4);
    for trial in 0..300 {
        let n = 1 + trial % 10;
        // Coarse values so ties and zero differences occur.
        let a: Vec<f64> = (0..n).map(|_| rng.below(7) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.below(7) as f64).collect();
        let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        if diffs.iter().all(|d| *d == 0.0) {
            assert!(matches!(wilcoxon_signed_rank(&a, &b), Err(Error::DegenerateTest(_))));
            continue;
        }
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        let (w, p) = exhaustive_wilcoxon(&diffs);
        assert!(r.exact);
        assert_eq!(r.statistic, w, "trial {trial}");
        assert_eq!(r.p_value, p.min(1.0), "trial {trial}");
    }
}

#[test]
fn wilcoxon_uses_normal_branch_above_cutoff() {
    let a: Vec<f64> = (0..20).map(|i| i as f64 + 0.5).collect();
    let b: Vec<f64> = (0..20).map(|i| if i % 3 == 0 { i as f64 + 1.0 } else { i as f64 }).collect();
    let r = wilcoxon_signed_rank(&a, &b).unwrap();
    assert!(!r.exact);
    assert!(r.p_value > 0.0 && r.p_value <= 1.0);
}

#[test]
fn gaussian_ks_against_normal_cdf() {
    let mut rng = Rng::new(5);
    let s = sample_gaussian(&mut rng, 10_000, 0.3, 0.7).unwrap();
    assert!(ks_statistic(s.data(), |x| normal_cdf(x, 0.3, 0.7)) < 0.02);
}

#[test]
fn sampling_is_reproducible() {
    let a = sample_rayleigh(&mut Rng::new(6), 100, 2.0).unwrap();
    let b = sample_rayleigh(&mut Rng::new(6), 100, 2.0).unwrap();
    assert_eq!(a, b);
    let c = sample_rayleigh(&mut Rng::new(7), 100, 2.0).unwrap();
    assert_ne!(a, c);
}

proptest! {
    #[test]
    fn pearson_invariant_under_positive_affine(
        xs in prop::collection::vec(-10.0f64..10.0, 3..30),
        scale in 0.1f64..5.0,
        shift in -3.0f64..3.0,
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x * x + i as f64).collect();
        if let (Ok(r), Ok(r2)) = (pearson_r(&xs, &ys), pearson_r(&xs.iter().map(|x| scale * x + shift).collect::<Vec<_>>(), &ys)) {
            prop_assert!((r - r2).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn sobel_transposes(h in 3usize..9, w in 3usize..9, seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let x = random_image(h, w, &mut rng);
        let a = sobel_gradients(&x.transpose2().unwrap()).unwrap();
        let b = sobel_gradients(&x).unwrap().transpose2().unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }
}
