use saswise::corruption::*;
use saswise::numerics::{ks_statistic, normal_cdf, Rng, Tensor};
use saswise::Exec;

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    Tensor::image(h, w, |_, _| rng.uniform_range(0.1, 0.9))
}

fn spec(kind: CorruptionKind, seed: u64) -> CorruptionSpec {
    CorruptionSpec { kind, seed }
}

#[test]
fn rician_on_zero_is_rayleigh() {
    let sigma = 0.1;
    let zero = Tensor::zeros(&[100, 100]);
    let out = corrupt_raw(&zero, &spec(CorruptionKind::Rician { sigma }, 11)).unwrap();
    let cdf = |x: f64| if x <= 0.0 { 0.0 } else { 1.0 - (-x * x / (2.0 * sigma * sigma)).exp() };
    let d = ks_statistic(out.data(), cdf);
    assert!(d < 0.02, "KS {d}");
    assert!(out.data().iter().all(|&v| v >= 0.0));
}

#[test]
fn gaussian_residuals_are_normal_before_clamp() {
    let sigma = 0.2;
    let img = image(100, 100, 1);
    let out = corrupt_raw(&img, &spec(CorruptionKind::Gaussian { sigma }, 12)).unwrap();
    let res: Vec<f64> = out.data().iter().zip(img.data()).map(|(a, b)| a - b).collect();
    let d = ks_statistic(&res, |x| normal_cdf(x, 0.0, sigma));
    assert!(d < 0.02, "KS {d}");
    let clamped = corrupt(&img, &spec(CorruptionKind::Gaussian { sigma }, 12)).unwrap();
    assert!(clamped.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert_eq!(clamped, out.clamp(0.0, 1.0));
}

#[test]
fn zero_levels_are_identity() {
    let img = image(12, 10, 2);
    for kind in [
        CorruptionKind::Gaussian { sigma: 0.0 },
        CorruptionKind::Rician { sigma: 0.0 },
        CorruptionKind::Rayleigh { scale: 0.0 },
        CorruptionKind::SaltPepper { probability: 0.0 },
    ] {
        assert_eq!(corrupt(&img, &spec(kind, 3)).unwrap(), img, "{}", kind.name());
    }
}

#[test]
fn salt_pepper_support() {
    let img = image(20, 20, 3);
    let out = corrupt(&img, &spec(CorruptionKind::SaltPepper { probability: 0.3 }, 4)).unwrap();
    let mut changed = 0;
    for (o, i) in out.data().iter().zip(img.data()) {
        assert!(*o == 0.0 || *o == 1.0 || o == i);
        changed += (o != i) as usize;
    }
    assert!(changed > 60 && changed < 180, "{changed} of 400 flipped");
}

#[test]
fn rayleigh_is_additive_and_nonnegative_shift() {
    let img = image(30, 30, 5);
    let out = corrupt_raw(&img, &spec(CorruptionKind::Rayleigh { scale: 0.05 }, 6)).unwrap();
    let shift: Vec<f64> = out.data().iter().zip(img.data()).map(|(a, b)| a - b).collect();
    assert!(shift.iter().all(|&d| d >= 0.0));
    let mean = shift.iter().sum::<f64>() / shift.len() as f64;
    let expect = 0.05 * (std::f64::consts::PI / 2.0).sqrt();
    assert!((mean - expect).abs() < 0.005, "mean shift {mean}");
}

#[test]
fn full_mask_is_identity() {
    for &(h, w) in &[(8, 8), (9, 13), (32, 32)] {
        let img = image(h, w, 7);
        let out = apply_kspace_raw(&img, &KSpaceMask::full(h, w).unwrap()).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-9, "{h}x{w}");
    }
}

#[test]
fn dc_only_mask_gives_mean() {
    for &(h, w) in &[(8, 8), (7, 10)] {
        let img = image(h, w, 8);
        let out = apply_kspace(&img, &KSpaceMask::dc_only(h, w).unwrap()).unwrap();
        let m = img.mean();
        assert!(out.data().iter().all(|v| (v - m).abs() < 1e-12));
    }
}

#[test]
fn undersampling_never_adds_energy() {
    let img = image(32, 32, 9);
    let e_in: f64 = img.data().iter().map(|v| v * v).sum();
    for spokes in [1, 3, 8, 20] {
        let out = apply_kspace_raw(&img, &radial_mask(32, 32, spokes).unwrap()).unwrap();
        let e: f64 = out.data().iter().map(|v| v * v).sum();
        assert!(e <= e_in + 1e-9);
    }
    for (t, p) in [(1, 4), (3, 16), (8, 64)] {
        let out = apply_kspace_raw(&img, &spiral_mask(32, 32, t, p).unwrap()).unwrap();
        let e: f64 = out.data().iter().map(|v| v * v).sum();
        assert!(e <= e_in + 1e-9);
    }
}

#[test]
fn kspace_shape_mismatch_rejected() {
    let img = image(8, 8, 10);
    assert!(apply_kspace(&img, &KSpaceMask::full(8, 9).unwrap()).is_err());
}

#[test]
fn radial_mask_properties() {
    let m = radial_mask(16, 16, 1).unwrap();
    for c in 0..16 {
        assert!(m.is_kept(8, c));
    }
    assert_eq!(m.kept_count(), 16);
    assert!(m.is_kept(8, 8), "DC");

    // point symmetry about the centre for in-grid partners
    for spokes in [2, 5, 9] {
        let m = radial_mask(16, 16, spokes).unwrap();
        for r in 1..16 {
            for c in 1..16 {
                assert_eq!(m.is_kept(r, c), m.is_kept(16 - r, 16 - c), "spokes {spokes} at ({r},{c})");
            }
        }
    }
    let dense = radial_mask(8, 8, 64).unwrap();
    assert!(dense.sampling_fraction() > 0.9);
    let mut prev = 0.0;
    for spokes in [1, 2, 4, 8, 16] {
        let f = radial_mask(32, 32, spokes).unwrap().sampling_fraction();
        assert!(f > prev);
        prev = f;
    }
}

#[test]
fn spiral_mask_properties() {
    let m = spiral_mask(16, 16, 1, 4).unwrap();
    assert!(m.kept_count() <= 5);
    assert!(m.is_kept(8, 8));
    // outermost point lies on the boundary
    let big = spiral_mask(32, 32, 4, 32).unwrap();
    let on_edge = (0..32).any(|i| big.is_kept(0, i) || big.is_kept(i, 0) || big.is_kept(31, i) || big.is_kept(i, 31));
    assert!(on_edge);
    // doubling points per turn samples a superset of angles
    for turns in [1, 2, 5] {
        let mut prev = 0.0;
        for ppt in [4, 8, 16, 32, 64] {
            let f = spiral_mask(32, 32, turns, ppt).unwrap().sampling_fraction();
            assert!(f >= prev, "turns {turns} ppt {ppt}");
            prev = f;
        }
    }
    assert!(CorruptionKind::KspaceSpiral { turns: 1, points_per_turn: 3 }.validate().is_err());
}

#[test]
fn gaussian_sweep_error_increases() {
    let imgs: Vec<Tensor> = (0..6).map(|i| image(24, 24, 20 + i)).collect();
    let levels: Vec<CorruptionKind> =
        [0.05, 0.1, 0.2].iter().map(|&sigma| CorruptionKind::Gaussian { sigma }).collect();
    let sets = corruption_sweep(&imgs, &levels, 99, Exec::default()).unwrap();
    let mut prev = 0.0;
    for set in &sets {
        let e: f64 = set.iter().zip(&imgs).map(|(o, i)| o.zip_map(i, |a, b| (a - b).abs()).mean()).sum::<f64>()
            / imgs.len() as f64;
        assert!(e > prev);
        prev = e;
    }
    let again = corruption_sweep(&imgs, &levels, 99, Exec::Sequential).unwrap();
    assert_eq!(sets, again);
    let zero = corruption_sweep(&imgs, &[CorruptionKind::Gaussian { sigma: 0.0 }], 1, Exec::default()).unwrap();
    assert_eq!(zero[0], imgs);
}

#[test]
fn sweep_ordering_rules() {
    let imgs = vec![image(16, 16, 30)];
    let radial = |s| CorruptionKind::KspaceRadial { spokes: s };
    assert!(corruption_sweep(&imgs, &[radial(8), radial(4), radial(1)], 0, Exec::default()).is_ok());
    assert!(corruption_sweep(&imgs, &[radial(1), radial(4)], 0, Exec::default()).is_err());
    assert!(corruption_sweep(
        &imgs,
        &[CorruptionKind::Gaussian { sigma: 0.1 }, CorruptionKind::Rician { sigma: 0.2 }],
        0,
        Exec::default()
    )
    .is_err());
}

#[test]
fn spec_serializes_with_kind_tag() {
    let s = spec(CorruptionKind::KspaceSpiral { turns: 2, points_per_turn: 8 }, 5);
    let json = serde_json::to_string(&s).unwrap();
    assert!(json.contains("\"kind\":\"kspace_spiral\""));
    let back: CorruptionSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back, s);
}
