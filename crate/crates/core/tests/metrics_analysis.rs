use proptest::prelude::{prop_assert, proptest};
use saswise::metrics::*;
use saswise::numerics::{Rng, Tensor};
use saswise::Error;

fn mask(h: usize, w: usize, f: impl Fn(usize, usize) -> bool) -> Tensor {
    Tensor::image(h, w, |r, c| f(r, c) as u8 as f64)
}

fn random_mask(rng: &mut Rng, n: usize, p: f64) -> Tensor {
    Tensor::from_fn(&[n], |_| (rng.uniform() < p) as u8 as f64)
}

#[test]
fn dice_iou_examples() {
    let a = mask(2, 4, |r, _| r == 0);
    let b = mask(2, 4, |_, c| c < 2);
    // |a| = 4, |b| = 4, overlap 2
    assert_eq!(dice(&a, &b).unwrap(), 0.5);
    assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    assert_eq!(iou(&a, &a).unwrap(), 1.0);
    let c = mask(2, 4, |r, _| r == 1);
    assert_eq!(dice(&a, &c).unwrap(), 0.0);
    assert_eq!(iou(&a, &c).unwrap(), 0.0);
    let empty = Tensor::zeros(&[2, 4]);
    assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
    assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
    assert!(dice(&a, &a.map(|v| v * 0.5)).is_err());
    assert!(iou(&a, &Tensor::zeros(&[8])).is_err());
}

#[test]
fn dice_iou_identity_holds_on_random_masks() {
    let mut rng = Rng::new(1);
    for _ in 0..500 {
        let p = rng.uniform();
        let a = random_mask(&mut rng, 40, p);
        let b = random_mask(&mut rng, 40, p);
        let d = dice(&a, &b).unwrap();
        let j = iou(&a, &b).unwrap();
        assert_eq!(d, dice(&b, &a).unwrap());
        assert_eq!(j, iou(&b, &a).unwrap());
        assert!(j <= d + 1e-15);
        assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
    }
}

/// Direct SSIM over valid 7×7 windows with population moments.
fn oracle_ssim(x: &Tensor, y: &Tensor, range: f64) -> f64 {
    let (h, w) = x.hw().unwrap();
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let n = 49.0;
    let mut total = 0.0;
    let mut count = 0.0;
    for r0 in 0..=h - 7 {
        for c0 in 0..=w - 7 {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for r in r0..r0 + 7 {
                for c in c0..c0 + 7 {
                    xs.push(x.at2(r, c));
                    ys.push(y.at2(r, c));
                }
            }
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            let vx = xs.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
            let vy = ys.iter().map(|a| (a - my).powi(2)).sum::<f64>() / n;
            let cov = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1.0;
        }
    }
    total / count
}

/// Replicate-padded Sobel magnitude, written out longhand.
fn oracle_acutance(img: &Tensor) -> f64 {
    let (h, w) = img.hw().unwrap();
    let at = |r: i64, c: i64| img.at2(r.clamp(0, h as i64 - 1) as usize, c.clamp(0, w as i64 - 1) as usize);
    let mut sum = 0.0;
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            let gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
            sum += gx.hypot(gy);
        }
    }
    sum / (h * w) as f64
}

#[test]
fn ssim_and_acutance_match_oracles() {
    let mut rng = Rng::new(2);
    for _ in 0..5 {
        let x = Tensor::image(12, 15, |_, _| rng.uniform());
        let y = x.map(|v| (v + 0.1 * (v - 0.5)).clamp(0.0, 1.0));
        let m = image_metrics(&y, &x, 1.0).unwrap();
        assert!((m.ssim - oracle_ssim(&y, &x, 1.0)).abs() < 1e-12);
        assert!((m.acutance - oracle_acutance(&y)).abs() < 1e-12);
        assert!(m.rmse >= m.mae);
        assert!((-1.0..=1.0).contains(&m.ssim));
        assert!((ssim(&x, &y, 1.0).unwrap() - ssim(&y, &x, 1.0).unwrap()).abs() < 1e-15);
    }
    let checker = Tensor::image(9, 9, |r, c| ((r + c) % 2) as f64);
    assert!((acutance(&checker).unwrap() - oracle_acutance(&checker)).abs() < 1e-12);
}

#[test]
fn image_metric_identities() {
    let x = Tensor::image(10, 10, |r, c| (r * c) as f64 / 100.0);
    let m = image_metrics(&x, &x, 1.0).unwrap();
    assert_eq!((m.mae, m.rmse), (0.0, 0.0));
    assert!((m.ssim - 1.0).abs() < 1e-12);
    assert_eq!(m.psnr, f64::INFINITY);
    let off = image_metrics(&x.map(|v| v + 0.05), &x, 1.0).unwrap();
    assert!((off.mae - 0.05).abs() < 1e-12 && (off.rmse - 0.05).abs() < 1e-12);
    assert!((off.psnr - 10.0 * (1.0f64 / 0.0025).log10()).abs() < 1e-9);
}

#[test]
fn voxel_correlation_cases() {
    let mut rng = Rng::new(3);
    let u = Tensor::from_fn(&[100], |_| rng.uniform());
    let r = voxel_correlation(std::slice::from_ref(&u), std::slice::from_ref(&u), 10, None).unwrap();
    assert!((r.pearson_r - 1.0).abs() < 1e-12);
    assert!((r.r_squared - r.pearson_r.powi(2)).abs() < 1e-12);
    assert_eq!(r.level, CorrelationLevel::Voxel);

    let errs: Vec<Tensor> = (0..4).map(|_| Tensor::from_fn(&[2500], |_| rng.uniform())).collect();
    let uncs: Vec<Tensor> = (0..4).map(|_| Tensor::from_fn(&[2500], |_| rng.uniform())).collect();
    let ind = voxel_correlation(&errs, &uncs, 10, None).unwrap();
    assert_eq!(ind.n, 10_000);
    assert!(ind.pearson_r.abs() < 0.05, "r {}", ind.pearson_r);

    // monotone relation gives a nondecreasing curve
    let mono_u = Tensor::from_fn(&[1000], |i| i as f64 / 1000.0);
    let mono_e = mono_u.map(|v| v * v);
    let c = voxel_correlation(&[mono_e], &[mono_u], 8, None).unwrap();
    assert!(c.bin_mean_error.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(c.bin_centers.len(), 8);

    let flat = Tensor::filled(&[10], 0.2);
    assert!(matches!(
        voxel_correlation(std::slice::from_ref(&u), &[flat.map(|v| v).reshape(&[10]).unwrap()], 4, None),
        Err(Error::Argument(_))
    ));
    assert!(matches!(
        voxel_correlation(&[Tensor::from_fn(&[10], |i| i as f64)], &[flat], 4, None),
        Err(Error::UndefinedCorrelation(_))
    ));
}

#[test]
fn voxel_correlation_respects_mask() {
    let e = Tensor::new(vec![6], vec![0.0, 1.0, 2.0, 5.0, 0.0, 5.0]).unwrap();
    let u = Tensor::new(vec![6], vec![0.0, 1.0, 2.0, 0.0, 9.0, 1.0]).unwrap();
    let m = Tensor::new(vec![6], vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    let r = voxel_correlation(&[e], &[u], 3, Some(&[m])).unwrap();
    assert_eq!(r.n, 3);
    assert!((r.pearson_r - 1.0).abs() < 1e-12);
}

#[test]
fn case_correlation_cases() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let lin: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
    let r = case_correlation(&x, &lin).unwrap();
    assert!((r.pearson_r - 1.0).abs() < 1e-12 && (r.r_squared - 1.0).abs() < 1e-12);
    let y = [1.0, 3.0, 2.0, 4.0];
    let r = case_correlation(&x, &y).unwrap();
    assert!((r.pearson_r - 0.8).abs() < 1e-12);
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!((case_correlation(&neg, &y).unwrap().pearson_r + 0.8).abs() < 1e-12);
    assert!(case_correlation(&x[..2], &y[..2]).is_err());
    assert!(matches!(case_correlation(&[1.0; 4], &y), Err(Error::UndefinedCorrelation(_))));
    // order invariance
    let r2 = case_correlation(&[4.0, 3.0, 2.0, 1.0], &[4.0, 2.0, 3.0, 1.0]).unwrap();
    assert!((r2.pearson_r - 0.8).abs() < 1e-12);
}

#[test]
fn overlap_cases() {
    let mut rng = Rng::new(4);
    let err = Tensor::from_fn(&[200], |_| rng.uniform_range(0.0, 200.0));
    let unc = err.map(|e| e / 10.0);
    let o = overlap_analysis(&err, &unc, 100.0, 10.0).unwrap();
    assert_eq!((o.dice_high, o.dice_low, o.iou_high, o.iou_low), (1.0, 1.0, 1.0, 1.0));

    let none = overlap_analysis(&err, &unc.map(|_| 0.0), 1e6, 10.0).unwrap();
    assert_eq!(none.dice_high, 1.0);
    let some = overlap_analysis(&err, &unc, 1e6, 10.0).unwrap();
    assert_eq!(some.dice_high, 0.0);

    let u2 = Tensor::from_fn(&[200], |_| rng.uniform_range(0.0, 20.0));
    let o = overlap_analysis(&err, &u2, 100.0, 10.0).unwrap();
    let he = err.map(|e| (e > 100.0) as u8 as f64);
    let hu = u2.map(|u| (u > 10.0) as u8 as f64);
    let both = he.data().iter().zip(hu.data()).filter(|(a, b)| **a == 1.0 && **b == 1.0).count() as f64;
    let expect = 2.0 * both / (he.sum() + hu.sum());
    assert!((o.dice_high - expect).abs() < 1e-15);
    for v in [o.dice_low, o.dice_high, o.iou_low, o.iou_high] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(overlap_analysis(&err, &u2, 0.0, 10.0).is_err());
}

#[test]
fn contour_cases() {
    assert_eq!(boundary_contour(&Tensor::zeros(&[4, 4]), DEFAULT_CONTOUR_THRESHOLD).sum(), 0.0);
    assert_eq!(boundary_contour(&Tensor::filled(&[4, 4], 0.5), DEFAULT_CONTOUR_THRESHOLD).sum(), 16.0);

    // two regions split at column 8; disagreement only where neighbours differ
    let labels = Tensor::image(12, 16, |_, c| (c >= 8) as u8 as f64);
    let dis = Tensor::image(12, 16, |_, c| if c == 7 || c == 8 { 0.25 } else { 0.0 });
    let contour = boundary_contour(&dis, DEFAULT_CONTOUR_THRESHOLD);
    for r in 0..12 {
        for c in 0..16 {
            if contour.at2(r, c) == 1.0 {
                let near = (c.saturating_sub(1)..=(c + 1).min(15)).any(|cc| labels.at2(r, cc) != labels.at2(r, c));
                assert!(near, "({r},{c}) is off the dilated boundary");
            }
        }
    }
}

#[test]
fn body_mask_covers_foreground_only() {
    let img = Tensor::image(16, 16, |r, c| {
        let d = ((r as f64 - 7.5).powi(2) + (c as f64 - 7.5).powi(2)).sqrt();
        if d < 5.0 {
            0.6
        } else {
            0.0
        }
    });
    let m = body_mask(&img, DEFAULT_BODY_FRACTION).unwrap();
    assert_eq!(m.at2(8, 8), 1.0);
    assert_eq!(m.at2(0, 0), 0.0);
    assert!(body_mask(&img, 1.5).is_err());
}

proptest! {
    #[test]
    fn rmse_dominates_mae(seed in 0u64..10_000) {
        let mut rng = Rng::new(seed);
        let a = Tensor::image(8, 8, |_, _| rng.uniform());
        let b = Tensor::image(8, 8, |_, _| rng.uniform());
        let m = image_metrics(&a, &b, 1.0).unwrap();
        prop_assert!(m.rmse >= m.mae);
        prop_assert!(m.ssim <= 1.0 + 1e-12 && m.ssim >= -1.0 - 1e-12);
    }
}
