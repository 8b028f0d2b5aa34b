//! Image and segmentation metrics, error/uncertainty correlation and
//! mask-overlap analysis.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::numerics::{pearson_r, r_squared, sobel_gradients, Tensor};

/// Default thresholds in HU-equivalent units for overlap analysis.
pub const DEFAULT_ERROR_THRESHOLD: f64 = 100.0;
pub const DEFAULT_UNCERTAINTY_THRESHOLD: f64 = 10.0;
/// Default disagreement threshold for boundary contours (1/14).
pub const DEFAULT_CONTOUR_THRESHOLD: f64 = 1.0 / 14.0;

/// SSIM window side.
pub const SSIM_WINDOW: usize = 7;

fn binary_counts(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    a.ensure_same_shape(b, "mask overlap")?;
    let (mut na, mut nb, mut both) = (0, 0, 0);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        if (x != 0.0 && x != 1.0) || (y != 0.0 && y != 1.0) {
            return Err(arg_err!("masks must be binary, found {x} / {y}"));
        }
        let (x, y) = (x == 1.0, y == 1.0);
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    Ok((na, nb, both))
}

/// `2|a∩b| / (|a|+|b|)`; two empty masks give 1.
pub fn dice(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (na, nb, both) = binary_counts(a, b)?;
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (na + nb) as f64)
}

/// `|a∩b| / |a∪b|`; two empty masks give 1.
pub fn iou(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (na, nb, both) = binary_counts(a, b)?;
    let union = na + nb - both;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(both as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub ssim: f64,
    /// `+∞` when prediction and truth agree exactly.
    pub psnr: f64,
    pub acutance: f64,
}

/// Single image plane of a `[H, W]` or `[1, H, W]` tensor.
fn plane(t: &Tensor) -> Result<Tensor> {
    let (h, w) = t.hw()?;
    if t.len() != h * w {
        return Err(arg_err!("expected a single image plane, got shape {:?}", t.shape()));
    }
    Tensor::new(vec![h, w], t.data().to_vec())
}

/// Mean SSIM over all fully contained `7×7` windows (uniform weights,
/// population statistics). Images smaller than the window use one window
/// covering the whole image.
pub fn ssim(x: &Tensor, y: &Tensor, data_range: f64) -> Result<f64> {
    x.ensure_same_shape(y, "ssim")?;
    let (x, y) = (plane(x)?, plane(y)?);
    let (h, w) = x.dims2()?;
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let (wh, ww) = (SSIM_WINDOW.min(h), SSIM_WINDOW.min(w));
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - wh {
        for c0 in 0..=w - ww {
            let n = (wh * ww) as f64;
            let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + wh {
                for c in c0..c0 + ww {
                    let (a, b) = (x.at2(r, c), y.at2(r, c));
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let vx = (sxx / n - mx * mx).max(0.0);
            let vy = (syy / n - my * my).max(0.0);
            let cov = sxy / n - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Mean Sobel gradient magnitude.
pub fn acutance(img: &Tensor) -> Result<f64> {
    Ok(sobel_gradients(&plane(img)?)?.mean())
}

pub fn image_metrics(pred: &Tensor, truth: &Tensor, data_range: f64) -> Result<ImageMetrics> {
    pred.ensure_same_shape(truth, "image metrics")?;
    if !(data_range > 0.0) {
        return Err(arg_err!("data_range must be positive, got {data_range}"));
    }
    let n = pred.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        abs += (p - t).abs();
        sq += (p - t) * (p - t);
    }
    let mse = sq / n;
    let psnr = if mse == 0.0 { f64::INFINITY } else { 10.0 * (data_range * data_range / mse).log10() };
    Ok(ImageMetrics {
        mae: abs / n,
        rmse: mse.sqrt(),
        ssim: ssim(pred, truth, data_range)?,
        psnr,
        acutance: acutance(pred)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationLevel {
    Voxel,
    Case,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub level: CorrelationLevel,
    pub pearson_r: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Uncertainty bin centres.
    pub bin_centers: Vec<f64>,
    /// Mean error per bin, `NaN` for empty bins.
    pub bin_mean_error: Vec<f64>,
}

fn correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson_r(x, y)
}

/// Equal-width bins of `unc` over its range; mean `err` per bin.
fn binned_curve(unc: &[f64], err: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let lo = unc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = unc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut sum = vec![0.0; bins];
    let mut cnt = vec![0usize; bins];
    for (&u, &e) in unc.iter().zip(err) {
        let b = if width > 0.0 { (((u - lo) / width) as usize).min(bins - 1) } else { 0 };
        sum[b] += e;
        cnt[b] += 1;
    }
    let centers = (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect();
    let means = sum.iter().zip(&cnt).map(|(&s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect();
    (centers, means)
}

/// Pearson r between uncertainty and `|error|` pooled over all voxels.
///
/// With `mask`, only voxels where the paired mask is 1 take part.
pub fn voxel_correlation(
    err_maps: &[Tensor],
    unc_maps: &[Tensor],
    bins: usize,
    masks: Option<&[Tensor]>,
) -> Result<CorrelationReport> {
    if err_maps.len() != unc_maps.len() || err_maps.is_empty() {
        return Err(arg_err!(
            "need equally many error and uncertainty maps, got {} and {}",
            err_maps.len(),
            unc_maps.len()
        ));
    }
    if bins == 0 {
        return Err(arg_err!("bins must be positive"));
    }
    if let Some(m) = masks {
        if m.len() != err_maps.len() {
            return Err(arg_err!("{} masks for {} maps", m.len(), err_maps.len()));
        }
    }
    let (mut unc, mut err) = (Vec::new(), Vec::new());
    for (i, (e, u)) in err_maps.iter().zip(unc_maps).enumerate() {
        e.ensure_same_shape(u, "voxel correlation")?;
        let mask = masks.map(|m| &m[i]);
        if let Some(m) = mask {
            if m.len() != e.len() {
                return Err(arg_err!("mask {i} does not match its map"));
            }
        }
        for j in 0..e.len() {
            if mask.is_none_or(|m| m.data()[j] != 0.0) {
                unc.push(u.data()[j]);
                err.push(e.data()[j].abs());
            }
        }
    }
    if unc.iter().all(|&v| v == unc[0]) {
        return Err(Error::UndefinedCorrelation("uncertainty is constant everywhere".into()));
    }
    let r = correlation(&unc, &err)?;
    let (bin_centers, bin_mean_error) = binned_curve(&unc, &err, bins);
    Ok(CorrelationReport {
        level: CorrelationLevel::Voxel,
        pearson_r: r,
        r_squared: r_squared(r),
        n: unc.len(),
        bin_centers,
        bin_mean_error,
    })
}

/// Pearson r between per-case mean uncertainty and per-case MAE.
pub fn case_correlation(mean_unc: &[f64], mae: &[f64]) -> Result<CorrelationReport> {
    if mean_unc.len() != mae.len() {
        return Err(arg_err!("{} uncertainties for {} errors", mean_unc.len(), mae.len()));
    }
    if mean_unc.len() < 3 {
        return Err(arg_err!("case correlation needs at least 3 cases, got {}", mean_unc.len()));
    }
    if mean_unc.iter().all(|&v| v == mean_unc[0]) || mae.iter().all(|&v| v == mae[0]) {
        return Err(Error::UndefinedCorrelation("case values are constant".into()));
    }
    let r = correlation(mean_unc, mae)?;
    Ok(CorrelationReport {
        level: CorrelationLevel::Case,
        pearson_r: r,
        r_squared: r_squared(r),
        n: mae.len(),
        bin_centers: Vec::new(),
        bin_mean_error: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub dice_low: f64,
    pub dice_high: f64,
    pub iou_low: f64,
    pub iou_high: f64,
    pub error_threshold: f64,
    pub uncertainty_threshold: f64,
}

/// Dice and IoU between high-error (`|err| > err_thr`) and high-uncertainty
/// (`unc > unc_thr`) masks, and between their complements.
pub fn overlap_analysis(err: &Tensor, unc: &Tensor, err_thr: f64, unc_thr: f64) -> Result<OverlapReport> {
    err.ensure_same_shape(unc, "overlap analysis")?;
    if !(err_thr > 0.0 && unc_thr > 0.0) {
        return Err(arg_err!("overlap thresholds must be positive"));
    }
    let he = err.map(|e| (e.abs() > err_thr) as u8 as f64);
    let hu = unc.map(|u| (u > unc_thr) as u8 as f64);
    let le = he.map(|v| 1.0 - v);
    let lu = hu.map(|v| 1.0 - v);
    Ok(OverlapReport {
        dice_low: dice(&le, &lu)?,
        dice_high: dice(&he, &hu)?,
        iou_low: iou(&le, &lu)?,
        iou_high: iou(&he, &hu)?,
        error_threshold: err_thr,
        uncertainty_threshold: unc_thr,
    })
}

/// Voxels whose disagreement exceeds `threshold`.
pub fn boundary_contour(disagreement: &Tensor, threshold: f64) -> Tensor {
    disagreement.map(|d| (d > threshold) as u8 as f64)
}

/// Default body threshold as a fraction of the intensity range (keeps the
/// top 95% of values).
pub const DEFAULT_BODY_FRACTION: f64 = 0.05;

/// Binary body mask: voxels at or above `min + fraction·(max − min)`,
/// followed by a 3×3 morphological closing.
pub fn body_mask(img: &Tensor, fraction: f64) -> Result<Tensor> {
    let img = plane(img)?;
    if !(0.0..=1.0).contains(&fraction) {
        return Err(arg_err!("body fraction must be in [0, 1], got {fraction}"));
    }
    let (lo, hi) = (img.min(), img.max());
    let thr = lo + fraction * (hi - lo);
    let raw = img.map(|v| (v >= thr) as u8 as f64);
    Ok(erode3(&dilate3(&raw)))
}

fn morph3(m: &Tensor, dilate: bool) -> Tensor {
    let (h, w) = (m.shape()[0], m.shape()[1]);
    Tensor::image(h, w, |r, c| {
        let mut hit = !dilate;
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                let v = if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                    m.at2(rr as usize, cc as usize) == 1.0
                } else {
                    !dilate
                };
                if dilate {
                    hit |= v;
                } else {
                    hit &= v;
                }
            }
        }
        hit as u8 as f64
    })
}

fn dilate3(m: &Tensor) -> Tensor {
    morph3(m, true)
}

fn erode3(m: &Tensor) -> Tensor {
    morph3(m, false)
}
