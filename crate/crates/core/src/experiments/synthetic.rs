//! Desk-scale synthetic tasks: phantom-to-target synthesis and ellipse
//! segmentation.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::numerics::{sobel_gradients, Rng, Tensor};
use crate::training::{Dataset, Sample, Split};

/// Sobel magnitude below which the rim term is zero.
pub const RIM_SOBEL_LOW: f64 = 0.45;
/// Sobel magnitude at which the rim term saturates.
pub const RIM_SOBEL_HIGH: f64 = 0.9;
/// Weight of the intensity remap in the synthesis target.
pub const REMAP_WEIGHT: f64 = 0.4;
/// Weight of the rim term in the synthesis target.
pub const RIM_WEIGHT: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticTaskSpec {
    pub size: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub max_ellipses: usize,
    /// Segmentation only: number of classes including background.
    pub classes: usize,
    /// Segmentation only: additive Gaussian noise on the image.
    pub noise_sigma: f64,
    /// Synthesis only: soft-edge width in pixels.
    pub edge_width: f64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec {
            size: 32,
            n_train: 60,
            n_val: 20,
            n_test: 20,
            max_ellipses: 3,
            classes: 4,
            noise_sigma: 0.03,
            edge_width: 0.7,
        }
    }
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size < 8 {
            return Err(arg_err!("synthetic image size must be at least 8, got {}", self.size));
        }
        if self.max_ellipses == 0 {
            return Err(arg_err!("max_ellipses must be positive"));
        }
        if self.classes < 2 {
            return Err(arg_err!("segmentation needs at least 2 classes, got {}", self.classes));
        }
        if !(self.noise_sigma >= 0.0) || !(self.edge_width > 0.0) {
            return Err(arg_err!("noise_sigma must be >= 0 and edge_width > 0"));
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.n_train + self.n_val + self.n_test
    }

    /// Global sample indices of a split; splits never overlap.
    pub fn indices(&self, split: Split) -> std::ops::Range<usize> {
        let (a, b) = (self.n_train, self.n_train + self.n_val);
        match split {
            Split::Train => 0..a,
            Split::Val => a..b,
            Split::Test => b..self.total(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    cos: f64,
    sin: f64,
}

impl Ellipse {
    fn random(size: usize, centre: (f64, f64), axis: (f64, f64), rng: &mut Rng) -> Self {
        let s = size as f64;
        let theta = rng.uniform_range(0.0, std::f64::consts::PI);
        let (min_axis, max_axis) = axis;
        Ellipse {
            cy: rng.uniform_range(centre.0 * s, centre.1 * s),
            cx: rng.uniform_range(centre.0 * s, centre.1 * s),
            a: rng.uniform_range(min_axis * s, max_axis * s),
            b: rng.uniform_range(min_axis * s, max_axis * s),
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    /// Normalized elliptical radius of a pixel centre (1 on the boundary).
    fn rho(&self, r: usize, c: usize) -> f64 {
        let dy = r as f64 + 0.5 - self.cy;
        let dx = c as f64 + 0.5 - self.cx;
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }

    /// Approximate signed distance to the boundary in pixels (inside > 0).
    fn inside_distance(&self, r: usize, c: usize) -> f64 {
        (1.0 - self.rho(r, c)) * self.a.min(self.b)
    }
}

/// Random soft-ellipse phantom with values in `[0, 1]`, shape `[1, S, S]`:
/// one large central "head" ellipse plus up to `max_ellipses − 1` smaller
/// structures inside it.
pub fn soft_phantom(spec: &SyntheticTaskSpec, rng: &mut Rng) -> Tensor {
    let s = spec.size;
    let n = 1 + rng.below(spec.max_ellipses);
    let mut img = vec![0.0; s * s];
    for i in 0..n {
        let (e, level) = if i == 0 {
            (Ellipse::random(s, (0.45, 0.55), (0.34, 0.44), rng), rng.uniform_range(0.3, 0.5))
        } else {
            (Ellipse::random(s, (0.35, 0.65), (0.08, 0.2), rng), rng.uniform_range(0.5, 0.95))
        };
        for r in 0..s {
            for c in 0..s {
                let m = 1.0 / (1.0 + (-e.inside_distance(r, c) / spec.edge_width).exp());
                let v = &mut img[r * s + c];
                *v = *v * (1.0 - m) + level * m;
            }
        }
    }
    Tensor::new(vec![1, s, s], img).expect("phantom shape")
}

/// Rim indicator in `[0, 1]`: Sobel magnitude ramped linearly from 0 at
/// [`RIM_SOBEL_LOW`] to 1 at [`RIM_SOBEL_HIGH`].
pub fn rim_strength(x: &Tensor) -> Result<Tensor> {
    let (h, w) = x.hw()?;
    let img = Tensor::new(vec![h, w], x.data().to_vec())?;
    Ok(sobel_gradients(&img)?.map(|g| ((g - RIM_SOBEL_LOW) / (RIM_SOBEL_HIGH - RIM_SOBEL_LOW)).clamp(0.0, 1.0)))
}

/// Deterministic synthesis target: `min(1, 0.4·x² + 0.7·rim(x))`.
pub fn synthesis_target(x: &Tensor) -> Result<Tensor> {
    let rim = rim_strength(x)?;
    let t: Vec<f64> =
        x.data().iter().zip(rim.data()).map(|(&v, &s)| (REMAP_WEIGHT * v * v + RIM_WEIGHT * s).min(1.0)).collect();
    Tensor::new(x.shape().to_vec(), t)
}

fn sample_rng(seed: u64, index: usize) -> Rng {
    Rng::for_stream(seed, 0x5A5_0000 + index as u64)
}

/// One split of the synthesis task.
pub fn gen_synthesis_split(spec: &SyntheticTaskSpec, seed: u64, split: Split) -> Result<Dataset> {
    spec.validate()?;
    let samples = spec
        .indices(split)
        .map(|i| {
            let x = soft_phantom(spec, &mut sample_rng(seed, i));
            let y = synthesis_target(&x)?;
            Ok(Sample { x, y })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, split)
}

/// Intensity of class `k` in the segmentation task (background is class 0).
pub fn class_intensity(k: usize, classes: usize) -> f64 {
    0.1 + 0.8 * k as f64 / (classes - 1) as f64
}

/// Hard-edged ellipse image and label map; `noise` adds Gaussian noise.
pub fn segmentation_sample(spec: &SyntheticTaskSpec, rng: &mut Rng, noise: bool) -> Sample {
    let s = spec.size;
    let n = 1 + rng.below(spec.max_ellipses);
    let mut labels = vec![0usize; s * s];
    for _ in 0..n {
        let e = Ellipse::random(s, (0.3, 0.7), (0.08, 0.25), rng);
        let k = 1 + rng.below(spec.classes - 1);
        for r in 0..s {
            for c in 0..s {
                if e.rho(r, c) <= 1.0 {
                    labels[r * s + c] = k;
                }
            }
        }
    }
    let img: Vec<f64> = labels
        .iter()
        .map(|&k| {
            let v = class_intensity(k, spec.classes);
            if noise && spec.noise_sigma > 0.0 {
                v + rng.normal(0.0, spec.noise_sigma)
            } else {
                v
            }
        })
        .collect();
    Sample {
        x: Tensor::new(vec![1, s, s], img).expect("image shape"),
        y: Tensor::new(vec![s, s], labels.iter().map(|&k| k as f64).collect()).expect("label shape"),
    }
}

/// One split of the segmentation task.
pub fn gen_segmentation_split(spec: &SyntheticTaskSpec, seed: u64, split: Split) -> Result<Dataset> {
    spec.validate()?;
    let samples = spec.indices(split).map(|i| segmentation_sample(spec, &mut sample_rng(seed, i), true)).collect();
    Dataset::new(samples, split)
}

/// Clamp to `[lo, hi]` then map linearly onto `[0, 1]`.
pub fn normalize_clip_minmax(img: &Tensor, lo: f64, hi: f64) -> Result<Tensor> {
    if !(hi > lo) {
        return Err(arg_err!("normalization needs hi > lo, got [{lo}, {hi}]"));
    }
    Ok(img.map(|v| (v.clamp(lo, hi) - lo) / (hi - lo)))
}

/// CT window in HU.
pub const CT_RANGE: (f64, f64) = (-1000.0, 3000.0);
/// MR intensity window.
pub const MR_RANGE: (f64, f64) = (0.0, 10000.0);

/// Convert a value in HU-equivalent units to the normalized CT scale.
pub fn hu_to_normalized(v: f64) -> f64 {
    v / (CT_RANGE.1 - CT_RANGE.0)
}
