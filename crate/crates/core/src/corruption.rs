//! Input corruption: additive and magnitude noise models, salt-and-pepper,
//! and K-space undersampling along radial or spiral trajectories.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::exec::Exec;
use crate::numerics::{fft2d, ifft2d_complex, rayleigh_draw, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorruptionKind {
    Gaussian { sigma: f64 },
    Rician { sigma: f64 },
    Rayleigh { scale: f64 },
    SaltPepper { probability: f64 },
    KspaceRadial { spokes: usize },
    KspaceSpiral { turns: usize, points_per_turn: usize },
}

impl CorruptionKind {
    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::Gaussian { .. } => "gaussian",
            CorruptionKind::Rician { .. } => "rician",
            CorruptionKind::Rayleigh { .. } => "rayleigh",
            CorruptionKind::SaltPepper { .. } => "salt_pepper",
            CorruptionKind::KspaceRadial { .. } => "kspace_radial",
            CorruptionKind::KspaceSpiral { .. } => "kspace_spiral",
        }
    }

    /// Level as a single number for reports (`turns·points_per_turn` for spirals).
    pub fn level(&self) -> f64 {
        match *self {
            CorruptionKind::Gaussian { sigma } | CorruptionKind::Rician { sigma } => sigma,
            CorruptionKind::Rayleigh { scale } => scale,
            CorruptionKind::SaltPepper { probability } => probability,
            CorruptionKind::KspaceRadial { spokes } => spokes as f64,
            CorruptionKind::KspaceSpiral { turns, points_per_turn } => (turns * points_per_turn) as f64,
        }
    }

    pub fn is_kspace(&self) -> bool {
        matches!(self, CorruptionKind::KspaceRadial { .. } | CorruptionKind::KspaceSpiral { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            CorruptionKind::Gaussian { sigma } | CorruptionKind::Rician { sigma } => sigma >= 0.0 && sigma.is_finite(),
            CorruptionKind::Rayleigh { scale } => scale >= 0.0 && scale.is_finite(),
            CorruptionKind::SaltPepper { probability } => (0.0..=1.0).contains(&probability),
            CorruptionKind::KspaceRadial { spokes } => spokes >= 1,
            CorruptionKind::KspaceSpiral { turns, points_per_turn } => turns >= 1 && points_per_turn >= 4,
        };
        if ok {
            Ok(())
        } else {
            Err(arg_err!("invalid corruption level {self:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    #[serde(flatten)]
    pub kind: CorruptionKind,
    pub seed: u64,
}

/// `(H, W)` of a single-plane image (`[H, W]` or `[1, H, W]`).
fn image_dims(img: &Tensor) -> Result<(usize, usize)> {
    let (h, w) = img.hw()?;
    if img.len() != h * w {
        return Err(arg_err!("expected a single image plane, got shape {:?}", img.shape()));
    }
    Ok((h, w))
}

/// Corrupt without clamping. Noise kinds return pre-clamp values; K-space
/// kinds return the reconstruction magnitude.
pub fn corrupt_raw(img: &Tensor, spec: &CorruptionSpec) -> Result<Tensor> {
    spec.kind.validate()?;
    let mut rng = Rng::new(spec.seed);
    Ok(match spec.kind {
        CorruptionKind::Gaussian { sigma } => {
            if sigma == 0.0 {
                img.clone()
            } else {
                img.map_with(|v| v + rng.normal(0.0, sigma))
            }
        }
        CorruptionKind::Rician { sigma } => {
            if sigma == 0.0 {
                img.clone()
            } else {
                img.map_with(|v| {
                    let re = v + rng.normal(0.0, sigma);
                    let im = rng.normal(0.0, sigma);
                    re.hypot(im)
                })
            }
        }
        CorruptionKind::Rayleigh { scale } => {
            if scale == 0.0 {
                img.clone()
            } else {
                img.map_with(|v| v + rayleigh_draw(&mut rng, scale))
            }
        }
        CorruptionKind::SaltPepper { probability } => img.map_with(|v| {
            if probability > 0.0 && rng.uniform() < probability {
                if rng.coin() {
                    1.0
                } else {
                    0.0
                }
            } else {
                v
            }
        }),
        CorruptionKind::KspaceRadial { .. } | CorruptionKind::KspaceSpiral { .. } => {
            let (h, w) = image_dims(img)?;
            let mask = kspace_mask(&spec.kind, h, w)?.expect("k-space kind");
            apply_kspace_raw(img, &mask)?
        }
    })
}

/// The sampling mask of a K-space kind on an `h × w` grid; `None` for noise kinds.
pub fn kspace_mask(kind: &CorruptionKind, h: usize, w: usize) -> Result<Option<KSpaceMask>> {
    match *kind {
        CorruptionKind::KspaceRadial { spokes } => radial_mask(h, w, spokes).map(Some),
        CorruptionKind::KspaceSpiral { turns, points_per_turn } => spiral_mask(h, w, turns, points_per_turn).map(Some),
        _ => Ok(None),
    }
}

/// Corrupt and clamp to `[0, 1]`.
pub fn corrupt(img: &Tensor, spec: &CorruptionSpec) -> Result<Tensor> {
    Ok(corrupt_raw(img, spec)?.clamp(0.0, 1.0))
}

/// Boolean sampling pattern on centered K-space (DC at `(H/2, W/2)`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KSpaceMask {
    h: usize,
    w: usize,
    keep: Vec<bool>,
}

impl KSpaceMask {
    pub fn new(h: usize, w: usize, keep: Vec<bool>) -> Result<Self> {
        if h == 0 || w == 0 || keep.len() != h * w {
            return Err(arg_err!("mask of {} bins does not fit {h}x{w}", keep.len()));
        }
        let mut m = KSpaceMask { h, w, keep };
        m.set(h / 2, w / 2);
        Ok(m)
    }

    pub fn full(h: usize, w: usize) -> Result<Self> {
        Self::new(h, w, vec![true; h * w])
    }

    /// Only the DC bin.
    pub fn dc_only(h: usize, w: usize) -> Result<Self> {
        Self::new(h, w, vec![false; h * w])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn is_kept(&self, r: usize, c: usize) -> bool {
        self.keep[r * self.w + c]
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn sampling_fraction(&self) -> f64 {
        self.kept_count() as f64 / (self.h * self.w) as f64
    }

    fn set(&mut self, r: usize, c: usize) {
        self.keep[r * self.w + c] = true;
    }

    /// Set a bin given offsets from the centre; out-of-grid offsets are ignored.
    fn set_offset(&mut self, dr: i64, dc: i64) {
        let r = (self.h / 2) as i64 + dr;
        let c = (self.w / 2) as i64 + dc;
        if r >= 0 && c >= 0 && (r as usize) < self.h && (c as usize) < self.w {
            self.set(r as usize, c as usize);
        }
    }

    /// Mask as a `[H, W]` tensor of 0/1 values.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::image(self.h, self.w, |r, c| self.is_kept(r, c) as u8 as f64)
    }
}

/// `spokes` lines through the centre at angles `s·π/spokes`, rasterized by
/// stepping one bin at a time along the dominant axis (DDA) with
/// round-half-away-from-zero on the minor axis. Each line spans the grid.
pub fn radial_mask(h: usize, w: usize, spokes: usize) -> Result<KSpaceMask> {
    if spokes == 0 {
        return Err(arg_err!("radial mask needs at least one spoke"));
    }
    let mut m = KSpaceMask::new(h, w, vec![false; h * w])?;
    let reach = h.max(w) as i64;
    for s in 0..spokes {
        let theta = s as f64 * std::f64::consts::PI / spokes as f64;
        let (dy, dx) = (theta.sin(), theta.cos());
        if dx.abs() >= dy.abs() {
            let slope = dy / dx;
            for t in -reach..=reach {
                m.set_offset((t as f64 * slope).round() as i64, t);
            }
        } else {
            let slope = dx / dy;
            for t in -reach..=reach {
                m.set_offset(t, (t as f64 * slope).round() as i64);
            }
        }
    }
    Ok(m)
}

/// Archimedean spiral `r(t) = r_max·t/(2π·turns)` sampled at
/// `t_i = i·2π·turns/N` for `i = 1..=N`, `N = turns·points_per_turn`,
/// rounded to the nearest bin. `r_max` is the distance from the centre to
/// the nearest grid edge, so the last point lies on the boundary.
pub fn spiral_mask(h: usize, w: usize, turns: usize, points_per_turn: usize) -> Result<KSpaceMask> {
    if turns == 0 || points_per_turn < 4 {
        return Err(arg_err!("spiral mask needs turns >= 1 and points_per_turn >= 4, got {turns}, {points_per_turn}"));
    }
    let mut m = KSpaceMask::new(h, w, vec![false; h * w])?;
    let (cy, cx) = (h / 2, w / 2);
    let r_max = cy.min(h - 1 - cy).min(cx).min(w - 1 - cx) as f64;
    let n = turns * points_per_turn;
    let t_end = 2.0 * std::f64::consts::PI * turns as f64;
    for i in 1..=n {
        let t = i as f64 * t_end / n as f64;
        let r = r_max * t / t_end;
        m.set_offset((r * t.sin()).round() as i64, (r * t.cos()).round() as i64);
    }
    Ok(m)
}

/// Reconstruction magnitude after masking, before clamping.
pub fn apply_kspace_raw(img: &Tensor, mask: &KSpaceMask) -> Result<Tensor> {
    let (h, w) = image_dims(img)?;
    if mask.shape() != (h, w) {
        return Err(arg_err!("mask shape {:?} does not match image {h}x{w}", mask.shape()));
    }
    let plane = Tensor::new(vec![h, w], img.data().to_vec())?;
    let mut k = fft2d(&plane)?;
    // Unshifted bin (r, c) sits at centered position ((r + H/2) mod H, (c + W/2) mod W).
    for r in 0..h {
        for c in 0..w {
            if !mask.is_kept((r + h / 2) % h, (c + w / 2) % w) {
                k.re[r * w + c] = 0.0;
                k.im[r * w + c] = 0.0;
            }
        }
    }
    let back = ifft2d_complex(&k).magnitude();
    Tensor::new(img.shape().to_vec(), back.into_data())
}

/// Masked reconstruction magnitude clamped to `[0, 1]`.
pub fn apply_kspace(img: &Tensor, mask: &KSpaceMask) -> Result<Tensor> {
    Ok(apply_kspace_raw(img, mask)?.clamp(0.0, 1.0))
}

/// Severity used to order sweep levels (higher is more severe).
pub fn severity(kind: &CorruptionKind, h: usize, w: usize) -> Result<f64> {
    Ok(match kspace_mask(kind, h, w)? {
        Some(m) => 1.0 - m.sampling_fraction(),
        None => kind.level(),
    })
}

/// Seed of the corruption applied to `sample` at sweep `level`.
pub fn sweep_seed(base: u64, level: usize, sample: usize) -> u64 {
    Rng::for_stream(base, ((level as u64) << 32) | sample as u64).next_u64()
}

/// One corrupted copy of `imgs` per level, in level order.
///
/// Levels must be strictly increasing in severity; for K-space kinds that
/// means strictly decreasing sampling fraction.
pub fn corruption_sweep(imgs: &[Tensor], levels: &[CorruptionKind], seed: u64, exec: Exec) -> Result<Vec<Vec<Tensor>>> {
    if let Some(first) = imgs.first() {
        let (h, w) = image_dims(first)?;
        let mut prev: Option<(String, f64)> = None;
        for l in levels {
            l.validate()?;
            let s = severity(l, h, w)?;
            if let Some((name, ps)) = &prev {
                if name != l.name() {
                    return Err(arg_err!("sweep mixes corruption kinds {name} and {}", l.name()));
                }
                if !(s > *ps) {
                    return Err(arg_err!("sweep levels must be strictly increasing in severity"));
                }
            }
            prev = Some((l.name().to_string(), s));
        }
    }
    let n = imgs.len();
    let flat = exec.try_map_range(levels.len() * n, |i| {
        let (li, si) = (i / n.max(1), i % n.max(1));
        let spec = CorruptionSpec { kind: levels[li], seed: sweep_seed(seed, li, si) };
        corrupt(&imgs[si], &spec)
    })?;
    let mut it = flat.into_iter();
    Ok((0..levels.len()).map(|_| it.by_ref().take(n).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_spoke_is_central_row() {
        let m = radial_mask(16, 16, 1).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(m.is_kept(r, c), r == 8, "({r},{c})");
            }
        }
        assert_eq!(m.sampling_fraction(), 1.0 / 16.0);
    }

    #[test]
    fn two_spokes_are_a_cross() {
        let m = radial_mask(8, 8, 2).unwrap();
        assert_eq!(m.kept_count(), 15);
    }

    #[test]
    fn small_spiral() {
        let m = spiral_mask(16, 16, 1, 4).unwrap();
        assert!(m.kept_count() <= 5);
        assert!(m.is_kept(8, 8));
        // The last point (t = 2π) lands on the boundary at r_max = 7.
        assert!(m.is_kept(8, 15));
    }

    #[test]
    fn zero_levels_are_identity() {
        let img = Tensor::image(8, 8, |r, c| (r * 8 + c) as f64 / 64.0);
        for kind in [
            CorruptionKind::Gaussian { sigma: 0.0 },
            CorruptionKind::Rician { sigma: 0.0 },
            CorruptionKind::Rayleigh { scale: 0.0 },
            CorruptionKind::SaltPepper { probability: 0.0 },
        ] {
            let out = corrupt(&img, &CorruptionSpec { kind, seed: 1 }).unwrap();
            assert_eq!(out, img, "{kind:?}");
        }
    }

    #[test]
    fn invalid_levels_rejected() {
        let img = Tensor::zeros(&[4, 4]);
        for kind in [
            CorruptionKind::Gaussian { sigma: -1.0 },
            CorruptionKind::SaltPepper { probability: 1.5 },
            CorruptionKind::KspaceRadial { spokes: 0 },
            CorruptionKind::KspaceSpiral { turns: 1, points_per_turn: 3 },
        ] {
            assert!(corrupt(&img, &CorruptionSpec { kind, seed: 0 }).is_err());
        }
    }

    #[test]
    fn salt_pepper_saturates() {
        let img = Tensor::filled(&[10, 10], 0.5);
        let out =
            corrupt(&img, &CorruptionSpec { kind: CorruptionKind::SaltPepper { probability: 1.0 }, seed: 4 }).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn unordered_sweep_rejected() {
        let imgs = vec![Tensor::zeros(&[8, 8])];
        let levels = [CorruptionKind::Gaussian { sigma: 0.2 }, CorruptionKind::Gaussian { sigma: 0.1 }];
        assert!(corruption_sweep(&imgs, &levels, 0, Exec::Sequential).is_err());
        let levels = [CorruptionKind::KspaceRadial { spokes: 4 }, CorruptionKind::KspaceRadial { spokes: 8 }];
        assert!(corruption_sweep(&imgs, &levels, 0, Exec::Sequential).is_err());
    }
}
