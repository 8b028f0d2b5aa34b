//! Result pools over a path pool, fusion (median / majority vote) and
//! uncertainty maps (sample standard deviation / vote disagreement).

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::exec::Exec;
use crate::model::{predict, PathPool, StackedModel};
use crate::numerics::Tensor;
use crate::training::argmax_channels;

/// Default number of paths evaluated when the full pool is larger.
pub const DEFAULT_PATH_BUDGET: usize = 128;

/// Default band edges in HU-equivalent units.
pub const DEFAULT_BAND_THRESHOLDS: [f64; 3] = [33.0, 67.0, 100.0];

/// Outputs of every path in a pool for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultPool {
    outputs: Vec<Tensor>,
    paths: PathPool,
}

impl ResultPool {
    pub fn new(outputs: Vec<Tensor>, paths: PathPool) -> Result<Self> {
        if outputs.is_empty() {
            return Err(arg_err!("result pool is empty"));
        }
        if outputs.len() != paths.len() {
            return Err(arg_err!("{} outputs for {} paths", outputs.len(), paths.len()));
        }
        if outputs.iter().any(|o| !o.same_shape(&outputs[0])) {
            return Err(arg_err!("result pool outputs differ in shape"));
        }
        Ok(ResultPool { outputs, paths })
    }

    /// Pool built from bare outputs (paths irrelevant, e.g. for tests).
    pub fn from_outputs(outputs: Vec<Tensor>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(arg_err!("result pool is empty"));
        }
        if outputs.iter().any(|o| !o.same_shape(&outputs[0])) {
            return Err(arg_err!("result pool outputs differ in shape"));
        }
        Ok(ResultPool { outputs, paths: PathPool::default() })
    }

    pub fn outputs(&self) -> &[Tensor] {
        &self.outputs
    }

    pub fn paths(&self) -> &PathPool {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    /// Per-path hard label maps (argmax over the class axis).
    pub fn to_label_maps(&self) -> Result<ResultPool> {
        let outputs = self.outputs.iter().map(argmax_channels).collect::<Result<Vec<_>>>()?;
        Ok(ResultPool { outputs, paths: self.paths.clone() })
    }

    fn voxel_values(&self, i: usize, buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.outputs.iter().map(|o| o.data()[i]));
    }

    fn reduce(&self, mut f: impl FnMut(&mut Vec<f64>) -> f64) -> Tensor {
        let shape = self.outputs[0].shape().to_vec();
        let mut buf = Vec::with_capacity(self.outputs.len());
        Tensor::from_fn(&shape, |i| {
            self.voxel_values(i, &mut buf);
            f(&mut buf)
        })
    }
}

/// Evaluate every path of `pool` on `x`, in pool order.
pub fn evaluate_pool(model: &StackedModel, x: &Tensor, pool: &PathPool) -> Result<ResultPool> {
    evaluate_pool_with(model, x, pool, Exec::default())
}

pub fn evaluate_pool_with(model: &StackedModel, x: &Tensor, pool: &PathPool, exec: Exec) -> Result<ResultPool> {
    if pool.is_empty() {
        return Err(arg_err!("cannot evaluate an empty path pool"));
    }
    pool.validate_for(model)?;
    let outputs = exec.try_map_range(pool.len(), |i| predict(model, x, &pool.paths()[i]))?;
    ResultPool::new(outputs, pool.clone())
}

fn median_of(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Elementwise median; even pools average the two middle order statistics.
pub fn fuse_median(pool: &ResultPool) -> Tensor {
    pool.reduce(|v| median_of(v))
}

fn check_integral(pool: &ResultPool) -> Result<()> {
    for o in &pool.outputs {
        if let Some(v) = o.data().iter().find(|v| v.fract() != 0.0 || !v.is_finite()) {
            return Err(arg_err!("majority vote needs integer labels, found {v}"));
        }
    }
    Ok(())
}

/// Most frequent value and its count; ties go to the smallest value.
fn mode_of(v: &mut [f64]) -> (f64, usize) {
    v.sort_by(f64::total_cmp);
    let (mut best, mut best_n) = (v[0], 0);
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > best_n {
            best = v[i];
            best_n = j - i;
        }
        i = j;
    }
    (best, best_n)
}

/// Elementwise majority label (smallest label wins ties).
pub fn fuse_mode(pool: &ResultPool) -> Result<Tensor> {
    check_integral(pool)?;
    Ok(pool.reduce(|v| mode_of(v).0))
}

/// Elementwise sample standard deviation (n − 1 denominator).
/// Single-output pools give all zeros.
pub fn uncertainty_std(pool: &ResultPool) -> Tensor {
    let n = pool.len();
    pool.reduce(|v| {
        if n < 2 {
            return 0.0;
        }
        // shifted by the first value so identical outputs give exactly 0
        let s = v[0];
        let m = v.iter().map(|x| x - s).sum::<f64>() / n as f64;
        (v.iter().map(|x| (x - s - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    })
}

/// Elementwise `1 − (modal count)/N`.
pub fn uncertainty_disagreement(pool: &ResultPool) -> Result<Tensor> {
    check_integral(pool)?;
    let n = pool.len() as f64;
    Ok(pool.reduce(|v| 1.0 - mode_of(v).1 as f64 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    /// Median fusion, standard-deviation uncertainty.
    Continuous,
    /// Majority-vote fusion, disagreement uncertainty.
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionReport {
    pub fused: Tensor,
    pub uncertainty: Tensor,
    pub mode_kind: ModeKind,
}

/// Fuse a pool and compute its uncertainty map. `Discrete` expects integer
/// label maps; see [`fuse_logits`] for pools of class logits.
pub fn fuse(pool: &ResultPool, kind: ModeKind) -> Result<FusionReport> {
    match kind {
        ModeKind::Continuous => {
            Ok(FusionReport { fused: fuse_median(pool), uncertainty: uncertainty_std(pool), mode_kind: kind })
        }
        ModeKind::Discrete => {
            Ok(FusionReport { fused: fuse_mode(pool)?, uncertainty: uncertainty_disagreement(pool)?, mode_kind: kind })
        }
    }
}

/// Majority-vote fusion of `[C, …]` logit outputs: argmax per path first.
pub fn fuse_logits(pool: &ResultPool) -> Result<FusionReport> {
    fuse(&pool.to_label_maps()?, ModeKind::Discrete)
}

/// Map uncertainty values to bands: 0 below `t1`, 1 in `[t1, t2)`, 2 in
/// `[t2, t3)`, 3 from `t3` up.
pub fn classify_uncertainty_bands(unc: &Tensor, thresholds: [f64; 3]) -> Result<Tensor> {
    let [t1, t2, t3] = thresholds;
    if !(t1 < t2 && t2 < t3) {
        return Err(arg_err!("band thresholds must be strictly increasing, got {thresholds:?}"));
    }
    Ok(unc.map(|u| {
        if u < t1 {
            0.0
        } else if u < t2 {
            1.0
        } else if u < t3 {
            2.0
        } else {
            3.0
        }
    }))
}
