//! Validation-driven pruning: attribute each path's score to every candidate
//! it traverses, rank candidates per position by mean score, keep the best.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::exec::Exec;
use crate::metrics::dice;
use crate::model::{enumerate_paths, predict, PathPool, StackedModel};
use crate::numerics::Tensor;
use crate::training::{argmax_channels, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Mean foreground Dice over label classes `1..C` (higher is better).
    Dice,
    /// Mean absolute error (lower is better).
    Mae,
    Custom {
        higher_is_better: bool,
    },
}

impl MetricKind {
    pub fn higher_is_better(self) -> bool {
        match self {
            MetricKind::Dice => true,
            MetricKind::Mae => false,
            MetricKind::Custom { higher_is_better } => higher_is_better,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Dice => "dice",
            MetricKind::Mae => "mae",
            MetricKind::Custom { .. } => "custom",
        }
    }
}

/// Mean absolute error between prediction and target.
pub fn mae_metric(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    y.ensure_same_shape(y_hat, "mae")?;
    Ok(y.data().iter().zip(y_hat.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean Dice over foreground classes; `y` is a label map, `y_hat` class logits.
pub fn dice_metric(y: &Tensor, y_hat: &Tensor) -> Result<f64> {
    let labels = if y_hat.len() == y.len() { y_hat.clone() } else { argmax_channels(y_hat)? };
    let labels = labels.reshape(y.shape())?;
    let classes = y_hat.len() / y.len();
    let classes = if classes > 1 { classes } else { 1 + y.max().max(labels.max()) as usize };
    let mut total = 0.0;
    for c in 1..classes.max(2) {
        let a = y.map(|v| (v == c as f64) as u8 as f64);
        let b = labels.map(|v| (v == c as f64) as u8 as f64);
        total += dice(&a, &b)?;
    }
    Ok(total / (classes.max(2) - 1) as f64)
}

/// Per-candidate score lists plus the flat `(sample, path, score)` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPool {
    /// `scores[j][k]`: every score attributed to candidate `k` at position `j`.
    pub scores: Vec<Vec<Vec<f64>>>,
    pub metric_kind: MetricKind,
    pub higher_is_better: bool,
    /// `(sample index, path index, score)` in that sort order.
    pub records: Vec<(usize, usize, f64)>,
    pub pool: PathPool,
}

impl MetricPool {
    /// Number of distinct pool paths traversing each candidate.
    pub fn path_counts(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.scores.iter().map(|p| vec![0; p.len()]).collect();
        for path in self.pool.iter() {
            for (j, &k) in path.indices().iter().enumerate() {
                out[j][k] += 1;
            }
        }
        out
    }

    /// Mean score per candidate, `None` if it never received a score.
    pub fn means(&self) -> Vec<Vec<Option<f64>>> {
        self.scores
            .iter()
            .map(|pos| pos.iter().map(|s| (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)).collect())
            .collect()
    }

    pub fn total_scores(&self) -> usize {
        self.scores.iter().flatten().map(Vec::len).sum()
    }
}

/// Score every `(sample, path)` pair and attribute it to all traversed blocks.
pub fn score_paths(
    model: &StackedModel,
    val: &Dataset,
    pool: &PathPool,
    kind: MetricKind,
    metric: impl Fn(&Tensor, &Tensor) -> Result<f64> + Sync,
    exec: Exec,
) -> Result<MetricPool> {
    if val.is_empty() || pool.is_empty() {
        return Err(arg_err!("scoring needs a non-empty validation set and path pool"));
    }
    pool.validate_for(model)?;
    let n_paths = pool.len();
    let pairs = val.len() * n_paths;
    let flat = exec.try_map_range(pairs, |i| {
        let (s, p) = (i / n_paths, i % n_paths);
        let sample = val.get(s);
        let y_hat = predict(model, &sample.x, &pool.paths()[p])?;
        let v = metric(&sample.y, &y_hat)?;
        if v.is_nan() {
            return Err(Error::MetricFailure { sample: s, path: p, value: v });
        }
        Ok((s, p, v))
    })?;

    let mut scores: Vec<Vec<Vec<f64>>> = model.counts().iter().map(|&a| vec![Vec::new(); a]).collect();
    for &(_, p, v) in &flat {
        for (j, &k) in pool.paths()[p].indices().iter().enumerate() {
            scores[j][k].push(v);
        }
    }
    Ok(MetricPool {
        scores,
        metric_kind: kind,
        higher_is_better: kind.higher_is_better(),
        records: flat,
        pool: pool.clone(),
    })
}

/// [`score_paths`] with the built-in metric for `kind`.
pub fn score_paths_builtin(
    model: &StackedModel,
    val: &Dataset,
    pool: &PathPool,
    kind: MetricKind,
    exec: Exec,
) -> Result<MetricPool> {
    match kind {
        MetricKind::Dice => score_paths(model, val, pool, kind, dice_metric, exec),
        MetricKind::Mae => score_paths(model, val, pool, kind, mae_metric, exec),
        MetricKind::Custom { .. } => Err(arg_err!("custom metrics need an explicit scoring function")),
    }
}

/// Minimum number of pool paths each candidate must appear in.
pub fn coverage_required(pool_len: usize, keep: usize, count: usize) -> usize {
    ((pool_len * keep) / (count * 4)).max(1)
}

/// Per position, the top `keep[j]` candidates by mean score, best first.
/// Ties go to the lower candidate index.
pub fn select_top(mpool: &MetricPool, keep: &[usize]) -> Result<Vec<Vec<usize>>> {
    if keep.len() != mpool.scores.len() {
        return Err(arg_err!("keep has {} entries for {} positions", keep.len(), mpool.scores.len()));
    }
    let coverage = mpool.path_counts();
    let means = mpool.means();
    let mut kept = Vec::with_capacity(keep.len());
    for (j, (&kj, pos_means)) in keep.iter().zip(&means).enumerate() {
        let a = pos_means.len();
        if kj == 0 || kj > a {
            return Err(arg_err!("keep[{j}] = {kj} outside 1..={a}"));
        }
        let required = coverage_required(mpool.pool.len(), kj, a);
        let mut ranked = Vec::with_capacity(a);
        for (k, m) in pos_means.iter().enumerate() {
            let paths = coverage[j][k];
            match m {
                Some(m) if paths >= required => ranked.push((k, *m)),
                _ => return Err(Error::Coverage { position: j, candidate: k, paths, required }),
            }
        }
        let hib = mpool.higher_is_better;
        ranked.sort_by(|(ka, ma), (kb, mb)| {
            let ord = if hib { mb.total_cmp(ma) } else { ma.total_cmp(mb) };
            ord.then(ka.cmp(kb))
        });
        kept.push(ranked.into_iter().take(kj).map(|(k, _)| k).collect());
    }
    Ok(kept)
}

/// Pruned deep copy holding only `kept` candidates, plus its full path pool.
pub fn rebuild_pruned(model: &StackedModel, kept: &[Vec<usize>]) -> Result<(StackedModel, PathPool)> {
    let pruned = model.select_candidates(kept)?;
    let pool = enumerate_paths(&pruned)?;
    Ok((pruned, pool))
}

/// Per-position summary of a pruning decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub metric: MetricKind,
    pub higher_is_better: bool,
    pub means: Vec<Vec<f64>>,
    pub kept: Vec<Vec<usize>>,
    pub paths_before: u128,
    pub paths_after: u128,
}

/// Score, select and rebuild in one call.
pub fn prune(
    model: &StackedModel,
    val: &Dataset,
    pool: &PathPool,
    kind: MetricKind,
    keep: &[usize],
    exec: Exec,
) -> Result<(StackedModel, PathPool, PruneReport)> {
    let mpool = score_paths_builtin(model, val, pool, kind, exec)?;
    let kept = select_top(&mpool, keep)?;
    let (pruned, new_pool) = rebuild_pruned(model, &kept)?;
    let report = PruneReport {
        metric: kind,
        higher_is_better: kind.higher_is_better(),
        means: mpool.means().into_iter().map(|p| p.into_iter().map(|m| m.unwrap_or(f64::NAN)).collect()).collect(),
        kept,
        paths_before: model.path_count(),
        paths_after: pruned.path_count(),
    };
    Ok((pruned, new_pool, report))
}
