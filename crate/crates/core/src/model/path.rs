use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;

use super::StackedModel;
use crate::error::{arg_err, Error, Result};
use crate::numerics::Rng;

/// Default cap on full path enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// One candidate index per position (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path(pub Vec<usize>);

impl Path {
    pub fn new(indices: Vec<usize>) -> Self {
        Path(indices)
    }

    /// The all-zeros path, i.e. the template's own blocks.
    pub fn first(positions: usize) -> Self {
        Path(vec![0; positions])
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, counts: &[usize]) -> Result<()> {
        if self.0.len() != counts.len() {
            return Err(arg_err!("path {self} has {} positions, model has {}", self.0.len(), counts.len()));
        }
        for (j, (&k, &a)) in self.0.iter().zip(counts).enumerate() {
            if k >= a {
                return Err(arg_err!("path {self}: candidate {k} at position {j} out of range (A={a})"));
            }
        }
        Ok(())
    }

    /// Mixed-radix rank with position 0 most significant.
    pub fn rank(&self, counts: &[usize]) -> u128 {
        self.0.iter().zip(counts).fold(0u128, |acc, (&k, &a)| acc * a as u128 + k as u128)
    }

    pub fn from_rank(mut rank: u128, counts: &[usize]) -> Self {
        let mut idx = vec![0; counts.len()];
        for j in (0..counts.len()).rev() {
            let a = counts[j] as u128;
            idx[j] = (rank % a) as usize;
            rank /= a;
        }
        Path(idx)
    }

    /// Positions where the two paths pick the same candidate.
    pub fn shared_positions(&self, other: &Path) -> Vec<usize> {
        self.0.iter().zip(&other.0).enumerate().filter(|(_, (a, b))| a == b).map(|(j, _)| j).collect()
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, ")")
    }
}

/// Ordered, duplicate-free set of paths.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathPool {
    paths: Vec<Path>,
}

impl PathPool {
    pub fn new(paths: Vec<Path>, counts: &[usize]) -> Result<Self> {
        let mut seen = HashSet::with_capacity(paths.len());
        for p in &paths {
            p.validate(counts)?;
            if !seen.insert(p) {
                return Err(arg_err!("duplicate path {p} in pool"));
            }
        }
        Ok(PathPool { paths })
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Path> {
        self.paths.iter()
    }

    pub fn into_paths(self) -> Vec<Path> {
        self.paths
    }

    pub fn validate_for(&self, model: &StackedModel) -> Result<()> {
        let counts = model.counts();
        self.paths.iter().try_for_each(|p| p.validate(&counts))
    }
}

impl<'a> IntoIterator for &'a PathPool {
    type Item = &'a Path;
    type IntoIter = std::slice::Iter<'a, Path>;
    fn into_iter(self) -> Self::IntoIter {
        self.paths.iter()
    }
}

/// Full lexicographic enumeration, refusing pools larger than `cap`.
pub fn enumerate_paths_capped(model: &StackedModel, cap: u128) -> Result<PathPool> {
    let counts = model.counts();
    let total = model.path_count();
    if total > cap {
        return Err(Error::EnumerationCap { size: total, cap });
    }
    let paths = (0..total).map(|r| Path::from_rank(r, &counts)).collect();
    Ok(PathPool { paths })
}

/// Full lexicographic enumeration with [`DEFAULT_ENUMERATION_CAP`].
pub fn enumerate_paths(model: &StackedModel) -> Result<PathPool> {
    enumerate_paths_capped(model, DEFAULT_ENUMERATION_CAP)
}

/// `n` distinct paths drawn uniformly without repetition.
pub fn sample_paths(model: &StackedModel, n: usize, rng: &mut Rng) -> Result<PathPool> {
    let counts = model.counts();
    let total = model.path_count();
    if n as u128 > total {
        return Err(arg_err!("cannot sample {n} distinct paths from {total}"));
    }
    let paths = if total <= 1 << 24 {
        rng.sample_indices(total as usize, n).into_iter().map(|r| Path::from_rank(r as u128, &counts)).collect()
    } else {
        // n is tiny relative to the pool here, so rejection terminates quickly
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let p = Path(counts.iter().map(|&a| rng.below(a)).collect());
            if seen.insert(p.clone()) {
                out.push(p);
            }
        }
        out
    };
    Ok(PathPool { paths })
}

/// Evaluation budget policy: enumerate when `|Ω| ≤ budget`, otherwise sample
/// `budget` distinct paths.
pub fn budget_pool(model: &StackedModel, budget: usize, rng: &mut Rng) -> Result<PathPool> {
    if budget == 0 {
        return Err(arg_err!("path budget must be positive"));
    }
    if model.path_count() <= budget as u128 {
        enumerate_paths(model)
    } else {
        sample_paths(model, budget, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_roundtrip() {
        let counts = [2, 3, 4];
        for r in 0..24u128 {
            assert_eq!(Path::from_rank(r, &counts).rank(&counts), r);
        }
        assert_eq!(Path::from_rank(5, &counts), Path(vec![0, 1, 1]));
    }

    #[test]
    fn validation() {
        assert!(Path(vec![0, 2]).validate(&[1, 3]).is_ok());
        assert!(Path(vec![1, 2]).validate(&[1, 3]).is_err());
        assert!(Path(vec![0]).validate(&[1, 3]).is_err());
        assert!(PathPool::new(vec![Path(vec![0]), Path(vec![0])], &[2]).is_err());
    }

    #[test]
    fn display() {
        assert_eq!(Path(vec![0, 3, 1]).to_string(), "(0,3,1)");
    }
}
