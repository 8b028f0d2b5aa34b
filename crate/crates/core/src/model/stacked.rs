use super::arch::Architecture;
use super::params::BlockParams;
use super::path::Path;
use super::PathGradients;
use crate::error::{arg_err, Error, Result};
use crate::numerics::Rng;

/// Template architecture plus a list of candidate parameter sets per position.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    arch: Architecture,
    candidates: Vec<Vec<BlockParams>>,
    /// Bumped on every parameter update; traces remember the value they saw.
    version: u64,
}

impl StackedModel {
    /// Fresh template (one candidate per position) with initialized weights.
    pub fn build_template(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        let plan = arch.plan()?;
        let candidates =
            arch.blocks.iter().zip(&plan.layers).map(|(spec, dims)| vec![BlockParams::init(spec, dims, rng)]).collect();
        Ok(StackedModel { arch, candidates, version: 0 })
    }

    /// Assemble a model from explicit candidates, checking every shape.
    pub fn from_parts(arch: Architecture, candidates: Vec<Vec<BlockParams>>) -> Result<Self> {
        let plan = arch.plan()?;
        if candidates.len() != arch.positions() {
            return Err(Error::Architecture(format!(
                "{} candidate lists for {} positions",
                candidates.len(),
                arch.positions()
            )));
        }
        for (j, cands) in candidates.iter().enumerate() {
            if cands.is_empty() {
                return Err(Error::Architecture(format!("position {j} has no candidates")));
            }
            for (k, c) in cands.iter().enumerate() {
                if !c.matches_dims(&arch.blocks[j], &plan.layers[j]) {
                    return Err(Error::Architecture(format!(
                        "candidate {k} at position {j} does not match its block spec"
                    )));
                }
                if !c.is_finite() {
                    return Err(Error::Architecture(format!(
                        "candidate {k} at position {j} has non-finite parameters"
                    )));
                }
            }
        }
        Ok(StackedModel { arch, candidates, version: 0 })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn positions(&self) -> usize {
        self.candidates.len()
    }

    /// Candidate counts `A_j`.
    pub fn counts(&self) -> Vec<usize> {
        self.candidates.iter().map(Vec::len).collect()
    }

    /// `Π A_j`.
    pub fn path_count(&self) -> u128 {
        self.candidates.iter().map(|c| c.len() as u128).product()
    }

    pub fn is_template(&self) -> bool {
        self.candidates.iter().all(|c| c.len() == 1)
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn candidates(&self) -> &[Vec<BlockParams>] {
        &self.candidates
    }

    pub fn candidate(&self, position: usize, k: usize) -> &BlockParams {
        &self.candidates[position][k]
    }

    /// Mutable access; counts as a parameter update.
    pub fn candidate_mut(&mut self, position: usize, k: usize) -> &mut BlockParams {
        self.version += 1;
        &mut self.candidates[position][k]
    }

    pub fn num_params(&self) -> usize {
        self.candidates.iter().flatten().map(BlockParams::num_params).sum()
    }

    /// Replicate each template block `copies[j]` times with identical values.
    pub fn clone_and_stack(&self, copies: &[usize]) -> Result<StackedModel> {
        if !self.is_template() {
            return Err(arg_err!("clone_and_stack needs a template (all A_j = 1), got A = {:?}", self.counts()));
        }
        if copies.len() != self.positions() {
            return Err(arg_err!("{} copy counts for {} positions", copies.len(), self.positions()));
        }
        if let Some(j) = copies.iter().position(|&c| c == 0) {
            return Err(arg_err!("zero copies requested at position {j}"));
        }
        let candidates = self.candidates.iter().zip(copies).map(|(c, &n)| vec![c[0].clone(); n]).collect();
        Ok(StackedModel { arch: self.arch.clone(), candidates, version: 0 })
    }

    /// New model holding copies of the listed candidates, in list order.
    pub fn select_candidates(&self, kept: &[Vec<usize>]) -> Result<StackedModel> {
        if kept.len() != self.positions() {
            return Err(arg_err!("{} kept lists for {} positions", kept.len(), self.positions()));
        }
        let mut candidates = Vec::with_capacity(kept.len());
        for (j, ks) in kept.iter().enumerate() {
            if ks.is_empty() {
                return Err(arg_err!("no candidates kept at position {j}"));
            }
            let mut list = Vec::with_capacity(ks.len());
            for &k in ks {
                let c = self.candidates[j]
                    .get(k)
                    .ok_or_else(|| arg_err!("kept candidate {k} at position {j} out of range"))?;
                list.push(c.clone());
            }
            candidates.push(list);
        }
        Ok(StackedModel { arch: self.arch.clone(), candidates, version: 0 })
    }

    /// Plain SGD step on the blocks of `grads.path()` only.
    pub fn apply_sgd(&mut self, grads: &PathGradients, learning_rate: f64) -> Result<()> {
        grads.path().validate(&self.counts())?;
        for (j, g) in grads.blocks().iter().enumerate() {
            let k = grads.path().indices()[j];
            self.candidates[j][k].axpy(-learning_rate, g);
        }
        self.version += 1;
        Ok(())
    }

    /// The path through candidate 0 everywhere.
    pub fn template_path(&self) -> Path {
        Path::first(self.positions())
    }
}
