use super::arch::{Activation, BlockKind};
use super::kernels;
use super::params::BlockParams;
use super::path::Path;
use super::StackedModel;
use crate::error::{arg_err, Error, Result};
use crate::numerics::Tensor;

/// Cached activations of one forward pass, consumed by [`backward_path`].
#[derive(Debug, Clone)]
pub struct Trace {
    path: Path,
    model_version: u64,
    /// `[input, out_0, …, out_{P-1}]`.
    activations: Vec<Tensor>,
    /// Per position: linear-layer input after resampling and skip concat.
    assembled: Vec<Vec<f64>>,
    /// Per position: pre-activation output.
    pre_activation: Vec<Vec<f64>>,
}

impl Trace {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn activations(&self) -> &[Tensor] {
        &self.activations
    }

    pub fn output(&self) -> &Tensor {
        self.activations.last().expect("trace has an output")
    }
}

/// Parameter gradients for the blocks on one path, one entry per position.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGradients {
    path: Path,
    blocks: Vec<BlockParams>,
}

impl PathGradients {
    pub fn zeros(model: &StackedModel, path: &Path) -> Result<Self> {
        path.validate(&model.counts())?;
        let blocks = path.indices().iter().enumerate().map(|(j, &k)| model.candidate(j, k).zeros_like()).collect();
        Ok(PathGradients { path: path.clone(), blocks })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn blocks(&self) -> &[BlockParams] {
        &self.blocks
    }

    /// Gradient of candidate `k` at `position`; `None` when it is off the path.
    pub fn get(&self, position: usize, k: usize) -> Option<&BlockParams> {
        match self.path.indices().get(position) {
            Some(&p) if p == k => Some(&self.blocks[position]),
            _ => None,
        }
    }

    /// Accumulate `scale * other`; both must be for the same path.
    pub fn accumulate(&mut self, other: &PathGradients, scale: f64) -> Result<()> {
        if other.path != self.path {
            return Err(Error::Contract(format!("cannot add gradients for path {} into {}", other.path, self.path)));
        }
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.axpy(scale, b);
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.blocks.iter_mut().for_each(|b| b.scale(s));
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(BlockParams::is_finite)
    }
}

fn check_input(model: &StackedModel, x: &Tensor, path: &Path) -> Result<()> {
    if x.shape() != model.arch().input_shape.as_slice() {
        return Err(arg_err!(
            "input shape {:?} does not match architecture input {:?}",
            x.shape(),
            model.arch().input_shape
        ));
    }
    path.validate(&model.counts())
}

/// Run `x` through the candidates selected by `path` and keep the trace.
pub fn forward_path(model: &StackedModel, x: &Tensor, path: &Path) -> Result<(Tensor, Trace)> {
    check_input(model, x, path)?;
    let arch = model.arch();
    let plan = arch.plan()?;
    let p = arch.positions();
    let mut activations = Vec::with_capacity(p + 1);
    activations.push(x.clone());
    let mut assembled_all = Vec::with_capacity(p);
    let mut pre_all = Vec::with_capacity(p);

    for (j, spec) in arch.blocks.iter().enumerate() {
        let params = model.candidate(j, path.indices()[j]);
        let input = &activations[j];
        let mut assembled = match spec.kind {
            BlockKind::Dense | BlockKind::Conv2d => input.data().to_vec(),
            BlockKind::Downsample => {
                let s = input.shape();
                kernels::avgpool2(input.data(), s[0], s[1], s[2])
            }
            BlockKind::Upsample => {
                let s = input.shape();
                kernels::upsample2(input.data(), s[0], s[1], s[2])
            }
        };
        if let Some(s) = spec.skip {
            assembled.extend_from_slice(activations[s].data());
        }
        let out_shape = &plan.activations[j + 1];
        let dims = &plan.layers[j];
        let z = match spec.kind {
            BlockKind::Dense => kernels::dense(&assembled, params.weight.data(), params.bias.data(), dims.out),
            _ => kernels::conv3x3(
                &assembled,
                dims.linear_in,
                out_shape[1],
                out_shape[2],
                params.weight.data(),
                params.bias.data(),
                dims.out,
            ),
        };
        let plane = z.len() / dims.out;
        let mut a = match (spec.activation, &params.slope) {
            (Activation::Prelu, Some(slope)) => kernels::prelu(&z, slope.data(), plane),
            _ => z.clone(),
        };
        if spec.residual {
            for (v, r) in a.iter_mut().zip(&assembled) {
                *v += r;
            }
        }
        activations.push(Tensor::new(out_shape.clone(), a)?);
        assembled_all.push(assembled);
        pre_all.push(z);
    }

    let y = activations.last().expect("at least one block").clone();
    Ok((
        y,
        Trace {
            path: path.clone(),
            model_version: model.version(),
            activations,
            assembled: assembled_all,
            pre_activation: pre_all,
        },
    ))
}

/// Forward pass without retaining a trace.
pub fn predict(model: &StackedModel, x: &Tensor, path: &Path) -> Result<Tensor> {
    forward_path(model, x, path).map(|(y, _)| y)
}

/// Back-propagate `loss_grad` (dL/dŷ) through the path recorded in `trace`.
///
/// Only blocks on `path` receive gradients.
pub fn backward_path(model: &StackedModel, trace: &Trace, loss_grad: &Tensor, path: &Path) -> Result<PathGradients> {
    if &trace.path != path {
        return Err(Error::Contract(format!("trace was recorded for path {}, not {}", trace.path, path)));
    }
    if trace.model_version != model.version() {
        return Err(Error::Contract(format!(
            "stale trace: recorded at model version {}, model is at {}",
            trace.model_version,
            model.version()
        )));
    }
    path.validate(&model.counts())?;
    let arch = model.arch();
    let plan = arch.plan()?;
    let p = arch.positions();
    if trace.activations.len() != p + 1 || trace.assembled.len() != p {
        return Err(Error::Contract("trace does not match model depth".into()));
    }
    for (t, s) in trace.activations.iter().zip(&plan.activations) {
        if t.shape() != s.as_slice() {
            return Err(Error::Contract("trace shapes do not match model".into()));
        }
    }
    if loss_grad.shape() != trace.output().shape() {
        return Err(arg_err!(
            "loss gradient shape {:?} does not match output {:?}",
            loss_grad.shape(),
            trace.output().shape()
        ));
    }

    let mut grad_act: Vec<Vec<f64>> = plan.activations.iter().map(|s| vec![0.0; s.iter().product()]).collect();
    grad_act[p].copy_from_slice(loss_grad.data());
    let mut blocks = Vec::with_capacity(p);

    for j in (0..p).rev() {
        let spec = &arch.blocks[j];
        let dims = &plan.layers[j];
        let params = model.candidate(j, path.indices()[j]);
        let g_out = std::mem::take(&mut grad_act[j + 1]);
        let assembled = &trace.assembled[j];
        let z = &trace.pre_activation[j];
        let plane = z.len() / dims.out;

        let (g_z, g_slope) = match (spec.activation, &params.slope) {
            (Activation::Prelu, Some(slope)) => {
                let (gz, gs) = kernels::prelu_backward(z, slope.data(), plane, &g_out);
                (gz, Some(gs))
            }
            _ => (g_out.clone(), None),
        };
        let out_shape = &plan.activations[j + 1];
        let (mut g_assembled, g_w, g_b) = match spec.kind {
            BlockKind::Dense => kernels::dense_backward(assembled, params.weight.data(), dims.out, &g_z),
            _ => kernels::conv3x3_backward(
                assembled,
                dims.linear_in,
                out_shape[1],
                out_shape[2],
                params.weight.data(),
                dims.out,
                &g_z,
            ),
        };
        if spec.residual {
            for (g, r) in g_assembled.iter_mut().zip(&g_out) {
                *g += r;
            }
        }

        let in_shape = &plan.activations[j];
        let main_len = match spec.kind {
            BlockKind::Dense | BlockKind::Conv2d => in_shape.iter().product(),
            BlockKind::Downsample => in_shape[0] * (in_shape[1] / 2) * (in_shape[2] / 2),
            BlockKind::Upsample => in_shape[0] * in_shape[1] * in_shape[2] * 4,
        };
        if let Some(s) = spec.skip {
            for (d, g) in grad_act[s].iter_mut().zip(&g_assembled[main_len..]) {
                *d += g;
            }
        }
        g_assembled.truncate(main_len);
        let g_main = match spec.kind {
            BlockKind::Dense | BlockKind::Conv2d => g_assembled,
            BlockKind::Downsample => kernels::avgpool2_backward(&g_assembled, in_shape[0], in_shape[1], in_shape[2]),
            BlockKind::Upsample => kernels::upsample2_backward(&g_assembled, in_shape[0], in_shape[1], in_shape[2]),
        };
        for (d, g) in grad_act[j].iter_mut().zip(&g_main) {
            *d += g;
        }

        blocks.push(BlockParams {
            weight: Tensor::new(params.weight.shape().to_vec(), g_w)?,
            bias: Tensor::new(params.bias.shape().to_vec(), g_b)?,
            slope: match g_slope {
                Some(gs) => Some(Tensor::new(vec![gs.len()], gs)?),
                None => None,
            },
        });
    }
    blocks.reverse();
    Ok(PathGradients { path: path.clone(), blocks })
}
