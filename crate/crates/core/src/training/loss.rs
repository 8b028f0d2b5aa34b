use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};
use crate::numerics::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// dL/dŷ.
    pub grad: Tensor,
    /// dL/dtarget, present only when the target is not treated as constant.
    pub target_grad: Option<Tensor>,
}

/// Loss value and gradient of `y_hat` against `target`.
///
/// * `Mse`: mean squared error over all elements; `target` has `y_hat`'s shape.
/// * `CrossEntropy`: `y_hat` holds class logits on axis 0 (`[C, …]`). The
///   target is either a probability map of the same shape (one-hot or soft)
///   or a label map with one integer class index per spatial element.
///   The loss is averaged over spatial elements.
pub fn loss_and_grad(kind: LossKind, y_hat: &Tensor, target: &Tensor, treat_target_constant: bool) -> Result<LossGrad> {
    match kind {
        LossKind::Mse => mse(y_hat, target, treat_target_constant),
        LossKind::CrossEntropy => cross_entropy(y_hat, target, treat_target_constant),
    }
}

fn mse(y_hat: &Tensor, target: &Tensor, constant: bool) -> Result<LossGrad> {
    y_hat.ensure_same_shape(target, "mse")?;
    let n = y_hat.len() as f64;
    let grad = y_hat.zip_map(target, |p, t| 2.0 * (p - t) / n);
    let mut loss = 0.0;
    for (p, t) in y_hat.data().iter().zip(target.data()) {
        loss += (p - t) * (p - t);
    }
    loss /= n;
    let target_grad = (!constant).then(|| grad.map(|g| -g));
    Ok(LossGrad { loss, grad, target_grad })
}

/// Channel-axis softmax of a `[C, …]` logit tensor.
pub fn softmax_channels(logits: &Tensor) -> Result<Tensor> {
    let c = *logits.shape().first().ok_or_else(|| arg_err!("logits need a channel axis"))?;
    let plane = logits.len() / c;
    let x = logits.data();
    let mut out = vec![0.0; x.len()];
    for i in 0..plane {
        let m = (0..c).map(|k| x[k * plane + i]).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for k in 0..c {
            let e = (x[k * plane + i] - m).exp();
            out[k * plane + i] = e;
            z += e;
        }
        for k in 0..c {
            out[k * plane + i] /= z;
        }
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Per-element argmax over the channel axis; ties pick the lower class.
pub fn argmax_channels(logits: &Tensor) -> Result<Tensor> {
    let shape = logits.shape();
    if shape.is_empty() {
        return Err(arg_err!("logits need a channel axis"));
    }
    let c = shape[0];
    let plane = logits.len() / c;
    let x = logits.data();
    let labels: Vec<f64> = (0..plane)
        .map(|i| {
            let mut best = 0;
            for k in 1..c {
                if x[k * plane + i] > x[best * plane + i] {
                    best = k;
                }
            }
            best as f64
        })
        .collect();
    let out_shape = if shape.len() > 1 { shape[1..].to_vec() } else { vec![1] };
    Tensor::new(out_shape, labels)
}

fn cross_entropy(logits: &Tensor, target: &Tensor, constant: bool) -> Result<LossGrad> {
    let shape = logits.shape();
    if shape.is_empty() {
        return Err(arg_err!("cross entropy logits need a channel axis"));
    }
    let c = shape[0];
    let plane = logits.len() / c;
    let probs = softmax_channels(logits)?;
    let p = probs.data();
    let soft: Vec<f64> = if target.shape() == shape {
        target.data().to_vec()
    } else if target.len() == plane {
        let mut onehot = vec![0.0; logits.len()];
        for (i, &lab) in target.data().iter().enumerate() {
            if lab < 0.0 || lab.fract() != 0.0 || lab as usize >= c {
                return Err(arg_err!("label {lab} is not a class index in 0..{c}"));
            }
            onehot[lab as usize * plane + i] = 1.0;
        }
        onehot
    } else {
        return Err(arg_err!(
            "cross entropy target shape {:?} fits neither logits {:?} nor a label map",
            target.shape(),
            shape
        ));
    };
    let n = plane as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for i in 0..logits.len() {
        if soft[i] != 0.0 {
            loss -= soft[i] * p[i].max(f64::MIN_POSITIVE).ln();
        }
    }
    // dL/dz_k = (Σ_c t_c) p_k − t_k
    for px in 0..plane {
        let mass: f64 = (0..c).map(|k| soft[k * plane + px]).sum();
        for k in 0..c {
            let i = k * plane + px;
            grad[i] = (mass * p[i] - soft[i]) / n;
        }
    }
    let target_grad = if constant || target.shape() != shape {
        None
    } else {
        Some(Tensor::new(shape.to_vec(), p.iter().map(|&q| -q.max(f64::MIN_POSITIVE).ln() / n).collect())?)
    };
    Ok(LossGrad { loss: loss / n, grad: Tensor::new(shape.to_vec(), grad)?, target_grad })
}
