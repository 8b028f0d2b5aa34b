//! Template training and path-scoped diversification of a stacked model.

mod loss;

pub use loss::{argmax_channels, loss_and_grad, softmax_channels, LossGrad, LossKind};

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{arg_err, Error, Result};
use crate::model::{backward_path, forward_path, predict, Path, PathGradients, StackedModel};
use crate::numerics::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Weight of the consistency term during diversification.
    pub alpha: f64,
    pub loss_kind: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, batch_size: 4, learning_rate: 0.05, alpha: 1.0, loss_kind: LossKind::Mse, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(arg_err!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.alpha >= 0.0) {
            return Err(arg_err!("alpha must be nonnegative, got {}", self.alpha));
        }
        if self.batch_size == 0 {
            return Err(arg_err!("batch_size must be positive"));
        }
        Ok(())
    }

    /// Preset: template trained for a short budget (50 epochs).
    pub fn early_stop() -> Self {
        TrainConfig { epochs: 50, ..Self::default() }
    }

    /// Preset: full 200-epoch template training.
    pub fn full_train() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub y: Tensor,
}

/// Paired samples sharing one input shape and one target shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    pub split: Split,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, split: Split) -> Result<Self> {
        if let Some(first) = samples.first() {
            for (i, s) in samples.iter().enumerate() {
                if !s.x.same_shape(&first.x) || !s.y.same_shape(&first.y) {
                    return Err(arg_err!("sample {i} shape differs from sample 0"));
                }
            }
        }
        Ok(Dataset { samples, split })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    /// Same targets, inputs replaced by `inputs`.
    pub fn with_inputs(&self, inputs: Vec<Tensor>) -> Result<Dataset> {
        if inputs.len() != self.samples.len() {
            return Err(arg_err!("{} inputs for {} samples", inputs.len(), self.samples.len()));
        }
        let samples = inputs.into_iter().zip(&self.samples).map(|(x, s)| Sample { x, y: s.y.clone() }).collect();
        Dataset::new(samples, self.split)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based epoch number.
    pub epoch: usize,
    pub acc_loss: f64,
    pub cons_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
}

impl LossHistory {
    pub fn last(&self) -> Option<&EpochLoss> {
        self.epochs.last()
    }

    /// CSV with header `epoch,acc_loss,cons_loss`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "acc_loss", "cons_loss"]).map_err(csv_err)?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), format!("{:.17e}", e.acc_loss), format!("{:.17e}", e.cons_loss)])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: StackedModel,
    pub history: LossHistory,
}

fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size)
}

/// Supervised SGD on the template (all `A_j = 1`) for `cfg.epochs` epochs.
pub fn train_template(model: &StackedModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_template_with(model, data, cfg, |_, _| {})
}

/// [`train_template`] with a callback after every epoch (`epoch` is 1-based).
pub fn train_template_with(
    model: &StackedModel,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &StackedModel),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if !model.is_template() {
        return Err(arg_err!("train_template needs A_j = 1 everywhere, got {:?}", model.counts()));
    }
    if data.is_empty() {
        return Err(arg_err!("cannot train on an empty dataset"));
    }
    let mut model = model.clone();
    let mut rng = Rng::new(cfg.seed);
    let path = model.template_path();
    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for (step, batch) in batches(&order, cfg.batch_size).enumerate() {
            let mut grads = PathGradients::zeros(&model, &path)?;
            let mut batch_loss = 0.0;
            for &i in batch {
                let s = data.get(i);
                let (y_hat, trace) = forward_path(&model, &s.x, &path)?;
                let lg = loss_and_grad(cfg.loss_kind, &y_hat, &s.y, true)?;
                batch_loss += lg.loss;
                let g = backward_path(&model, &trace, &lg.grad, &path)?;
                grads.accumulate(&g, 1.0 / batch.len() as f64)?;
            }
            if !batch_loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, acc_loss: batch_loss, cons_loss: 0.0 });
            }
            total += batch_loss;
            model.apply_sgd(&grads, cfg.learning_rate)?;
        }
        history.epochs.push(EpochLoss { epoch, acc_loss: total / data.len() as f64, cons_loss: 0.0 });
        on_epoch(epoch, &model);
    }
    Ok(TrainOutcome { model, history })
}

/// Draw two distinct paths uniformly (rejection sampling for the second).
pub fn draw_path_pair(counts: &[usize], rng: &mut Rng) -> (Path, Path) {
    let draw = |rng: &mut Rng| Path::new(counts.iter().map(|&a| rng.below(a)).collect());
    let first = draw(rng);
    loop {
        let second = draw(rng);
        if second != first {
            return (first, second);
        }
    }
}

/// Target of the consistency term built from the partner path's output.
fn consistency_target(kind: LossKind, partner: &Tensor) -> Result<Tensor> {
    match kind {
        LossKind::Mse => Ok(partner.clone()),
        LossKind::CrossEntropy => softmax_channels(partner),
    }
}

/// Gradients and loss terms of one diversification step on one sample.
#[derive(Debug, Clone)]
pub struct DiversifyStep {
    pub grads: PathGradients,
    pub acc_loss: f64,
    pub cons_loss: f64,
}

/// Loss `acc(y, ŷ_ω) + α·cons(ŷ_ω, ŷ_ω′)` with `ŷ_ω′` held constant;
/// gradients flow only into the blocks of `omega`.
pub fn diversify_sample(
    model: &StackedModel,
    sample: &Sample,
    omega: &Path,
    partner: &Path,
    cfg: &TrainConfig,
) -> Result<DiversifyStep> {
    let (y_hat, trace) = forward_path(model, &sample.x, omega)?;
    let y_partner = predict(model, &sample.x, partner)?;
    let acc = loss_and_grad(cfg.loss_kind, &y_hat, &sample.y, true)?;
    let cons_target = consistency_target(cfg.loss_kind, &y_partner)?;
    let cons = loss_and_grad(cfg.loss_kind, &y_hat, &cons_target, true)?;
    let mut grad = acc.grad;
    if cfg.alpha != 0.0 {
        grad.axpy(cfg.alpha, &cons.grad);
    }
    let grads = backward_path(model, &trace, &grad, omega)?;
    Ok(DiversifyStep { grads, acc_loss: acc.loss, cons_loss: cons.loss })
}

/// Diversification training of a stacked model.
///
/// Every batch draws a path pair `(ω, ω′)` with `ω ≠ ω′` and applies one SGD
/// step to the blocks of `ω` only.
pub fn diversify(model: &StackedModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    diversify_with(model, data, cfg, |_, _| {})
}

pub fn diversify_with(
    model: &StackedModel,
    data: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, &StackedModel),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.path_count() < 2 {
        return Err(Error::Configuration(
            "diversification needs at least one position with two or more candidates".into(),
        ));
    }
    if data.is_empty() {
        return Err(arg_err!("cannot diversify on an empty dataset"));
    }
    let mut model = model.clone();
    let counts = model.counts();
    let mut rng = Rng::new(cfg.seed);
    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut acc_total, mut cons_total) = (0.0, 0.0);
        for (step, batch) in batches(&order, cfg.batch_size).enumerate() {
            let (omega, partner) = draw_path_pair(&counts, &mut rng);
            let mut grads = PathGradients::zeros(&model, &omega)?;
            let (mut acc_b, mut cons_b) = (0.0, 0.0);
            for &i in batch {
                let st = diversify_sample(&model, data.get(i), &omega, &partner, cfg)?;
                acc_b += st.acc_loss;
                cons_b += st.cons_loss;
                grads.accumulate(&st.grads, 1.0 / batch.len() as f64)?;
            }
            if !acc_b.is_finite() || !cons_b.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, acc_loss: acc_b, cons_loss: cons_b });
            }
            acc_total += acc_b;
            cons_total += cons_b;
            model.apply_sgd(&grads, cfg.learning_rate)?;
        }
        history.epochs.push(EpochLoss {
            epoch,
            acc_loss: acc_total / data.len() as f64,
            cons_loss: cons_total / data.len() as f64,
        });
        on_epoch(epoch, &model);
    }
    Ok(TrainOutcome { model, history })
}
