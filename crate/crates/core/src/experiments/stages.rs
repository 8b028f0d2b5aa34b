//! Single pipeline stages over a run directory.
//!
//! Every stage reads what earlier stages left in the directory (the same
//! layout [`run_pipeline`](super::run_pipeline) writes) and records its own
//! outputs in `manifests/<stage>.json`.

use std::path::{Path as FsPath, PathBuf};

use super::config::ExperimentConfig;
use super::io::{fmt_f64, read_dataset};
use super::pipeline::{
    body_masks, diversify_body, eval_pool, evaluate_dataset, export_kspace_mask, generate_data, prune_body, train_body,
    write_eval, write_manifest, write_maps, Writer, STREAM_CORRUPT,
};
use crate::corruption::corruption_sweep;
use crate::error::{arg_err, Error, Result};
use crate::exec::Exec;
use crate::model::StackedModel;
use crate::numerics::{Rng, Tensor};
use crate::training::{Dataset, Split};

pub const TEMPLATE_CHECKPOINT: &str = "checkpoints/template.json";
pub const EARLY_TEMPLATE_CHECKPOINT: &str = "checkpoints/template_early.json";
pub const STACKED_CHECKPOINT: &str = "checkpoints/stacked.json";
pub const DIVERSIFIED_CHECKPOINT: &str = "checkpoints/diversified.json";
pub const CORRUPTION_LEVEL_COLUMNS: [&str; 4] = ["level", "kind", "value", "sampling_fraction"];

/// Files one stage wrote.
#[derive(Debug, Clone)]
pub struct StageOutput {
    pub stage: &'static str,
    pub manifest: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Overrides for where a stage reads its inputs and writes its tables.
/// Unset fields fall back to the run layout.
#[derive(Debug, Clone, Default)]
pub struct StageInputs {
    /// Model checkpoint to evaluate, prune or diversify.
    pub checkpoint: Option<PathBuf>,
    /// Single-path reference checkpoint.
    pub template: Option<PathBuf>,
    /// Dataset directory.
    pub data: Option<PathBuf>,
    /// Split under `data/` when `data` is unset.
    pub split: Option<Split>,
    /// Output subdirectory for eval and analyze.
    pub subdir: Option<String>,
}

impl StageInputs {
    fn checkpoint_or(&self, out: &FsPath, rel: &str) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| out.join(rel))
    }

    fn template_or_default(&self, out: &FsPath) -> PathBuf {
        self.template.clone().unwrap_or_else(|| out.join(TEMPLATE_CHECKPOINT))
    }

    fn dataset(&self, out: &FsPath, default: Split) -> Result<Dataset> {
        let dir = match &self.data {
            Some(d) => d.clone(),
            None => out.join("data").join(self.split.unwrap_or(default).name()),
        };
        read_dataset(&dir).map_err(|e| match e {
            Error::Io(io) => Error::Configuration(format!("cannot read dataset {}: {io}", dir.display())),
            other => other,
        })
    }
}

fn load(path: &FsPath) -> Result<StackedModel> {
    StackedModel::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Checkpoint(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn run_stage(
    name: &'static str,
    cfg: &ExperimentConfig,
    out: &FsPath,
    f: impl FnOnce(&mut Writer, &str) -> Result<()>,
) -> Result<StageOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let hash = cfg.hash();
    let mut w = Writer { root: out.to_path_buf(), files: Vec::new() };
    let result = f(&mut w, &hash).map_err(|e| Error::Stage { stage: name, source: Box::new(e) });
    let (done, failed) = match &result {
        Ok(()) => (vec![name.to_string()], None),
        Err(_) => (Vec::new(), Some(name.to_string())),
    };
    let manifest = write_manifest(cfg, &hash, &w, done, failed, &format!("manifests/{name}.json"))?;
    result?;
    Ok(StageOutput { stage: name, manifest, files: w.files })
}

/// Write the train, validation and test splits under `data/`.
pub fn stage_gen_data(cfg: &ExperimentConfig, out: impl AsRef<FsPath>) -> Result<StageOutput> {
    run_stage("gen-data", cfg, out.as_ref(), |w, _| {
        for ds in &generate_data(cfg)? {
            w.dataset(&format!("data/{}", ds.split.name()), ds)?;
        }
        Ok(())
    })
}

/// Train the template on the training split.
pub fn stage_train(cfg: &ExperimentConfig, out: impl AsRef<FsPath>, inputs: &StageInputs) -> Result<StageOutput> {
    let out = out.as_ref();
    run_stage("train", cfg, out, |w, hash| {
        let train = inputs.dataset(out, Split::Train)?;
        train_body(cfg, &train, w, hash).map(|_| ())
    })
}

/// Clone each position of the trained template `model.counts[j]` times.
pub fn stage_stack(cfg: &ExperimentConfig, out: impl AsRef<FsPath>, inputs: &StageInputs) -> Result<StageOutput> {
    let out = out.as_ref();
    run_stage("stack", cfg, out, |w, hash| {
        let t = load(&inputs.checkpoint_or(out, TEMPLATE_CHECKPOINT))?;
        let s = t.clone_and_stack(&cfg.model.counts)?;
        w.checkpoint(STACKED_CHECKPOINT, &s, hash)
    })
}

/// Diversify the stacked model. When the early template exists and the
/// config asks for it, its stack is diversified too.
pub fn stage_diversify(cfg: &ExperimentConfig, out: impl AsRef<FsPath>, inputs: &StageInputs) -> Result<StageOutput> {
    let out = out.as_ref();
    run_stage("diversify", cfg, out, |w, hash| {
        let stacked = load(&inputs.checkpoint_or(out, STACKED_CHECKPOINT))?;
        let train = inputs.dataset(out, Split::Train)?;
        let early_path = out.join(EARLY_TEMPLATE_CHECKPOINT);
        let early = match cfg.early_stop_epochs {
            Some(_) if early_path.exists() => Some(load(&early_path)?),
            _ => None,
        };
        diversify_body(cfg, &stacked, early.as_ref(), &train, w, hash).map(|_| ())
    })
}

fn evaluate(
    cfg: &ExperimentConfig,
    out: &FsPath,
    inputs: &StageInputs,
    exec: Exec,
) -> Result<super::pipeline::EvalOutputs> {
    let model = load(&inputs.checkpoint_or(out, DIVERSIFIED_CHECKPOINT))?;
    let template = load(&inputs.template_or_default(out))?;
    let data = inputs.dataset(out, Split::Test)?;
    let pool = eval_pool(cfg, &model)?;
    let masks = body_masks(cfg, &data)?;
    evaluate_dataset(cfg, &template, &model, &pool, &data, masks.as_deref(), exec)
}

/// Fused outputs, uncertainty maps and band maps of the test split.
pub fn stage_eval(
    cfg: &ExperimentConfig,
    out: impl AsRef<FsPath>,
    inputs: &StageInputs,
    exec: Exec,
) -> Result<StageOutput> {
    let out = out.as_ref();
    run_stage("eval", cfg, out, |w, _| {
        let e = evaluate(cfg, out, inputs, exec)?;
        let dir = inputs.subdir.as_deref().unwrap_or("eval");
        write_maps(w, dir, cfg, &e)?;
        w.json(&format!("{dir}/summary.json"), &e.summary)
    })
}

/// Per-case, correlation and overlap tables of the test split.
pub fn stage_analyze(
    cfg: &ExperimentConfig,
    out: impl AsRef<FsPath>,
    inputs: &StageInputs,
    exec: Exec,
) -> Result<StageOutput> {
    let out = out.as_ref();
    run_stage("analyze", cfg, out, |w, _| {
        let e = evaluate(cfg, out, inputs, exec)?;
        write_eval(w, inputs.subdir.as_deref().unwrap_or("analysis"), cfg, &e, false)
    })
}

/// Prune the diversified model on the validation split.
pub fn stage_prune(
    cfg: &ExperimentConfig,
    out: impl AsRef<FsPath>,
    inputs: &StageInputs,
    exec: Exec,
) -> Result<StageOutput> {
    let out = out.as_ref();
    run_stage("prune", cfg, out, |w, hash| {
        let model = load(&inputs.checkpoint_or(out, DIVERSIFIED_CHECKPOINT))?;
        let val = inputs.dataset(out, Split::Val)?;
        let pool = eval_pool(cfg, &model)?;
        prune_body(cfg, &model, &pool, &val, w, hash, exec).map(|_| ())
    })
}

/// Corrupt the inputs of the dataset in `input` at every configured level,
/// writing one dataset per level under `out/level_NN/`. K-space levels also
/// get their sampling mask as `kspace_mask.pbm`.
pub fn stage_corrupt(
    cfg: &ExperimentConfig,
    input: impl AsRef<FsPath>,
    out: impl AsRef<FsPath>,
    exec: Exec,
) -> Result<StageOutput> {
    let input = input.as_ref();
    run_stage("corrupt", cfg, out.as_ref(), |w, _| {
        let data = read_dataset(input)?;
        let inputs: Vec<Tensor> = data.iter().map(|s| s.x.clone()).collect();
        let (h, wd) = inputs.first().ok_or_else(|| arg_err!("cannot corrupt an empty dataset"))?.hw()?;
        let seed = Rng::for_stream(cfg.seed, STREAM_CORRUPT).next_u64();
        let sets = corruption_sweep(&inputs, &cfg.corruption.levels, seed, exec)?;
        let mut rows = Vec::new();
        for (li, (kind, xs)) in cfg.corruption.levels.iter().zip(sets).enumerate() {
            let dir = format!("level_{li:02}");
            w.dataset(&dir, &data.with_inputs(xs)?)?;
            let mask = export_kspace_mask(w, &dir, kind, h, wd)?;
            rows.push(vec![
                li.to_string(),
                kind.name().to_string(),
                fmt_f64(kind.level()),
                mask.map_or("nan".into(), |m| fmt_f64(m.sampling_fraction())),
            ]);
        }
        w.csv("levels.csv", &CORRUPTION_LEVEL_COLUMNS, &rows)
    })
}
