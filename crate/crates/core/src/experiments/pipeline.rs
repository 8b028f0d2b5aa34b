use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use super::config::{ExperimentConfig, Task};
use super::io::{fmt_f64, sha256_file, write_csv, write_dataset, write_grid, write_pbm, write_pgm, write_text};
use super::synthetic::{gen_segmentation_split, gen_synthesis_split};
use crate::corruption::{corruption_sweep, kspace_mask, CorruptionKind};
use crate::ensemble::{classify_uncertainty_bands, evaluate_pool_with, fuse, fuse_logits, FusionReport, ModeKind};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::metrics::{
    body_mask, boundary_contour, case_correlation, image_metrics, overlap_analysis, voxel_correlation,
    CorrelationReport, OverlapReport,
};
use crate::model::{budget_pool, predict, PathPool, StackedModel};
use crate::numerics::{Rng, Tensor};
use crate::pruning::{prune, PruneReport};
use crate::training::{argmax_channels, diversify, train_template_with, Dataset, LossHistory, Split, TrainConfig};

pub const MANIFEST_FORMAT: &str = "saswise-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Column orders of the CSV reports.
pub const SYNTHESIS_CASE_COLUMNS: [&str; 8] =
    ["case", "template_mae", "mae", "rmse", "ssim", "psnr", "acutance", "mean_uncertainty"];
pub const SEGMENTATION_CASE_COLUMNS: [&str; 5] =
    ["case", "template_dice", "dice", "mean_uncertainty", "contour_fraction"];
pub const CORRELATION_COLUMNS: [&str; 4] = ["level", "pearson_r", "r_squared", "n"];
pub const CURVE_COLUMNS: [&str; 2] = ["bin_center", "mean_error"];
pub const OVERLAP_COLUMNS: [&str; 5] = ["case", "dice_low", "dice_high", "iou_low", "iou_high"];
pub const CORRUPTION_COLUMNS: [&str; 9] = [
    "level_index",
    "kind",
    "level",
    "sampling_fraction",
    "template_metric",
    "ensemble_metric",
    "mean_uncertainty",
    "voxel_r",
    "case_r",
];
pub const PRUNE_COLUMNS: [&str; 4] = ["position", "candidate", "mean_score", "kept_rank"];

// RNG stream ids, combined with the experiment seed.
const STREAM_INIT: u64 = 0x1000;
const STREAM_BASE: u64 = 0x2000;
const STREAM_DIVERSIFY: u64 = 0x3000;
const STREAM_POOL: u64 = 0x5000;
pub(crate) const STREAM_CORRUPT: u64 = 0x6000;

fn derived(cfg: &TrainConfig, seed: u64, stream: u64) -> TrainConfig {
    TrainConfig { seed: Rng::for_stream(seed ^ cfg.seed, stream).next_u64(), ..cfg.clone() }
}

/// Per-case evaluation row. `metric` is MAE (synthesis) or mean foreground
/// Dice (segmentation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: usize,
    pub template_metric: f64,
    pub metric: f64,
    /// Synthesis only: rmse, ssim, psnr, acutance of the fused output.
    pub image: Option<[f64; 4]>,
    pub mean_uncertainty: f64,
    /// Segmentation only: fraction of pixels on the disagreement contour.
    pub contour_fraction: Option<f64>,
    pub overlap: OverlapReport,
}

/// Evaluation of one model variant over one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub paths: usize,
    pub cases: Vec<CaseResult>,
    pub template_metric: f64,
    pub ensemble_metric: f64,
    pub mean_uncertainty: f64,
    pub voxel: Option<CorrelationReport>,
    pub case: Option<CorrelationReport>,
}

impl EvalSummary {
    pub fn voxel_r(&self) -> f64 {
        self.voxel.as_ref().map_or(f64::NAN, |c| c.pearson_r)
    }

    pub fn case_r(&self) -> f64 {
        self.case.as_ref().map_or(f64::NAN, |c| c.pearson_r)
    }
}

/// Fused outputs and maps of one evaluation, kept for writing.
pub struct EvalOutputs {
    pub summary: EvalSummary,
    pub fusions: Vec<FusionReport>,
    pub bands: Vec<Tensor>,
    pub contours: Vec<Tensor>,
}

fn mean_of(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn seg_dice(labels: &Tensor, truth: &Tensor, classes: usize) -> Result<f64> {
    let labels = labels.clone().reshape(truth.shape())?;
    let mut total = 0.0;
    for c in 1..classes {
        let a = truth.map(|v| (v == c as f64) as u8 as f64);
        let b = labels.map(|v| (v == c as f64) as u8 as f64);
        total += crate::metrics::dice(&a, &b)?;
    }
    Ok(total / (classes - 1) as f64)
}

/// Treat `UndefinedCorrelation` as "no value"; other errors propagate.
fn optional_corr(r: Result<CorrelationReport>) -> Result<Option<CorrelationReport>> {
    match r {
        Ok(c) => Ok(Some(c)),
        Err(Error::UndefinedCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Body masks of the clean inputs, when the config asks for them.
pub fn body_masks(cfg: &ExperimentConfig, clean: &Dataset) -> Result<Option<Vec<Tensor>>> {
    cfg.analysis.body_fraction.map(|f| clean.iter().map(|s| body_mask(&s.x, f)).collect()).transpose()
}

fn masked_mean(t: &Tensor, mask: Option<&Tensor>) -> f64 {
    match mask {
        None => t.mean(),
        Some(m) => {
            let (mut sum, mut n) = (0.0, 0usize);
            for (v, k) in t.data().iter().zip(m.data()) {
                if *k != 0.0 {
                    sum += v;
                    n += 1;
                }
            }
            if n == 0 {
                t.mean()
            } else {
                sum / n as f64
            }
        }
    }
}

/// Evaluate `model` over every sample of `data` with the path pool `pool`,
/// comparing against the single-path `template`.
///
/// `masks` (one per sample, usually from [`body_masks`] of the clean inputs)
/// restrict the synthesis case MAE, the case mean uncertainty and the voxel
/// correlation to the body.
pub fn evaluate_dataset(
    cfg: &ExperimentConfig,
    template: &StackedModel,
    model: &StackedModel,
    pool: &PathPool,
    data: &Dataset,
    masks: Option<&[Tensor]>,
    exec: Exec,
) -> Result<EvalOutputs> {
    if let Some(m) = masks {
        if m.len() != data.len() {
            return Err(Error::Contract(format!("{} masks for {} samples", m.len(), data.len())));
        }
    }
    let a = &cfg.analysis;
    let bands_thr = cfg.eval.band_thresholds.map(|t| a.to_normalized(t));
    let tpath = template.template_path();
    let mut cases = Vec::with_capacity(data.len());
    let (mut fusions, mut bands, mut contours) = (Vec::new(), Vec::new(), Vec::new());
    let (mut err_maps, mut unc_maps) = (Vec::new(), Vec::new());

    for (i, s) in data.iter().enumerate() {
        let mask = masks.map(|m| &m[i]);
        let rp = evaluate_pool_with(model, &s.x, pool, exec)?;
        let t_out = predict(template, &s.x, &tpath)?;
        let case = match cfg.task {
            Task::Synthesis => {
                let f = fuse(&rp, ModeKind::Continuous)?;
                let m = image_metrics(&f.fused, &s.y, 1.0)?;
                let err = f.fused.zip_map(&s.y, |p, t| (p - t).abs());
                let t_mae = masked_mean(&t_out.zip_map(&s.y, |p, t| (p - t).abs()), mask);
                let mae = masked_mean(&err, mask);
                let overlap = overlap_analysis(
                    &err,
                    &f.uncertainty,
                    a.to_normalized(a.error_threshold),
                    a.to_normalized(a.uncertainty_threshold),
                )?;
                bands.push(classify_uncertainty_bands(&f.uncertainty, bands_thr)?);
                err_maps.push(err);
                unc_maps.push(f.uncertainty.clone());
                let c = CaseResult {
                    case: i,
                    template_metric: t_mae,
                    metric: mae,
                    image: Some([m.rmse, m.ssim, m.psnr, m.acutance]),
                    mean_uncertainty: masked_mean(&f.uncertainty, mask),
                    contour_fraction: None,
                    overlap,
                };
                fusions.push(f);
                c
            }
            Task::Segmentation => {
                let classes = cfg.data.classes;
                let f = fuse_logits(&rp)?;
                let dice = seg_dice(&f.fused, &s.y, classes)?;
                let t_dice = seg_dice(&argmax_channels(&t_out)?, &s.y, classes)?;
                let err = f.fused.zip_map(&s.y, |p, t| (p != t) as u8 as f64);
                let contour = boundary_contour(&f.uncertainty, a.contour_threshold);
                let overlap = overlap_analysis(&err, &f.uncertainty, 0.5, a.contour_threshold)?;
                err_maps.push(err);
                unc_maps.push(f.uncertainty.clone());
                let c = CaseResult {
                    case: i,
                    template_metric: t_dice,
                    metric: dice,
                    image: None,
                    mean_uncertainty: masked_mean(&f.uncertainty, mask),
                    contour_fraction: Some(contour.mean()),
                    overlap,
                };
                contours.push(contour);
                fusions.push(f);
                c
            }
        };
        cases.push(case);
    }

    let bins = cfg.eval.bins.unwrap_or(match cfg.task {
        Task::Synthesis => 10,
        Task::Segmentation => pool.len() + 1,
    });
    let voxel = optional_corr(voxel_correlation(&err_maps, &unc_maps, bins, masks))?;
    let unc: Vec<f64> = cases.iter().map(|c| c.mean_uncertainty).collect();
    let met: Vec<f64> = cases.iter().map(|c| c.metric).collect();
    let case = if cases.len() >= 3 { optional_corr(case_correlation(&unc, &met))? } else { None };
    let summary = EvalSummary {
        paths: pool.len(),
        template_metric: mean_of(cases.iter().map(|c| c.template_metric)),
        ensemble_metric: mean_of(cases.iter().map(|c| c.metric)),
        mean_uncertainty: mean_of(unc.iter().copied()),
        cases,
        voxel,
        case,
    };
    Ok(EvalOutputs { summary, fusions, bands, contours })
}

/// Collects written files for the manifest.
pub(crate) struct Writer {
    pub(crate) root: PathBuf,
    pub(crate) files: Vec<PathBuf>,
}

impl Writer {
    pub(crate) fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(d) = p.parent() {
            fs::create_dir_all(d)?;
        }
        Ok(p)
    }

    pub(crate) fn record(&mut self, p: PathBuf) {
        self.files.push(p);
    }

    pub(crate) fn csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let p = self.path(rel)?;
        write_csv(&p, header, rows)?;
        self.record(p);
        Ok(())
    }

    pub(crate) fn json<T: Serialize>(&mut self, rel: &str, v: &T) -> Result<()> {
        let p = self.path(rel)?;
        write_text(&p, &serde_json::to_string_pretty(v).expect("report serializes"))?;
        self.record(p);
        Ok(())
    }

    pub(crate) fn history(&mut self, rel: &str, h: &LossHistory) -> Result<()> {
        let p = self.path(rel)?;
        h.write_csv(fs::File::create(&p)?)?;
        self.record(p);
        Ok(())
    }

    pub(crate) fn checkpoint(&mut self, rel: &str, m: &StackedModel, hash: &str) -> Result<()> {
        let p = self.path(rel)?;
        m.save(&p, Some(hash.to_string()))?;
        self.record(p);
        Ok(())
    }

    pub(crate) fn dataset(&mut self, rel: &str, d: &Dataset) -> Result<()> {
        let p = self.path(&format!("{rel}/dataset.json"))?;
        let files = write_dataset(p.parent().expect("dataset dir"), d)?;
        self.files.extend(files);
        Ok(())
    }
}

fn case_rows(task: Task, s: &EvalSummary) -> (Vec<&'static str>, Vec<Vec<String>>) {
    match task {
        Task::Synthesis => (
            SYNTHESIS_CASE_COLUMNS.to_vec(),
            s.cases
                .iter()
                .map(|c| {
                    let im = c.image.unwrap_or([f64::NAN; 4]);
                    vec![
                        c.case.to_string(),
                        fmt_f64(c.template_metric),
                        fmt_f64(c.metric),
                        fmt_f64(im[0]),
                        fmt_f64(im[1]),
                        fmt_f64(im[2]),
                        fmt_f64(im[3]),
                        fmt_f64(c.mean_uncertainty),
                    ]
                })
                .collect(),
        ),
        Task::Segmentation => (
            SEGMENTATION_CASE_COLUMNS.to_vec(),
            s.cases
                .iter()
                .map(|c| {
                    vec![
                        c.case.to_string(),
                        fmt_f64(c.template_metric),
                        fmt_f64(c.metric),
                        fmt_f64(c.mean_uncertainty),
                        fmt_f64(c.contour_fraction.unwrap_or(f64::NAN)),
                    ]
                })
                .collect(),
        ),
    }
}

fn corr_row(level: &str, c: &Option<CorrelationReport>) -> Vec<String> {
    match c {
        Some(c) => vec![level.into(), fmt_f64(c.pearson_r), fmt_f64(c.r_squared), c.n.to_string()],
        None => vec![level.into(), "nan".into(), "nan".into(), "0".into()],
    }
}

/// Fused, uncertainty and band grids plus previews under `{dir}/maps/`.
pub(crate) fn write_maps(w: &mut Writer, dir: &str, cfg: &ExperimentConfig, out: &EvalOutputs) -> Result<()> {
    for (i, f) in out.fusions.iter().enumerate() {
        for (name, t) in [("fused", &f.fused), ("uncertainty", &f.uncertainty)] {
            let p = w.path(&format!("{dir}/maps/{name}_{i:04}.fgrid"))?;
            write_grid(&p, t)?;
            w.record(p);
        }
        let p = w.path(&format!("{dir}/maps/fused_{i:04}.pgm"))?;
        let hi = match cfg.task {
            Task::Synthesis => 1.0,
            Task::Segmentation => (cfg.data.classes - 1) as f64,
        };
        write_pgm(&p, &f.fused, 0.0, hi)?;
        w.record(p);
    }
    for (i, b) in out.bands.iter().enumerate() {
        let p = w.path(&format!("{dir}/maps/bands_{i:04}.fgrid"))?;
        write_grid(&p, b)?;
        w.record(p);
    }
    for (i, c) in out.contours.iter().enumerate() {
        let p = w.path(&format!("{dir}/maps/contour_{i:04}.pbm"))?;
        write_pbm(&p, c)?;
        w.record(p);
    }
    Ok(())
}

pub(crate) fn write_eval(
    w: &mut Writer,
    dir: &str,
    cfg: &ExperimentConfig,
    out: &EvalOutputs,
    maps: bool,
) -> Result<()> {
    let s = &out.summary;
    let (cols, rows) = case_rows(cfg.task, s);
    w.csv(&format!("{dir}/cases.csv"), &cols, &rows)?;
    w.csv(
        &format!("{dir}/correlation.csv"),
        &CORRELATION_COLUMNS,
        &[corr_row("voxel", &s.voxel), corr_row("case", &s.case)],
    )?;
    if let Some(v) = &s.voxel {
        let rows: Vec<Vec<String>> =
            v.bin_centers.iter().zip(&v.bin_mean_error).map(|(c, e)| vec![fmt_f64(*c), fmt_f64(*e)]).collect();
        w.csv(&format!("{dir}/curve.csv"), &CURVE_COLUMNS, &rows)?;
    }
    let rows: Vec<Vec<String>> = s
        .cases
        .iter()
        .map(|c| {
            let o = &c.overlap;
            vec![c.case.to_string(), fmt_f64(o.dice_low), fmt_f64(o.dice_high), fmt_f64(o.iou_low), fmt_f64(o.iou_high)]
        })
        .collect();
    w.csv(&format!("{dir}/overlap.csv"), &OVERLAP_COLUMNS, &rows)?;
    if maps {
        write_maps(w, dir, cfg, out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub completed_stages: Vec<String>,
    pub failed_stage: Option<String>,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let m: Manifest =
            serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest {} v{}", m.format, m.version)));
        }
        if m.config.hash() != m.config_hash {
            return Err(Error::Format("manifest config hash mismatch".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionLevelSummary {
    pub kind: CorruptionKind,
    pub sampling_fraction: Option<f64>,
    pub eval: EvalSummary,
}

/// Everything a pipeline run produced, in memory.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub out_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub config_hash: String,
    pub base_history: LossHistory,
    pub diversify_history: LossHistory,
    pub full: EvalSummary,
    pub early: Option<EvalSummary>,
    pub pruned: Option<(PruneReport, EvalSummary)>,
    pub corruption: Vec<CorruptionLevelSummary>,
    pub files: Vec<PathBuf>,
}

/// Train, validation and test splits for `cfg`.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<[Dataset; 3]> {
    let gen = |split| match cfg.task {
        Task::Synthesis => gen_synthesis_split(&cfg.data, cfg.seed, split),
        Task::Segmentation => gen_segmentation_split(&cfg.data, cfg.seed, split),
    };
    Ok([gen(Split::Train)?, gen(Split::Val)?, gen(Split::Test)?])
}

/// Untrained template with the configured architecture.
pub fn initial_template(cfg: &ExperimentConfig) -> Result<StackedModel> {
    StackedModel::build_template(cfg.architecture()?, &mut Rng::for_stream(cfg.seed, STREAM_INIT))
}

pub fn base_train_config(cfg: &ExperimentConfig) -> TrainConfig {
    derived(&cfg.base, cfg.seed, STREAM_BASE)
}

pub fn diversify_train_config(cfg: &ExperimentConfig) -> TrainConfig {
    derived(&cfg.diversify, cfg.seed, STREAM_DIVERSIFY)
}

/// The evaluation path pool for `model` under the configured budget.
pub fn eval_pool(cfg: &ExperimentConfig, model: &StackedModel) -> Result<PathPool> {
    budget_pool(model, cfg.eval.path_budget, &mut Rng::for_stream(cfg.seed, STREAM_POOL))
}

/// Run the whole experiment and write its artifacts under `out`.
///
/// On a stage failure the manifest is still written (with `failed_stage`)
/// and the error is returned wrapped in [`Error::Stage`].
pub fn run_pipeline(cfg: &ExperimentConfig, out: impl AsRef<FsPath>, exec: Exec) -> Result<PipelineReport> {
    cfg.validate()?;
    let out = out.as_ref().to_path_buf();
    fs::create_dir_all(&out)?;
    let hash = cfg.hash();
    let mut w = Writer { root: out.clone(), files: Vec::new() };
    let mut done: Vec<String> = Vec::new();
    let result = run_stages(cfg, &hash, &mut w, &mut done, exec);
    let failed = match &result {
        Err(Error::Stage { stage, .. }) => Some(stage.to_string()),
        Err(_) => Some("unknown".to_string()),
        Ok(_) => None,
    };
    let manifest_path = write_manifest(cfg, &hash, &w, done, failed, "manifest.json")?;
    let mut report = result?;
    report.out_dir = out;
    report.manifest_path = manifest_path;
    report.files = w.files;
    Ok(report)
}

fn stage<T>(name: &'static str, done: &mut Vec<String>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let v = f().map_err(|e| Error::Stage { stage: name, source: Box::new(e) })?;
    done.push(name.to_string());
    Ok(v)
}

pub(crate) fn train_body(
    cfg: &ExperimentConfig,
    train: &Dataset,
    w: &mut Writer,
    hash: &str,
) -> Result<(StackedModel, Option<StackedModel>, LossHistory)> {
    let init = initial_template(cfg)?;
    let mut snap = None;
    let out = train_template_with(&init, train, &base_train_config(cfg), |e, m| {
        if Some(e) == cfg.early_stop_epochs {
            snap = Some(m.clone());
        }
    })?;
    w.checkpoint("checkpoints/template.json", &out.model, hash)?;
    w.history("history_base.csv", &out.history)?;
    if let Some(s) = &snap {
        w.checkpoint("checkpoints/template_early.json", s, hash)?;
    }
    Ok((out.model, snap, out.history))
}

type Diversified = (StackedModel, LossHistory, Option<(StackedModel, StackedModel)>);

/// Diversify the stacked model and, when given, a stack of the early template.
pub(crate) fn diversify_body(
    cfg: &ExperimentConfig,
    stacked: &StackedModel,
    early_template: Option<&StackedModel>,
    train: &Dataset,
    w: &mut Writer,
    hash: &str,
) -> Result<Diversified> {
    let d = diversify(stacked, train, &diversify_train_config(cfg))?;
    w.checkpoint("checkpoints/diversified.json", &d.model, hash)?;
    w.history("history_diversify.csv", &d.history)?;
    let early = match early_template {
        Some(t) => {
            let s = t.clone_and_stack(&cfg.model.counts)?;
            let d = diversify(&s, train, &diversify_train_config(cfg))?;
            w.checkpoint("checkpoints/diversified_early.json", &d.model, hash)?;
            w.history("history_diversify_early.csv", &d.history)?;
            Some((t.clone(), d.model))
        }
        None => None,
    };
    Ok((d.model, d.history, early))
}

pub(crate) fn prune_body(
    cfg: &ExperimentConfig,
    model: &StackedModel,
    pool: &PathPool,
    val: &Dataset,
    w: &mut Writer,
    hash: &str,
    exec: Exec,
) -> Result<(StackedModel, PathPool, PruneReport)> {
    let (pm, ppool, report) = prune(model, val, pool, cfg.metric(), &cfg.prune.keep, exec)?;
    w.checkpoint("checkpoints/pruned.json", &pm, hash)?;
    w.json("prune_report.json", &report)?;
    let mut rows = Vec::new();
    for (j, means) in report.means.iter().enumerate() {
        for (k, m) in means.iter().enumerate() {
            let rank = report.kept[j].iter().position(|&x| x == k);
            rows.push(vec![j.to_string(), k.to_string(), fmt_f64(*m), rank.map_or(String::new(), |r| r.to_string())]);
        }
    }
    w.csv("prune.csv", &PRUNE_COLUMNS, &rows)?;
    Ok((pm, ppool, report))
}

/// Write the sampling mask of a K-space level as `{dir}/kspace_mask.pbm`.
pub(crate) fn export_kspace_mask(
    w: &mut Writer,
    dir: &str,
    kind: &CorruptionKind,
    h: usize,
    wd: usize,
) -> Result<Option<crate::corruption::KSpaceMask>> {
    let mask = kspace_mask(kind, h, wd)?;
    if let Some(m) = &mask {
        let p = w.path(&format!("{dir}/kspace_mask.pbm"))?;
        write_pbm(&p, &m.to_tensor())?;
        w.record(p);
    }
    Ok(mask)
}

fn run_stages(
    cfg: &ExperimentConfig,
    hash: &str,
    w: &mut Writer,
    done: &mut Vec<String>,
    exec: Exec,
) -> Result<PipelineReport> {
    let [train, val, test] = stage("gen-data", done, || {
        let d = generate_data(cfg)?;
        for ds in &d {
            w.dataset(&format!("data/{}", ds.split.name()), ds)?;
        }
        Ok(d)
    })?;

    let (template, early_template, base_history) = stage("train", done, || train_body(cfg, &train, w, hash))?;

    let stacked = stage("stack", done, || {
        let s = template.clone_and_stack(&cfg.model.counts)?;
        w.checkpoint("checkpoints/stacked.json", &s, hash)?;
        Ok(s)
    })?;

    let (model, diversify_history, early_model) =
        stage("diversify", done, || diversify_body(cfg, &stacked, early_template.as_ref(), &train, w, hash))?;

    let pool = eval_pool(cfg, &model)?;
    let masks = body_masks(cfg, &test)?;
    let masks = masks.as_deref();
    let (full, early) = stage("eval", done, || {
        let full = evaluate_dataset(cfg, &template, &model, &pool, &test, masks, exec)?;
        write_eval(w, "eval", cfg, &full, cfg.eval.write_maps)?;
        let early = match &early_model {
            Some((t, m)) => {
                let e = evaluate_dataset(cfg, t, m, &pool, &test, masks, exec)?;
                write_eval(w, "eval_early", cfg, &e, false)?;
                Some(e.summary)
            }
            None => None,
        };
        w.json("eval/summary.json", &full.summary)?;
        Ok((full.summary, early))
    })?;

    let pruned = if cfg.prune.enabled {
        Some(stage("prune", done, || {
            let (pm, ppool, report) = prune_body(cfg, &model, &pool, &val, w, hash, exec)?;
            let e = evaluate_dataset(cfg, &template, &pm, &ppool, &test, masks, exec)?;
            write_eval(w, "eval_pruned", cfg, &e, false)?;
            Ok((report, e.summary))
        })?)
    } else {
        None
    };

    let corruption = if cfg.corruption.enabled && !cfg.corruption.levels.is_empty() {
        stage("corrupt", done, || {
            let inputs: Vec<Tensor> = test.iter().map(|s| s.x.clone()).collect();
            let seed = Rng::for_stream(cfg.seed, STREAM_CORRUPT).next_u64();
            let sets = corruption_sweep(&inputs, &cfg.corruption.levels, seed, exec)?;
            let (h, wd) = inputs[0].hw()?;
            let mut levels = Vec::new();
            let mut rows = Vec::new();
            for (li, (kind, xs)) in cfg.corruption.levels.iter().zip(sets).enumerate() {
                let data = test.with_inputs(xs)?;
                let e = evaluate_dataset(cfg, &template, &model, &pool, &data, masks, exec)?;
                let dir = format!("corruption/level_{li:02}");
                write_eval(w, &dir, cfg, &e, false)?;
                let mask = export_kspace_mask(w, &dir, kind, h, wd)?;
                let frac = mask.map(|m| m.sampling_fraction());
                let s = e.summary;
                rows.push(vec![
                    li.to_string(),
                    kind.name().to_string(),
                    fmt_f64(kind.level()),
                    frac.map_or("nan".into(), fmt_f64),
                    fmt_f64(s.template_metric),
                    fmt_f64(s.ensemble_metric),
                    fmt_f64(s.mean_uncertainty),
                    fmt_f64(s.voxel_r()),
                    fmt_f64(s.case_r()),
                ]);
                levels.push(CorruptionLevelSummary { kind: *kind, sampling_fraction: frac, eval: s });
            }
            w.csv("corruption/summary.csv", &CORRUPTION_COLUMNS, &rows)?;
            Ok(levels)
        })?
    } else {
        Vec::new()
    };

    stage("analyze", done, || {
        let mut rows = vec![summary_row("full", &full)];
        if let Some(e) = &early {
            rows.push(summary_row("early", e));
        }
        if let Some((_, e)) = &pruned {
            rows.push(summary_row("pruned", e));
        }
        w.csv("summary.csv", &SUMMARY_COLUMNS, &rows)
    })?;

    Ok(PipelineReport {
        out_dir: PathBuf::new(),
        manifest_path: PathBuf::new(),
        config_hash: hash.to_string(),
        base_history,
        diversify_history,
        full,
        early,
        pruned,
        corruption,
        files: Vec::new(),
    })
}

pub const SUMMARY_COLUMNS: [&str; 7] =
    ["variant", "paths", "template_metric", "ensemble_metric", "mean_uncertainty", "voxel_r", "case_r"];

fn summary_row(name: &str, s: &EvalSummary) -> Vec<String> {
    vec![
        name.to_string(),
        s.paths.to_string(),
        fmt_f64(s.template_metric),
        fmt_f64(s.ensemble_metric),
        fmt_f64(s.mean_uncertainty),
        fmt_f64(s.voxel_r()),
        fmt_f64(s.case_r()),
    ]
}

pub(crate) fn write_manifest(
    cfg: &ExperimentConfig,
    hash: &str,
    w: &Writer,
    completed_stages: Vec<String>,
    failed_stage: Option<String>,
    rel: &str,
) -> Result<PathBuf> {
    let files = w
        .files
        .iter()
        .map(|p| {
            Ok(ManifestEntry {
                path: p.strip_prefix(&w.root).unwrap_or(p).to_string_lossy().replace('\\', "/"),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let m = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        config_hash: hash.to_string(),
        config: cfg.clone(),
        completed_stages,
        failed_stage,
        files,
    };
    let p = w.path(rel)?;
    write_text(&p, &serde_json::to_string_pretty(&m).expect("manifest serializes"))?;
    Ok(p)
}

/// Re-run the experiment recorded in a manifest.
pub fn rerun_manifest(manifest: impl AsRef<FsPath>, out: impl AsRef<FsPath>, exec: Exec) -> Result<PipelineReport> {
    let m = Manifest::load(manifest)?;
    run_pipeline(&m.config, out, exec)
}
