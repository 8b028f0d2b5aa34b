use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use saswise::corruption::CorruptionKind;
use saswise::experiments::*;
use saswise::pruning::MetricKind;
use saswise::training::Split;
use saswise::Exec;

#[derive(Parser, Debug)]
#[command(name = "saswise", version, about = "Sub-model ensembles from one trained network, with uncertainty maps")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (TOML). Defaults to the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in preset used when no config file is given.
    #[arg(long, global = true, default_value = "synthesis")]
    preset: String,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Disable data-parallel evaluation.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Args, Debug, Default)]
struct Select {
    /// Model checkpoint (defaults to the run directory's).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset directory (defaults to the run's split).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    select: Select,
    /// Single-path reference checkpoint.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    path_budget: Option<usize>,
    #[arg(long, value_enum)]
    fusion: Option<FusionArg>,
    #[arg(long, value_enum)]
    uncertainty: Option<UncertaintyArg>,
    /// Three increasing band thresholds in HU-equivalent units.
    #[arg(long, value_delimiter = ',')]
    bands: Option<Vec<f64>>,
    /// Output subdirectory inside the run directory.
    #[arg(long)]
    subdir: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate the synthetic train/val/test splits.
    GenData,
    /// Train the single-path template.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Clone every position of the template into candidate blocks.
    Stack {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Dual-path diversification training of the stacked model.
    Diversify {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fuse the path pool and write fused, uncertainty and band maps.
    Eval(EvalArgs),
    /// Keep the best candidates per position.
    Prune {
        #[command(flatten)]
        select: Select,
        /// Candidates kept per position, comma separated.
        #[arg(long, value_delimiter = ',')]
        keep: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
    },
    /// Corrupt a dataset at a list of levels.
    Corrupt {
        /// Dataset directory to corrupt.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Levels for `--kind`, comma separated.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        /// Spiral turns when `--kind kspace-spiral`.
        #[arg(long, default_value_t = 4)]
        turns: usize,
    },
    /// Per-case, correlation and overlap tables.
    Analyze(EvalArgs),
    /// Run every stage end to end.
    Pipeline {
        /// Re-run the experiment recorded in a manifest.
        #[arg(long)]
        from_manifest: Option<PathBuf>,
    },
    /// Print the resolved config as TOML.
    ShowConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum FusionArg {
    Median,
    Vote,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum UncertaintyArg {
    Std,
    Disagreement,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MetricArg {
    Mae,
    Dice,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Gaussian,
    Rician,
    Rayleigh,
    SaltPepper,
    KspaceRadial,
    KspaceSpiral,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

fn kind_at(kind: KindArg, level: f64, turns: usize) -> Result<CorruptionKind> {
    let count = || -> Result<usize> {
        if level < 0.0 || level.fract() != 0.0 {
            bail!("{kind:?} levels must be non-negative integers, got {level}");
        }
        Ok(level as usize)
    };
    Ok(match kind {
        KindArg::Gaussian => CorruptionKind::Gaussian { sigma: level },
        KindArg::Rician => CorruptionKind::Rician { sigma: level },
        KindArg::Rayleigh => CorruptionKind::Rayleigh { scale: level },
        KindArg::SaltPepper => CorruptionKind::SaltPepper { probability: level },
        KindArg::KspaceRadial => CorruptionKind::KspaceRadial { spokes: count()? },
        KindArg::KspaceSpiral => CorruptionKind::KspaceSpiral { turns, points_per_turn: count()? },
    })
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::preset(&c.preset)?,
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    match c.out.clone().or_else(|| cfg.out_dir.clone()) {
        Some(p) => Ok(p),
        None => bail!("no output directory: pass --out or set out_dir in the config"),
    }
}

fn inputs(select: &Select) -> StageInputs {
    StageInputs {
        checkpoint: select.checkpoint.clone(),
        data: select.data.clone(),
        split: select.split.map(Split::from),
        ..StageInputs::default()
    }
}

/// Apply eval flags to the config; fusion and uncertainty must suit the task.
fn eval_inputs(cfg: &mut ExperimentConfig, a: &EvalArgs) -> Result<StageInputs> {
    let (fusion, unc) = match cfg.task {
        Task::Synthesis => (FusionArg::Median, UncertaintyArg::Std),
        Task::Segmentation => (FusionArg::Vote, UncertaintyArg::Disagreement),
    };
    if a.fusion.is_some_and(|f| f != fusion) || a.uncertainty.is_some_and(|u| u != unc) {
        bail!("task {:?} uses {fusion:?} fusion with {unc:?} uncertainty", cfg.task);
    }
    if let Some(b) = a.path_budget {
        cfg.eval.path_budget = b;
    }
    if let Some(b) = &a.bands {
        let [t1, t2, t3] = b[..] else {
            bail!("--bands takes three thresholds, got {}", b.len());
        };
        cfg.eval.band_thresholds = [t1, t2, t3];
    }
    Ok(StageInputs { template: a.template.clone(), subdir: a.subdir.clone(), ..inputs(&a.select) })
}

fn report(out: &StageOutput) {
    println!("{}: wrote {} files, manifest {}", out.stage, out.files.len(), out.manifest.display());
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let exec = if cli.common.sequential { Exec::Sequential } else { Exec::default() };
    let mut cfg = load_config(&cli.common)?;

    match &cli.cmd {
        Cmd::ShowConfig => {
            cfg.validate()?;
            print!("{}", cfg.to_toml());
            return Ok(());
        }
        Cmd::Pipeline { from_manifest } => {
            let r = match from_manifest {
                Some(m) => {
                    let out = match &cli.common.out {
                        Some(o) => o.clone(),
                        None => bail!("--out is required with --from-manifest"),
                    };
                    rerun_manifest(m, out, exec)?
                }
                None => run_pipeline(&cfg, out_dir(&cli.common, &cfg)?, exec)?,
            };
            println!(
                "pipeline: {} paths, template {:.5}, ensemble {:.5}, voxel r {:.3}, case r {:.3}",
                r.full.paths,
                r.full.template_metric,
                r.full.ensemble_metric,
                r.full.voxel_r(),
                r.full.case_r()
            );
            println!("manifest {}", r.manifest_path.display());
            return Ok(());
        }
        _ => {}
    }

    let out = out_dir(&cli.common, &cfg)?;
    let done = match &cli.cmd {
        Cmd::GenData => stage_gen_data(&cfg, &out)?,
        Cmd::Train { data } => stage_train(&cfg, &out, &StageInputs { data: data.clone(), ..StageInputs::default() })?,
        Cmd::Stack { checkpoint } => {
            stage_stack(&cfg, &out, &StageInputs { checkpoint: checkpoint.clone(), ..StageInputs::default() })?
        }
        Cmd::Diversify { checkpoint, data } => stage_diversify(
            &cfg,
            &out,
            &StageInputs { checkpoint: checkpoint.clone(), data: data.clone(), ..StageInputs::default() },
        )?,
        Cmd::Eval(a) => {
            let i = eval_inputs(&mut cfg, a)?;
            stage_eval(&cfg, &out, &i, exec)?
        }
        Cmd::Analyze(a) => {
            let i = eval_inputs(&mut cfg, a)?;
            stage_analyze(&cfg, &out, &i, exec)?
        }
        Cmd::Prune { select, keep, metric } => {
            if let Some(k) = keep {
                cfg.prune.keep = k.clone();
            }
            if let Some(m) = metric {
                cfg.prune.metric = Some(match m {
                    MetricArg::Mae => MetricKind::Mae,
                    MetricArg::Dice => MetricKind::Dice,
                });
            }
            cfg.prune.enabled = true;
            stage_prune(&cfg, &out, &inputs(select), exec)?
        }
        Cmd::Corrupt { input, kind, levels, turns } => {
            match (kind, levels) {
                (Some(k), Some(ls)) => {
                    cfg.corruption.levels = ls.iter().map(|&l| kind_at(*k, l, *turns)).collect::<Result<_>>()?;
                }
                (None, None) => {}
                _ => bail!("--kind and --levels go together"),
            }
            stage_corrupt(&cfg, input, &out, exec)?
        }
        Cmd::ShowConfig | Cmd::Pipeline { .. } => unreachable!(),
    };
    report(&done);
    Ok(())
}
