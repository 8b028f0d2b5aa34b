use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path as FsPath, PathBuf};

use super::synthetic::SyntheticTaskSpec;
use crate::corruption::CorruptionKind;
use crate::ensemble::{DEFAULT_BAND_THRESHOLDS, DEFAULT_PATH_BUDGET};
use crate::error::{Error, Result};
use crate::metrics::{DEFAULT_CONTOUR_THRESHOLD, DEFAULT_ERROR_THRESHOLD, DEFAULT_UNCERTAINTY_THRESHOLD};
use crate::model::Architecture;
use crate::pruning::MetricKind;
use crate::training::{LossKind, TrainConfig};

/// Current config schema version.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Continuous image-to-image regression (median / std).
    Synthesis,
    /// Per-pixel classification (majority vote / disagreement).
    Segmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: String,
    pub width: usize,
    /// Candidates per position after stacking.
    pub counts: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { preset: "unet7".into(), width: 8, counts: vec![2; 7] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Paths evaluated; the full pool is used when it is no larger.
    pub path_budget: usize,
    /// Uncertainty band edges in HU-equivalent units.
    pub band_thresholds: [f64; 3],
    /// Bins of the voxel error-uncertainty curve; defaults to N + 1 for
    /// segmentation (N = pool size) and 10 otherwise.
    pub bins: Option<usize>,
    /// Write fused / uncertainty / band maps per test case.
    pub write_maps: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            path_budget: DEFAULT_PATH_BUDGET,
            band_thresholds: DEFAULT_BAND_THRESHOLDS,
            bins: None,
            write_maps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneConfig {
    pub enabled: bool,
    pub keep: Vec<usize>,
    /// Defaults to MAE for synthesis and Dice for segmentation.
    pub metric: Option<MetricKind>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { enabled: false, keep: vec![1; 7], metric: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub enabled: bool,
    pub levels: Vec<CorruptionKind>,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            enabled: true,
            levels: [0.0, 0.05, 0.1, 0.2].iter().map(|&sigma| CorruptionKind::Gaussian { sigma }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// HU-equivalent thresholds for the overlap analysis.
    pub error_threshold: f64,
    pub uncertainty_threshold: f64,
    /// Disagreement threshold for segmentation boundary contours.
    pub contour_threshold: f64,
    /// Body mask threshold as a fraction of the clean input's range. When
    /// set, case MAE, case mean uncertainty and the voxel correlation are
    /// computed inside the mask.
    pub body_fraction: Option<f64>,
    /// Intensity window the normalized [0, 1] outputs represent.
    pub output_range: (f64, f64),
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            error_threshold: DEFAULT_ERROR_THRESHOLD,
            uncertainty_threshold: DEFAULT_UNCERTAINTY_THRESHOLD,
            contour_threshold: DEFAULT_CONTOUR_THRESHOLD,
            body_fraction: None,
            output_range: super::synthetic::CT_RANGE,
        }
    }
}

impl AnalysisConfig {
    /// Convert a HU-equivalent quantity to normalized output units.
    pub fn to_normalized(&self, v: f64) -> f64 {
        v / (self.output_range.1 - self.output_range.0)
    }
}

/// Everything needed to reproduce one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub task: Task,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub data: SyntheticTaskSpec,
    pub model: ModelConfig,
    pub base: TrainConfig,
    pub diversify: TrainConfig,
    /// Also diversify a snapshot of the template taken after this many epochs.
    /// Absent means no snapshot.
    #[serde(default)]
    pub early_stop_epochs: Option<usize>,
    pub eval: EvalConfig,
    pub prune: PruneConfig,
    pub corruption: CorruptionConfig,
    pub analysis: AnalysisConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::synthesis()
    }
}

impl ExperimentConfig {
    /// 32×32 synthesis: 200 base epochs, 100 diversification epochs, A = 2.
    pub fn synthesis() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            task: Task::Synthesis,
            seed: 0,
            out_dir: None,
            data: SyntheticTaskSpec::default(),
            model: ModelConfig::default(),
            base: TrainConfig { epochs: 200, learning_rate: 0.05, ..TrainConfig::default() },
            diversify: TrainConfig { epochs: 100, learning_rate: 0.02, batch_size: 1, ..TrainConfig::default() },
            early_stop_epochs: Some(50),
            eval: EvalConfig::default(),
            prune: PruneConfig::default(),
            corruption: CorruptionConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }

    /// 32×32, 4-class segmentation with cross-entropy.
    pub fn segmentation() -> Self {
        let mut c = Self::synthesis();
        c.task = Task::Segmentation;
        c.base.loss_kind = LossKind::CrossEntropy;
        c.base.learning_rate = 0.1;
        c.diversify.loss_kind = LossKind::CrossEntropy;
        c.diversify.learning_rate = 0.05;
        c.early_stop_epochs = None;
        c.corruption.enabled = false;
        c.analysis.body_fraction = None;
        c
    }

    /// Tiny 16×16 run with a 3-position model, for smoke tests.
    pub fn smoke() -> Self {
        let mut c = Self::synthesis();
        c.data = SyntheticTaskSpec { size: 16, n_train: 8, n_val: 4, n_test: 4, ..SyntheticTaskSpec::default() };
        c.model = ModelConfig { preset: "unet3".into(), width: 4, counts: vec![2, 2, 2] };
        c.base.epochs = 2;
        c.diversify.epochs = 2;
        c.early_stop_epochs = Some(1);
        c.prune = PruneConfig { enabled: true, keep: vec![1, 1, 1], metric: None };
        c.corruption.levels = vec![CorruptionKind::Gaussian { sigma: 0.0 }, CorruptionKind::Gaussian { sigma: 0.1 }];
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "synthesis" => Ok(Self::synthesis()),
            "segmentation" => Ok(Self::segmentation()),
            "smoke" => Ok(Self::smoke()),
            other => Err(Error::Configuration(format!("unknown experiment preset `{other}`"))),
        }
    }

    pub fn in_channels(&self) -> usize {
        1
    }

    pub fn out_channels(&self) -> usize {
        match self.task {
            Task::Synthesis => 1,
            Task::Segmentation => self.data.classes,
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::preset(
            &self.model.preset,
            self.data.size,
            self.in_channels(),
            self.model.width,
            self.out_channels(),
        )
    }

    pub fn metric(&self) -> MetricKind {
        self.prune.metric.unwrap_or(match self.task {
            Task::Synthesis => MetricKind::Mae,
            Task::Segmentation => MetricKind::Dice,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Configuration(m));
        if self.version != CONFIG_VERSION {
            return cfg_err(format!("config version {} is not supported (expected {CONFIG_VERSION})", self.version));
        }
        self.data.validate()?;
        self.base.validate()?;
        self.diversify.validate()?;
        let arch = self.architecture()?;
        let p = arch.positions();
        if self.model.counts.len() != p || self.model.counts.contains(&0) {
            return cfg_err(format!(
                "model.counts {:?} must give one positive count per position ({p})",
                self.model.counts
            ));
        }
        if self.prune.enabled {
            if self.prune.keep.len() != p {
                return cfg_err(format!("prune.keep needs {p} entries"));
            }
            for (j, (&k, &a)) in self.prune.keep.iter().zip(&self.model.counts).enumerate() {
                if k == 0 || k > a {
                    return cfg_err(format!("prune.keep[{j}] = {k} outside 1..={a}"));
                }
            }
        }
        if let Some(e) = self.early_stop_epochs {
            if e == 0 || e > self.base.epochs {
                return cfg_err(format!("early_stop_epochs = {e} must be within 1..={}", self.base.epochs));
            }
        }
        if self.eval.path_budget == 0 {
            return cfg_err("eval.path_budget must be positive".into());
        }
        let bands = self.eval.band_thresholds;
        if !(bands[0] < bands[1] && bands[1] < bands[2]) {
            return cfg_err(format!("eval.band_thresholds {bands:?} must increase"));
        }
        let needs_ce = self.task == Task::Segmentation;
        for (name, t) in [("base", &self.base), ("diversify", &self.diversify)] {
            if needs_ce != (t.loss_kind == LossKind::CrossEntropy) {
                return cfg_err(format!("{name}.loss_kind does not suit task {:?}", self.task));
            }
        }
        if self.analysis.output_range.1 <= self.analysis.output_range.0 {
            return cfg_err("analysis.output_range must be increasing".into());
        }
        if let Some(f) = self.analysis.body_fraction {
            if !(0.0..=1.0).contains(&f) {
                return cfg_err(format!("analysis.body_fraction = {f} outside [0, 1]"));
            }
        }
        for l in &self.corruption.levels {
            l.validate()?;
        }
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Configuration(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the JSON form; stable across field order in the file.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["synthesis", "segmentation", "smoke"] {
            ExperimentConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn toml_roundtrip() {
        let c = ExperimentConfig::smoke();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_rejected() {
        let s = format!("{}\nbogus = 1\n", ExperimentConfig::smoke().to_toml());
        assert!(ExperimentConfig::from_toml(&s).is_err());
    }

    #[test]
    fn version_checked() {
        let mut c = ExperimentConfig::smoke();
        c.version = 99;
        assert!(matches!(c.validate(), Err(Error::Configuration(_))));
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = ExperimentConfig::from_toml("task = \"synthesis\"\nseed = 7\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.model.counts, vec![2; 7]);
    }
}
