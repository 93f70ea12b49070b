use std::path::{Path, PathBuf};

use eegdit::augment::GoConfig;
use eegdit::classifier::ClassifierConfig;
use eegdit::diffusion::{ScheduleConfig, TrainSettings};
use eegdit::model::ModelConfig;
use eegdit::signal::{load_dataset, synth_dataset, SignalDataset, SplitSpec, SynthSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Where the original segments come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synth(SynthSpec),
    /// An SDF1 file.
    File(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synth(SynthSpec::default())
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<SignalDataset> {
        Ok(match self {
            DatasetSource::Synth(spec) => synth_dataset(spec)?,
            DatasetSource::File(path) => load_dataset(path)?,
        })
    }
}

/// How a standalone classifier run uses generated data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    #[default]
    None,
    Go,
    Append,
}

/// Everything a run needs. Every field has a default, so `{}` is a valid config.
///
/// Shape fields of `model` and `classifier` (channels, length, classes, and the
/// model's step count) are always taken from the data and the schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    /// Name written to results rows.
    pub dataset_name: String,
    pub split: SplitSpec,
    pub schedule: ScheduleConfig,
    pub model: ModelConfig,
    /// Train a class-conditional generator when the data is labeled.
    pub conditional: bool,
    /// Bound on each sampling step's implied clean signal, in scaled units.
    /// `null` samples with the plain ancestral chain.
    pub sample_clip: Option<f64>,
    /// Segments to generate; `null` generates as many as the training split holds.
    pub generated_count: Option<usize>,
    pub classifier: ClassifierConfig,
    pub go: GoConfig,
    pub diffusion_training: TrainSettings,
    pub classifier_training: TrainSettings,
    pub augmentation: AugmentMode,
    pub append_ratio: f64,
    /// Classifier seeds whose results are averaged.
    pub seeds: Vec<u64>,
    /// Master seed; every stage seed derives from it.
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            dataset_name: "synthetic".into(),
            split: SplitSpec::default(),
            schedule: ScheduleConfig::rescaled(50),
            model: ModelConfig::default(),
            conditional: true,
            sample_clip: Some(4.0),
            generated_count: None,
            classifier: ClassifierConfig::default(),
            go: GoConfig::default(),
            // Batch 16 rather than 64: at desk scale the extra optimizer steps matter more.
            diffusion_training: TrainSettings {
                epochs: 300,
                batch_size: 16,
                lr: 2e-4,
                weight_decay: 1e-6,
            },
            classifier_training: TrainSettings {
                epochs: 100,
                batch_size: 16,
                lr: 1e-3,
                weight_decay: 1e-6,
            },
            augmentation: AugmentMode::None,
            append_ratio: 1.0,
            seeds: vec![1, 2, 3, 4],
            seed: 0,
            out: PathBuf::from("runs/eegdit"),
        }
    }
}

/// Epoch count of full-scale training, quoted in reports next to the desk value.
pub const FULL_SCALE_EPOCHS: usize = 5000;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
            if e.is_io() {
                CliError::Json { path: path.display().to_string(), source: e }
            } else {
                CliError::config(format!("{}: {e}", path.display()))
            }
        })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, e: eegdit::Error| CliError::config(format!("{section}: {e}"));
        if let DatasetSource::Synth(spec) = &self.dataset {
            spec.validate().map_err(|e| wrap("dataset.synth", e))?;
        }
        self.split.validate().map_err(|e| wrap("split", e))?;
        self.schedule.build().map_err(|e| wrap("schedule", e))?;
        self.go.validate().map_err(|e| wrap("go", e))?;
        self.diffusion_training.validate().map_err(|e| wrap("diffusion_training", e))?;
        self.classifier_training.validate().map_err(|e| wrap("classifier_training", e))?;
        if let Some(b) = self.sample_clip {
            if !(b.is_finite() && b > 0.0) {
                return Err(CliError::config(format!("sample_clip {b} must be positive")));
            }
        }
        if !(self.append_ratio.is_finite() && self.append_ratio >= 0.0) {
            return Err(CliError::config(format!("append_ratio {} must be nonnegative", self.append_ratio)));
        }
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(CliError::config(format!("seeds {:?} repeat a value", self.seeds)));
        }
        if self.dataset_name.is_empty() || self.dataset_name.contains([',', '\n']) {
            return Err(CliError::config("dataset_name must be nonempty without commas or newlines"));
        }
        Ok(())
    }

    /// Generator config with shapes, classes and step count filled in from `data`.
    pub fn model_for(&self, data: &SignalDataset) -> Result<ModelConfig> {
        let (c, l) = data.shape().ok_or_else(|| CliError::config("dataset is empty"))?;
        let mut m = self.model.clone();
        m.channels = c;
        m.len = l;
        m.max_steps = self.schedule.steps;
        m.num_classes = (self.conditional && data.is_labeled()).then_some(data.num_classes());
        m.validate().map_err(|e| CliError::config(format!("model: {e}")))?;
        Ok(m)
    }

    /// Classifier config with shapes and classes filled in from `data`.
    pub fn classifier_for(&self, data: &SignalDataset) -> Result<ClassifierConfig> {
        let (c, l) = data.shape().ok_or_else(|| CliError::config("dataset is empty"))?;
        let mut k = self.classifier.clone();
        k.channels = c;
        k.len = l;
        k.num_classes = data.num_classes();
        k.validate().map_err(|e| CliError::config(format!("classifier: {e}")))?;
        Ok(k)
    }
}
