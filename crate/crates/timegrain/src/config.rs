//! Config-driven runs: one TOML file describes the model, training,
//! datasets and task settings. Unknown keys are rejected; every default
//! is materialized into the resolved config that each run writes next to
//! its outputs, so a run directory is self-describing and re-runnable.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::SpectrumMode;
use crate::backbone::ModelConfig;
use crate::data::{load_delimited, split, synthesize, SyntheticSpec, SyntheticTruth, TimeSeriesDataset};
use crate::embedding::GranularityQuintuple;
use crate::error::{Error, Result};
use crate::pretrain::TrainConfig;

/// One dataset source: either a delimited text file or an inline
/// synthetic spec.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub has_timestamp: bool,
    pub synthetic: Option<SyntheticSpec>,
    /// Chronological train/val/test fractions.
    pub fractions: [f64; 3],
    /// Granularity override `[day, hour, minute, second, millisecond]`
    /// for sources without usable timestamps.
    pub granularity: Option<[u32; 5]>,
    /// Synthetic-generation seed; derived from the master seed when
    /// absent.
    pub seed: Option<u64>,
}

impl DataConfig {
    pub fn load(&self, derived_seed: u64) -> Result<(TimeSeriesDataset, SyntheticTruth)> {
        let (mut ds, truth) = match (&self.synthetic, &self.path) {
            (Some(spec), None) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(derived_seed));
                synthesize(spec, &mut rng)?
            }
            (None, Some(path)) => (
                load_delimited(path, self.has_timestamp)?,
                SyntheticTruth::default(),
            ),
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "dataset: give either path or synthetic, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "dataset: needs a path or a synthetic spec".into(),
                ))
            }
        };
        if let Some(name) = &self.name {
            ds.name = name.clone();
        }
        if let Some(g) = self.granularity {
            ds.granularity = GranularityQuintuple::from_array(g);
        }
        split(&mut ds, (self.fractions[0], self.fractions[1], self.fractions[2]))?;
        Ok((ds, truth))
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            name: None,
            path: None,
            has_timestamp: false,
            synthetic: None,
            fractions: [0.7, 0.1, 0.2],
            granularity: None,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub modes: Vec<SpectrumMode>,
    /// Subsample cap on spectrum points per dataset before KDE.
    pub max_points: usize,
    /// Grid resolution cap per axis.
    pub max_cells: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            modes: vec![SpectrumMode::Amplitude, SpectrumMode::Phase],
            max_points: 100_000,
            max_cells: 120,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForecastTaskConfig {
    pub horizons: Vec<usize>,
    /// Defaults to 4x the horizon capped at 1440.
    pub lookback: Option<usize>,
    /// Forecast origins evaluated within the test region.
    pub max_origins: usize,
}

impl Default for ForecastTaskConfig {
    fn default() -> Self {
        ForecastTaskConfig {
            horizons: vec![96],
            lookback: None,
            max_origins: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImputeTaskConfig {
    pub missing_ratios: Vec<f64>,
    pub window: usize,
    /// Task-adaptation pretraining epochs on the task data before
    /// imputing (0 = use the checkpoint as is).
    pub finetune_epochs: usize,
}

impl Default for ImputeTaskConfig {
    fn default() -> Self {
        ImputeTaskConfig {
            missing_ratios: vec![0.125, 0.25, 0.375, 0.5],
            window: 128,
            finetune_epochs: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectTaskConfig {
    /// Detection threshold quantile over validation scores; when absent
    /// it matches the dataset's labeled anomaly rate, falling back to
    /// 0.99 without labels.
    pub threshold_quantile: Option<f64>,
    pub window: usize,
    pub finetune_epochs: usize,
}

impl Default for DetectTaskConfig {
    fn default() -> Self {
        DetectTaskConfig {
            threshold_quantile: None,
            window: 64,
            finetune_epochs: 0,
        }
    }
}

/// The full run description. All randomness flows from `seed`: section
/// seeds left at their defaults are derived from it during
/// [`RunConfig::resolve`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Checkpoint path: output of `pretrain`, input of the task commands.
    /// Defaults to `<out_dir>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    /// Warm-start checkpoint for `pretrain`.
    pub resume: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub datasets: Vec<DataConfig>,
    pub analyze: AnalyzeConfig,
    pub forecast: ForecastTaskConfig,
    pub impute: ImputeTaskConfig,
    pub detect: DetectTaskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("runs/out"),
            checkpoint: None,
            resume: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            datasets: Vec::new(),
            analyze: AnalyzeConfig::default(),
            forecast: ForecastTaskConfig::default(),
            impute: ImputeTaskConfig::default(),
            detect: DetectTaskConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Derive section seeds from the master seed (explicitly set nonzero
    /// section seeds are kept) so one seed reproduces the whole run.
    pub fn resolve(mut self) -> Self {
        if self.model.seed == 0 {
            self.model.seed = self.seed ^ 0x6d6f_6465;
        }
        if self.train.seed == 0 {
            self.train.seed = self.seed ^ 0x7472_6169;
        }
        for (i, d) in self.datasets.iter_mut().enumerate() {
            if d.seed.is_none() {
                d.seed = Some(self.seed ^ (0x6461_7461 + i as u64));
            }
        }
        self
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.out_dir.join("checkpoint.json"))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }

    /// Write the fully resolved config next to the run outputs.
    pub fn write_resolved(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        std::fs::write(self.out_dir.join("resolved_config.toml"), self.to_toml()?)?;
        Ok(())
    }
}

impl DataConfig {
    pub fn display_name(&self, index: usize) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        if let Some(s) = &self.synthetic {
            return s.name.clone();
        }
        if let Some(p) = &self.path {
            if let Some(stem) = p.file_stem() {
                return stem.to_string_lossy().into_owned();
            }
        }
        format!("dataset{index}")
    }
}
