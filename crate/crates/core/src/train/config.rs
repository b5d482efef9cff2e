use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{DEFAULT_CROP, DEFAULT_TRAIN_FRACTION, MIN_DIMS, NUM_CHANNELS, NUM_CLASSES, TRAIN_MIN_FOREGROUND};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, DOWNSAMPLING};

use super::adam::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub dice_weight: f64,
    pub ce_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            dice_weight: 1.0,
            ce_weight: 0.0,
        }
    }
}

/// In-memory phantom dataset used instead of a data directory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub cases: usize,
    /// `[D, H, W]` of every case.
    pub dims: [usize; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Directory of case folders. Exactly one of `data_root` and `synthetic`
    /// must be set.
    pub data_root: Option<PathBuf>,
    pub synthetic: Option<SyntheticSpec>,
    pub split: SplitConfig,
    pub crop: [usize; 2],
    pub min_foreground_fraction: f64,
    pub loss: LossConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            optimizer: AdamConfig::default(),
            epochs: 100,
            batch_size: 8,
            seed: 0,
            data_root: None,
            synthetic: None,
            split: SplitConfig::default(),
            crop: DEFAULT_CROP,
            min_foreground_fraction: TRAIN_MIN_FOREGROUND,
            loss: LossConfig::default(),
            output_dir: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    /// Small model overfitting four synthetic cases.
    pub fn desk() -> Self {
        Self {
            model: ModelConfig::desk(),
            optimizer: AdamConfig {
                lr: 2e-3,
                ..AdamConfig::default()
            },
            epochs: 30,
            batch_size: 4,
            seed: 1,
            synthetic: Some(SyntheticSpec {
                cases: 4,
                dims: [16, 64, 64],
                seed: 1,
            }),
            split: SplitConfig { fraction: 0.75, seed: 1 },
            crop: [64, 64],
            output_dir: PathBuf::from("runs/desk"),
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    /// Applies `key.path=value`. The value is parsed as JSON when possible and
    /// taken as a string otherwise.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).expect("run config serializes");
        let mut slot = &mut doc;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::Config(format!("unknown config key {key}")))?;
        }
        *slot = value;
        *self = serde_json::from_value(doc).map_err(|e| Error::Config(format!("override {key}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        let fail = |m: String| Err(Error::Config(m));
        if self.model.in_channels != NUM_CHANNELS || self.model.num_classes != NUM_CLASSES {
            return fail(format!(
                "model must take {NUM_CHANNELS} channels and predict {NUM_CLASSES} classes, got {} and {}",
                self.model.in_channels, self.model.num_classes
            ));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        match (&self.data_root, &self.synthetic) {
            (Some(_), None) => {}
            (None, Some(s)) => {
                if s.cases < 2 || s.dims.iter().zip(MIN_DIMS).any(|(&d, m)| d < m) {
                    return fail(format!(
                        "synthetic data needs at least 2 cases of dims >= {MIN_DIMS:?}, got {s:?}"
                    ));
                }
            }
            _ => return fail("set exactly one of data_root and synthetic".into()),
        }
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return fail(format!("split fraction {} must lie in (0, 1)", self.split.fraction));
        }
        if self.crop.iter().any(|&c| c == 0 || c % DOWNSAMPLING != 0) {
            return fail(format!("crop {:?} must be positive multiples of {DOWNSAMPLING}", self.crop));
        }
        if !(0.0..1.0).contains(&self.min_foreground_fraction) {
            return fail(format!(
                "min_foreground_fraction {} must lie in [0, 1)",
                self.min_foreground_fraction
            ));
        }
        let LossConfig { dice_weight, ce_weight } = self.loss;
        if !(dice_weight >= 0.0 && ce_weight >= 0.0 && dice_weight + ce_weight > 0.0) {
            return fail(format!("loss weights {:?} must be nonnegative and not both zero", self.loss));
        }
        Ok(())
    }
}
