use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bottleneck output width is this multiple of its inner width.
pub const EXPANSION: usize = 4;

/// Number of stride-2 reductions between input and the deepest encoder tap.
pub const DOWNSAMPLING: usize = 32;

/// Architecture hyperparameters of the SE-ResNet U-Net.
///
/// The default is the full SE-ResNet-152 encoder; [`ModelConfig::desk`] is a
/// small variant for CPU-scale experiments and tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub stage_depths: [usize; 4],
    /// Inner (pre-expansion) width of each encoder stage.
    pub stage_widths: [usize; 4],
    pub stem_channels: usize,
    pub reduction_ratio: usize,
    pub in_channels: usize,
    pub num_classes: usize,
    /// Nominal `(H, W)`; both divisible by 32.
    pub input_size: [usize; 2],
    pub decoder_channels: [usize; 5],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::seresnet152()
    }
}

impl ModelConfig {
    pub fn seresnet152() -> Self {
        Self {
            stage_depths: [3, 8, 36, 3],
            stage_widths: [64, 128, 256, 512],
            stem_channels: 64,
            reduction_ratio: 16,
            in_channels: 3,
            num_classes: 4,
            input_size: [128, 128],
            decoder_channels: [256, 128, 64, 32, 16],
        }
    }

    pub fn desk() -> Self {
        Self {
            stage_depths: [1, 1, 1, 1],
            stage_widths: [16, 32, 64, 128],
            stem_channels: 16,
            reduction_ratio: 4,
            input_size: [64, 64],
            ..Self::seresnet152()
        }
    }

    /// Channel counts of the five encoder taps, shallowest first.
    pub fn tap_channels(&self) -> [usize; 5] {
        let w = self.stage_widths;
        [
            self.stem_channels,
            EXPANSION * w[0],
            EXPANSION * w[1],
            EXPANSION * w[2],
            EXPANSION * w[3],
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let [h, w] = self.input_size;
        if h == 0 || w == 0 || h % DOWNSAMPLING != 0 || w % DOWNSAMPLING != 0 {
            return fail(format!("input size {h}x{w} must be positive multiples of {DOWNSAMPLING}"));
        }
        if self.stage_depths.contains(&0) {
            return fail(format!("stage depths {:?} must be at least 1", self.stage_depths));
        }
        if self.stage_widths.contains(&0) || self.stem_channels == 0 {
            return fail("stage widths and stem channels must be positive".into());
        }
        if self.decoder_channels.contains(&0) {
            return fail("decoder channels must be positive".into());
        }
        if self.in_channels == 0 {
            return fail("in_channels must be positive".into());
        }
        if self.num_classes < 2 {
            return fail(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        let r = self.reduction_ratio;
        for c in &self.tap_channels()[1..] {
            if r == 0 || c % r != 0 {
                return fail(format!("reduction ratio {r} does not divide stage width {c}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        ModelConfig::seresnet152().validate().unwrap();
        ModelConfig::desk().validate().unwrap();
        assert_eq!(ModelConfig::seresnet152().tap_channels(), [64, 256, 512, 1024, 2048]);
        assert_eq!(ModelConfig::desk().tap_channels(), [16, 64, 128, 256, 512]);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            ModelConfig {
                input_size: [100, 128],
                ..ModelConfig::desk()
            },
            ModelConfig {
                stage_depths: [1, 0, 1, 1],
                ..ModelConfig::desk()
            },
            ModelConfig {
                reduction_ratio: 3,
                ..ModelConfig::desk()
            },
            ModelConfig {
                num_classes: 1,
                ..ModelConfig::desk()
            },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))), "{cfg:?}");
        }
    }

    #[test]
    fn json_defaults_fill_missing_fields() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"stage_depths":[1,1,1,1]}"#).unwrap();
        assert_eq!(cfg.stage_widths, [64, 128, 256, 512]);
        assert!(serde_json::from_str::<ModelConfig>(r#"{"depth":3}"#).is_err());
    }
}
