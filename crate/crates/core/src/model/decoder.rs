use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ParamStore, Session};
use crate::tensor::{Scalar, Var};

/// Upsample x2, optional skip concatenation, then two conv-bn-relu refinements.
#[derive(Debug, Clone)]
pub struct DecoderStage {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    /// Index of the encoder tap concatenated after upsampling.
    pub skip: Option<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl DecoderStage {
    fn forward<T: Scalar>(
        &self,
        s: &mut Session<'_, T>,
        x: &Var<T>,
        taps: &[Var<T>],
    ) -> Result<Var<T>> {
        let up = s.tape.upsample_nearest(x, 2)?;
        let merged = match self.skip {
            Some(i) => s.tape.concat_channels(&up, &taps[i])?,
            None => up,
        };
        if merged.dims()[1] != self.in_channels {
            return Err(Error::Config(format!(
                "decoder stage expects {} channels after merging, got {}",
                self.in_channels,
                merged.dims()[1]
            )));
        }
        let h = self.conv1.forward(s, &merged)?;
        let h = self.bn1.forward(s, &h)?;
        let h = s.tape.relu(&h);
        let h = self.conv2.forward(s, &h)?;
        let h = self.bn2.forward(s, &h)?;
        Ok(s.tape.relu(&h))
    }
}

/// Five upsampling stages from the stride-32 tap back to full resolution,
/// followed by a 1x1 convolution to class logits.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub stages: Vec<DecoderStage>,
    pub head: Conv2d,
}

/// Encoder tap merged into each decoder stage; the last stage has none.
pub const SKIP_TAPS: [Option<usize>; 5] = [Some(3), Some(2), Some(1), Some(0), None];

impl Decoder {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig) -> Result<Self> {
        let taps = cfg.tap_channels();
        let mut prev = taps[4];
        let mut stages = Vec::with_capacity(5);
        for (i, (&out, skip)) in cfg.decoder_channels.iter().zip(SKIP_TAPS).enumerate() {
            let in_channels = prev + skip.map_or(0, |t| taps[t]);
            let name = format!("decoder.stage{}", i + 1);
            stages.push(DecoderStage {
                conv1: Conv2d::new(store, &format!("{name}.conv1"), in_channels, out, 3, 1, 1, false)?,
                bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), out)?,
                conv2: Conv2d::new(store, &format!("{name}.conv2"), out, out, 3, 1, 1, false)?,
                bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), out)?,
                skip,
                in_channels,
                out_channels: out,
            });
            prev = out;
        }
        let head = Conv2d::new(store, "head", prev, cfg.num_classes, 1, 1, 0, true)?;
        Ok(Self { stages, head })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, taps: &[Var<T>]) -> Result<Var<T>> {
        let mut h = taps[4].clone();
        for stage in &self.stages {
            h = stage.forward(s, &h, taps)?;
        }
        self.head.forward(s, &h)
    }
}
