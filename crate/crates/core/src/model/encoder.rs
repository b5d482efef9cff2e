use super::bottleneck::Bottleneck;
use super::config::{ModelConfig, EXPANSION};
use crate::error::Result;
use crate::nn::{BatchNorm2d, Conv2d, ParamStore, Session};
use crate::tensor::{Scalar, Var};

pub const STAGE_STRIDES: [usize; 4] = [1, 2, 2, 2];

/// SE-ResNet encoder producing five feature taps at strides 2, 4, 8, 16, 32.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub stem_conv: Conv2d,
    pub stem_bn: BatchNorm2d,
    pub stages: Vec<Vec<Bottleneck>>,
}

impl Encoder {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, cfg: &ModelConfig) -> Result<Self> {
        let stem_conv = Conv2d::new(
            store,
            "encoder.stem.conv",
            cfg.in_channels,
            cfg.stem_channels,
            7,
            2,
            3,
            false,
        )?;
        let stem_bn = BatchNorm2d::new(store, "encoder.stem.bn", cfg.stem_channels)?;
        let mut in_channels = cfg.stem_channels;
        let mut stages = Vec::with_capacity(4);
        for (i, (&depth, &width)) in cfg.stage_depths.iter().zip(&cfg.stage_widths).enumerate() {
            let mut blocks = Vec::with_capacity(depth);
            for b in 0..depth {
                let stride = if b == 0 { STAGE_STRIDES[i] } else { 1 };
                blocks.push(Bottleneck::new(
                    store,
                    &format!("encoder.stage{}.{b}", i + 1),
                    in_channels,
                    width,
                    stride,
                    cfg.reduction_ratio,
                )?);
                in_channels = EXPANSION * width;
            }
            stages.push(blocks);
        }
        Ok(Self {
            stem_conv,
            stem_bn,
            stages,
        })
    }

    /// Returns the taps `[E1, E2, E3, E4, E5]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Vec<Var<T>>> {
        let h = self.stem_conv.forward(s, x)?;
        let h = self.stem_bn.forward(s, &h)?;
        let e1 = s.tape.relu(&h);
        let mut h = s.tape.max_pool2d(&e1, 3, 2, 1)?;
        let mut taps = vec![e1];
        for stage in &self.stages {
            for block in stage {
                h = block.forward(s, &h)?;
            }
            taps.push(h.clone());
        }
        Ok(taps)
    }
}
