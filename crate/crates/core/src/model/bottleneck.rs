use super::config::EXPANSION;
use super::se::SeBlock;
use crate::error::{Error, Result};
use crate::nn::{BatchNorm2d, Conv2d, ParamStore, Session};
use crate::tensor::{Scalar, Var};

/// Projection shortcut used when a block changes shape.
#[derive(Debug, Clone)]
pub struct Downsample {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

/// SE-ResNet bottleneck: 1x1 reduce, 3x3 (strided), 1x1 expand, SE gate,
/// then the residual addition and a final ReLU.
#[derive(Debug, Clone)]
pub struct Bottleneck {
    pub conv1: Conv2d,
    pub bn1: BatchNorm2d,
    pub conv2: Conv2d,
    pub bn2: BatchNorm2d,
    pub conv3: Conv2d,
    pub bn3: BatchNorm2d,
    pub se: SeBlock,
    pub downsample: Option<Downsample>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
}

impl Bottleneck {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        width: usize,
        stride: usize,
        reduction: usize,
    ) -> Result<Self> {
        if stride != 1 && stride != 2 {
            return Err(Error::Config(format!("{name}: stride must be 1 or 2, got {stride}")));
        }
        let out_channels = EXPANSION * width;
        let downsample = if in_channels != out_channels || stride == 2 {
            Some(Downsample {
                conv: Conv2d::new(
                    store,
                    &format!("{name}.downsample.conv"),
                    in_channels,
                    out_channels,
                    1,
                    stride,
                    0,
                    false,
                )?,
                bn: BatchNorm2d::new(store, &format!("{name}.downsample.bn"), out_channels)?,
            })
        } else {
            None
        };
        Ok(Self {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), in_channels, width, 1, 1, 0, false)?,
            bn1: BatchNorm2d::new(store, &format!("{name}.bn1"), width)?,
            conv2: Conv2d::new(store, &format!("{name}.conv2"), width, width, 3, stride, 1, false)?,
            bn2: BatchNorm2d::new(store, &format!("{name}.bn2"), width)?,
            conv3: Conv2d::new(store, &format!("{name}.conv3"), width, out_channels, 1, 1, 0, false)?,
            bn3: BatchNorm2d::new(store, &format!("{name}.bn3"), out_channels)?,
            se: SeBlock::new(store, &format!("{name}.se"), out_channels, reduction)?,
            downsample,
            in_channels,
            out_channels,
            stride,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let h = self.conv1.forward(s, x)?;
        let h = self.bn1.forward(s, &h)?;
        let h = s.tape.relu(&h);
        let h = self.conv2.forward(s, &h)?;
        let h = self.bn2.forward(s, &h)?;
        let h = s.tape.relu(&h);
        let h = self.conv3.forward(s, &h)?;
        let h = self.bn3.forward(s, &h)?;
        let h = self.se.forward(s, &h)?;
        let shortcut = match &self.downsample {
            Some(d) => {
                let p = d.conv.forward(s, x)?;
                d.bn.forward(s, &p)?
            }
            None => x.clone(),
        };
        let sum = s.tape.add(&h, &shortcut)?;
        Ok(s.tape.relu(&sum))
    }
}
