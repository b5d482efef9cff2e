//! The segmentation network: an SE-ResNet encoder whose five feature taps feed
//! a U-Net decoder through skip concatenations.

mod bottleneck;
mod config;
mod decoder;
mod encoder;
mod se;

pub use bottleneck::{Bottleneck, Downsample};
pub use config::{ModelConfig, DOWNSAMPLING, EXPANSION};
pub use decoder::{Decoder, DecoderStage, SKIP_TAPS};
pub use encoder::{Encoder, STAGE_STRIDES};
pub use se::SeBlock;

use crate::error::{shape_err, Result};
use crate::nn::{expect_rank4, Mode, ParamStore, Session};
use crate::tensor::{Scalar, Tensor, Var};

/// Layer structure of the network; parameter values live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct SegNet {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl SegNet {
    pub fn build<T: Scalar>(config: &ModelConfig, store: &mut ParamStore<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            encoder: Encoder::new(store, config)?,
            decoder: Decoder::new(store, config)?,
        })
    }

    fn check_input(&self, dims: &[usize]) -> Result<()> {
        let [_, c, h, w] = expect_rank4(dims, "model input")?;
        if c != self.config.in_channels {
            return Err(shape_err!(
                "model expects {} input channels, got {c}",
                self.config.in_channels
            ));
        }
        if h % DOWNSAMPLING != 0 || w % DOWNSAMPLING != 0 {
            return Err(shape_err!("input {h}x{w} is not a multiple of {DOWNSAMPLING}"));
        }
        Ok(())
    }

    pub fn encode<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Vec<Var<T>>> {
        self.check_input(x.dims())?;
        self.encoder.forward(s, x)
    }

    /// Raw class logits `[N, num_classes, H, W]`.
    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let taps = self.encode(s, x)?;
        self.decoder.forward(s, &taps)
    }
}

/// A network together with its parameters.
#[derive(Debug, Clone)]
pub struct SegModel<T> {
    pub net: SegNet,
    pub params: ParamStore<T>,
}

impl<T: Scalar> SegModel<T> {
    /// Builds the network and initializes it deterministically from `seed`.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let net = SegNet::build(config, &mut params)?;
        let mut model = Self { net, params };
        model.init_parameters(seed);
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    /// He-uniform conv and dense weights, zero biases, unit batch-norm scale.
    pub fn init_parameters(&mut self, seed: u64) {
        self.params.initialize(seed);
    }

    pub fn session(&mut self, mode: Mode, track_grad: bool) -> (&SegNet, Session<'_, T>) {
        (&self.net, Session::new(&mut self.params, mode, track_grad))
    }

    /// Forward pass without gradient tracking.
    pub fn infer(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (net, mut s) = self.session(mode, false);
        let xv = s.input(x);
        Ok(net.forward(&mut s, &xv)?.to_tensor())
    }

    pub fn encoder_taps(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Vec<Tensor<T>>> {
        let (net, mut s) = self.session(mode, false);
        let xv = s.input(x);
        Ok(net.encode(&mut s, &xv)?.iter().map(Var::to_tensor).collect())
    }
}
