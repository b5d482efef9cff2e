use crate::error::{shape_err, Result};
use crate::nn::{expect_rank4, Dense, ParamStore, Session};
use crate::tensor::{Scalar, Var};

/// Squeeze-and-excitation channel gate.
///
/// Pools each channel to a scalar, passes the descriptor through a
/// `C -> C/r -> C` bottleneck and rescales the input channels by the sigmoid
/// of the result.
#[derive(Debug, Clone)]
pub struct SeBlock {
    pub fc1: Dense,
    pub fc2: Dense,
    pub channels: usize,
}

impl SeBlock {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        reduction: usize,
    ) -> Result<Self> {
        if reduction == 0 || channels % reduction != 0 {
            return Err(crate::Error::Config(format!(
                "{name}: reduction {reduction} does not divide {channels} channels"
            )));
        }
        let hidden = channels / reduction;
        Ok(Self {
            fc1: Dense::new(store, &format!("{name}.fc1"), channels, hidden)?,
            fc2: Dense::new(store, &format!("{name}.fc2"), hidden, channels)?,
            channels,
        })
    }

    /// Per-sample, per-channel gate in `(0, 1)`, shaped `[N,C,1,1]`.
    pub fn gate<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let [n, c, _, _] = expect_rank4(x.dims(), "se_block")?;
        if c != self.channels {
            return Err(shape_err!("se_block built for {} channels, got {c}", self.channels));
        }
        let pooled = s.tape.global_avg_pool(x)?;
        let desc = s.tape.reshape(&pooled, &[n, c])?;
        let hidden = self.fc1.forward(s, &desc)?;
        let hidden = s.tape.relu(&hidden);
        let logits = self.fc2.forward(s, &hidden)?;
        let gate = s.tape.sigmoid(&logits);
        s.tape.reshape(&gate, &[n, c, 1, 1])
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let gate = self.gate(s, x)?;
        s.tape.mul(x, &gate)
    }
}
