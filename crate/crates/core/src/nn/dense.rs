use super::params::{Init, ParamId, ParamStore, Session};
use crate::error::{shape_err, Result};
use crate::tensor::{Scalar, Tape, Var};

impl<T: Scalar> Tape<T> {
    /// `x * weight + bias` for `x: [N,K]`, `weight: [K,M]`, `bias: [M]`.
    pub fn dense(&mut self, x: &Var<T>, weight: &Var<T>, bias: &Var<T>) -> Result<Var<T>> {
        match weight.dims() {
            [_, m] if bias.dims() == [*m] => {}
            _ => {
                return Err(shape_err!(
                    "dense weight {:?} and bias {:?} disagree",
                    weight.dims(),
                    bias.dims()
                ))
            }
        }
        let xw = self.matmul(x, weight)?;
        self.add(&xw, bias)
    }
}

/// Fully connected layer, weight stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.register(
                format!("{name}.weight"),
                &[inputs, outputs],
                Init::HeUniform { fan_in: inputs },
                true,
            )?,
            bias: store.register(format!("{name}.bias"), &[outputs], Init::Zeros, true)?,
            inputs,
            outputs,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let w = s.param(self.weight);
        let b = s.param(self.bias);
        s.tape.dense(x, &w, &b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn identity_weight_zero_bias() {
        let mut tape = Tape::<f64>::no_grad();
        let x = tape.leaf(&Tensor::uniform(&[3, 2], -1.0, 1.0, 1).unwrap());
        let w = tape.leaf(&Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = tape.leaf(&Tensor::zeros(&[2]).unwrap());
        assert_eq!(tape.dense(&x, &w, &b).unwrap().data(), x.data());
    }

    #[test]
    fn zero_bias_is_matmul_and_loop_oracle() {
        let xt = Tensor::<f64>::uniform(&[4, 3], -1.0, 1.0, 2).unwrap();
        let wt = Tensor::<f64>::uniform(&[3, 5], -1.0, 1.0, 3).unwrap();
        let bt = Tensor::<f64>::uniform(&[5], -1.0, 1.0, 4).unwrap();
        let mut tape = Tape::no_grad();
        let (x, w, b) = (tape.leaf(&xt), tape.leaf(&wt), tape.leaf(&bt));
        let zero = tape.leaf(&Tensor::zeros(&[5]).unwrap());
        let mm = tape.matmul(&x, &w).unwrap();
        assert_eq!(tape.dense(&x, &w, &zero).unwrap().data(), mm.data());
        let y = tape.dense(&x, &w, &b).unwrap();
        for r in 0..4 {
            for c in 0..5 {
                let mut acc = bt.data()[c];
                for k in 0..3 {
                    acc += xt.data()[r * 3 + k] * wt.data()[k * 5 + c];
                }
                assert!((y.data()[r * 5 + c] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mismatched_bias() {
        let mut tape = Tape::<f64>::no_grad();
        let x = tape.leaf(&Tensor::zeros(&[1, 3]).unwrap());
        let w = tape.leaf(&Tensor::zeros(&[3, 2]).unwrap());
        let b = tape.leaf(&Tensor::zeros(&[3]).unwrap());
        assert!(tape.dense(&x, &w, &b).is_err());
        let w_bad = tape.leaf(&Tensor::zeros(&[4, 2]).unwrap());
        let b2 = tape.leaf(&Tensor::zeros(&[2]).unwrap());
        assert!(tape.dense(&x, &w_bad, &b2).is_err());
    }
}
