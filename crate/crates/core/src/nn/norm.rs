use std::sync::Arc;

use super::params::{expect_rank4, Init, Mode, ParamId, ParamStore, Session};
use crate::error::{contract_err, shape_err, Result};
use crate::tensor::{BackwardOp, Scalar, Tape, Var};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Where batch normalization takes its statistics from.
#[derive(Debug, Clone, Copy)]
pub enum NormStats<'a, T> {
    /// Per-channel statistics of the current batch.
    Batch,
    /// Stored running estimates.
    Running { mean: &'a [T], var: &'a [T] },
}

/// Per-channel mean and biased variance of a batch.
#[derive(Debug, Clone)]
pub struct BatchMoments<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub count: usize,
}

struct BatchNormBack<T> {
    dims: [usize; 4],
    xhat: Arc<Vec<T>>,
    inv_std: Vec<T>,
    gamma: Arc<Vec<T>>,
    batch_stats: bool,
}

impl<T: Scalar> BackwardOp<T> for BatchNormBack<T> {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let [n, c, h, w] = self.dims;
        let plane = h * w;
        let m = T::lit((n * plane) as f64);
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    sum_g[ci] += g[i];
                    sum_gx[ci] += g[i] * self.xhat[i];
                }
            }
        }
        let gx = needs[0].then(|| {
            let mut gx = vec![T::zero(); g.len()];
            for ni in 0..n {
                for ci in 0..c {
                    let base = (ni * c + ci) * plane;
                    let k = self.gamma[ci] * self.inv_std[ci];
                    for i in base..base + plane {
                        gx[i] = if self.batch_stats {
                            k * (g[i] - sum_g[ci] / m - self.xhat[i] * sum_gx[ci] / m)
                        } else {
                            k * g[i]
                        };
                    }
                }
            }
            gx
        });
        vec![gx, needs[1].then_some(sum_gx), needs[2].then_some(sum_g)]
    }
}

impl<T: Scalar> Tape<T> {
    /// Per-channel normalization of an NCHW batch followed by `gamma * x + beta`.
    ///
    /// With [`NormStats::Batch`] the batch moments are returned so the caller
    /// can update running estimates.
    pub fn batch_norm(
        &mut self,
        x: &Var<T>,
        gamma: &Var<T>,
        beta: &Var<T>,
        stats: NormStats<'_, T>,
        eps: f64,
    ) -> Result<(Var<T>, Option<BatchMoments<T>>)> {
        let dims = expect_rank4(x.dims(), "batch_norm")?;
        let [n, c, h, w] = dims;
        if gamma.dims() != [c] || beta.dims() != [c] {
            return Err(shape_err!(
                "batch_norm over {c} channels got gamma {:?} beta {:?}",
                gamma.dims(),
                beta.dims()
            ));
        }
        let plane = h * w;
        let count = n * plane;
        let xd = x.data();
        let (mean, var, moments) = match stats {
            NormStats::Batch => {
                if count < 2 {
                    return Err(contract_err!(
                        "train-mode batch_norm needs at least 2 values per channel, got {count}"
                    ));
                }
                let inv = T::lit(1.0 / count as f64);
                let mut mean = vec![T::zero(); c];
                for ni in 0..n {
                    for (ci, m) in mean.iter_mut().enumerate() {
                        let base = (ni * c + ci) * plane;
                        *m += xd[base..base + plane].iter().copied().sum::<T>();
                    }
                }
                mean.iter_mut().for_each(|m| *m *= inv);
                let mut var = vec![T::zero(); c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        for &v in &xd[base..base + plane] {
                            let d = v - mean[ci];
                            var[ci] += d * d;
                        }
                    }
                }
                var.iter_mut().for_each(|v| *v *= inv);
                let moments = BatchMoments {
                    mean: mean.clone(),
                    var: var.clone(),
                    count,
                };
                (mean, var, Some(moments))
            }
            NormStats::Running { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(shape_err!("running statistics must have {c} entries"));
                }
                (mean.to_vec(), var.to_vec(), None)
            }
        };
        let eps = T::lit(eps);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        let (gd, bd) = (gamma.data(), beta.data());
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    let xh = (xd[i] - mean[ci]) * inv_std[ci];
                    xhat[i] = xh;
                    out[i] = gd[ci] * xh + bd[ci];
                }
            }
        }
        let batch_stats = moments.is_some();
        let y = self.record("batch_norm", &[x, gamma, beta], dims.to_vec(), out, || {
            Box::new(BatchNormBack {
                dims,
                xhat: Arc::new(xhat),
                inv_std,
                gamma: gamma.shared(),
                batch_stats,
            })
        });
        Ok((y, moments))
    }
}

/// Batch normalization with learnable affine transform and running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.register(format!("{name}.gamma"), &[channels], Init::Ones, true)?,
            beta: store.register(format!("{name}.beta"), &[channels], Init::Zeros, true)?,
            running_mean: store.register(
                format!("{name}.running_mean"),
                &[channels],
                Init::Zeros,
                false,
            )?,
            running_var: store.register(
                format!("{name}.running_var"),
                &[channels],
                Init::Ones,
                false,
            )?,
            channels,
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
        })
    }

    pub fn forward<T: Scalar>(&self, s: &mut Session<'_, T>, x: &Var<T>) -> Result<Var<T>> {
        let gamma = s.param(self.gamma);
        let beta = s.param(self.beta);
        match s.mode() {
            Mode::Eval => {
                let store = s.store();
                let mean = store.tensor(self.running_mean).data().to_vec();
                let var = store.tensor(self.running_var).data().to_vec();
                let (y, _) = s.tape.batch_norm(
                    x,
                    &gamma,
                    &beta,
                    NormStats::Running {
                        mean: &mean,
                        var: &var,
                    },
                    self.eps,
                )?;
                Ok(y)
            }
            Mode::Train => {
                let (y, moments) = s.tape.batch_norm(x, &gamma, &beta, NormStats::Batch, self.eps)?;
                let moments = moments.expect("batch statistics requested");
                let mom = T::lit(self.momentum);
                let keep = T::one() - mom;
                let unbias = T::lit(moments.count as f64 / (moments.count - 1) as f64);
                let rm = s.buffer_mut(self.running_mean).data_mut();
                for (r, &m) in rm.iter_mut().zip(&moments.mean) {
                    *r = keep * *r + mom * m;
                }
                let rv = s.buffer_mut(self.running_var).data_mut();
                for (r, &v) in rv.iter_mut().zip(&moments.var) {
                    *r = keep * *r + mom * v * unbias;
                }
                Ok(y)
            }
        }
    }
}
