use crate::error::{contract_err, shape_err, Result};
use crate::nn::expect_rank4;
use crate::tensor::{BackwardOp, Scalar, Tape, Var};

pub const DICE_EPS: f64 = 1e-6;

/// Softmax over the channel axis of an NCHW buffer.
fn softmax_channels<T: Scalar>(logits: &[T], [n, c, h, w]: [usize; 4]) -> Vec<T> {
    let plane = h * w;
    let mut p = vec![T::zero(); logits.len()];
    for ni in 0..n {
        let base = ni * c * plane;
        for s in 0..plane {
            let mut m = T::neg_infinity();
            for ci in 0..c {
                m = m.max(logits[base + ci * plane + s]);
            }
            let mut z = T::zero();
            for ci in 0..c {
                let e = (logits[base + ci * plane + s] - m).exp();
                p[base + ci * plane + s] = e;
                z += e;
            }
            for ci in 0..c {
                p[base + ci * plane + s] = p[base + ci * plane + s] / z;
            }
        }
    }
    p
}

/// Pulls a gradient w.r.t. probabilities back through the channel softmax.
fn softmax_backward<T: Scalar>(p: &[T], gp: &[T], [n, c, h, w]: [usize; 4]) -> Vec<T> {
    let plane = h * w;
    let mut gz = vec![T::zero(); p.len()];
    for ni in 0..n {
        let base = ni * c * plane;
        for s in 0..plane {
            let mut dot = T::zero();
            for ci in 0..c {
                let i = base + ci * plane + s;
                dot += p[i] * gp[i];
            }
            for ci in 0..c {
                let i = base + ci * plane + s;
                gz[i] = p[i] * (gp[i] - dot);
            }
        }
    }
    gz
}

fn check_pair(logits: &[usize], target: &[usize], what: &str) -> Result<[usize; 4]> {
    let dims = expect_rank4(logits, what)?;
    if logits != target {
        return Err(shape_err!("{what}: logits {logits:?} and target {target:?} differ"));
    }
    Ok(dims)
}

struct SoftDiceBack<T> {
    dims: [usize; 4],
    probs: Vec<T>,
    target: std::sync::Arc<Vec<T>>,
    inter: Vec<T>,
    denom: Vec<T>,
    eps: T,
}

impl<T: Scalar> BackwardOp<T> for SoftDiceBack<T> {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let [n, c, h, w] = self.dims;
        let plane = h * w;
        let two = T::lit(2.0);
        let scale = g[0] * T::lit(-1.0 / c as f64);
        let mut gp = vec![T::zero(); self.probs.len()];
        for ci in 0..c {
            let d = self.denom[ci];
            let num = two * self.inter[ci] + self.eps;
            for ni in 0..n {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    gp[i] = scale * (two * self.target[i] * d - num) / (d * d);
                }
            }
        }
        let gz = softmax_backward(&self.probs, &gp, self.dims);
        // targets are treated as constants
        vec![needs[0].then_some(gz), None]
    }
}

struct CrossEntropyBack<T> {
    dims: [usize; 4],
    probs: Vec<T>,
    target: std::sync::Arc<Vec<T>>,
}

impl<T: Scalar> BackwardOp<T> for CrossEntropyBack<T> {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let [n, _, h, w] = self.dims;
        let k = g[0] * T::lit(1.0 / (n * h * w) as f64);
        let gz = self
            .probs
            .iter()
            .zip(self.target.iter())
            .map(|(&p, &t)| k * (p - t))
            .collect();
        // targets are treated as constants
        vec![needs[0].then_some(gz), None]
    }
}

impl<T: Scalar> Tape<T> {
    /// `1 - mean_c (2 sum(p_c t_c) + eps) / (sum p_c + sum t_c + eps)` with
    /// `p` the channel softmax of `logits`; sums run over batch and space.
    pub fn soft_dice_loss(&mut self, logits: &Var<T>, target: &Var<T>, eps: f64) -> Result<Var<T>> {
        let dims = check_pair(logits.dims(), target.dims(), "soft_dice_loss")?;
        if !(eps > 0.0) {
            return Err(contract_err!("soft dice eps must be positive, got {eps}"));
        }
        let [n, c, h, w] = dims;
        let plane = h * w;
        let probs = softmax_channels(logits.data(), dims);
        let t = target.data();
        let eps_t = T::lit(eps);
        let mut inter = vec![T::zero(); c];
        let mut denom = vec![T::zero(); c];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for i in base..base + plane {
                    inter[ci] += probs[i] * t[i];
                    denom[ci] += probs[i] + t[i];
                }
            }
        }
        denom.iter_mut().for_each(|d| *d += eps_t);
        let mean_dice = inter
            .iter()
            .zip(&denom)
            .map(|(&i, &d)| (T::lit(2.0) * i + eps_t) / d)
            .sum::<T>()
            / T::lit(c as f64);
        let loss = T::one() - mean_dice;
        Ok(self.record("soft_dice_loss", &[logits, target], vec![1], vec![loss], || {
            Box::new(SoftDiceBack {
                dims,
                probs,
                target: target.shared(),
                inter,
                denom,
                eps: eps_t,
            })
        }))
    }

    /// Mean per-pixel categorical cross-entropy of the channel softmax.
    pub fn cross_entropy_loss(&mut self, logits: &Var<T>, target: &Var<T>) -> Result<Var<T>> {
        let dims = check_pair(logits.dims(), target.dims(), "cross_entropy_loss")?;
        let [n, c, h, w] = dims;
        let plane = h * w;
        let z = logits.data();
        let t = target.data();
        let mut total = T::zero();
        for ni in 0..n {
            let base = ni * c * plane;
            for s in 0..plane {
                let mut m = T::neg_infinity();
                for ci in 0..c {
                    m = m.max(z[base + ci * plane + s]);
                }
                let lse = (0..c)
                    .map(|ci| (z[base + ci * plane + s] - m).exp())
                    .sum::<T>()
                    .ln()
                    + m;
                for ci in 0..c {
                    let i = base + ci * plane + s;
                    total += t[i] * (lse - z[i]);
                }
            }
        }
        let loss = total / T::lit((n * plane) as f64);
        let probs = softmax_channels(z, dims);
        Ok(self.record("cross_entropy_loss", &[logits, target], vec![1], vec![loss], || {
            Box::new(CrossEntropyBack {
                dims,
                probs,
                target: target.shared(),
            })
        }))
    }
}
