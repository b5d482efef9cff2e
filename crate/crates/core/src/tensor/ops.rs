use std::sync::Arc;

use super::{gemm, MatRef, Scalar, Tape, Var};
use crate::error::{shape_err, Result};
use crate::tensor::BackwardOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
}

/// How the second operand of a binary op lines up with the first.
///
/// Only per-channel vectors broadcast: `[1,C,1,1]` or `[N,C,1,1]` against
/// `[N,C,H,W]`, and `[C]` or `[1,C]` against `[N,C]`.
#[derive(Debug, Clone, Copy)]
enum Broadcast {
    Same,
    Channel {
        channels: usize,
        inner: usize,
        per_sample: bool,
    },
}

impl Broadcast {
    fn plan(a: &[usize], b: &[usize]) -> Result<Self> {
        if a == b {
            return Ok(Broadcast::Same);
        }
        let plan = match (a, b) {
            ([n, c, h, w], [bn, bc, 1, 1]) if bc == c && (*bn == 1 || bn == n) => {
                Some(Broadcast::Channel {
                    channels: *c,
                    inner: h * w,
                    per_sample: *bn != 1,
                })
            }
            ([_, c], [bc]) | ([_, c], [1, bc]) if bc == c => Some(Broadcast::Channel {
                channels: *c,
                inner: 1,
                per_sample: false,
            }),
            _ => None,
        };
        plan.ok_or_else(|| shape_err!("cannot broadcast {b:?} against {a:?}"))
    }

    #[inline]
    fn index(&self, i: usize) -> usize {
        match *self {
            Broadcast::Same => i,
            Broadcast::Channel {
                channels,
                inner,
                per_sample,
            } => {
                let outer = i / inner;
                if per_sample {
                    outer
                } else {
                    outer % channels
                }
            }
        }
    }

    /// Sums a full-size gradient down to the broadcast operand.
    fn reduce<T: Scalar>(&self, g: &[T], b_len: usize) -> Vec<T> {
        match self {
            Broadcast::Same => g.to_vec(),
            _ => {
                let mut out = vec![T::zero(); b_len];
                for (i, &v) in g.iter().enumerate() {
                    out[self.index(i)] += v;
                }
                out
            }
        }
    }
}

struct AddBack {
    plan: Broadcast,
    b_len: usize,
    negate_b: bool,
}

impl<T: Scalar> BackwardOp<T> for AddBack {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let ga = needs[0].then(|| g.to_vec());
        let gb = needs[1].then(|| {
            let mut r = self.plan.reduce(g, self.b_len);
            if self.negate_b {
                r.iter_mut().for_each(|v| *v = -*v);
            }
            r
        });
        vec![ga, gb]
    }
}

struct MulBack<T> {
    plan: Broadcast,
    a: Arc<Vec<T>>,
    b: Arc<Vec<T>>,
}

impl<T: Scalar> BackwardOp<T> for MulBack<T> {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let ga = needs[0].then(|| {
            g.iter()
                .enumerate()
                .map(|(i, &gi)| gi * self.b[self.plan.index(i)])
                .collect()
        });
        let gb = needs[1].then(|| {
            let prod: Vec<T> = g.iter().zip(self.a.iter()).map(|(&x, &y)| x * y).collect();
            self.plan.reduce(&prod, self.b.len())
        });
        vec![ga, gb]
    }
}

struct ReluBack<T> {
    x: Arc<Vec<T>>,
}

impl<T: Scalar> BackwardOp<T> for ReluBack<T> {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let gx = g
            .iter()
            .zip(self.x.iter())
            .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
            .collect();
        vec![Some(gx)]
    }
}

struct SigmoidBack<T> {
    x: Arc<Vec<T>>,
}

impl<T: Scalar> BackwardOp<T> for SigmoidBack<T> {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        let gx = g
            .iter()
            .zip(self.x.iter())
            .map(|(&gi, &xi)| {
                let y = sigmoid(xi);
                gi * y * (T::one() - y)
            })
            .collect();
        vec![Some(gx)]
    }
}

struct MatmulBack<T> {
    a: Arc<Vec<T>>,
    b: Arc<Vec<T>>,
    m: usize,
    k: usize,
    n: usize,
}

impl<T: Scalar> BackwardOp<T> for MatmulBack<T> {
    fn backward(&self, g: &[T], needs: &[bool]) -> Vec<Option<Vec<T>>> {
        let (m, k, n) = (self.m, self.k, self.n);
        let ga = needs[0].then(|| {
            let mut out = vec![T::zero(); m * k];
            gemm(MatRef::new(g, m, n), MatRef::t(&self.b, k, n), T::zero(), &mut out);
            out
        });
        let gb = needs[1].then(|| {
            let mut out = vec![T::zero(); k * n];
            gemm(MatRef::t(&self.a, m, k), MatRef::new(g, m, n), T::zero(), &mut out);
            out
        });
        vec![ga, gb]
    }
}

struct SumBack {
    len: usize,
    scale: f64,
}

impl<T: Scalar> BackwardOp<T> for SumBack {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![g[0] * T::lit(self.scale); self.len])]
    }
}

struct ScaleBack<T> {
    k: T,
}

impl<T: Scalar> BackwardOp<T> for ScaleBack<T> {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.iter().map(|&v| v * self.k).collect())]
    }
}

struct Identity;

impl<T: Scalar> BackwardOp<T> for Identity {
    fn backward(&self, g: &[T], _: &[bool]) -> Vec<Option<Vec<T>>> {
        vec![Some(g.to_vec())]
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    /// Dispatches one of the elementwise operations. Binary ops need `b`.
    pub fn elementwise(&mut self, op: Elementwise, a: &Var<T>, b: Option<&Var<T>>) -> Result<Var<T>> {
        let need_b = || b.ok_or_else(|| shape_err!("{op:?} needs a second operand"));
        match op {
            Elementwise::Add => self.add(a, need_b()?),
            Elementwise::Sub => self.sub(a, need_b()?),
            Elementwise::Mul => self.mul(a, need_b()?),
            Elementwise::Relu => Ok(self.relu(a)),
            Elementwise::Sigmoid => Ok(self.sigmoid(a)),
        }
    }

    fn add_like(&mut self, a: &Var<T>, b: &Var<T>, negate_b: bool) -> Result<Var<T>> {
        let plan = Broadcast::plan(a.dims(), b.dims())?;
        let (ad, bd) = (a.data(), b.data());
        let data: Vec<T> = if negate_b {
            ad.iter().enumerate().map(|(i, &x)| x - bd[plan.index(i)]).collect()
        } else {
            ad.iter().enumerate().map(|(i, &x)| x + bd[plan.index(i)]).collect()
        };
        let b_len = b.numel();
        let kind = if negate_b { "sub" } else { "add" };
        Ok(self.record(kind, &[a, b], a.dims().to_vec(), data, || {
            Box::new(AddBack {
                plan,
                b_len,
                negate_b,
            })
        }))
    }

    pub fn add(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.add_like(a, b, false)
    }

    pub fn sub(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.add_like(a, b, true)
    }

    pub fn mul(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let plan = Broadcast::plan(a.dims(), b.dims())?;
        let (ad, bd) = (a.data(), b.data());
        let data = ad
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bd[plan.index(i)])
            .collect();
        Ok(self.record("mul", &[a, b], a.dims().to_vec(), data, || {
            Box::new(MulBack {
                plan,
                a: a.shared(),
                b: b.shared(),
            })
        }))
    }

    pub fn relu(&mut self, x: &Var<T>) -> Var<T> {
        let data = x.data().iter().map(|&v| v.max(T::zero())).collect();
        self.record("relu", &[x], x.dims().to_vec(), data, || {
            Box::new(ReluBack { x: x.shared() })
        })
    }

    pub fn sigmoid(&mut self, x: &Var<T>) -> Var<T> {
        let data = x.data().iter().map(|&v| sigmoid(v)).collect();
        self.record("sigmoid", &[x], x.dims().to_vec(), data, || {
            Box::new(SigmoidBack { x: x.shared() })
        })
    }

    pub fn matmul(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        let (m, k, k2, n) = match (a.dims(), b.dims()) {
            ([m, k], [k2, n]) => (*m, *k, *k2, *n),
            _ => return Err(shape_err!("matmul needs two matrices, got {:?} and {:?}", a.dims(), b.dims())),
        };
        if k != k2 {
            return Err(shape_err!("matmul inner dimensions differ: {:?} x {:?}", a.dims(), b.dims()));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(MatRef::new(a.data(), m, k), MatRef::new(b.data(), k, n), T::zero(), &mut out);
        Ok(self.record("matmul", &[a, b], vec![m, n], out, || {
            Box::new(MatmulBack {
                a: a.shared(),
                b: b.shared(),
                m,
                k,
                n,
            })
        }))
    }

    /// Sum of all elements, as a `[1]` var.
    pub fn sum(&mut self, x: &Var<T>) -> Var<T> {
        let s = x.data().iter().copied().sum();
        let len = x.numel();
        self.record("sum", &[x], vec![1], vec![s], || {
            Box::new(SumBack { len, scale: 1.0 })
        })
    }

    pub fn mean(&mut self, x: &Var<T>) -> Var<T> {
        let len = x.numel();
        let s: T = x.data().iter().copied().sum();
        let scale = 1.0 / len as f64;
        self.record("mean", &[x], vec![1], vec![s * T::lit(scale)], || {
            Box::new(SumBack { len, scale })
        })
    }

    pub fn scale(&mut self, x: &Var<T>, k: T) -> Var<T> {
        let data = x.data().iter().map(|&v| v * k).collect();
        self.record("scale", &[x], x.dims().to_vec(), data, || {
            Box::new(ScaleBack { k })
        })
    }

    pub fn reshape(&mut self, x: &Var<T>, dims: &[usize]) -> Result<Var<T>> {
        let n = super::checked_numel(dims)?;
        if n != x.numel() {
            return Err(shape_err!("cannot reshape {:?} to {dims:?}", x.dims()));
        }
        Ok(self.record("reshape", &[x], dims.to_vec(), x.data().to_vec(), || {
            Box::new(Identity)
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn var(tape: &mut Tape<f64>, dims: &[usize], data: &[f64], grad: bool) -> Var<f64> {
        let t = Tensor::from_vec(dims, data.to_vec()).unwrap().with_requires_grad(grad);
        tape.leaf(&t)
    }

    #[test]
    fn relu_sigmoid_add() {
        let mut tape = Tape::<f32>::no_grad();
        let x = tape.constant(&Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap());
        assert_eq!(tape.relu(&x).data(), &[0.0, 0.0, 2.0]);
        let z = tape.constant(&Tensor::from_vec(&[1], vec![0.0]).unwrap());
        assert_eq!(tape.sigmoid(&z).data(), &[0.5]);
        let a = tape.constant(&Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap());
        let b = tape.constant(&Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap());
        let s = tape.elementwise(Elementwise::Add, &a, Some(&b)).unwrap();
        assert_eq!(s.data(), &[4.0, 6.0]);
        assert!(tape.is_empty());
    }

    #[test]
    fn incompatible_dims_rejected() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(&Tensor::zeros(&[2, 3]).unwrap());
        let b = tape.constant(&Tensor::zeros(&[3, 2]).unwrap());
        assert!(matches!(tape.add(&a, &b), Err(crate::Error::Shape(_))));
        let c = tape.constant(&Tensor::zeros(&[1, 3, 2, 2]).unwrap());
        let d = tape.constant(&Tensor::zeros(&[1, 2, 1, 1]).unwrap());
        assert!(tape.mul(&c, &d).is_err());
        assert!(tape.matmul(&a, &a).is_err());
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::<f64>::no_grad();
        let a = var(&mut tape, &[2, 2], &[1.0, 2.0, 3.0, 4.0], false);
        let b = var(&mut tape, &[2, 1], &[1.0, 1.0], false);
        assert_eq!(tape.matmul(&a, &b).unwrap().data(), &[3.0, 7.0]);
        let eye = var(&mut tape, &[2, 2], &[1.0, 0.0, 0.0, 1.0], false);
        let x = var(&mut tape, &[2, 3], &[1.0, -2.0, 3.0, 0.5, 7.0, -1.0], false);
        assert_eq!(tape.matmul(&eye, &x).unwrap().data(), x.data());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = var(&mut tape, &[3], &[1.0, 2.0, 3.0], true);
        let loss = tape.sum(&x);
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap(), &[1.0, 1.0, 1.0]);
        assert!(tape.is_empty());
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = var(&mut tape, &[1], &[2.0], true);
        let sq = tape.mul(&x, &x).unwrap();
        let loss = tape.sum(&sq);
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap(), &[4.0]);
    }

    #[test]
    fn consumers_accumulate() {
        let mut tape = Tape::new();
        let x = var(&mut tape, &[2], &[0.3, -1.2], true);
        let y = tape.add(&x, &x).unwrap();
        let w = var(&mut tape, &[2], &[5.0, 7.0], false);
        let p = tape.mul(&y, &w).unwrap();
        let loss = tape.sum(&p);
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&x).unwrap(), &[10.0, 14.0]);
    }

    #[test]
    fn backward_contract_errors() {
        let mut tape = Tape::<f64>::new();
        let x = var(&mut tape, &[2], &[1.0, 2.0], true);
        assert!(matches!(tape.backward(&x), Err(crate::Error::Contract(_))));
        let s = var(&mut tape, &[1], &[1.0], true);
        assert!(matches!(tape.backward(&s), Err(crate::Error::Contract(_))));
        let y = tape.relu(&x);
        assert!(matches!(tape.backward(&y), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn broadcast_matches_loop_oracle() {
        let mut tape = Tape::<f64>::no_grad();
        let (n, c, h, w) = (2, 3, 2, 2);
        let a: Vec<f64> = (0..n * c * h * w).map(|i| i as f64 * 0.5 - 3.0).collect();
        let chan = [1.5, -2.0, 0.25];
        let per: Vec<f64> = (0..n * c).map(|i| i as f64 + 1.0).collect();
        let av = var(&mut tape, &[n, c, h, w], &a, false);
        let cv = var(&mut tape, &[1, c, 1, 1], &chan, false);
        let pv = var(&mut tape, &[n, c, 1, 1], &per, false);
        let added = tape.add(&av, &cv).unwrap();
        let scaled = tape.mul(&av, &pv).unwrap();
        for ni in 0..n {
            for ci in 0..c {
                for s in 0..h * w {
                    let i = (ni * c + ci) * h * w + s;
                    assert_eq!(added.data()[i], a[i] + chan[ci]);
                    assert_eq!(scaled.data()[i], a[i] * per[ni * c + ci]);
                }
            }
        }
        let m = var(&mut tape, &[2, 3], &a[..6], false);
        let bias = var(&mut tape, &[3], &chan, false);
        let mb = tape.add(&m, &bias).unwrap();
        for r in 0..2 {
            for j in 0..3 {
                assert_eq!(mb.data()[r * 3 + j], a[r * 3 + j] + chan[j]);
            }
        }
    }

    #[test]
    fn broadcast_gradient_reduces_over_batch_and_space() {
        let mut tape = Tape::new();
        let x = var(&mut tape, &[2, 2, 1, 2], &[1.0; 8], true);
        let b = var(&mut tape, &[1, 2, 1, 1], &[0.0, 0.0], true);
        let y = tape.add(&x, &b).unwrap();
        let loss = tape.sum(&y);
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.get(&b).unwrap(), &[4.0, 4.0]);
    }
}
