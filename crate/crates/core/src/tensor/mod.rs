//! Dense tensors and the reverse-mode tape that differentiates through them.
//!
//! Activations use NCHW layout and convolution weights OIHW. Tensors are
//! immutable once handed to a [`Tape`]; storage is reference counted so a
//! parameter can be read by a forward pass without being copied and later
//! updated in place by the optimizer once the tape is gone.

mod gemm;
mod ops;
mod scalar;
mod tape;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{contract_err, shape_err, Result};

pub(crate) use gemm::{gemm, MatRef};
pub use ops::Elementwise;
pub use scalar::{DType, Scalar};
pub use tape::{BackwardOp, Gradients, Tape, TapeNode, Var, VarId};

/// Checks that `dims` is a valid tensor shape and returns its element count.
pub fn checked_numel(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.len() > 4 {
        return Err(shape_err!("rank must be 1..=4, got {}", dims.len()));
    }
    if let Some(d) = dims.iter().find(|&&d| d == 0) {
        return Err(shape_err!("dimension {d} in {dims:?} must be positive"));
    }
    Ok(dims.iter().product())
}

/// How a freshly created tensor is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fill {
    Constant(f64),
    Uniform { low: f64, high: f64, seed: u64 },
    Normal { mean: f64, std: f64, seed: u64 },
}

#[derive(Debug, Clone)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Arc<Vec<T>>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let n = checked_numel(dims)?;
        if n != data.len() {
            return Err(shape_err!(
                "dims {dims:?} hold {n} elements but {} were given",
                data.len()
            ));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data: Arc::new(data),
            requires_grad: false,
            grad: None,
        })
    }

    pub fn create(dims: &[usize], fill: Fill, requires_grad: bool) -> Result<Self> {
        let n = checked_numel(dims)?;
        let data = match fill {
            Fill::Constant(v) => vec![T::lit(v); n],
            Fill::Uniform { low, high, seed } => {
                if !(low < high) {
                    return Err(contract_err!("uniform fill needs low < high"));
                }
                let dist = Uniform::new(low, high).map_err(|e| contract_err!("{e}"))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| T::lit(dist.sample(&mut rng))).collect()
            }
            Fill::Normal { mean, std, seed } => {
                let dist = Normal::new(mean, std).map_err(|e| contract_err!("{e}"))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..n).map(|_| T::lit(dist.sample(&mut rng))).collect()
            }
        };
        let mut t = Self::from_vec(dims, data)?;
        t.requires_grad = requires_grad;
        Ok(t)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::create(dims, Fill::Constant(0.0), false)
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let n = checked_numel(dims)?;
        Self::from_vec(dims, vec![value; n])
    }

    pub fn uniform(dims: &[usize], low: f64, high: f64, seed: u64) -> Result<Self> {
        Self::create(dims, Fill::Uniform { low, high, seed }, false)
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable view of the values. Copies the storage if a tape still holds it.
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::<Vec<T>>::make_mut(&mut self.data).as_mut_slice()
    }

    pub(crate) fn shared_data(&self) -> Arc<Vec<T>> {
        Arc::clone(&self.data)
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|a| (*a).clone())
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient slot.
    pub fn accumulate_grad(&mut self, g: &[T]) -> Result<()> {
        if g.len() != self.numel() {
            return Err(shape_err!(
                "gradient of length {} for tensor {:?}",
                g.len(),
                self.dims
            ));
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        let n = checked_numel(dims)?;
        if n != self.numel() {
            return Err(shape_err!("cannot reshape {:?} to {dims:?}", self.dims));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data: Arc::clone(&self.data),
            requires_grad: self.requires_grad,
            grad: None,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: Arc::new(self.data.iter().map(|v| U::lit(v.as_f64())).collect()),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> PartialEq for Tensor<T> {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.data == other.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fill() {
        let t = Tensor::<f32>::create(&[2, 3], Fill::Constant(0.0), false).unwrap();
        assert_eq!(t.dims(), &[2, 3]);
        assert_eq!(t.data(), &[0.0; 6]);
    }

    #[test]
    fn unit_scalar() {
        let t = Tensor::<f32>::create(&[1], Fill::Constant(1.0), true).unwrap();
        assert_eq!(t.data(), &[1.0]);
        assert!(t.requires_grad());
    }

    #[test]
    fn seeded_uniform_is_reproducible() {
        let fill = Fill::Uniform {
            low: -1.0,
            high: 1.0,
            seed: 7,
        };
        let a = Tensor::<f32>::create(&[2, 2], fill, false).unwrap();
        let b = Tensor::<f32>::create(&[2, 2], fill, false).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = Tensor::<f32>::uniform(&[2, 2], -1.0, 1.0, 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
    }

    #[test]
    fn zero_dimension_is_shape_error() {
        assert!(matches!(
            Tensor::<f32>::zeros(&[2, 0]),
            Err(crate::Error::Shape(_))
        ));
        assert!(Tensor::<f32>::zeros(&[]).is_err());
        assert!(Tensor::<f32>::zeros(&[1, 1, 1, 1, 1]).is_err());
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0f32; 3]).is_err());
    }

    #[test]
    fn data_mut_copies_when_shared() {
        let mut t = Tensor::from_vec(&[2], vec![1.0f32, 2.0]).unwrap();
        let held = t.shared_data();
        t.data_mut()[0] = 5.0;
        assert_eq!(held[0], 1.0);
        assert_eq!(t.data()[0], 5.0);
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::<f64>::zeros(&[2]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
        assert!(t.accumulate_grad(&[1.0]).is_err());
    }
}
