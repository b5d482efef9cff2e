use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Initialization rule recorded with each parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    HeUniform { fan_in: usize },
    Zeros,
    Ones,
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub trainable: bool,
    pub init: Init,
}

/// Named parameters and buffers of a model, in registration order.
///
/// Trainable entries receive gradients; non-trainable entries are buffers
/// (batch-norm running statistics).
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        dims: &[usize],
        init: Init,
        trainable: bool,
    ) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let fill = match init {
            Init::Ones => 1.0,
            _ => 0.0,
        };
        let tensor = Tensor::full(dims, T::lit(fill))?.with_requires_grad(trainable);
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param {
            name,
            tensor,
            trainable,
            init,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].tensor
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].tensor
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param<T>)> {
        self.params.iter_mut().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn trainable_elements(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.numel())
            .sum()
    }

    /// Fills every entry according to its [`Init`] rule, deterministically per seed.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut self.params {
            let data = p.tensor.data_mut();
            match p.init {
                Init::Zeros => data.fill(T::zero()),
                Init::Ones => data.fill(T::one()),
                Init::HeUniform { fan_in } => {
                    let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                    let dist = Uniform::new(-bound, bound).expect("finite positive bound");
                    data.iter_mut()
                        .for_each(|v| *v = T::lit(dist.sample(&mut rng)));
                }
            }
            p.tensor.zero_grad();
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.tensor.zero_grad());
    }

    /// Same names and values in another element type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    trainable: p.trainable,
                    init: p.init,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }

    /// Replaces the values of `name`, keeping its shape.
    pub fn assign(&mut self, name: &str, dims: &[usize], data: Vec<T>) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name}")))?;
        let p = &mut self.params[id.0];
        if p.tensor.dims() != dims {
            return Err(Error::Config(format!(
                "parameter {name} has dims {:?}, got {dims:?}",
                p.tensor.dims()
            )));
        }
        let trainable = p.trainable;
        p.tensor = Tensor::from_vec(dims, data)?.with_requires_grad(trainable);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers, running statistics updated.
    Train,
    /// Running statistics; the forward pass is a pure function of its input.
    Eval,
}

/// One forward (and optionally backward) pass over a parameter store.
pub struct Session<'a, T: Scalar> {
    pub tape: Tape<T>,
    store: &'a mut ParamStore<T>,
    bound: Vec<Option<Var<T>>>,
    mode: Mode,
}

impl<'a, T: Scalar> Session<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, mode: Mode, track_grad: bool) -> Self {
        let bound = vec![None; store.len()];
        Self {
            tape: if track_grad { Tape::new() } else { Tape::no_grad() },
            store,
            bound,
            mode,
        }
    }

    pub fn train(store: &'a mut ParamStore<T>) -> Self {
        Self::new(store, Mode::Train, true)
    }

    pub fn eval(store: &'a mut ParamStore<T>) -> Self {
        Self::new(store, Mode::Eval, false)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// The parameter as a var on this session's tape, registered once.
    pub fn param(&mut self, id: ParamId) -> Var<T> {
        if let Some(v) = &self.bound[id.0] {
            return v.clone();
        }
        let v = self.tape.leaf(&self.store.params[id.0].tensor);
        self.bound[id.0] = Some(v.clone());
        v
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    /// Direct access for buffer updates. Must not touch tensors bound to the tape.
    pub(crate) fn buffer_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        debug_assert!(self.bound[id.0].is_none());
        &mut self.store.params[id.0].tensor
    }

    pub fn input(&mut self, t: &Tensor<T>) -> Var<T> {
        self.tape.leaf(t)
    }

    /// Runs backward from `loss` and adds the gradients into the store.
    pub fn backward(mut self, loss: &Var<T>) -> Result<()> {
        let mut grads = self.tape.backward(loss)?;
        for (i, v) in self.bound.iter().enumerate() {
            if let Some(g) = v.as_ref().and_then(|v| grads.take(v)) {
                self.store.params[i].tensor.accumulate_grad(&g)?;
            }
        }
        Ok(())
    }
}

pub(crate) fn expect_rank4(dims: &[usize], what: &str) -> Result<[usize; 4]> {
    match dims {
        [n, c, h, w] => Ok([*n, *c, *h, *w]),
        _ => Err(crate::error::shape_err!("{what} expects [N,C,H,W], got {dims:?}")),
    }
}
