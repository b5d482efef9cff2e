use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// First and second moments, one slot per store entry (empty for buffers).
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = || -> Vec<Vec<T>> {
            store
                .iter()
                .map(|(_, p)| if p.trainable { vec![T::zero(); p.tensor.numel()] } else { Vec::new() })
                .collect()
        };
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// One bias-corrected Adam update from the gradients held in `store`.
///
/// Every gradient is checked before anything is written, so a non-finite
/// gradient leaves parameters and state untouched. Trainable parameters
/// without a gradient are treated as having a zero gradient.
pub fn adam_step<T: Scalar>(store: &mut ParamStore<T>, state: &mut AdamState<T>, cfg: &AdamConfig) -> Result<()> {
    if state.m.len() != store.len() || state.v.len() != store.len() {
        return Err(Error::Contract(format!(
            "optimizer state covers {} entries, store has {}",
            state.m.len(),
            store.len()
        )));
    }
    for (_, p) in store.iter() {
        if let Some(g) = p.tensor.grad() {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient {} in parameter {} at element {i}",
                    g[i], p.name
                )));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::lit(1.0 - cfg.beta1.powi(t));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t));
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
    let (one, zero) = (T::one(), T::zero());
    for (id, p) in store.iter_mut() {
        if !p.trainable {
            continue;
        }
        let (m, v) = (&mut state.m[id.index()], &mut state.v[id.index()]);
        let grad = p.tensor.grad().map(<[T]>::to_vec);
        let data = p.tensor.data_mut();
        for i in 0..data.len() {
            let g = grad.as_ref().map_or(zero, |g| g[i]);
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;

    fn scalar_store(v: f64) -> (ParamStore<f64>, crate::nn::ParamId) {
        let mut s = ParamStore::new();
        let id = s.register("p", &[1], Init::Zeros, true).unwrap();
        s.assign("p", &[1], vec![v]).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let cfg = AdamConfig::default();
        let (mut s, id) = scalar_store(2.0);
        let mut st = AdamState::new(&s);
        s.tensor_mut(id).accumulate_grad(&[0.0]).unwrap();
        adam_step(&mut s, &mut st, &cfg).unwrap();
        assert_eq!(s.tensor(id).data(), &[2.0]);

        let (mut s, id) = scalar_store(2.0);
        let mut st = AdamState::new(&s);
        st.m[0][0] = 1.0;
        st.v[0][0] = 1.0;
        s.tensor_mut(id).accumulate_grad(&[0.0]).unwrap();
        adam_step(&mut s, &mut st, &cfg).unwrap();
        assert_eq!(st.m[0][0], 0.9);
        assert!((st.v[0][0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = scalar_store(0.5);
        let mut st = AdamState::new(&s);
        s.tensor_mut(id).accumulate_grad(&[1.0]).unwrap();
        let cfg = AdamConfig::default();
        adam_step(&mut s, &mut st, &cfg).unwrap();
        // m_hat = 1, v_hat = 1
        let want = 0.5 - cfg.lr / (1.0 + cfg.eps);
        assert!((s.tensor(id).data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let (mut s, id) = scalar_store(0.5);
        let mut st = AdamState::new(&s);
        s.tensor_mut(id).accumulate_grad(&[f64::NAN]).unwrap();
        let err = adam_step(&mut s, &mut st, &AdamConfig::default()).unwrap_err();
        assert!(matches!(&err, Error::Numeric(m) if m.contains("parameter p")), "{err}");
        assert_eq!(st.step, 0);
        assert_eq!(s.tensor(id).data(), &[0.5]);
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        // loss = x^2 / 2 with a constant gradient sign while x > 0
        let (mut s, id) = scalar_store(1.0);
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig { lr: 1e-3, ..AdamConfig::default() };
        let mut prev = 0.5;
        for _ in 0..100 {
            s.zero_grads();
            s.tensor_mut(id).accumulate_grad(&[1.0]).unwrap();
            adam_step(&mut s, &mut st, &cfg).unwrap();
            let x = s.tensor(id).data()[0];
            let loss = 0.5 * x * x;
            assert!(loss < prev);
            prev = loss;
        }
    }
}
