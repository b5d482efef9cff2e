//! Central finite-difference gradient checking in 64-bit precision.
//!
//! The checked function's output is contracted with a fixed random tensor so
//! that every output element contributes to the scalar being differentiated.
//! Numeric derivatives come from forward passes only and never touch the
//! backward implementations under test.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Mode, ParamStore, Session};
use crate::tensor::{Tensor, Var};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Finite-difference step.
    pub step: f64,
    /// Elements whose analytic and numeric gradients are both below this are skipped.
    pub min_magnitude: f64,
    /// Caps the number of probed elements per parameter (sampled without replacement).
    pub max_elements_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            min_magnitude: 1e-6,
            max_elements_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    /// Elements compared (above the magnitude floor).
    pub compared: usize,
    pub max_rel_error: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.compared > 0 && self.max_rel_error < tolerance
    }

    pub fn merge(&mut self, other: GradCheckReport) {
        self.compared += other.compared;
        if other.max_rel_error > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
            if other.worst.is_some() {
                self.worst = other.worst;
            }
        }
    }
}

fn project(s: &mut Session<'_, f64>, out: &Var<f64>, weights: &Tensor<f64>) -> Result<Var<f64>> {
    let w = s.tape.constant(weights);
    let prod = s.tape.mul(out, &w)?;
    Ok(s.tape.sum(&prod))
}

/// Compares analytic gradients of every trainable entry in `store` against
/// central differences of `forward`.
pub fn check<F>(
    store: &mut ParamStore<f64>,
    mode: Mode,
    cfg: &GradCheckConfig,
    mut forward: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Session<'_, f64>) -> Result<Var<f64>>,
{
    let out_dims = {
        let mut s = Session::new(store, mode, false);
        forward(&mut s)?.dims().to_vec()
    };
    let weights = Tensor::<f64>::uniform(&out_dims, -1.0, 1.0, cfg.seed ^ 0x5eed)?;

    store.zero_grads();
    {
        let mut s = Session::new(store, mode, true);
        let out = forward(&mut s)?;
        let loss = project(&mut s, &out, &weights)?;
        s.backward(&loss)?;
    }
    let analytic: Vec<Option<Vec<f64>>> = store
        .iter()
        .map(|(_, p)| {
            p.trainable.then(|| {
                p.tensor
                    .grad()
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; p.tensor.numel()])
            })
        })
        .collect();
    store.zero_grads();

    let mut eval = |store: &mut ParamStore<f64>| -> Result<f64> {
        let mut s = Session::new(store, mode, false);
        let out = forward(&mut s)?;
        Ok(project(&mut s, &out, &weights)?.item())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for (id, grad) in ids.into_iter().zip(analytic) {
        let Some(grad) = grad else { continue };
        let len = grad.len();
        let indices: Vec<usize> = match cfg.max_elements_per_param {
            Some(cap) if cap < len => {
                let mut v = sample(&mut rng, len, cap).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..len).collect(),
        };
        for i in indices {
            let original = store.tensor(id).data()[i];
            store.tensor_mut(id).data_mut()[i] = original + cfg.step;
            let plus = eval(store)?;
            store.tensor_mut(id).data_mut()[i] = original - cfg.step;
            let minus = eval(store)?;
            store.tensor_mut(id).data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let scale = grad[i].abs().max(numeric.abs());
            if scale <= cfg.min_magnitude {
                continue;
            }
            let rel = (grad[i] - numeric).abs() / scale;
            report.compared += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some(Mismatch {
                    param: store.get(id).name.clone(),
                    index: i,
                    analytic: grad[i],
                    numeric,
                });
            }
        }
    }
    Ok(report)
}
