//! Central finite differences against analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::Params;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Entries checked per tensor; smaller tensors are checked in full.
    pub samples_per_tensor: usize,
    /// Denominator floor, so entries whose true gradient is ~0 are compared
    /// on an absolute scale.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            samples_per_tensor: 32,
            floor: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn min_checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).min().unwrap_or(0)
    }

    /// Error naming the worst tensor when any error reaches `tolerance`.
    pub fn ensure(&self, tolerance: f64) -> Result<()> {
        match self.worst() {
            Some(w) if w.max_rel_error >= tolerance => Err(Error::GradCheck {
                tensor: w.name.clone(),
                error: w.max_rel_error,
            }),
            _ => Ok(()),
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

/// Compare `grad(params)` with central differences of `loss` on sampled
/// entries of every tensor.
pub fn grad_check<L, G>(
    params: &Params<f64>,
    loss: L,
    grad: G,
    opts: &GradCheckOptions,
) -> GradCheckReport
where
    L: Fn(&Params<f64>) -> f64,
    G: Fn(&Params<f64>) -> Params<f64>,
{
    let analytic = grad(params);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let mut tensors = Vec::with_capacity(params.len());
    for t in 0..params.len() {
        let len = params.get(t).len();
        let picks: Vec<usize> = if len <= opts.samples_per_tensor {
            (0..len).collect()
        } else {
            sample(&mut rng, len, opts.samples_per_tensor).into_vec()
        };
        let mut worst = 0.0f64;
        for &i in &picks {
            let orig = work.get(t).data[i];
            work.get_mut(t).data[i] = orig + opts.epsilon;
            let up = loss(&work);
            work.get_mut(t).data[i] = orig - opts.epsilon;
            let down = loss(&work);
            work.get_mut(t).data[i] = orig;
            let numeric = (up - down) / (2.0 * opts.epsilon);
            worst = worst.max(relative_error(analytic.get(t).data[i], numeric, opts.floor));
        }
        tensors.push(TensorCheck {
            name: params.name(t).to_string(),
            checked: picks.len(),
            max_rel_error: worst,
        });
    }
    GradCheckReport { tensors }
}
