//! Adam with linear warmup followed by linear decay to zero.

use serde::{Deserialize, Serialize};

use crate::encoder::Params;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Peak `lr` reached after `warmup_frac` of `total_steps`, then linear
/// decay to zero at the last step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl Schedule {
    pub fn new(lr: f64, total_steps: usize, warmup_frac: f64) -> Self {
        let warmup_steps = ((total_steps as f64) * warmup_frac).round() as usize;
        Self {
            lr,
            total_steps: total_steps.max(1),
            warmup_steps: warmup_steps.min(total_steps),
        }
    }

    /// Learning rate of the zero-based step `t`.
    pub fn at(&self, t: usize) -> f64 {
        if t < self.warmup_steps {
            return self.lr * (t + 1) as f64 / self.warmup_steps as f64;
        }
        let decay = self.total_steps - self.warmup_steps;
        if decay == 0 {
            return self.lr;
        }
        let done = (t - self.warmup_steps) as f64;
        self.lr * (1.0 - done / decay as f64).max(0.0)
    }
}

pub struct Adam {
    config: AdamConfig,
    m: Params<f64>,
    v: Params<f64>,
    step: usize,
}

impl Adam {
    pub fn new(params: &Params<f64>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn update(&mut self, params: &mut Params<f64>, grads: &Params<f64>, lr: f64) {
        self.step += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for t in 0..params.len() {
            let g = &grads.get(t).data;
            let m = &mut self.m.get_mut(t).data;
            let v = &mut self.v.get_mut(t).data;
            let w = &mut params.get_mut(t).data;
            for i in 0..w.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let update = (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                w[i] -= lr * (update + weight_decay * w[i]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::Mat;

    #[test]
    fn schedule_shape() {
        let s = Schedule::new(1.0, 10, 0.1);
        assert_eq!(s.warmup_steps, 1);
        assert_eq!(s.at(0), 1.0);
        assert!((s.at(1) - 1.0).abs() < 1e-12);
        assert!((s.at(5) - 1.0 + 4.0 / 9.0).abs() < 1e-12);
        assert!(s.at(9) > 0.0);
        assert_eq!(s.at(10), 0.0);
        let s = Schedule::new(2.0, 100, 0.1);
        assert!((s.at(4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Params::new();
        p.push("w", Mat::from_vec(1, 2, vec![1.0, -1.0]));
        let mut g = p.zeros_like();
        g.get_mut(0).data.copy_from_slice(&[0.5, -3.0]);
        let mut adam = Adam::new(&p, AdamConfig::default());
        adam.update(&mut p, &g, 0.1);
        assert!((p.get(0).data[0] - 0.9).abs() < 1e-6);
        assert!((p.get(0).data[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut p = Params::new();
        p.push("w", Mat::from_vec(1, 1, vec![5.0]));
        let mut adam = Adam::new(&p, AdamConfig::default());
        for _ in 0..2000 {
            let mut g = p.zeros_like();
            g.get_mut(0).data[0] = 2.0 * (p.get(0).data[0] - 2.0);
            adam.update(&mut p, &g, 0.05);
        }
        assert!((p.get(0).data[0] - 2.0).abs() < 1e-2);
    }
}
