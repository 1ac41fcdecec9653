//! Adam with per-coordinate step scaling and a cosine learning-rate schedule.

use std::f64::consts::PI;

pub(crate) const BETA1: f64 = 0.9;
pub(crate) const BETA2: f64 = 0.999;
pub(crate) const EPSILON: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize) -> Self {
        Adam {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    /// Returns the descent step `−lr·scale·m̂/(√v̂ + ε)` for `grad`.
    ///
    /// Coordinates with a zero `scale` are frozen and produce a zero step.
    pub fn step(&mut self, grad: &[f64], scale: &[f64], lr: f64) -> Vec<f64> {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        grad.iter()
            .zip(scale)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .map(|((&g, &s), (m, v))| {
                if s == 0.0 {
                    return 0.0;
                }
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                -lr * s * m_hat / (v_hat.sqrt() + EPSILON)
            })
            .collect()
    }
}

/// Cosine decay from `initial` at epoch 0 to `final_lr` at the last epoch.
pub fn cosine_lr(initial: f64, final_lr: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs <= 1 {
        return initial;
    }
    let progress = epoch as f64 / (epochs - 1) as f64;
    final_lr + 0.5 * (initial - final_lr) * (1.0 + (PI * progress).cos())
}
