//! Adaptive-moment gradient descent sized for networks of <= 500k parameters.

use crate::error::{Error, Result};
use crate::params::ParamStore;

/// Optimizer state: per-parameter first/second moment accumulators plus the
/// usual decay pair. Defaults are the field-standard 0.9 / 0.999 / 1e-8 with
/// step size 1e-3.
#[derive(Debug, Clone)]
pub struct Adam {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl Adam {
    pub fn new(param_count: usize, step_size: f64) -> Self {
        Self {
            step_size,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
        }
    }

    pub fn with_defaults(param_count: usize) -> Self {
        Self::new(param_count, 1e-3)
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update in place. A NaN (or infinite) gradient aborts with the
    /// name of the offending parameter block before anything is touched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &[f64]) -> Result<()> {
        if grads.len() != params.len() || grads.len() != self.first_moment.len() {
            return Err(Error::DimensionMismatch {
                op: "optimizer_step",
                details: format!(
                    "{} gradients for {} parameters ({} moments)",
                    grads.len(),
                    params.len(),
                    self.first_moment.len()
                ),
            });
        }
        if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NanGradient {
                block: params.block_of_index(bad).to_string(),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let data = params.data_mut();
        for i in 0..grads.len() {
            let g = grads[i];
            self.first_moment[i] = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            self.second_moment[i] = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.first_moment[i] / bias1;
            let v_hat = self.second_moment[i] / bias2;
            data[i] -= self.step_size * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.add_block("p", values.len(), 1);
        s.data_mut().copy_from_slice(values);
        s
    }

    /// Independent scalar simulation of the update rule, written directly
    /// from the moment recursions.
    fn scalar_adam_oracle(p0: f64, g: f64, steps: usize, lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut p, mut m, mut v) = (p0, 0.0, 0.0);
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut store = store_with(&[1.5, -2.0]);
        let mut opt = Adam::with_defaults(2);
        opt.step(&mut store, &[0.0, 0.0]).unwrap();
        assert_eq!(store.data(), &[1.5, -2.0]);
        // but moments did decay through the zero update
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn constant_gradient_moves_monotonically_against_it() {
        let mut store = store_with(&[0.0]);
        let mut opt = Adam::with_defaults(1);
        let mut last = 0.0;
        for step in 1..=200 {
            opt.step(&mut store, &[2.5]).unwrap();
            let now = store.data()[0];
            assert!(now < last, "step {}: {} not < {}", step, now, last);
            last = now;
        }
        let oracle = scalar_adam_oracle(0.0, 2.5, 200, 1e-3);
        assert!((last - oracle).abs() < 1e-12);
    }

    #[test]
    fn quadratic_bowl_reaches_minimum() {
        // f(p) = ||p||^2, gradient 2p: must reach < 1e-6 within 2000 steps
        let mut store = store_with(&[0.3, -0.2, 0.1]);
        let mut opt = Adam::with_defaults(3);
        for _ in 0..2000 {
            let grads: Vec<f64> = store.data().iter().map(|p| 2.0 * p).collect();
            opt.step(&mut store, &grads).unwrap();
        }
        let value: f64 = store.data().iter().map(|p| p * p).sum();
        assert!(value < 1e-6, "quadratic bowl value {}", value);
    }

    #[test]
    fn nan_gradient_names_the_block() {
        let mut store = ParamStore::new();
        store.add_block("fc_in.w", 2, 1);
        store.add_block("gru.u_z", 2, 1);
        let mut opt = Adam::with_defaults(4);
        let err = opt
            .step(&mut store, &[0.0, 0.0, f64::NAN, 0.0])
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gru.u_z"), "message was: {}", msg);
    }
}
