//! AdamW with a step-decay learning-rate schedule.

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Learning-rate multiplier applied once every `decay_every` steps.
    pub decay: f64,
    pub decay_every: u64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            decay: 0.33,
            decay_every: 100,
        }
    }
}

impl AdamWConfig {
    /// `base_lr · decay^⌊step / decay_every⌋`
    pub fn learning_rate(&self, step: u64) -> f64 {
        let k = step / self.decay_every.max(1);
        self.base_lr * self.decay.powi(k as i32)
    }
}

/// Moment accumulators and step counter for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, num_params: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
        }
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Learning rate the next call to [`AdamW::step`] will use.
    pub fn current_lr(&self) -> f64 {
        self.config.learning_rate(self.step)
    }

    /// Applies one update and returns the learning rate it used.
    ///
    /// Parameters are untouched if any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<f64> {
        check_dim("parameter count", self.first_moment.len(), params.len())?;
        check_dim("gradient length", params.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite gradient at parameter {i}")));
        }
        let lr = self.current_lr();
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= lr * c.weight_decay * *p;
            *p -= lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(lr)
    }
}
