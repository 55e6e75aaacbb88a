use ndarray::Zip;

use super::{Gradients, Model, NetworkSpec};
use crate::error::{usage, Result};

/// Adam hyperparameters. Defaults: `β1 = 0.9`, `β2 = 0.999`, `ε = 1e-8`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(usage!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(usage!("Adam betas must lie in [0, 1), got {} and {}", self.beta1, self.beta2));
        }
        if !(self.epsilon > 0.0) {
            return Err(usage!("Adam epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Optimizer state: hyperparameters and first/second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
}

impl Adam {
    pub fn new(config: AdamConfig, spec: &NetworkSpec) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, first_moment: Gradients::zeros_like(spec), second_moment: Gradients::zeros_like(spec) })
    }

    /// One bias-corrected Adam update; increments `model.step`.
    ///
    /// `m ← β1 m + (1-β1) g`, `v ← β2 v + (1-β2) g²`,
    /// `θ ← θ - lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1-β1^t)`, `v̂ = v/(1-β2^t)`.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<()> {
        let shapes_match = grads.layers.len() == model.layers.len()
            && grads.layers.iter().zip(&model.layers).all(|(g, p)| g.weights.dim() == p.weights.dim() && g.bias.len() == p.bias.len());
        if !shapes_match || self.first_moment.layers.len() != model.layers.len() {
            return Err(usage!("gradient shapes do not match the model"));
        }
        let t = model.step + 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps } = self.config;
        let c1 = 1.0 - b1.powf(t as f64);
        let c2 = 1.0 - b2.powf(t as f64);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, &g: &f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((param, m), v), g) in model
            .layers
            .iter_mut()
            .zip(&mut self.first_moment.layers)
            .zip(&mut self.second_moment.layers)
            .zip(&grads.layers)
        {
            Zip::from(&mut param.weights).and(&mut m.weights).and(&mut v.weights).and(&g.weights).for_each(update);
            Zip::from(&mut param.bias).and(&mut m.bias).and(&mut v.bias).and(&g.bias).for_each(update);
        }
        model.step = t;
        Ok(())
    }
}
