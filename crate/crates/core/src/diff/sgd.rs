use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Step-decay schedule: `lr(e) = initial_lr * decay_factor^floor(e / decay_every)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr > 0.0) || !self.initial_lr.is_finite() {
            return Err(Error::Config(format!("initial_lr must be positive, got {}", self.initial_lr)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::Config(format!("decay_factor must lie in (0, 1), got {}", self.decay_factor)));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay_every must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.initial_lr * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// `p - lr * g`, elementwise.
pub fn sgd_step(param: &Tensor, grad: &Tensor, lr: f64) -> Result<Tensor> {
    if !(lr > 0.0) {
        return Err(Error::Invalid(format!("learning rate must be positive, got {lr}")));
    }
    param.zip_map(grad, "sgd_step", |p, g| p - lr * g)
}
