//! SGD with momentum, decoupled-from-bias weight decay and step schedules.

use crate::error::{Error, Result};
use crate::network::{ParamKind, ParamMut};
use crate::tensor::Real;

/// Two-phase value: `early` before `switch_epoch`, `late` from then on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub early: f64,
    pub late: f64,
    pub switch_epoch: usize,
}

impl StepSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        if epoch < self.switch_epoch {
            self.early
        } else {
            self.late
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub lr_late: f64,
    pub switch_epoch: usize,
    pub momentum: f64,
    /// L2 penalty on convolution weights; biases and BN parameters are exempt.
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { lr: 1e-3, lr_late: 1e-4, switch_epoch: 30, momentum: 0.9, weight_decay: 1e-4 }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr_late > 0.0) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(format!("momentum {} not in [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument("weight decay must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn lr_schedule(&self) -> StepSchedule {
        StepSchedule { early: self.lr, late: self.lr_late, switch_epoch: self.switch_epoch }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr_schedule().at(epoch)
    }
}

/// Optimizer state: configuration plus one velocity buffer per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState<T> {
    pub config: SgdConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Real> SgdState<T> {
    pub fn new(config: SgdConfig) -> Self {
        SgdState { config, velocity: Vec::new() }
    }

    pub fn velocity(&self) -> &[Vec<T>] {
        &self.velocity
    }

    /// One update:
    /// `g' = g + wd·p` (conv weights only), `v = μ·v + g'`, `p -= lr(epoch)·v`.
    pub fn step(&mut self, params: &mut [ParamMut<'_, T>], grads: &[&[T]], epoch: usize) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Shape(format!("{} parameters but {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.values.len() != g.len() {
                return Err(Error::Shape(format!("gradient for {} has {} entries, expected {}", p.name, g.len(), p.values.len())));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params.iter().map(|p| vec![T::zero(); p.values.len()]).collect();
        } else if self.velocity.len() != params.len()
            || self.velocity.iter().zip(params.iter()).any(|(v, p)| v.len() != p.values.len())
        {
            return Err(Error::Shape("velocity buffers do not mirror the parameters".into()));
        }
        let lr = T::from_f64_lossy(self.config.lr_at(epoch));
        let mu = T::from_f64_lossy(self.config.momentum);
        let wd = T::from_f64_lossy(self.config.weight_decay);
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let decay = if p.kind == ParamKind::ConvWeight { wd } else { T::zero() };
            for ((w, &gi), vi) in p.values.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                *vi = mu * *vi + gi + decay * *w;
                *w = *w - lr * *vi;
            }
        }
        Ok(())
    }
}
