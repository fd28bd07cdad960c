//! Mini-batch training loop.

use std::time::Instant;

use crate::data::{make_batches, TrainingPair};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::loss::{loss_backward, loss_forward, TvL2Config};
use crate::metrics::psnr;
use crate::network::ResidualDenoiser;
use crate::optim::{SgdConfig, SgdState};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch shuffle.
    pub seed: u64,
    pub sgd: SgdConfig,
    pub loss: TvL2Config,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 50, batch_size: 128, seed: 0, sgd: SgdConfig::default(), loss: TvL2Config::default() }
    }
}

impl TrainConfig {
    /// Moves both step schedules to `epoch`.
    pub fn with_switch_epoch(mut self, epoch: usize) -> Self {
        self.sgd.switch_epoch = epoch;
        self.loss.switch_epoch = epoch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        self.sgd.validate()?;
        self.loss.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub lr: f64,
    pub beta: f64,
    pub wall_secs: f64,
}

impl std::fmt::Display for StepRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step epoch={} batch={} loss={:.6}", self.epoch, self.batch, self.loss)
    }
}

impl std::fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch epoch={} steps={} mean_loss={:.6} lr={:e} beta={:e} wall_secs={:.3}",
            self.epoch, self.steps, self.mean_loss, self.lr, self.beta, self.wall_secs
        )
    }
}

/// Network plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub net: ResidualDenoiser<T>,
    pub config: TrainConfig,
    sgd: SgdState<T>,
}

impl<T: Real> Trainer<T> {
    pub fn new(net: ResidualDenoiser<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let sgd = SgdState::new(config.sgd.clone());
        Ok(Trainer { net, config, sgd })
    }

    /// One optimizer step on a batch; returns the exact-TV loss before the update.
    pub fn step(&mut self, y: &Tensor<T>, x: &Tensor<T>, epoch: usize, batch: usize) -> Result<f64> {
        let r = self.net.forward(y, Mode::Train)?;
        let loss = loss_forward(&r, y, x, &self.config.loss, epoch)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, batch, loss });
        }
        let grad_r = loss_backward(&r, y, x, &self.config.loss, epoch)?;
        let grads = self.net.backward(&grad_r)?;
        let buffers = grads.buffers();
        if buffers.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch, batch, loss: f64::NAN });
        }
        self.sgd.step(&mut self.net.params_mut(), &buffers, epoch)?;
        Ok(loss)
    }

    /// Runs one epoch, calling `on_step` after every optimizer step.
    pub fn run_epoch(
        &mut self,
        pairs: &[TrainingPair<T>],
        epoch: usize,
        mut on_step: impl FnMut(&StepRecord),
    ) -> Result<EpochRecord> {
        let start = Instant::now();
        let batches = make_batches(pairs, self.config.batch_size, self.config.seed, epoch)?;
        if batches.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} pairs do not fill one batch of {}",
                pairs.len(),
                self.config.batch_size
            )));
        }
        let mut total = 0.0;
        let mut steps = 0;
        for (batch, item) in batches.enumerate() {
            let (y, x) = item?;
            let loss = self.step(&y, &x, epoch, batch)?;
            on_step(&StepRecord { epoch, batch, loss });
            total += loss;
            steps += 1;
        }
        Ok(EpochRecord {
            epoch,
            steps,
            mean_loss: total / steps as f64,
            lr: self.config.sgd.lr_at(epoch),
            beta: self.config.loss.beta_at(epoch),
            wall_secs: start.elapsed().as_secs_f64(),
        })
    }

    /// Runs epochs `first..config.epochs`, calling `on_epoch` after each.
    /// The callback may fail (a checkpoint write, say), which stops training.
    pub fn fit(
        &mut self,
        pairs: &[TrainingPair<T>],
        first: usize,
        mut on_step: impl FnMut(&StepRecord),
        mut on_epoch: impl FnMut(&EpochRecord, &ResidualDenoiser<T>) -> Result<()>,
    ) -> Result<Vec<EpochRecord>> {
        let mut out = Vec::with_capacity(self.config.epochs.saturating_sub(first));
        for epoch in first..self.config.epochs {
            let rec = self.run_epoch(pairs, epoch, &mut on_step)?;
            on_epoch(&rec, &self.net)?;
            out.push(rec);
        }
        Ok(out)
    }

    /// Mean train-mode loss over the epoch-`epoch` batches without updating
    /// anything (running statistics included).
    pub fn mean_loss(&self, pairs: &[TrainingPair<T>], epoch: usize) -> Result<f64> {
        let mut net = self.net.clone();
        let mut total = 0.0;
        let mut steps = 0;
        for item in make_batches(pairs, self.config.batch_size, self.config.seed, epoch)? {
            let (y, x) = item?;
            let r = net.forward(&y, Mode::Train)?;
            total += loss_forward(&r, &y, &x, &self.config.loss, epoch)?;
            steps += 1;
        }
        Ok(total / steps.max(1) as f64)
    }
}

/// Mean PSNR of the denoised and of the noisy inputs against the clean targets.
pub fn mean_psnr<T: Real>(net: &ResidualDenoiser<T>, pairs: &[TrainingPair<T>]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to evaluate".into()));
    }
    let (mut den, mut noisy) = (0.0, 0.0);
    for p in pairs {
        den += psnr(&net.denoise(&p.noisy)?, &p.clean)?;
        noisy += psnr(&p.noisy, &p.clean)?;
    }
    Ok((den / pairs.len() as f64, noisy / pairs.len() as f64))
}
