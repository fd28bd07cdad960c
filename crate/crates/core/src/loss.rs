//! Residual L2 loss regularized by the total variation of the clean estimate.
//!
//! For a batch of `N` samples with predicted noise `R`, noisy input `y` and
//! clean target `x`:
//!
//! ```text
//! L = 1/(2N) Σᵢ ‖Rᵢ − (yᵢ − xᵢ)‖² + β(epoch)/N Σᵢ TV(yᵢ − Rᵢ)
//! TV(u) = Σ_c Σ_ij sqrt((∇x u)² + (∇y u)²)
//! ```
//!
//! Derivatives are forward differences that vanish on the last row and
//! column. The gradient uses the smoothed surrogate `sqrt(|∇u|² + ε²)`, which
//! is differentiable where the image is locally flat.

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// TV weight schedule and smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvL2Config {
    /// TV weight before `switch_epoch`.
    pub beta: f64,
    /// TV weight from `switch_epoch` on.
    pub beta_late: f64,
    pub switch_epoch: usize,
    /// Smoothing used by the gradient.
    pub tv_eps: f64,
}

impl Default for TvL2Config {
    fn default() -> Self {
        TvL2Config { beta: 1e-4, beta_late: 5e-4, switch_epoch: 30, tv_eps: 1e-3 }
    }
}

impl TvL2Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta_late >= 0.0) {
            return Err(Error::InvalidArgument("TV weights must be nonnegative".into()));
        }
        if !(self.tv_eps > 0.0) {
            return Err(Error::InvalidArgument("tv_eps must be positive".into()));
        }
        Ok(())
    }

    pub fn beta_at(&self, epoch: usize) -> f64 {
        if epoch < self.switch_epoch {
            self.beta
        } else {
            self.beta_late
        }
    }
}

#[inline]
fn diffs(p: &[f64], w: usize, h: usize, y: usize, x: usize) -> (f64, f64) {
    let v = p[y * w + x];
    let gx = if x + 1 < w { p[y * w + x + 1] - v } else { 0.0 };
    let gy = if y + 1 < h { p[(y + 1) * w + x] - v } else { 0.0 };
    (gx, gy)
}

fn plane_tv(p: &[f64], h: usize, w: usize, eps: f64) -> f64 {
    let e2 = eps * eps;
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = diffs(p, w, h, y, x);
            sum += (gx * gx + gy * gy + e2).sqrt();
        }
    }
    sum
}

/// Adds `scale · ∂TV_eps/∂u` for one plane into `out`.
fn plane_tv_grad(p: &[f64], h: usize, w: usize, eps: f64, scale: f64, out: &mut [f64]) {
    let e2 = eps * eps;
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = diffs(p, w, h, y, x);
            let m = (gx * gx + gy * gy + e2).sqrt();
            if m == 0.0 {
                continue;
            }
            let (a, b) = (scale * gx / m, scale * gy / m);
            if x + 1 < w {
                out[y * w + x + 1] += a;
                out[y * w + x] -= a;
            }
            if y + 1 < h {
                out[(y + 1) * w + x] += b;
                out[y * w + x] -= b;
            }
        }
    }
}

fn planes_f64<T: Real>(t: &Tensor<T>) -> Vec<f64> {
    t.as_slice().iter().map(|v| v.as_f64()).collect()
}

fn single_image<T: Real>(u: &Tensor<T>) -> Result<()> {
    if u.shape().n != 1 {
        return Err(Error::Shape(format!("TV expects one image, got batch of {}", u.shape().n)));
    }
    Ok(())
}

/// Total variation of one image, summed over channels.
pub fn tv_value<T: Real>(u: &Tensor<T>) -> Result<f64> {
    tv_smoothed(u, 0.0)
}

/// `Σ sqrt(|∇u|² + eps²)`; equals [`tv_value`] at `eps = 0`.
pub fn tv_smoothed<T: Real>(u: &Tensor<T>, eps: f64) -> Result<f64> {
    single_image(u)?;
    let s = u.shape();
    let data = planes_f64(u);
    Ok(data.chunks_exact(s.plane()).map(|p| plane_tv(p, s.h, s.w, eps)).sum())
}

fn check_triplet<T: Real>(r: &Tensor<T>, y: &Tensor<T>, x: &Tensor<T>) -> Result<()> {
    r.expect_same_shape(y)?;
    r.expect_same_shape(x)?;
    if r.shape().n == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    Ok(())
}

fn loss_with_eps<T: Real>(r: &Tensor<T>, y: &Tensor<T>, x: &Tensor<T>, beta: f64, eps: f64) -> Result<f64> {
    check_triplet(r, y, x)?;
    let s = r.shape();
    let n = s.n as f64;
    let (rv, yv, xv) = (planes_f64(r), planes_f64(y), planes_f64(x));
    let data: f64 = rv.iter().zip(&yv).zip(&xv).map(|((r, y), x)| (r - (y - x)).powi(2)).sum();
    let mut total = data / (2.0 * n);
    if beta != 0.0 {
        let u: Vec<f64> = yv.iter().zip(&rv).map(|(y, r)| y - r).collect();
        let tv: f64 = u.chunks_exact(s.plane()).map(|p| plane_tv(p, s.h, s.w, eps)).sum();
        total += beta / n * tv;
    }
    Ok(total)
}

/// Batch loss with the exact (unsmoothed) TV term.
pub fn loss_forward<T: Real>(r: &Tensor<T>, y: &Tensor<T>, x: &Tensor<T>, cfg: &TvL2Config, epoch: usize) -> Result<f64> {
    loss_with_eps(r, y, x, cfg.beta_at(epoch), 0.0)
}

/// Batch loss with the smoothed TV term whose gradient [`loss_backward`] returns.
pub fn smoothed_loss_forward<T: Real>(
    r: &Tensor<T>,
    y: &Tensor<T>,
    x: &Tensor<T>,
    cfg: &TvL2Config,
    epoch: usize,
) -> Result<f64> {
    loss_with_eps(r, y, x, cfg.beta_at(epoch), cfg.tv_eps)
}

/// Gradient of [`smoothed_loss_forward`] with respect to `R`.
pub fn loss_backward<T: Real>(
    r: &Tensor<T>,
    y: &Tensor<T>,
    x: &Tensor<T>,
    cfg: &TvL2Config,
    epoch: usize,
) -> Result<Tensor<T>> {
    check_triplet(r, y, x)?;
    let s = r.shape();
    let n = s.n as f64;
    let (rv, yv, xv) = (planes_f64(r), planes_f64(y), planes_f64(x));
    let mut grad: Vec<f64> = rv.iter().zip(&yv).zip(&xv).map(|((r, y), x)| (r - (y - x)) / n).collect();
    let beta = cfg.beta_at(epoch);
    if beta != 0.0 {
        let u: Vec<f64> = yv.iter().zip(&rv).map(|(y, r)| y - r).collect();
        // u = y − R, so ∂/∂R = −∂/∂u
        for (up, gp) in u.chunks_exact(s.plane()).zip(grad.chunks_exact_mut(s.plane())) {
            plane_tv_grad(up, s.h, s.w, cfg.tv_eps, -beta / n, gp);
        }
    }
    Tensor::from_vec(s, grad.into_iter().map(T::from_f64_lossy).collect())
}
