//! Peak signal-to-noise ratio on `[0, 1]` intensities.

use crate::error::Result;
use crate::tensor::{Real, Tensor};

/// Mean squared error, accumulated in `f64`.
pub fn mse<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    a.expect_same_shape(b)?;
    let n = a.as_slice().len().max(1) as f64;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2)).sum::<f64>() / n)
}

/// `10·log10(1 / MSE)` in dB with peak 1; `+∞` when the inputs are identical.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let e = mse(a, b)?;
    Ok(if e == 0.0 { f64::INFINITY } else { -10.0 * e.log10() })
}

/// PSNR of a noise level given on the 0–255 scale: `10·log10(255² / σ²)`.
pub fn psnr_for_sigma(sigma: f64) -> f64 {
    20.0 * (255.0 / sigma).log10()
}
