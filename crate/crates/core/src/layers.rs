//! Activations, batch normalization and MSRA initialization.

use crate::conv::Filter;
use crate::error::{Error, Result};
use crate::rng::{self, Gaussian};
use crate::tensor::{Real, Shape, Tensor};

/// Saturation level `alpha` of the exponential linear unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EluParams {
    alpha: f64,
}

impl EluParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha.is_finite() {
            Ok(EluParams { alpha })
        } else {
            Err(Error::InvalidArgument(format!("ELU alpha must be positive, got {alpha}")))
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for EluParams {
    fn default() -> Self {
        EluParams { alpha: 1.0 }
    }
}

#[inline]
pub fn elu<T: Real>(x: T, alpha: T) -> T {
    if x > T::zero() {
        x
    } else {
        alpha * x.exp_m1()
    }
}

/// Derivative of [`elu`]; the kink at zero takes the positive branch.
#[inline]
pub fn elu_grad<T: Real>(x: T, alpha: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        alpha * x.exp()
    }
}

pub fn elu_forward<T: Real>(x: &Tensor<T>, p: EluParams) -> Tensor<T> {
    let a = T::from_f64_lossy(p.alpha);
    x.map(|v| elu(v, a))
}

pub fn elu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>, p: EluParams) -> Result<Tensor<T>> {
    let a = T::from_f64_lossy(p.alpha);
    x.zip_map(grad_out, |v, g| g * elu_grad(v, a))
}

pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

/// Pointwise nonlinearity choice shared by the network and the texture experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Elu(EluParams),
    Relu,
    Identity,
}

impl Activation {
    pub fn elu(alpha: f64) -> Result<Self> {
        Ok(Activation::Elu(EluParams::new(alpha)?))
    }

    pub fn forward<T: Real>(&self, x: &Tensor<T>) -> Tensor<T> {
        match self {
            Activation::Elu(p) => elu_forward(x, *p),
            Activation::Relu => relu_forward(x),
            Activation::Identity => x.clone(),
        }
    }

    pub fn backward<T: Real>(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Activation::Elu(p) => elu_backward(x, grad_out, *p),
            Activation::Relu => relu_backward(x, grad_out),
            Activation::Identity => {
                x.expect_same_shape(grad_out)?;
                Ok(grad_out.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_STAT_MOMENTUM: f64 = 0.1;

/// Per-channel batch-norm parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub stat_momentum: f64,
    pub mode: Mode,
}

impl<T: Real> BatchNormState<T> {
    /// Identity affine map, zero mean and unit variance running stats.
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: BN_EPS,
            stat_momentum: BN_STAT_MOMENTUM,
            mode: Mode::Train,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check(&self, x: &Tensor<T>) -> Result<()> {
        let c = x.shape().c;
        if c != self.channels() {
            return Err(Error::Shape(format!("input has {c} channels, batch norm has {}", self.channels())));
        }
        Ok(())
    }
}

/// Biased per-channel mean and variance over `(batch, h, w)`, in `f64`.
fn batch_stats<T: Real>(x: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = x.shape();
    let count = s.n * s.plane();
    if count < 2 {
        return Err(Error::DegenerateBatch(count));
    }
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    for c in 0..s.c {
        let mut sum = 0.0;
        for n in 0..s.n {
            sum += x.plane(n, c).iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let m = sum / count as f64;
        let mut sq = 0.0;
        for n in 0..s.n {
            sq += x.plane(n, c).iter().map(|v| (v.as_f64() - m).powi(2)).sum::<f64>();
        }
        mean[c] = m;
        var[c] = sq / count as f64;
    }
    Ok((mean, var))
}

fn affine_per_channel<T: Real>(x: &Tensor<T>, scale: &[f64], shift: &[f64]) -> Tensor<T> {
    let s = x.shape();
    let mut out = x.clone();
    let p = s.plane();
    for (i, plane) in out.as_mut_slice().chunks_exact_mut(p).enumerate() {
        let c = i % s.c;
        let (a, b) = (T::from_f64_lossy(scale[c]), T::from_f64_lossy(shift[c]));
        for v in plane {
            *v = *v * a + b;
        }
    }
    out
}

/// Batch normalization forward pass.
///
/// In train mode the batch statistics normalize the input and the running
/// statistics move toward them by `stat_momentum`. In eval mode the running
/// statistics are used and the state is left untouched.
pub fn batchnorm_forward<T: Real>(x: &Tensor<T>, s: &mut BatchNormState<T>) -> Result<Tensor<T>> {
    s.check(x)?;
    let (mean, var) = match s.mode {
        Mode::Train => {
            let (mean, var) = batch_stats(x)?;
            let m = s.stat_momentum;
            for c in 0..s.channels() {
                s.running_mean[c] = T::from_f64_lossy((1.0 - m) * s.running_mean[c].as_f64() + m * mean[c]);
                s.running_var[c] = T::from_f64_lossy((1.0 - m) * s.running_var[c].as_f64() + m * var[c]);
            }
            (mean, var)
        }
        Mode::Eval => (
            s.running_mean.iter().map(|v| v.as_f64()).collect(),
            s.running_var.iter().map(|v| v.as_f64()).collect(),
        ),
    };
    let scale: Vec<f64> =
        (0..s.channels()).map(|c| s.gamma[c].as_f64() / (var[c] + s.eps).sqrt()).collect();
    let shift: Vec<f64> = (0..s.channels()).map(|c| s.beta[c].as_f64() - mean[c] * scale[c]).collect();
    let out = affine_per_channel(x, &scale, &shift);
    out.check_finite("batchnorm_forward")?;
    Ok(out)
}

/// Normalizes with the running statistics regardless of `s.mode`, without
/// touching the state.
pub fn batchnorm_infer<T: Real>(x: &Tensor<T>, s: &BatchNormState<T>) -> Result<Tensor<T>> {
    s.check(x)?;
    let scale: Vec<f64> =
        (0..s.channels()).map(|c| s.gamma[c].as_f64() / (s.running_var[c].as_f64() + s.eps).sqrt()).collect();
    let shift: Vec<f64> =
        (0..s.channels()).map(|c| s.beta[c].as_f64() - s.running_mean[c].as_f64() * scale[c]).collect();
    let out = affine_per_channel(x, &scale, &shift);
    out.check_finite("batchnorm_infer")?;
    Ok(out)
}

/// Gradients of train-mode batch normalization: `(grad_x, grad_gamma, grad_beta)`.
///
/// Batch statistics are recomputed from `x`, so `s` only supplies `gamma`.
pub fn batchnorm_backward<T: Real>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    s: &BatchNormState<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    if s.mode == Mode::Eval {
        return Err(Error::EvalMode);
    }
    s.check(x)?;
    x.expect_same_shape(grad_out)?;
    let (mean, var) = batch_stats(x)?;
    let sh = x.shape();
    let count = (sh.n * sh.plane()) as f64;
    let mut grad_x = Tensor::zeros(sh);
    let mut grad_gamma = vec![T::zero(); sh.c];
    let mut grad_beta = vec![T::zero(); sh.c];
    for c in 0..sh.c {
        let inv_std = 1.0 / (var[c] + s.eps).sqrt();
        let gamma = s.gamma[c].as_f64();
        let (mut sum_g, mut sum_g_xhat) = (0.0, 0.0);
        for n in 0..sh.n {
            for (&xv, &gv) in x.plane(n, c).iter().zip(grad_out.plane(n, c)) {
                let xhat = (xv.as_f64() - mean[c]) * inv_std;
                sum_g += gv.as_f64();
                sum_g_xhat += gv.as_f64() * xhat;
            }
        }
        grad_beta[c] = T::from_f64_lossy(sum_g);
        grad_gamma[c] = T::from_f64_lossy(sum_g_xhat);
        let k = gamma * inv_std / count;
        let p = sh.plane();
        for n in 0..sh.n {
            let base = sh.index(n, c, 0, 0);
            for i in 0..p {
                let xhat = (x.as_slice()[base + i].as_f64() - mean[c]) * inv_std;
                let g = grad_out.as_slice()[base + i].as_f64();
                grad_x.as_mut_slice()[base + i] = T::from_f64_lossy(k * (count * g - sum_g - xhat * sum_g_xhat));
            }
        }
    }
    Ok((grad_x, grad_gamma, grad_beta))
}

/// MSRA (He) initialization: `N(0, 2 / fan_in)` weights and zero bias.
pub fn msra_init<T: Real>(c_out: usize, c_in: usize, k: usize, seed: u64, stream: u64) -> Filter<T> {
    let std = (2.0 / (c_in * k * k) as f64).sqrt();
    let mut g = Gaussian::new(rng::stream(seed, stream));
    let shape = Shape::new(c_out, c_in, k, k);
    let weights = Tensor::from_fn(shape, |_, _, _, _| T::from_f64_lossy(std * g.sample()));
    Filter::new(weights, vec![T::zero(); c_out]).expect("MSRA weights are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(values: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(Shape::new(1, 1, 1, values.len()), values.to_vec()).unwrap()
    }

    #[test]
    fn elu_values() {
        let p = EluParams::new(0.1).unwrap();
        let y = elu_forward(&t(&[0.0, 2.0, -1.0]), p);
        assert_eq!(y.as_slice()[0], 0.0);
        assert_eq!(y.as_slice()[1], 2.0);
        assert!((y.as_slice()[2] - (-0.0632120558828558)).abs() < 1e-12);
        assert!(EluParams::new(0.0).is_err());
        assert!(EluParams::new(-1.0).is_err());
    }

    #[test]
    fn elu_derivative_values() {
        let p = EluParams::new(0.1).unwrap();
        let x = t(&[3.0, -1.0, 0.0]);
        let g = elu_backward(&x, &t(&[2.0, 1.0, 5.0]), p).unwrap();
        assert_eq!(g.as_slice()[0], 2.0);
        assert!((g.as_slice()[1] - 0.0367879441171442).abs() < 1e-12);
        // alpha * e^x == elu(x) + alpha on the negative branch
        assert!((g.as_slice()[1] - (elu(-1.0, 0.1) + 0.1)).abs() < 1e-15);
        assert_eq!(g.as_slice()[2], 5.0);
    }

    #[test]
    fn elu_is_bounded_below_and_continuous() {
        for alpha in [0.1, 1.0, 3.0] {
            for i in 0..2000 {
                // below about -36 the f64 result rounds to exactly -alpha
                let x = -30.0 + i as f64 * 0.02;
                assert!(elu(x, alpha) > -alpha);
            }
            assert!(elu(-1e-12, alpha).abs() < 1e-11);
        }
    }

    #[test]
    fn relu_values() {
        assert_eq!(relu_forward(&t(&[-3.0])).as_slice(), &[0.0]);
        assert_eq!(relu_forward(&t(&[5.0])).as_slice(), &[5.0]);
        assert_eq!(relu_forward(&t(&[-1.0, 0.0, 2.0])).as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn batchnorm_constant_channel_outputs_shift() {
        let mut s = BatchNormState::<f64>::new(1);
        s.beta[0] = 0.3;
        s.gamma[0] = 2.0;
        let x = Tensor::full(Shape::new(2, 1, 3, 3), 4.2);
        let y = batchnorm_forward(&x, &mut s).unwrap();
        assert!(y.as_slice().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn batchnorm_two_values() {
        let mut s = BatchNormState::<f64>::new(1);
        let y = batchnorm_forward(&t(&[-1.0, 1.0]), &mut s).unwrap();
        let k = 1.0 / (1.0 + BN_EPS).sqrt();
        assert!((y.as_slice()[0] + k).abs() < 1e-15);
        assert!((y.as_slice()[1] - k).abs() < 1e-15);
        assert!((s.running_mean[0] - 0.0).abs() < 1e-15);
        assert!((s.running_var[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut s = BatchNormState::<f64>::new(1);
        s.mode = Mode::Eval;
        let x = t(&[0.5, -2.0, 3.0]);
        let y = batchnorm_forward(&x, &mut s).unwrap();
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b / (1.0 + BN_EPS).sqrt()).abs() < 1e-15);
        }
        assert_eq!(s, {
            let mut e = BatchNormState::new(1);
            e.mode = Mode::Eval;
            e
        });
    }

    #[test]
    fn batchnorm_errors() {
        let mut s = BatchNormState::<f64>::new(1);
        assert!(matches!(batchnorm_forward(&t(&[1.0]), &mut s), Err(Error::DegenerateBatch(1))));
        let x = Tensor::zeros(Shape::new(1, 2, 2, 2));
        assert!(matches!(batchnorm_forward(&x, &mut s), Err(Error::Shape(_))));
        s.mode = Mode::Eval;
        let x = t(&[1.0, 2.0]);
        assert!(matches!(batchnorm_backward(&x, &x, &s), Err(Error::EvalMode)));
    }

    #[test]
    fn batchnorm_backward_zero_and_mean_free() {
        let s = BatchNormState::<f64>::new(2);
        let x = Tensor::from_fn(Shape::new(2, 2, 3, 3), |n, c, y, x| ((n * 7 + c * 5 + y * 3 + x) % 11) as f64 * 0.37);
        let (gx, gg, gb) = batchnorm_backward(&x, &Tensor::zeros(x.shape()), &s).unwrap();
        assert!(gx.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(gg, vec![0.0, 0.0]);
        assert_eq!(gb, vec![0.0, 0.0]);

        let g = Tensor::from_fn(x.shape(), |n, c, y, x| ((n + 3 * c + 2 * y + 5 * x) % 7) as f64 - 3.1);
        let (gx, _, _) = batchnorm_backward(&x, &g, &s).unwrap();
        for c in 0..2 {
            let sum: f64 = (0..2).map(|n| gx.plane(n, c).iter().sum::<f64>()).sum();
            assert!(sum.abs() < 1e-10, "channel {c} sum {sum}");
        }
    }

    #[test]
    fn msra_statistics_and_determinism() {
        // 200·64·9 = 115200 draws
        let f: Filter<f64> = msra_init(200, 64, 3, 42, 0);
        let w = f.weights().as_slice();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (2.0f64 / 576.0).sqrt();
        assert!((std / target - 1.0).abs() < 0.02, "std {std} vs {target}");
        assert!(f.bias().iter().all(|&b| b == 0.0));
        assert_eq!(f, msra_init(200, 64, 3, 42, 0));
        assert_ne!(f, msra_init(200, 64, 3, 42, 1));
    }
}
