//! Stride-1 2D cross-correlation with zero padding, and its adjoint.
//!
//! The forward path lowers each sample to an im2col matrix and multiplies it
//! by the flattened filter bank. Accumulation order per output element is
//! fixed, so results do not depend on how samples are scheduled.

use crate::error::{Error, Result};
use crate::tensor::{Real, Shape, Tensor};

/// Filter bank `(c_out, c_in, k, k)` plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter<T> {
    weights: Tensor<T>,
    bias: Vec<T>,
}

impl<T: Real> Filter<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let s = weights.shape();
        if s.h != s.w || s.h == 0 {
            return Err(Error::InvalidArgument(format!("filter kernel must be square, got {}x{}", s.h, s.w)));
        }
        if bias.len() != s.n {
            return Err(Error::Shape(format!("{} biases for {} output channels", bias.len(), s.n)));
        }
        weights.check_finite("Filter::new")?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("Filter::new"));
        }
        Ok(Filter { weights, bias })
    }

    pub fn zeros(c_out: usize, c_in: usize, k: usize) -> Self {
        Filter { weights: Tensor::zeros(Shape::new(c_out, c_in, k, k)), bias: vec![T::zero(); c_out] }
    }

    /// Single-channel filter from a row-major `k×k` kernel.
    pub fn single(kernel: &[T], bias: T) -> Result<Self> {
        let k = (kernel.len() as f64).sqrt() as usize;
        if k * k != kernel.len() {
            return Err(Error::Shape(format!("{} taps do not form a square kernel", kernel.len())));
        }
        Filter::new(Tensor::from_vec(Shape::new(1, 1, k, k), kernel.to_vec())?, vec![bias])
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    /// Disjoint mutable borrows of the weights and the bias.
    pub fn parts_mut(&mut self) -> (&mut Tensor<T>, &mut [T]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn c_out(&self) -> usize {
        self.weights.shape().n
    }

    pub fn c_in(&self) -> usize {
        self.weights.shape().c
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape().h
    }

    /// Padding that keeps the spatial size unchanged.
    pub fn same_pad(&self) -> usize {
        self.kernel() / 2
    }

    pub fn cast<U: Real>(&self) -> Filter<U> {
        Filter {
            weights: self.weights.cast(),
            bias: self.bias.iter().map(|&b| U::from_f64_lossy(b.as_f64())).collect(),
        }
    }

    fn row_len(&self) -> usize {
        self.c_in() * self.kernel() * self.kernel()
    }
}

/// Reverses both spatial axes of every `(c_out, c_in)` kernel slice.
pub fn rotate180<T: Real>(filter: &Filter<T>) -> Filter<T> {
    let s = filter.weights.shape();
    let weights = Tensor::from_fn(s, |o, i, y, x| filter.weights.get(o, i, s.h - 1 - y, s.w - 1 - x));
    Filter { weights, bias: filter.bias.clone() }
}

fn output_dims(h: usize, w: usize, k: usize, pad: usize) -> Result<(usize, usize)> {
    let (hp, wp) = (h + 2 * pad, w + 2 * pad);
    if hp < k || wp < k {
        return Err(Error::Shape(format!("{h}x{w} input with pad {pad} is smaller than a {k}x{k} kernel")));
    }
    Ok((hp - k + 1, wp - k + 1))
}

/// Lowers one sample `(c, h, w)` to a `(c·k·k) × (ho·wo)` row-major matrix.
fn im2col<T: Real>(src: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, out: &mut [T]) {
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let cols = ho * wo;
    for ci in 0..c {
        let plane = &src[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut out[((ci * k + ky) * k + kx) * cols..][..cols];
                // valid ox range: 0 <= ox + kx - pad < w
                let x_lo = pad.saturating_sub(kx).min(wo);
                let x_hi = (w + pad).saturating_sub(kx).min(wo).max(x_lo);
                for oy in 0..ho {
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[(iy - pad) * w..][..w];
                    dst[..x_lo].fill(T::zero());
                    dst[x_hi..].fill(T::zero());
                    let ix0 = x_lo + kx - pad;
                    dst[x_lo..x_hi].copy_from_slice(&src_row[ix0..ix0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Scatter-adds an im2col matrix back onto a `(c, h, w)` sample.
fn col2im<T: Real>(cols_buf: &[T], c: usize, h: usize, w: usize, k: usize, pad: usize, dst: &mut [T]) {
    let (ho, wo) = (h + 2 * pad + 1 - k, w + 2 * pad + 1 - k);
    let cols = ho * wo;
    for ci in 0..c {
        let plane = &mut dst[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols_buf[((ci * k + ky) * k + kx) * cols..][..cols];
                let x_lo = pad.saturating_sub(kx).min(wo);
                let x_hi = (w + pad).saturating_sub(kx).min(wo).max(x_lo);
                for oy in 0..ho {
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let ix0 = x_lo + kx - pad;
                    let target = &mut plane[(iy - pad) * w + ix0..][..x_hi - x_lo];
                    for (t, &v) in target.iter_mut().zip(&row[oy * wo + x_lo..oy * wo + x_hi]) {
                        *t = *t + v;
                    }
                }
            }
        }
    }
}

/// Cross-correlates `input` with `filter` at stride 1 and adds the bias.
///
/// With `zero_pad == filter.same_pad()` the output keeps the input's spatial
/// size. Taps falling outside the input read zero.
pub fn conv2d_forward<T: Real>(input: &Tensor<T>, filter: &Filter<T>, zero_pad: usize) -> Result<Tensor<T>> {
    let s = input.shape();
    if s.c != filter.c_in() {
        return Err(Error::Shape(format!(
            "input has {} channels, filter expects {}",
            s.c,
            filter.c_in()
        )));
    }
    let k = filter.kernel();
    let (ho, wo) = output_dims(s.h, s.w, k, zero_pad)?;
    let c_out = filter.c_out();
    let out_shape = Shape::new(s.n, c_out, ho, wo);
    let mut out = Tensor::zeros(out_shape);
    let cols = ho * wo;
    let row_len = filter.row_len();
    let direct = k == 1 && zero_pad == 0;
    let mut buf = if direct { Vec::new() } else { vec![T::zero(); row_len * cols] };
    let wmat = filter.weights.as_slice();

    for n in 0..s.n {
        let lowered: &[T] = if direct {
            input.sample(n)
        } else {
            im2col(input.sample(n), s.c, s.h, s.w, k, zero_pad, &mut buf);
            &buf
        };
        let dst = out.sample_mut(n);
        for (o, plane) in dst.chunks_exact_mut(cols).enumerate() {
            plane.fill(filter.bias[o]);
        }
        T::gemm(
            c_out,
            row_len,
            cols,
            T::one(),
            wmat,
            (row_len as isize, 1),
            lowered,
            (cols as isize, 1),
            T::one(),
            dst,
            (cols as isize, 1),
        );
    }
    out.check_finite("conv2d_forward")?;
    Ok(out)
}

/// Gradients of a convolution with respect to its input and filter.
///
/// `grad_input` applies the adjoint of the forward map to `grad_out`; the
/// filter gradient sums `input ⊗ grad_out` correlations over the batch and
/// the bias gradient sums `grad_out` per output channel.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    filter: &Filter<T>,
    grad_out: &Tensor<T>,
    zero_pad: usize,
) -> Result<(Tensor<T>, Filter<T>)> {
    let s = input.shape();
    if s.c != filter.c_in() {
        return Err(Error::Shape(format!(
            "input has {} channels, filter expects {}",
            s.c,
            filter.c_in()
        )));
    }
    let k = filter.kernel();
    let (ho, wo) = output_dims(s.h, s.w, k, zero_pad)?;
    let c_out = filter.c_out();
    let expected = Shape::new(s.n, c_out, ho, wo);
    if grad_out.shape() != expected {
        return Err(Error::Shape(format!("grad_out is {}, forward output was {expected}", grad_out.shape())));
    }
    let cols = ho * wo;
    let row_len = filter.row_len();
    let direct = k == 1 && zero_pad == 0;
    let mut buf = if direct { Vec::new() } else { vec![T::zero(); row_len * cols] };
    let mut grad_cols = vec![T::zero(); row_len * cols];
    let mut grad_input = Tensor::zeros(s);
    let mut grad_filter = Filter::zeros(c_out, s.c, k);
    let wmat = filter.weights.as_slice();

    for n in 0..s.n {
        let g = grad_out.sample(n);
        for (o, plane) in g.chunks_exact(cols).enumerate() {
            grad_filter.bias[o] = grad_filter.bias[o] + plane.iter().copied().sum::<T>();
        }
        let lowered: &[T] = if direct {
            input.sample(n)
        } else {
            im2col(input.sample(n), s.c, s.h, s.w, k, zero_pad, &mut buf);
            &buf
        };
        // dW += G · colsᵀ
        T::gemm(
            c_out,
            cols,
            row_len,
            T::one(),
            g,
            (cols as isize, 1),
            lowered,
            (1, cols as isize),
            T::one(),
            grad_filter.weights.as_mut_slice(),
            (row_len as isize, 1),
        );
        // dcols = Wᵀ · G
        let target: &mut [T] = if direct { grad_input.sample_mut(n) } else { &mut grad_cols };
        T::gemm(
            row_len,
            c_out,
            cols,
            T::one(),
            wmat,
            (1, row_len as isize),
            g,
            (cols as isize, 1),
            T::zero(),
            target,
            (cols as isize, 1),
        );
        if !direct {
            col2im(&grad_cols, s.c, s.h, s.w, k, zero_pad, grad_input.sample_mut(n));
        }
    }
    Ok((grad_input, grad_filter))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Tensor<f64> {
        Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, y, x| f(y, x))
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let f = Filter::single(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let x = image(5, 7, |y, x| (y * 7 + x) as f64 * 0.1 - 1.0);
        let y = conv2d_forward(&x, &f, 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn ones_kernel_on_constant_image() {
        let c = 0.7;
        let f = Filter::single(&[1.0; 9], 0.0).unwrap();
        let x = image(6, 6, |_, _| c);
        let y = conv2d_forward(&x, &f, 1).unwrap();
        assert!((y.get(0, 0, 3, 3) - 9.0 * c).abs() < 1e-12);
        assert!((y.get(0, 0, 0, 0) - 4.0 * c).abs() < 1e-12);
        assert!((y.get(0, 0, 5, 5) - 4.0 * c).abs() < 1e-12);
        assert!((y.get(0, 0, 0, 3) - 6.0 * c).abs() < 1e-12);
    }

    #[test]
    fn pointwise_kernel_is_affine() {
        let f = Filter::single(&[2.5], -0.25).unwrap();
        let x = image(4, 3, |y, x| (y as f64) - 0.5 * x as f64);
        let y = conv2d_forward(&x, &f, 0).unwrap();
        for (a, b) in y.as_slice().iter().zip(x.as_slice()) {
            assert_eq!(*a, 2.5 * b - 0.25);
        }
    }

    #[test]
    fn same_padding_keeps_shape_and_valid_shrinks() {
        let f = Filter::<f64>::zeros(4, 2, 3);
        let x = Tensor::zeros(Shape::new(3, 2, 9, 5));
        assert_eq!(conv2d_forward(&x, &f, 1).unwrap().shape(), Shape::new(3, 4, 9, 5));
        assert_eq!(conv2d_forward(&x, &f, 0).unwrap().shape(), Shape::new(3, 4, 7, 3));
        assert_eq!(conv2d_forward(&x, &f, 2).unwrap().shape(), Shape::new(3, 4, 11, 7));
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let f = Filter::<f64>::zeros(1, 2, 3);
        let x = Tensor::zeros(Shape::new(1, 3, 4, 4));
        assert!(matches!(conv2d_forward(&x, &f, 1), Err(Error::Shape(_))));
        let g = Tensor::zeros(Shape::new(1, 1, 4, 4));
        assert!(matches!(conv2d_backward(&x, &f, &g, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_result_is_reported() {
        let f = Filter::single(&[f64::MAX, f64::MAX, 0.0, 0.0], 0.0).unwrap();
        let x = image(3, 3, |_, _| f64::MAX);
        assert!(matches!(conv2d_forward(&x, &f, 0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn rotate180_reverses_and_is_involution() {
        let f = Filter::single(&[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        let r = rotate180(&f);
        assert_eq!(r.weights().as_slice(), &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(r.bias(), &[0.5]);
        assert_eq!(rotate180(&r), f);
        let one = Filter::single(&[3.0], 0.0).unwrap();
        assert_eq!(rotate180(&one), one);
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let f = Filter::single(&[0.3; 9], 0.1).unwrap();
        let x = image(4, 4, |y, x| (y + 2 * x) as f64);
        let g = Tensor::zeros(Shape::new(1, 1, 4, 4));
        let (gi, gf) = conv2d_backward(&x, &f, &g, 1).unwrap();
        assert!(gi.as_slice().iter().all(|&v| v == 0.0));
        assert!(gf.weights().as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(gf.bias(), &[0.0]);
    }

    #[test]
    fn identity_kernel_adjoint_is_identity() {
        let f = Filter::single(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], 0.0).unwrap();
        let x = image(5, 4, |y, x| (y * x) as f64);
        let g = image(5, 4, |y, x| y as f64 - x as f64 * 0.3);
        let (gi, _) = conv2d_backward(&x, &f, &g, 1).unwrap();
        assert_eq!(gi, g);
    }

    #[test]
    fn single_pixel_filter_gradient_matches_finite_difference() {
        // 1x1 image, 3x3 kernel, pad 1: only the center tap touches the pixel.
        let x = image(1, 1, |_, _| 0.8);
        let g = image(1, 1, |_, _| 1.0);
        let mut f = Filter::single(&[0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9], 0.05).unwrap();
        let (_, gf) = conv2d_backward(&x, &f, &g, 1).unwrap();
        let h = 1e-5;
        for tap in 0..9 {
            let orig = f.weights().as_slice()[tap];
            f.weights_mut().as_mut_slice()[tap] = orig + h;
            let up = conv2d_forward(&x, &f, 1).unwrap().dot(&g).unwrap();
            f.weights_mut().as_mut_slice()[tap] = orig - h;
            let down = conv2d_forward(&x, &f, 1).unwrap().dot(&g).unwrap();
            f.weights_mut().as_mut_slice()[tap] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = gf.weights().as_slice()[tap];
            let expected = if tap == 4 { 0.8 } else { 0.0 };
            assert_eq!(analytic, expected);
            assert!((numeric - analytic).abs() <= 1e-6 * analytic.abs().max(1e-6), "tap {tap}");
        }
        assert_eq!(gf.bias(), &[1.0]);
    }
}
