#![allow(dead_code)]

use elu_tv_denoise::conv::Filter;
use elu_tv_denoise::layers::Activation;
use elu_tv_denoise::rng;
use elu_tv_denoise::tensor::{Shape, Tensor};
use rand::Rng;

pub fn random_tensor(seed: u64, stream: u64, shape: Shape, range: f64) -> Tensor<f64> {
    let mut r = rng::stream(seed, stream);
    Tensor::from_fn(shape, |_, _, _, _| r.random_range(-range..range))
}

pub fn random_filter(seed: u64, stream: u64, c_out: usize, c_in: usize, k: usize) -> Filter<f64> {
    let mut r = rng::stream(seed, stream);
    let w = Tensor::from_fn(Shape::new(c_out, c_in, k, k), |_, _, _, _| r.random_range(-1.0..1.0));
    let b = (0..c_out).map(|_| r.random_range(-0.5..0.5)).collect();
    Filter::new(w, b).unwrap()
}

/// Cross-correlation by direct summation over every output pixel, channel and tap.
pub fn naive_conv(input: &Tensor<f64>, filter: &Filter<f64>, pad: usize) -> Tensor<f64> {
    let s = input.shape();
    let k = filter.kernel();
    let oh = s.h + 2 * pad + 1 - k;
    let ow = s.w + 2 * pad + 1 - k;
    let mut out = Tensor::zeros(Shape::new(s.n, filter.c_out(), oh, ow));
    for n in 0..s.n {
        for co in 0..filter.c_out() {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = filter.bias()[co];
                    for ci in 0..s.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y + ky) as isize - pad as isize;
                                let ix = (x + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                                    acc += filter.weights().get(co, ci, ky, kx) * input.get(n, ci, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    out.set(n, co, y, x, acc);
                }
            }
        }
    }
    out
}

/// `rot180(f) ∗ φ(f ∗ y)` for one 3×3 filter, both stages written as loops.
pub fn naive_residual(y: &Tensor<f64>, taps: &[f64; 9], act: &Activation, lambda: f64) -> Tensor<f64> {
    let s = y.shape();
    let at = |t: &Tensor<f64>, i: isize, j: isize| {
        if i < 0 || j < 0 || i as usize >= s.h || j as usize >= s.w {
            0.0
        } else {
            t.get(0, 0, i as usize, j as usize)
        }
    };
    let mut inner = Tensor::zeros(s);
    for i in 0..s.h as isize {
        for j in 0..s.w as isize {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    acc += taps[a * 3 + b] * at(y, i + a as isize - 1, j + b as isize - 1);
                }
            }
            inner.set(0, 0, i as usize, j as usize, acc);
        }
    }
    let inner = act.forward(&inner);
    let mut out = Tensor::zeros(s);
    for i in 0..s.h as isize {
        for j in 0..s.w as isize {
            let mut acc = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    // rotated tap (2 - a, 2 - b)
                    acc += taps[(2 - a) * 3 + (2 - b)] * at(&inner, i + a as isize - 1, j + b as isize - 1);
                }
            }
            out.set(0, 0, i as usize, j as usize, lambda * acc);
        }
    }
    out
}

pub fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
