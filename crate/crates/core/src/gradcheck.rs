//! Central finite-difference checks of every analytic gradient.
//!
//! Each check packs the inputs it differentiates into one flat parameter
//! vector, evaluates a scalar objective with every entry nudged by `±h`, and
//! compares the resulting numeric gradient with the analytic one. Layers are
//! reduced to a scalar through a random cotangent: `L = ⟨layer(x), g⟩`.
//! Everything runs in `f64`.

use rand::Rng;

use crate::conv::{conv2d_backward, conv2d_forward, Filter};
use crate::error::Result;
use crate::layers::{batchnorm_backward, batchnorm_forward, elu_backward, elu_forward, Activation, BatchNormState, EluParams};
use crate::loss::{loss_backward, smoothed_loss_forward, TvL2Config};
use crate::network::{ActivationKind, Block, NetworkConfig, ResidualDenoiser};
use crate::layers::{msra_init, Mode};
use crate::rng;
use crate::tensor::{Shape, Tensor};

/// Finite-difference step.
pub const STEP: f64 = 1e-5;
/// Entries are compared relative to `max(|a|, |n|, REL_FLOOR · scale)`, where
/// `scale` is the largest gradient magnitude in the check. Gradients that are
/// exactly zero (a bias feeding batch norm, say) come back from the
/// difference quotient as rounding noise near 1e-10; the floor measures those
/// against the gradient's own scale.
pub const REL_FLOOR: f64 = 1e-3;

/// Which suites to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Layer,
    Network,
    Loss,
    All,
}

impl std::str::FromStr for Scope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "layer" => Ok(Scope::Layer),
            "network" => Ok(Scope::Network),
            "loss" => Ok(Scope::Loss),
            "all" => Ok(Scope::All),
            other => Err(format!("unknown gradcheck scope {other:?} (layer|network|loss|all)")),
        }
    }
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub entries: usize,
    /// Flat index of the entry with the largest error.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, scale: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR * scale);
    if denom == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / denom
    }
}

/// Central differences of `objective` at `theta`.
pub fn numeric_gradient(theta: &[f64], mut objective: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut p = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = p[i];
        p[i] = orig + STEP;
        let up = objective(&p)?;
        p[i] = orig - STEP;
        let down = objective(&p)?;
        p[i] = orig;
        out.push((up - down) / (2.0 * STEP));
    }
    Ok(out)
}

/// Central differences of `⟨forward(θ), g⟩`. The two perturbed outputs are
/// subtracted elementwise before the contraction, which keeps the rounding
/// error of the full sum out of the difference.
pub fn numeric_vjp(
    theta: &[f64],
    g: &Tensor<f64>,
    mut forward: impl FnMut(&[f64]) -> Result<Tensor<f64>>,
) -> Result<Vec<f64>> {
    let mut p = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = p[i];
        p[i] = orig + STEP;
        let up = forward(&p)?;
        p[i] = orig - STEP;
        let down = forward(&p)?;
        p[i] = orig;
        out.push(up.sub(&down)?.dot(g)? / (2.0 * STEP));
    }
    Ok(out)
}

fn compare(name: &str, seed: u64, tolerance: f64, mut analytic: Vec<f64>, numeric: &[f64], corrupt: bool) -> CheckResult {
    if corrupt {
        if let Some(a) = analytic.first_mut() {
            *a += 0.1 * (a.abs() + 1.0);
        }
    }
    let scale = analytic.iter().chain(numeric).fold(0.0f64, |m, v| m.max(v.abs()));
    let (worst_index, max_rel_err) = analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n, scale))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    CheckResult {
        name: name.to_owned(),
        seed,
        entries: numeric.len(),
        worst_index,
        worst_analytic: analytic.get(worst_index).copied().unwrap_or(0.0),
        worst_numeric: numeric.get(worst_index).copied().unwrap_or(0.0),
        max_rel_err,
        tolerance,
    }
}

fn random_tensor<R: Rng>(r: &mut R, shape: Shape, range: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| r.random_range(-range..range))
}

/// Values bounded away from zero, so no finite-difference step crosses the ELU kink.
fn away_from_zero<R: Rng>(r: &mut R, shape: Shape) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = r.random_range(0.01..2.0);
        if r.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

struct Packer {
    lens: Vec<usize>,
}

impl Packer {
    fn pack(parts: &[&[f64]]) -> (Vec<f64>, Packer) {
        (parts.concat(), Packer { lens: parts.iter().map(|p| p.len()).collect() })
    }

    fn split<'a>(&self, theta: &'a [f64]) -> Vec<&'a [f64]> {
        let mut out = Vec::with_capacity(self.lens.len());
        let mut rest = theta;
        for &l in &self.lens {
            let (a, b) = rest.split_at(l);
            out.push(a);
            rest = b;
        }
        out
    }
}

fn filter_from(shape: Shape, w: &[f64], b: &[f64]) -> Result<Filter<f64>> {
    Filter::new(Tensor::from_vec(shape, w.to_vec())?, b.to_vec())
}

/// Convolution gradients with respect to input, weights and bias.
pub fn check_conv(kernel: usize, seed: u64, corrupt: bool) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 100 + kernel as u64);
    let pad = kernel / 2;
    let xs = Shape::new(2, 3, 8, 8);
    let fs = Shape::new(3, 3, kernel, kernel);
    let x = random_tensor(&mut r, xs, 1.0);
    let f = filter_from(fs, random_tensor(&mut r, fs, 0.5).as_slice(), &[0.1, -0.2, 0.3])?;
    let g = random_tensor(&mut r, Shape::new(2, 3, 8, 8), 1.0);
    let (gx, gf) = conv2d_backward(&x, &f, &g, pad)?;
    let analytic = [gx.as_slice(), gf.weights().as_slice(), gf.bias()].concat();
    let (theta, pk) = Packer::pack(&[x.as_slice(), f.weights().as_slice(), f.bias()]);
    let numeric = numeric_vjp(&theta, &g, |t| {
        let p = pk.split(t);
        conv2d_forward(&Tensor::from_vec(xs, p[0].to_vec())?, &filter_from(fs, p[1], p[2])?, pad)
    })?;
    Ok(compare(&format!("conv{kernel}x{kernel}"), seed, 1e-5, analytic, &numeric, corrupt))
}

/// ELU gradient with respect to its input.
pub fn check_elu(alpha: f64, seed: u64, corrupt: bool) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 200);
    let s = Shape::new(2, 3, 8, 8);
    let x = away_from_zero(&mut r, s);
    let g = random_tensor(&mut r, s, 1.0);
    let p = EluParams::new(alpha)?;
    let analytic = elu_backward(&x, &g, p)?.into_vec();
    let numeric = numeric_vjp(x.as_slice(), &g, |t| Ok(elu_forward(&Tensor::from_vec(s, t.to_vec())?, p)))?;
    Ok(compare(&format!("elu(alpha={alpha})"), seed, 1e-7, analytic, &numeric, corrupt))
}

/// Train-mode batch norm with respect to input, scale and shift.
pub fn check_batchnorm(seed: u64, corrupt: bool) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 300);
    let s = Shape::new(2, 3, 4, 4);
    let x = random_tensor(&mut r, s, 2.0);
    let g = random_tensor(&mut r, s, 1.0);
    let mut state = BatchNormState::<f64>::new(3);
    for c in 0..3 {
        state.gamma[c] = r.random_range(0.5..1.5);
        state.beta[c] = r.random_range(-0.5..0.5);
    }
    let (gx, gg, gb) = batchnorm_backward(&x, &g, &state)?;
    let analytic = [gx.as_slice(), &gg, &gb].concat();
    let (theta, pk) = Packer::pack(&[x.as_slice(), &state.gamma, &state.beta]);
    let numeric = numeric_vjp(&theta, &g, |t| {
        let p = pk.split(t);
        let mut st = state.clone();
        st.gamma = p[1].to_vec();
        st.beta = p[2].to_vec();
        batchnorm_forward(&Tensor::from_vec(s, p[0].to_vec())?, &mut st)
    })?;
    Ok(compare("batchnorm", seed, 1e-5, analytic, &numeric, corrupt))
}

fn random_block<R: Rng>(r: &mut R, c: usize, seed: u64) -> Result<Block<f64>> {
    let mut bn = BatchNormState::new(c);
    for i in 0..c {
        bn.gamma[i] = r.random_range(0.5..1.5);
        bn.beta[i] = r.random_range(-0.5..0.5);
    }
    let mut conv3: Filter<f64> = msra_init(c, c, 3, seed, 1);
    let mut conv1: Filter<f64> = msra_init(c, c, 1, seed, 2);
    for b in conv3.bias_mut().iter_mut().chain(conv1.bias_mut().iter_mut()) {
        *b = r.random_range(-0.1..0.1);
    }
    Block::new(conv3, conv1, bn)
}

/// One `Conv3×3 → ELU → Conv1×1 → BN` block with respect to its input and
/// every parameter.
pub fn check_block(seed: u64, corrupt: bool) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 400);
    let c = 3;
    let s = Shape::new(2, c, 6, 6);
    let act = Activation::elu(1.0)?;
    let mut block = random_block(&mut r, c, seed)?;
    let x = random_tensor(&mut r, s, 1.0);
    let g = random_tensor(&mut r, s, 1.0);
    let (_, cache) = block.forward_train(&x, &act)?;
    let (gx, bg) = block.backward(&cache, &g, &act)?;
    let analytic = [
        gx.as_slice(),
        bg.conv3.weights().as_slice(),
        bg.conv3.bias(),
        bg.conv1.weights().as_slice(),
        bg.conv1.bias(),
        &bg.gamma,
        &bg.beta,
    ]
    .concat();
    let (theta, pk) = Packer::pack(&[
        x.as_slice(),
        block.conv3.weights().as_slice(),
        block.conv3.bias(),
        block.conv1.weights().as_slice(),
        block.conv1.bias(),
        &block.bn.gamma,
        &block.bn.beta,
    ]);
    let (s3, s1) = (block.conv3.weights().shape(), block.conv1.weights().shape());
    let numeric = numeric_vjp(&theta, &g, |t| {
        let p = pk.split(t);
        let mut bn = block.bn.clone();
        bn.gamma = p[5].to_vec();
        bn.beta = p[6].to_vec();
        let mut b = Block::new(filter_from(s3, p[1], p[2])?, filter_from(s1, p[3], p[4])?, bn)?;
        Ok(b.forward_train(&Tensor::from_vec(s, p[0].to_vec())?, &act)?.0)
    })?;
    Ok(compare("block", seed, 1e-5, analytic, &numeric, corrupt))
}

/// Smoothed TV-L2 loss with respect to the predicted residual.
pub fn check_loss(seed: u64, corrupt: bool) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 500);
    let shape = if seed % 2 == 0 { Shape::new(1, 1, 5, 5) } else { Shape::new(2, 1, 8, 8) };
    let x = Tensor::from_fn(shape, |_, _, _, _| r.random_range(0.0..1.0));
    let y = Tensor::from_fn(shape, |n, c, i, j| x.get(n, c, i, j) + r.random_range(-0.2..0.2));
    // The smoothed TV has curvature ~1/ε where a forward difference is near
    // zero, and there the O(h²) truncation error of the difference quotient
    // alone exceeds the tolerance. Choose R so that u = y − R keeps every
    // difference away from zero: a checkerboard with random amplitudes.
    let u = Tensor::from_fn(shape, |_, _, i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        0.5 + sign * r.random_range(0.05..0.3)
    });
    let rr = y.sub(&u)?;
    // large weight so the TV term is visible next to the data term
    let cfg = TvL2Config { beta: 0.05, beta_late: 0.05, switch_epoch: 0, tv_eps: 1e-3 };
    let analytic = loss_backward(&rr, &y, &x, &cfg, 0)?.into_vec();
    let numeric =
        numeric_gradient(rr.as_slice(), |t| smoothed_loss_forward(&Tensor::from_vec(shape, t.to_vec())?, &y, &x, &cfg, 0))?;
    Ok(compare("tv_l2_loss", seed, 1e-5, analytic, &numeric, corrupt))
}

/// Whole single-block network with respect to every learnable parameter.
pub fn check_network(seed: u64, corrupt: bool) -> Result<CheckResult> {
    let mut r = rng::stream(seed, 600);
    let cfg = NetworkConfig { blocks: 1, channels: 3, in_channels: 1, alpha: 1.0, activation: ActivationKind::Elu, seed };
    let mut net = ResidualDenoiser::<f64>::new(cfg)?;
    for p in net.params_mut() {
        for v in p.values.iter_mut() {
            *v += r.random_range(-0.1..0.1);
        }
    }
    let s = Shape::new(2, 1, 6, 6);
    let y = random_tensor(&mut r, s, 1.0);
    let g = random_tensor(&mut r, s, 1.0);
    net.forward(&y, Mode::Train)?;
    let grads = net.backward(&g)?;
    let analytic = grads.buffers().concat();
    let theta: Vec<f64> = net.params_mut().iter().flat_map(|p| p.values.to_vec()).collect();
    let numeric = numeric_vjp(&theta, &g, |t| {
        let mut n = net.clone();
        let mut rest = t;
        for p in n.params_mut() {
            let (a, b) = rest.split_at(p.values.len());
            p.values.copy_from_slice(a);
            rest = b;
        }
        n.forward(&y, Mode::Train)
    })?;
    Ok(compare("network(1 block)", seed, 1e-4, analytic, &numeric, corrupt))
}

/// Runs the suites in `scope` for one seed.
pub fn run(scope: Scope, seed: u64, corrupt: bool) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    if matches!(scope, Scope::Layer | Scope::All) {
        out.push(check_conv(3, seed, corrupt)?);
        out.push(check_conv(1, seed, corrupt)?);
        out.push(check_elu(1.0, seed, corrupt)?);
        out.push(check_elu(0.1, seed, corrupt)?);
        out.push(check_batchnorm(seed, corrupt)?);
        out.push(check_block(seed, corrupt)?);
    }
    if matches!(scope, Scope::Loss | Scope::All) {
        out.push(check_loss(seed, corrupt)?);
    }
    if matches!(scope, Scope::Network | Scope::All) {
        out.push(check_network(seed, corrupt)?);
    }
    Ok(out)
}
