//! Texture energy of residual maps.
//!
//! The angular second moment (ASM) of a gray-level co-occurrence matrix is
//! high for homogeneous images and low for noisy ones. The experiment here
//! builds the one-filter residual `v = rot180(f) ∗ φ(f ∗ y)` for random 3×3
//! filters `f` under two activations `φ` and counts which gives the lower ASM.

use rand::Rng;

use crate::conv::{conv2d_forward, rotate180, Filter};
use crate::data::{add_gaussian_noise_stream, NoiseSpec};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::layers::Activation;
use crate::rng;
use crate::tensor::{Real, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlcmConfig {
    /// Number of quantization bins.
    pub levels: usize,
    /// Pixel displacement `(dy, dx)` of the second pixel in each pair.
    pub offset: (isize, isize),
    /// Add the transpose so `(i, j)` and `(j, i)` count alike.
    pub symmetric: bool,
    /// Scale entries to sum to one.
    pub normalize: bool,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        GlcmConfig { levels: 64, offset: (0, 1), symmetric: true, normalize: true }
    }
}

impl GlcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidArgument("GLCM needs at least 2 levels".into()));
        }
        if self.offset == (0, 0) {
            return Err(Error::InvalidArgument("GLCM offset must be nonzero".into()));
        }
        Ok(())
    }
}

/// `levels × levels` co-occurrence matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    levels: usize,
    entries: Vec<f64>,
}

impl GlcmMatrix {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.levels + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Angular second moment `Σ P²` of the normalized matrix.
    pub fn asm(&self) -> f64 {
        let total: f64 = self.entries.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.entries.iter().map(|p| (p / total).powi(2)).sum()
    }
}

/// Angular second moment of a co-occurrence matrix.
pub fn asm(m: &GlcmMatrix) -> f64 {
    m.asm()
}

/// Min-max rescales to `[0, levels − 1]` and floors to bins. A constant
/// plane maps entirely to bin 0.
fn quantize(plane: &[f64], levels: usize) -> Vec<usize> {
    let (lo, hi) = plane.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0; plane.len()];
    }
    let top = (levels - 1) as f64;
    plane.iter().map(|&v| (((v - lo) * top / range).floor() as usize).min(levels - 1)).collect()
}

/// Co-occurrence matrix of a single-channel image.
pub fn compute_glcm<T: Real>(u: &Tensor<T>, cfg: &GlcmConfig) -> Result<GlcmMatrix> {
    cfg.validate()?;
    let s = u.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::Shape(format!("GLCM needs one single-channel image, got {s}")));
    }
    u.check_finite("compute_glcm")?;
    let (dy, dx) = cfg.offset;
    if dy.unsigned_abs() >= s.h || dx.unsigned_abs() >= s.w {
        return Err(Error::Shape(format!("{}x{} image has no pixel pairs at offset {:?}", s.h, s.w, cfg.offset)));
    }
    let plane: Vec<f64> = u.as_slice().iter().map(|v| v.as_f64()).collect();
    let bins = quantize(&plane, cfg.levels);
    let l = cfg.levels;
    let mut entries = vec![0.0; l * l];
    let ys = (0isize.max(-dy) as usize)..((s.h as isize).min(s.h as isize - dy) as usize);
    let xs = (0isize.max(-dx) as usize)..((s.w as isize).min(s.w as isize - dx) as usize);
    for y in ys {
        for x in xs.clone() {
            let a = bins[y * s.w + x];
            let b = bins[(y as isize + dy) as usize * s.w + (x as isize + dx) as usize];
            entries[a * l + b] += 1.0;
            if cfg.symmetric {
                entries[b * l + a] += 1.0;
            }
        }
    }
    if cfg.normalize {
        let total: f64 = entries.iter().sum();
        for e in &mut entries {
            *e /= total;
        }
    }
    Ok(GlcmMatrix { levels: l, entries })
}

/// One-filter residual `v = λ · rot180(f) ∗ φ(f ∗ y)` with same padding.
pub fn filter_residual<T: Real>(y: &Tensor<T>, f: &Filter<T>, activation: &Activation, lambda: f64) -> Result<Tensor<T>> {
    if f.c_in() != 1 || f.c_out() != 1 || f.kernel() != 3 {
        return Err(Error::Shape("residual filter must be a single-channel 3x3 kernel".into()));
    }
    if y.shape().c != 1 {
        return Err(Error::Shape(format!("residual input must have one channel, got {}", y.shape().c)));
    }
    let inner = activation.forward(&conv2d_forward(y, f, 1)?);
    let v = conv2d_forward(&inner, &rotate180(f), 1)?;
    Ok(if lambda == 1.0 { v } else { v.scale(T::from_f64_lossy(lambda)) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsmExperimentConfig {
    /// Noise level on the 0–255 scale.
    pub sigma: f64,
    pub trials_per_image: usize,
    pub seed: u64,
    /// Weight of the residual; ASM does not depend on it under min-max binning.
    pub lambda: f64,
    /// Filter taps are drawn uniformly from `[−filter_range, filter_range]`.
    pub filter_range: f64,
    pub glcm: GlcmConfig,
    /// Activation whose lower ASM is counted.
    pub candidate: Activation,
    pub baseline: Activation,
}

impl Default for AsmExperimentConfig {
    fn default() -> Self {
        AsmExperimentConfig {
            sigma: 25.0,
            trials_per_image: 20,
            seed: 0,
            lambda: 1.0,
            filter_range: 0.5,
            glcm: GlcmConfig::default(),
            candidate: Activation::elu(0.1).expect("0.1 is a valid ELU alpha"),
            baseline: Activation::Relu,
        }
    }
}

/// One image/filter draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsmTrial {
    pub image: usize,
    pub trial: usize,
    pub sigma: f64,
    pub asm_candidate: f64,
    pub asm_baseline: f64,
}

impl AsmTrial {
    pub fn candidate_lower(&self) -> bool {
        self.asm_candidate < self.asm_baseline
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsmReport {
    pub trials: Vec<AsmTrial>,
    pub candidate_lower: usize,
    pub candidate_higher: usize,
    pub ties: usize,
}

impl AsmReport {
    /// Share of trials where the candidate activation gave the lower ASM.
    pub fn fraction(&self) -> f64 {
        self.candidate_lower as f64 / self.trials.len() as f64
    }
}

fn random_filter<R: Rng>(r: &mut R, range: f64) -> Filter<f64> {
    let taps: Vec<f64> = (0..9).map(|_| r.random_range(-range..=range)).collect();
    Filter::single(&taps, 0.0).expect("nine finite taps")
}

/// Noisy residual ASM comparison over images and random filters.
///
/// Image `i` gets noise stream `i` and its own filter stream, so results do
/// not depend on evaluation order.
pub fn asm_experiment(images: &[Image], cfg: &AsmExperimentConfig) -> Result<AsmReport> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("ASM experiment needs at least one image".into()));
    }
    if cfg.trials_per_image < 1 {
        return Err(Error::InvalidArgument("trials_per_image must be at least 1".into()));
    }
    if !(cfg.filter_range > 0.0) {
        return Err(Error::InvalidArgument("filter_range must be positive".into()));
    }
    cfg.glcm.validate()?;
    let noise = NoiseSpec::fixed(cfg.sigma, cfg.seed);
    let mut trials = Vec::with_capacity(images.len() * cfg.trials_per_image);
    for (i, img) in images.iter().enumerate() {
        if img.channels() != 1 {
            return Err(Error::InvalidArgument(format!("image {i} is not grayscale")));
        }
        let (y, _) = add_gaussian_noise_stream(img, &noise, i as u64)?;
        let mut filters = rng::stream(cfg.seed ^ 0x5eed_f117_e125_0000, i as u64);
        for t in 0..cfg.trials_per_image {
            let f = random_filter(&mut filters, cfg.filter_range);
            let a = compute_glcm(&filter_residual(&y, &f, &cfg.candidate, cfg.lambda)?, &cfg.glcm)?.asm();
            let b = compute_glcm(&filter_residual(&y, &f, &cfg.baseline, cfg.lambda)?, &cfg.glcm)?.asm();
            trials.push(AsmTrial { image: i, trial: t, sigma: cfg.sigma, asm_candidate: a, asm_baseline: b });
        }
    }
    let candidate_lower = trials.iter().filter(|t| t.asm_candidate < t.asm_baseline).count();
    let candidate_higher = trials.iter().filter(|t| t.asm_candidate > t.asm_baseline).count();
    let ties = trials.len() - candidate_lower - candidate_higher;
    Ok(AsmReport { trials, candidate_lower, candidate_higher, ties })
}

/// Shorthand for a `(1, 1, h, w)` tensor from row-major values.
pub fn gray_tensor(h: usize, w: usize, values: Vec<f64>) -> Result<Tensor<f64>> {
    Tensor::from_vec(Shape::new(1, 1, h, w), values)
}
