//! Training data: Gaussian noise synthesis, patch extraction, batching and
//! dataset manifests.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::{self, Gaussian};
use crate::tensor::{Real, Tensor};

/// How the noise standard deviation is chosen. Values are on the 0–255 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseMode {
    Fixed { sigma: f64 },
    /// σ drawn uniformly from `[lo, hi]` per image.
    Randomized { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub mode: NoiseMode,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn fixed(sigma: f64, seed: u64) -> Self {
        NoiseSpec { mode: NoiseMode::Fixed { sigma }, seed }
    }

    pub fn randomized(lo: f64, hi: f64, seed: u64) -> Self {
        NoiseSpec { mode: NoiseMode::Randomized { lo, hi }, seed }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            NoiseMode::Fixed { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            NoiseMode::Randomized { lo, hi } if lo >= 0.0 && lo <= hi && hi.is_finite() => Ok(()),
            mode => Err(Error::InvalidArgument(format!("invalid noise spec {mode:?}"))),
        }
    }

    fn draw_sigma<R: Rng>(&self, rng: &mut R) -> f64 {
        match self.mode {
            NoiseMode::Fixed { sigma } => sigma,
            NoiseMode::Randomized { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }
}

/// [`add_gaussian_noise_stream`] on stream 0.
pub fn add_gaussian_noise(img: &Image, spec: &NoiseSpec) -> Result<(Tensor<f64>, f64)> {
    add_gaussian_noise_stream(img, spec, 0)
}

/// Adds i.i.d. `N(0, (σ/255)²)` noise to every pixel.
///
/// The result is not clamped, so `noisy − clean` is exactly the injected
/// noise. Each `(spec.seed, stream)` pair yields a fixed noise field; in
/// randomized mode σ is drawn from the same stream before the noise.
pub fn add_gaussian_noise_stream(img: &Image, spec: &NoiseSpec, stream: u64) -> Result<(Tensor<f64>, f64)> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, stream);
    let sigma = spec.draw_sigma(&mut r);
    let scale = sigma / 255.0;
    let mut noisy = img.tensor().clone();
    if scale > 0.0 {
        let mut g = Gaussian::new(r);
        for v in noisy.as_mut_slice() {
            *v += scale * g.sample();
        }
    }
    Ok((noisy, sigma))
}

/// Number of grid positions along an axis of length `len`.
pub fn patch_count(len: usize, size: usize, stride: usize) -> usize {
    if size > len || stride == 0 {
        0
    } else {
        (len - size) / stride + 1
    }
}

/// Crops `size × size` patches on a regular grid with the given stride.
///
/// Patches come out in row-major grid order, or shuffled deterministically
/// when `shuffle_seed` is given.
pub fn extract_patches(img: &Image, size: usize, stride: usize, shuffle_seed: Option<u64>) -> Result<Vec<Image>> {
    if size == 0 || stride == 0 {
        return Err(Error::InvalidArgument("patch size and stride must be positive".into()));
    }
    if size > img.height().min(img.width()) {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} exceeds {}x{} image",
            img.height(),
            img.width()
        )));
    }
    let rows = patch_count(img.height(), size, stride);
    let cols = patch_count(img.width(), size, stride);
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(img.crop(i * stride, j * stride, size, size)?);
        }
    }
    if let Some(seed) = shuffle_seed {
        out.shuffle(&mut rng::stream(seed, 0));
    }
    Ok(out)
}

/// A noisy input with its clean target, both `(1, c, h, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair<T> {
    pub noisy: Tensor<T>,
    pub clean: Tensor<T>,
}

/// Noisy/clean pairs from patches, noise stream `i` for patch `i`.
pub fn make_pairs<T: Real>(patches: &[Image], spec: &NoiseSpec) -> Result<Vec<TrainingPair<T>>> {
    patches
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (noisy, _) = add_gaussian_noise_stream(p, spec, i as u64)?;
            Ok(TrainingPair { noisy: noisy.cast(), clean: p.tensor().cast() })
        })
        .collect()
}

/// Iterator over shuffled `(noisy, clean)` batches of one epoch.
#[derive(Debug)]
pub struct Batches<'a, T> {
    pairs: &'a [TrainingPair<T>],
    order: Vec<usize>,
    batch_size: usize,
    next: usize,
}

impl<T: Real> Batches<'_, T> {
    pub fn len(&self) -> usize {
        self.order.len() / self.batch_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pair indices in visiting order for this epoch.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl<T: Real> Iterator for Batches<'_, T> {
    type Item = Result<(Tensor<T>, Tensor<T>)>;

    fn next(&mut self) -> Option<Self::Item> {
        let start = self.next * self.batch_size;
        if start + self.batch_size > self.order.len() {
            return None;
        }
        self.next += 1;
        let idx = &self.order[start..start + self.batch_size];
        let noisy: Vec<&Tensor<T>> = idx.iter().map(|&i| &self.pairs[i].noisy).collect();
        let clean: Vec<&Tensor<T>> = idx.iter().map(|&i| &self.pairs[i].clean).collect();
        Some(Tensor::stack(&noisy).and_then(|y| Ok((y, Tensor::stack(&clean)?))))
    }
}

/// Batches for `epoch`: a permutation keyed by `(seed, epoch)`, with the final
/// partial batch dropped.
pub fn make_batches<T: Real>(
    pairs: &[TrainingPair<T>],
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Batches<'_, T>> {
    if batch_size < 1 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no training pairs".into()));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng::stream(seed, epoch as u64));
    Ok(Batches { pairs, order, batch_size, next: 0 })
}

/// Reads a manifest: one image path per line, `#` starts a comment, blank
/// lines are skipped. Relative paths resolve against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    Ok(parse_manifest(&text, base))
}

pub fn parse_manifest(text: &str, base: &Path) -> Vec<PathBuf> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| {
            let p = Path::new(l);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            }
        })
        .collect()
}

/// Fails if any image appears in both lists.
pub fn check_disjoint(train: &[PathBuf], eval: &[PathBuf]) -> Result<()> {
    let canon = |p: &PathBuf| fs::canonicalize(p).unwrap_or_else(|_| p.clone());
    let seen: HashSet<PathBuf> = train.iter().map(canon).collect();
    if let Some(dup) = eval.iter().find(|p| seen.contains(&canon(p))) {
        return Err(Error::InvalidArgument(format!("{} is in both the training and evaluation sets", dup.display())));
    }
    Ok(())
}

/// Patches of every image, flattened in image order.
pub fn patches_from_images(images: &[Image], size: usize, stride: usize) -> Result<Vec<Image>> {
    let mut out = Vec::new();
    for img in images {
        out.extend(extract_patches(img, size, stride, None)?);
    }
    Ok(out)
}

/// Stacks images of identical shape into one batch tensor.
pub fn stack_images<T: Real>(images: &[Image]) -> Result<Tensor<T>> {
    let cast: Vec<Tensor<T>> = images.iter().map(|i| i.tensor().cast()).collect();
    Tensor::stack(&cast.iter().collect::<Vec<_>>())
}
