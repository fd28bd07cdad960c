//! Procedural "dead leaves" scenes used as stand-ins for natural photographs.
//!
//! Occluding disks with power-law radii reproduce the scale invariance and
//! sharp edges of natural images. Each leaf carries a smooth shading ramp and
//! some carry a fine sinusoidal texture; a final 3×3 binomial blur softens
//! edges the way optics do.

use rand::Rng;

use crate::error::Result;
use crate::image::Image;
use crate::rng;
use crate::tensor::{Shape, Tensor};

/// Parameters of the leaf process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// 1 for gray, 3 for RGB.
    pub channels: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Probability that a leaf carries texture.
    pub textured_fraction: f64,
}

impl SceneConfig {
    pub fn gray(height: usize, width: usize) -> Self {
        SceneConfig {
            height,
            width,
            channels: 1,
            min_radius: 2.0,
            max_radius: 0.4 * height.min(width) as f64,
            textured_fraction: 0.3,
        }
    }

    pub fn color(height: usize, width: usize) -> Self {
        SceneConfig { channels: 3, ..Self::gray(height, width) }
    }
}

struct Leaf {
    cy: f64,
    cx: f64,
    r2: f64,
    base: [f64; 3],
    slope: (f64, f64),
    texture: Option<(f64, f64, f64, f64)>,
}

/// Deterministic scene for `(cfg, seed)`.
pub fn dead_leaves(cfg: &SceneConfig, seed: u64) -> Result<Image> {
    let mut r = rng::stream(seed, 0);
    let (h, w, ch) = (cfg.height, cfg.width, cfg.channels);
    let area = (h * w) as f64;
    let count = ((area / 40.0) as usize).clamp(8, 4000);
    let (a, b) = (cfg.min_radius.powi(-2), cfg.max_radius.powi(-2));

    let mut leaves = Vec::with_capacity(count);
    for _ in 0..count {
        // inverse CDF of p(r) ∝ r⁻³ on [min, max]
        let radius = (a - r.random::<f64>() * (a - b)).powf(-0.5);
        let gray = r.random_range(0.05..0.95);
        let mut base = [gray; 3];
        if ch == 3 {
            for v in &mut base {
                *v = (gray + r.random_range(-0.25f64..0.25)).clamp(0.0, 1.0);
            }
        }
        let texture = (r.random::<f64>() < cfg.textured_fraction).then(|| {
            let freq = r.random_range(0.3..1.2);
            let angle = r.random_range(0.0..std::f64::consts::PI);
            (freq * angle.cos(), freq * angle.sin(), r.random_range(0.02..0.08), r.random_range(0.0..6.3))
        });
        leaves.push(Leaf {
            cy: r.random_range(-radius..h as f64 + radius),
            cx: r.random_range(-radius..w as f64 + radius),
            r2: radius * radius,
            base,
            slope: (r.random_range(-0.004..0.004), r.random_range(-0.004..0.004)),
            texture,
        });
    }

    let mut canvas = Tensor::<f64>::zeros(Shape::new(1, ch, h, w));
    let bg = r.random_range(0.2..0.8);
    canvas.as_mut_slice().fill(bg);
    for leaf in &leaves {
        let rad = leaf.r2.sqrt();
        let y0 = (leaf.cy - rad).floor().max(0.0) as usize;
        let y1 = ((leaf.cy + rad).ceil().max(0.0) as usize).min(h);
        let x0 = (leaf.cx - rad).floor().max(0.0) as usize;
        let x1 = ((leaf.cx + rad).ceil().max(0.0) as usize).min(w);
        for y in y0..y1 {
            for x in x0..x1 {
                let (dy, dx) = (y as f64 - leaf.cy, x as f64 - leaf.cx);
                if dy * dy + dx * dx > leaf.r2 {
                    continue;
                }
                let mut shade = leaf.slope.0 * dy + leaf.slope.1 * dx;
                if let Some((fy, fx, amp, phase)) = leaf.texture {
                    shade += amp * (fy * y as f64 + fx * x as f64 + phase).sin();
                }
                for c in 0..ch {
                    canvas.set(0, c, y, x, leaf.base[c] + shade);
                }
            }
        }
    }
    Image::from_tensor_clamped(&blur(&canvas))
}

fn blur(t: &Tensor<f64>) -> Tensor<f64> {
    let s = t.shape();
    const K: [f64; 3] = [0.25, 0.5, 0.25];
    let tap = |c: usize, y: isize, x: isize| {
        let yy = y.clamp(0, s.h as isize - 1) as usize;
        let xx = x.clamp(0, s.w as isize - 1) as usize;
        t.get(0, c, yy, xx)
    };
    Tensor::from_fn(s, |_, c, y, x| {
        let mut acc = 0.0;
        for (i, ky) in K.iter().enumerate() {
            for (j, kx) in K.iter().enumerate() {
                acc += ky * kx * tap(c, y as isize + i as isize - 1, x as isize + j as isize - 1);
            }
        }
        acc
    })
}

/// `count` gray scenes with seeds `seed, seed + 1, …`.
pub fn gray_scenes(count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<Image>> {
    let cfg = SceneConfig::gray(height, width);
    (0..count as u64).map(|i| dead_leaves(&cfg, seed.wrapping_add(i))).collect()
}
