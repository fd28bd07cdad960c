mod common;

use common::{max_abs_diff, naive_residual, random_tensor};
use elu_tv_denoise::conv::{conv2d_forward, rotate180, Filter};
use elu_tv_denoise::data::{add_gaussian_noise_stream, NoiseSpec};
use elu_tv_denoise::layers::Activation;
use elu_tv_denoise::metrics::psnr;
use elu_tv_denoise::rng;
use elu_tv_denoise::synth::gray_scenes;
use elu_tv_denoise::tensor::{Shape, Tensor};
use elu_tv_denoise::texture::{compute_glcm, filter_residual, GlcmConfig};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn noise_lowers_texture_energy() {
    let images = gray_scenes(40, 128, 128, 500).unwrap();
    let spec = NoiseSpec::fixed(25.0, 6);
    let cfg = GlcmConfig::default();
    let lower = images
        .iter()
        .enumerate()
        .filter(|(i, img)| {
            let (y, _) = add_gaussian_noise_stream(img, &spec, *i as u64).unwrap();
            compute_glcm(&y, &cfg).unwrap().asm() <= compute_glcm(img.tensor(), &cfg).unwrap().asm()
        })
        .count();
    assert!(lower * 10 >= images.len() * 9, "{lower}/{}", images.len());
}

#[test]
fn residual_matches_two_stage_loops() {
    let scenes = gray_scenes(3, 20, 24, 8).unwrap();
    let mut r = rng::stream(1, 1);
    for (i, img) in scenes.iter().enumerate() {
        let (y, _) = add_gaussian_noise_stream(img, &NoiseSpec::fixed(25.0, 2), i as u64).unwrap();
        for act in [Activation::elu(0.1).unwrap(), Activation::Relu, Activation::Identity] {
            let taps: [f64; 9] = std::array::from_fn(|_| r.random_range(-0.5..0.5));
            let f = Filter::single(&taps, 0.0).unwrap();
            for lambda in [1.0, 0.3] {
                let fast = filter_residual(&y, &f, &act, lambda).unwrap();
                assert!(max_abs_diff(&fast, &naive_residual(&y, &taps, &act, lambda)) <= 1e-10);
            }
        }
    }
}

#[test]
fn residual_is_linear_in_the_outer_filter() {
    // φ held fixed on the inner output, scaling rot180(f) scales v
    let y = random_tensor(4, 0, Shape::new(1, 1, 10, 10), 1.0);
    let f = common::random_filter(4, 1, 1, 1, 3);
    let f = Filter::new(f.weights().clone(), vec![0.0]).unwrap();
    let inner = Activation::elu(0.1).unwrap().forward(&conv2d_forward(&y, &f, 1).unwrap());
    let outer = rotate180(&f);
    let scaled = Filter::new(outer.weights().scale(2.5), vec![0.0]).unwrap();
    let v = conv2d_forward(&inner, &outer, 1).unwrap();
    let v2 = conv2d_forward(&inner, &scaled, 1).unwrap();
    assert!(max_abs_diff(&v2, &v.scale(2.5)) < 1e-12);
}

#[test]
fn psnr_falls_as_noise_grows() {
    let img = &gray_scenes(1, 64, 64, 3).unwrap()[0];
    let mut last = f64::INFINITY;
    for sigma in [0.0, 5.0, 10.0, 20.0, 40.0, 80.0] {
        let (y, _) = add_gaussian_noise_stream(img, &NoiseSpec::fixed(sigma, 1), 0).unwrap();
        let p = psnr(&y, img.tensor()).unwrap();
        assert!(p < last || (sigma == 0.0 && p.is_infinite()), "sigma {sigma}: {p} !< {last}");
        last = p;
    }
}

fn image(seed: u64, h: usize, w: usize) -> Tensor<f64> {
    let mut r = rng::stream(seed, 0);
    Tensor::from_fn(Shape::new(1, 1, h, w), |_, _, _, _| r.random_range(0.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prop_glcm_is_a_distribution(
        seed in any::<u64>(), h in 2usize..12, w in 2usize..12, levels in 2usize..70,
        dy in -1isize..2, dx in -1isize..2, symmetric in any::<bool>(),
    ) {
        prop_assume!((dy, dx) != (0, 0));
        let cfg = GlcmConfig { levels, offset: (dy, dx), symmetric, normalize: true };
        let m = compute_glcm(&image(seed, h, w), &cfg).unwrap();
        prop_assert!(m.entries().iter().all(|&p| p >= 0.0));
        prop_assert!((m.entries().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let a = m.asm();
        prop_assert!(a >= 1.0 / (levels * levels) as f64 - 1e-15 && a <= 1.0 + 1e-15);
        if symmetric {
            for i in 0..levels {
                for j in 0..levels {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                }
            }
        }
    }

    #[test]
    fn prop_glcm_ignores_power_of_two_scaling(seed in any::<u64>(), e in -4i32..5) {
        // exact in floating point, so the min-max bins cannot move
        let u = image(seed, 9, 9);
        let cfg = GlcmConfig::default();
        let k = 2f64.powi(e);
        prop_assert_eq!(compute_glcm(&u, &cfg).unwrap(), compute_glcm(&u.map(|v| k * v), &cfg).unwrap());
    }

    #[test]
    fn prop_psnr_symmetric(seed in any::<u64>()) {
        let (a, b) = (image(seed, 8, 8), image(seed.wrapping_add(1), 8, 8));
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }
}
