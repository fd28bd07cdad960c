//! Trains a 3-block, 16-channel denoiser on synthetic scenes for 10 epochs
//! and reports held-out PSNR before and after.
//!
//!     cargo run --release --example train_toy [epochs]

use std::time::Instant;

use elu_tv_denoise::data::{make_pairs, patches_from_images, NoiseSpec};
use elu_tv_denoise::network::{NetworkConfig, ResidualDenoiser};
use elu_tv_denoise::synth::gray_scenes;
use elu_tv_denoise::train::{mean_psnr, TrainConfig, Trainer};

fn main() -> elu_tv_denoise::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let t0 = Instant::now();

    let train_images = gray_scenes(32, 180, 180, 1)?;
    let eval_images = gray_scenes(8, 160, 160, 2)?;
    let train = make_pairs::<f32>(&patches_from_images(&train_images, 40, 20)?, &NoiseSpec::fixed(25.0, 11))?;
    let held_out = make_pairs::<f32>(&patches_from_images(&eval_images, 40, 40)?, &NoiseSpec::fixed(25.0, 12))?;
    println!("train_pairs={} held_out_pairs={}", train.len(), held_out.len());

    let net = ResidualDenoiser::new(NetworkConfig { blocks: 3, channels: 16, seed: 7, ..NetworkConfig::default() })?;
    let mut cfg = TrainConfig { epochs, batch_size: 64, seed: 3, ..TrainConfig::default() }.with_switch_epoch(6);
    // The loss sums over pixels, so on 40×40 patches the default 1e-3 step is
    // far past the stability limit. Same 10× drop, smaller scale.
    cfg.sgd.lr = 1e-5;
    cfg.sgd.lr_late = 1e-6;
    let mut trainer = Trainer::new(net, cfg)?;

    println!("baseline_loss={:.6}", trainer.mean_loss(&train, 0)?);
    trainer.fit(&train, 0, |_| {}, |rec, _| {
        println!("{rec}");
        Ok(())
    })?;

    let (den, noisy) = mean_psnr(&trainer.net, &held_out)?;
    println!("noisy_psnr={noisy:.3} denoised_psnr={den:.3} gain={:.3} total_secs={:.1}", den - noisy, t0.elapsed().as_secs_f64());
    Ok(())
}
