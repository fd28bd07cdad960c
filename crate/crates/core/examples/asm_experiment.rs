//! Noisy-residual texture energy: how often an ELU residual has lower GLCM
//! angular second moment than the ReLU residual built from the same random
//! filter.
//!
//!     cargo run --release --example asm_experiment [images] [trials]

use elu_tv_denoise::data::{add_gaussian_noise, NoiseSpec};
use elu_tv_denoise::synth::gray_scenes;
use elu_tv_denoise::texture::{asm_experiment, compute_glcm, AsmExperimentConfig, GlcmConfig};

fn main() -> elu_tv_denoise::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().ok());
    let images = args.next().flatten().unwrap_or(100);
    let trials = args.next().flatten().unwrap_or(20);

    let scenes = gray_scenes(images, 180, 180, 77)?;

    let glcm = GlcmConfig::default();
    let noisy_lower = scenes
        .iter()
        .enumerate()
        .filter(|(i, img)| {
            let (noisy, _) = add_gaussian_noise(img, &NoiseSpec::fixed(25.0, *i as u64)).expect("valid spec");
            let a = compute_glcm(&noisy, &glcm).expect("glcm").asm();
            a <= compute_glcm(img.tensor(), &glcm).expect("glcm").asm()
        })
        .count();
    println!("noisy ASM <= clean ASM on {noisy_lower}/{images} images");

    let cfg = AsmExperimentConfig { trials_per_image: trials, seed: 2017, ..AsmExperimentConfig::default() };
    let report = asm_experiment(&scenes, &cfg)?;
    println!(
        "{} trials: ELU lower {} | higher {} | ties {} -> fraction {:.3}",
        report.trials.len(),
        report.candidate_lower,
        report.candidate_higher,
        report.ties,
        report.fraction()
    );
    Ok(())
}
