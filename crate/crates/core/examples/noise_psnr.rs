//! Noise calibration: measured PSNR of Gaussian noise against the analytic
//! value `10·log10(255²/σ²)`.

use elu_tv_denoise::data::{add_gaussian_noise_stream, NoiseSpec};
use elu_tv_denoise::metrics::{psnr, psnr_for_sigma};
use elu_tv_denoise::synth::gray_scenes;

fn main() -> elu_tv_denoise::Result<()> {
    let images = gray_scenes(10, 256, 256, 40)?;
    println!("{:>6} {:>10} {:>10}", "sigma", "analytic", "measured");
    for sigma in [5.0, 15.0, 25.0, 50.0] {
        let spec = NoiseSpec::fixed(sigma, 8);
        let mut sum = 0.0;
        for (i, img) in images.iter().enumerate() {
            let (y, _) = add_gaussian_noise_stream(img, &spec, i as u64)?;
            sum += psnr(&y, img.tensor())?;
        }
        println!("{sigma:>6} {:>10.3} {:>10.3}", psnr_for_sigma(sigma), sum / images.len() as f64);
    }
    Ok(())
}
