//! Total variation of a few images and the TV-L2 training loss as β grows.

use elu_tv_denoise::data::{add_gaussian_noise, NoiseSpec};
use elu_tv_denoise::loss::{loss_backward, loss_forward, tv_smoothed, tv_value, TvL2Config};
use elu_tv_denoise::synth::{dead_leaves, SceneConfig};
use elu_tv_denoise::tensor::{Shape, Tensor};

fn main() -> elu_tv_denoise::Result<()> {
    let step = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![0.0, 1.0, 0.0, 1.0])?;
    println!("tv([[0,1],[0,1]]) = {}", tv_value(&step)?);

    let clean = dead_leaves(&SceneConfig::gray(64, 64), 5)?;
    let (noisy, _) = add_gaussian_noise(&clean, &NoiseSpec::fixed(25.0, 1))?;
    let x = clean.tensor().clone();
    println!("tv(clean) = {:.3}  tv(noisy) = {:.3}", tv_value(&x)?, tv_value(&noisy)?);
    println!("smoothed gap on noisy: {:.3e} (bound {:.3e})", tv_smoothed(&noisy, 1e-3)? - tv_value(&noisy)?, 64.0 * 64.0 * 1e-3);

    // the perfect residual against a network that predicts nothing
    let perfect = noisy.sub(&x)?;
    let nothing = Tensor::zeros(x.shape());
    for beta in [0.0, 1e-4, 5e-4, 1e-2] {
        let cfg = TvL2Config { beta, beta_late: beta, ..TvL2Config::default() };
        let g = loss_backward(&nothing, &noisy, &x, &cfg, 0)?;
        println!(
            "beta={beta:<7} loss(R=y-x)={:>9.4} loss(R=0)={:>9.4} |grad(R=0)|max={:.4}",
            loss_forward(&perfect, &noisy, &x, &cfg, 0)?,
            loss_forward(&nothing, &noisy, &x, &cfg, 0)?,
            g.max_abs()
        );
    }
    Ok(())
}
