//! Saves a network, reloads it and confirms the forward pass is bit-identical.

use elu_tv_denoise::checkpoint;
use elu_tv_denoise::layers::Mode;
use elu_tv_denoise::network::{NetworkConfig, ResidualDenoiser};
use elu_tv_denoise::synth::gray_scenes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut net = ResidualDenoiser::<f32>::new(NetworkConfig { blocks: 4, channels: 8, seed: 21, ..NetworkConfig::default() })?;
    let y = gray_scenes(1, 32, 32, 3)?[0].tensor().cast::<f32>();
    // populate running statistics so they are part of what is checked
    net.forward(&y, Mode::Train)?;

    let dir = std::env::temp_dir().join("etvd_checkpoint_example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.etvd");
    checkpoint::save(&path, &net)?;
    let back: ResidualDenoiser<f32> = checkpoint::load(&path)?;

    let a = net.forward_eval(&y)?;
    let b = back.forward_eval(&y)?;
    let identical = a.as_slice().iter().zip(b.as_slice()).all(|(p, q)| p.to_bits() == q.to_bits());
    println!("{} bytes, {} conv layers, forward bit-identical: {identical}", std::fs::metadata(&path)?.len(), back.conv_layer_count());
    for p in back.state().iter().take(6) {
        println!("  {:<26} {:?}", p.name, p.dims);
    }
    Ok(())
}
