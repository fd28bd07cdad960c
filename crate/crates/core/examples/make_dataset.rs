//! Writes synthetic gray scenes as PGM files plus `train.txt` / `eval.txt`
//! manifests, ready for `etvd train` and `etvd eval`.
//!
//!     cargo run --example make_dataset -- OUT_DIR [train_count] [eval_count] [size]

use std::fs;
use std::path::PathBuf;

use elu_tv_denoise::pnm::write_image;
use elu_tv_denoise::synth::gray_scenes;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().ok_or("usage: make_dataset OUT_DIR [train] [eval] [size]")?);
    let train: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(16);
    let eval: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(4);
    let size: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(180);
    fs::create_dir_all(&dir)?;

    for (name, count, seed) in [("train", train, 1_000), ("eval", eval, 9_000)] {
        let mut manifest = format!("# {count} synthetic {size}x{size} scenes\n");
        for (i, img) in gray_scenes(count, size, size, seed)?.iter().enumerate() {
            let file = format!("{name}_{i:04}.pgm");
            write_image(dir.join(&file), img)?;
            manifest.push_str(&file);
            manifest.push('\n');
        }
        fs::write(dir.join(format!("{name}.txt")), manifest)?;
        println!("wrote {count} images and {}", dir.join(format!("{name}.txt")).display());
    }
    Ok(())
}
