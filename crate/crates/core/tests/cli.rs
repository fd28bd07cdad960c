use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use elu_tv_denoise::checkpoint;
use elu_tv_denoise::image::Image;
use elu_tv_denoise::network::{NetworkConfig, ResidualDenoiser};
use elu_tv_denoise::pnm;
use elu_tv_denoise::synth::gray_scenes;

fn etvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etvd")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn dataset(dir: &Path, name: &str, count: usize, size: usize, seed: u64) -> PathBuf {
    let mut manifest = String::new();
    for (i, img) in gray_scenes(count, size, size, seed).unwrap().iter().enumerate() {
        let file = format!("{name}_{i}.pgm");
        pnm::write_image(dir.join(&file), img).unwrap();
        manifest.push_str(&file);
        manifest.push('\n');
    }
    let path = dir.join(format!("{name}.txt"));
    fs::write(&path, manifest).unwrap();
    path
}

fn zero_checkpoint(dir: &Path) -> PathBuf {
    let net = ResidualDenoiser::<f32>::zeroed(NetworkConfig { blocks: 1, channels: 2, ..NetworkConfig::default() }).unwrap();
    let path = dir.join("zero.etvd");
    checkpoint::save(&path, &net).unwrap();
    path
}

const SMALL: [&str; 8] = [
    "--set",
    "network.blocks=1",
    "--set",
    "network.channels=4",
    "--set",
    "train.lr=1e-5",
    "--set",
    "train.patch_size=16",
];

fn train_small(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let manifest = dataset(dir, "train", 2, 32, 1);
    let out = dir.join(out);
    let mut args = vec!["train", "--train-manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(&["--set", "train.stride=16", "--set", "train.batch_size=4"]);
    args.extend_from_slice(extra);
    etvd(&args)
}

#[test]
fn one_epoch_of_two_batches_logs_two_steps() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_small(dir.path(), "run", &["--epochs", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("step ")).count(), 2, "{text}");
    let epoch = text.lines().find(|l| l.starts_with("epoch ")).unwrap();
    for key in ["epoch=0", "mean_loss=", "lr=", "beta=", "wall_secs="] {
        assert!(epoch.contains(key), "{epoch}");
    }
    assert!(dir.path().join("run/epoch_000.etvd").exists());
    assert!(dir.path().join("run/model.etvd").exists());
}

#[test]
fn default_schedule_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let o = train_small(dir.path(), "run", &["--epochs", "1", "--set", "train.lr=1e-3"]);
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("schedule")).expect("schedule line");
    assert!(line.contains("lr=1e-3->1e-4"), "{line}");
    assert!(line.contains("beta=1e-4->5e-4"), "{line}");
    assert!(line.contains("switch_epoch=30"), "{line}");
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let o = train_small(dir.path(), run, &["--epochs", "2", "--seed", "5"]);
        assert!(o.status.success());
    }
    for f in ["epoch_000.etvd", "epoch_001.etvd", "model.etvd"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let o = train_small(dir.path(), "c", &["--epochs", "1", "--seed", "6"]);
    assert!(o.status.success());
    assert_ne!(fs::read(dir.path().join("a/epoch_000.etvd")).unwrap(), fs::read(dir.path().join("c/epoch_000.etvd")).unwrap());
}

#[test]
fn resume_continues_from_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(train_small(dir.path(), "run", &["--epochs", "1"]).status.success());
    let ck = dir.path().join("run/epoch_000.etvd");
    let o = train_small(dir.path(), "resumed", &["--epochs", "2", "--resume", ck.to_str().unwrap(), "--start-epoch", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("epoch epoch=1"));
    assert!(!text.contains("epoch epoch=0"));
}

#[test]
fn overlapping_manifests_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), "train", 1, 32, 1);
    let out = dir.path().join("run");
    let o = etvd(&[
        "train",
        "--train-manifest",
        m.to_str().unwrap(),
        "--eval-manifest",
        m.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("both"));
}

#[test]
fn zero_checkpoint_denoise_returns_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let ck = zero_checkpoint(dir.path());
    let input = dir.path().join("in.pgm");
    pnm::write_image(&input, &gray_scenes(1, 20, 24, 4).unwrap()[0]).unwrap();
    let output = dir.path().join("out.pgm");
    let o = etvd(&[
        "denoise",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--reference",
        input.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&input).unwrap(), fs::read(&output).unwrap());
    assert!(stdout(&o).contains("output=inf"));
}

#[test]
fn denoise_rejects_channel_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let ck = zero_checkpoint(dir.path());
    let input = dir.path().join("in.ppm");
    pnm::write_image(&input, &Image::constant(3, 4, 4, 0.5).unwrap()).unwrap();
    let output = dir.path().join("out.ppm");
    let o = etvd(&["denoise", "--checkpoint", ck.to_str().unwrap(), "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_of_identity_is_infinite_and_single_image_mean_matches() {
    let dir = tempfile::tempdir().unwrap();
    let ck = zero_checkpoint(dir.path());
    let m = dataset(dir.path(), "eval", 2, 24, 9);
    let o = etvd(&["eval", "--checkpoint", ck.to_str().unwrap(), "--manifest", m.to_str().unwrap(), "--sigma", "0"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().filter(|l| l.starts_with("image ") && l.contains("psnr_denoised=inf")).count(), 2, "{text}");

    let single = dir.path().join("single.txt");
    fs::write(&single, "eval_0.pgm\n").unwrap();
    let out = dir.path().join("evalout");
    let o = etvd(&[
        "eval",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--manifest",
        single.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = stdout(&o);
    let field = |line: &str, key: &str| line.split_whitespace().find_map(|f| f.strip_prefix(key)).unwrap().to_owned();
    let image = text.lines().find(|l| l.starts_with("image ")).unwrap();
    let mean = text.lines().find(|l| l.starts_with("mean ")).unwrap();
    assert_eq!(field(image, "psnr_denoised="), field(mean, "psnr_denoised="));
    assert!(out.join("eval.csv").exists());
}

#[test]
fn eval_rejects_empty_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ck = zero_checkpoint(dir.path());
    let m = dir.path().join("empty.txt");
    fs::write(&m, "# nothing\n").unwrap();
    let o = etvd(&["eval", "--checkpoint", ck.to_str().unwrap(), "--manifest", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn asm_bench_writes_csv_with_summary() {
    let dir = tempfile::tempdir().unwrap();
    let m = dataset(dir.path(), "imgs", 2, 32, 3);
    let o = etvd(&["asm-bench", "--manifest", m.to_str().unwrap(), "--trials", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("image_path,trial,sigma,asm_elu,asm_relu,elu_lower"));
    let rows: Vec<&str> = text.lines().filter(|l| l.contains(".pgm,")).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols.len(), 6);
        assert!(cols[5] == "0" || cols[5] == "1");
        let (e, l): (f64, f64) = (cols[3].parse().unwrap(), cols[4].parse().unwrap());
        assert_eq!(cols[5] == "1", e < l);
    }
    let summary = text.lines().find(|l| l.starts_with("summary,")).unwrap();
    let frac: f64 = summary.rsplit(',').next().unwrap().parse().unwrap();
    let ones = rows.iter().filter(|r| r.ends_with(",1")).count();
    assert!((frac - ones as f64 / 6.0).abs() < 1e-6);
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let o = etvd(&["gradcheck", "--scope", "layer", "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.contains("name=elu(alpha=1)") && l.ends_with("PASS")));
    assert!(text.lines().any(|l| l.contains("name=batchnorm") && l.ends_with("PASS")));
    let o = etvd(&["gradcheck", "--scope", "loss", "--seeds", "1", "--corrupt-gradient"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(etvd(&[]).status.code(), Some(1));
    assert_eq!(etvd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(etvd(&["gradcheck", "--scope", "everything"]).status.code(), Some(1));
    assert_eq!(etvd(&["gradcheck", "--seed", "x"]).status.code(), Some(1));
    assert_eq!(etvd(&["asm-bench"]).status.code(), Some(1));
    assert_eq!(etvd(&["eval", "--set", "train.epochs=0", "--checkpoint", "x"]).status.code(), Some(1));
    assert_eq!(etvd(&["--help"]).status.code(), Some(0));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "[run]\nseed = 3\n[asm]\ntrials = 2\n").unwrap();
    let m = dataset(dir.path(), "imgs", 1, 24, 3);
    let o = etvd(&["asm-bench", "--config", cfg.to_str().unwrap(), "--manifest", m.to_str().unwrap()]);
    assert!(stdout(&o).contains("trials=2 "));
    let o = etvd(&["asm-bench", "--config", cfg.to_str().unwrap(), "--manifest", m.to_str().unwrap(), "--trials", "4"]);
    assert!(stdout(&o).contains("trials=4 "));
    fs::write(&cfg, "[run]\nseed = 3\n[asm]\ntrails = 2\n").unwrap();
    let o = etvd(&["asm-bench", "--config", cfg.to_str().unwrap(), "--manifest", m.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}
