//! The `etvd` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime or numerical failure.
//! Records go to the output writer one per line; errors go to stderr.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{add_gaussian_noise_stream, check_disjoint, make_pairs, patches_from_images, read_manifest, NoiseMode};
use crate::error::Error;
use crate::gradcheck::{self, Scope};
use crate::image::{to_gray, Image};
use crate::metrics::psnr;
use crate::network::ResidualDenoiser;
use crate::pnm;
use crate::synth::gray_scenes;
use crate::texture::asm_experiment;
use crate::tensor::Tensor;
use crate::train::{mean_psnr, Trainer};

#[derive(Debug, Parser)]
#[command(name = "etvd", version, about = "Residual ELU denoiser with TV-regularized training")]
pub struct Cli {
    /// Configuration file (key = value lines under [section] headers).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides run.seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory; overrides paths.out_dir.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Extra `section.key=value` override, applied after the config file.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a denoiser, writing a checkpoint after every epoch.
    Train(TrainArgs),
    /// Denoise one PGM/PPM image.
    Denoise(DenoiseArgs),
    /// Per-image and mean PSNR over a manifest.
    Eval(EvalArgs),
    /// ELU-versus-ReLU residual ASM comparison, written as CSV.
    AsmBench(AsmBenchArgs),
    /// Finite-difference checks of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training image manifest; overrides paths.train_manifest.
    #[arg(long)]
    pub train_manifest: Option<PathBuf>,
    /// Held-out manifest, reported after each epoch; overrides paths.eval_manifest.
    #[arg(long)]
    pub eval_manifest: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from this checkpoint (optimizer momentum restarts at zero).
    #[arg(long, requires = "start_epoch")]
    pub resume: Option<PathBuf>,
    /// First epoch to run when resuming.
    #[arg(long)]
    pub start_epoch: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DenoiseArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Clean image; when given, PSNR of input and output against it is printed.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Clean images; overrides paths.eval_manifest.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Noise level on the 0–255 scale; overrides noise.sigma.
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AsmBenchArgs {
    /// Image manifest; overrides paths.eval_manifest.
    #[arg(long, conflicts_with = "synthetic")]
    pub manifest: Option<PathBuf>,
    /// Use this many generated 180×180 scenes instead of a manifest.
    #[arg(long)]
    pub synthetic: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "all")]
    pub scope: Scope,
    /// Number of seeds, starting at --seed.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Perturb every analytic gradient before comparing (negative control).
    #[arg(long, hide = true)]
    pub corrupt_gradient: bool,
}

/// Failure classes, mapped to exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Runtime(Error::Config { .. }) => 1,
            CliError::Runtime(_) | CliError::Failed(_) => 2,
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the command, writing records
/// to `out`. Returns the process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        cfg.set(o)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = Some(o.clone());
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Train(a) => train(cfg, a, out),
        Command::Denoise(a) => denoise(&cfg, a, out),
        Command::Eval(a) => eval(cfg, a, out),
        Command::AsmBench(a) => asm_bench(cfg, a, out),
        Command::Gradcheck(a) => grad_check(&cfg, a, out),
    }
}

fn emit(out: &mut dyn Write, line: impl std::fmt::Display) -> CliResult {
    writeln!(out, "{line}").map_err(|e| Error::Io { path: PathBuf::from("<stdout>"), source: e })?;
    Ok(())
}

fn required<'a>(p: Option<&'a PathBuf>, what: &str) -> CliResult<&'a PathBuf> {
    p.ok_or_else(|| CliError::Usage(format!("missing {what}")))
}

fn out_dir(cfg: &RunConfig) -> CliResult<Option<PathBuf>> {
    match &cfg.paths.out_dir {
        Some(d) => {
            fs::create_dir_all(d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
            Ok(Some(d.clone()))
        }
        None => Ok(None),
    }
}

/// Reads images, converting color to gray when the network is gray.
fn load_images(paths: &[PathBuf], in_channels: usize) -> CliResult<Vec<Image>> {
    paths
        .iter()
        .map(|p| {
            let img = pnm::read_image(p)?;
            match (img.channels(), in_channels) {
                (c, n) if c == n => Ok(img),
                (3, 1) => Ok(to_gray(&img)?),
                (c, n) => Err(CliError::Runtime(Error::Shape(format!(
                    "{} has {c} channels but the network expects {n}",
                    p.display()
                )))),
            }
        })
        .collect()
}

fn nonempty_manifest(path: &Path) -> CliResult<Vec<PathBuf>> {
    let list = read_manifest(path)?;
    if list.is_empty() {
        return Err(CliError::Runtime(Error::InvalidArgument(format!("manifest {} lists no images", path.display()))));
    }
    Ok(list)
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_owned()
    } else {
        format!("{v:.4}")
    }
}

fn train(mut cfg: RunConfig, a: &TrainArgs, out: &mut dyn Write) -> CliResult {
    if let Some(p) = &a.train_manifest {
        cfg.paths.train_manifest = Some(p.clone());
    }
    if let Some(p) = &a.eval_manifest {
        cfg.paths.eval_manifest = Some(p.clone());
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let dir = out_dir(&cfg)?.ok_or_else(|| CliError::Usage("train needs --out DIR for checkpoints".into()))?;
    fs::write(dir.join("config.txt"), cfg.serialize()).map_err(|e| Error::Io { path: dir.join("config.txt"), source: e })?;

    let train_paths = nonempty_manifest(required(cfg.paths.train_manifest.as_ref(), "training manifest")?)?;
    let eval_paths = match &cfg.paths.eval_manifest {
        Some(p) => {
            let list = nonempty_manifest(p)?;
            check_disjoint(&train_paths, &list)?;
            Some(list)
        }
        None => None,
    };

    let net_cfg = cfg.network_config();
    let images = load_images(&train_paths, net_cfg.in_channels)?;
    let patches = patches_from_images(&images, cfg.train.patch_size, cfg.train.stride)?;
    let pairs = make_pairs::<f32>(&patches, &cfg.noise_spec())?;
    let held_out = match &eval_paths {
        Some(list) => {
            let imgs = load_images(list, net_cfg.in_channels)?;
            let spec = crate::data::NoiseSpec { seed: cfg.noise_spec().seed.wrapping_add(1), ..cfg.noise_spec() };
            Some(make_pairs::<f32>(&patches_from_images(&imgs, cfg.train.patch_size, cfg.train.patch_size)?, &spec)?)
        }
        None => None,
    };
    emit(out, format!("data images={} patches={} held_out={}", images.len(), pairs.len(), held_out.as_ref().map_or(0, Vec::len)))?;

    let (net, first) = match &a.resume {
        Some(p) => {
            let net: ResidualDenoiser<f32> = checkpoint::load(p)?;
            if net.config().in_channels != net_cfg.in_channels {
                return Err(CliError::Usage("resumed checkpoint has a different channel count".into()));
            }
            (net, a.start_epoch.unwrap_or(0))
        }
        None => (ResidualDenoiser::new(net_cfg)?, 0),
    };
    let tc = cfg.train_config();
    emit(
        out,
        format!(
            "schedule lr={:e}->{:e} beta={:e}->{:e} switch_epoch={} epochs={}",
            tc.sgd.lr, tc.sgd.lr_late, tc.loss.beta, tc.loss.beta_late, tc.sgd.switch_epoch, tc.epochs
        ),
    )?;
    let epochs = tc.epochs;
    let mut trainer = Trainer::new(net, tc)?;
    for epoch in first..epochs {
        let mut write_err = None;
        let rec = trainer.run_epoch(&pairs, epoch, |step| {
            if let Err(e) = writeln!(out, "{step}") {
                write_err.get_or_insert(e);
            }
        })?;
        if let Some(e) = write_err {
            return Err(Error::Io { path: PathBuf::from("<stdout>"), source: e }.into());
        }
        let ck = dir.join(format!("epoch_{epoch:03}.etvd"));
        checkpoint::save(&ck, &trainer.net)?;
        checkpoint::save(dir.join("model.etvd"), &trainer.net)?;
        match &held_out {
            Some(h) => {
                let (den, noisy) = mean_psnr(&trainer.net, h)?;
                emit(out, format!("{rec} psnr_noisy={} psnr_denoised={}", fmt_db(noisy), fmt_db(den)))?;
            }
            None => emit(out, &rec)?,
        }
        emit(out, format!("checkpoint path={}", ck.display()))?;
    }
    Ok(())
}

/// Residual in single precision, subtraction in double so a zero residual is exact.
fn denoise_f64(net: &ResidualDenoiser<f32>, y: &Tensor<f64>) -> Result<Tensor<f64>, Error> {
    let r = net.forward_eval(&y.cast::<f32>())?.cast::<f64>();
    Ok(y.sub(&r)?.map(|v| v.clamp(0.0, 1.0)))
}

fn denoise(cfg: &RunConfig, a: &DenoiseArgs, out: &mut dyn Write) -> CliResult {
    let ck = required(a.checkpoint.as_ref().or(cfg.paths.checkpoint.as_ref()), "--checkpoint")?;
    let net: ResidualDenoiser<f32> = checkpoint::load(ck)?;
    let img = pnm::read_image(&a.input)?;
    if img.channels() != net.config().in_channels {
        return Err(CliError::Runtime(Error::Shape(format!(
            "{} has {} channels but the checkpoint expects {}",
            a.input.display(),
            img.channels(),
            net.config().in_channels
        ))));
    }
    let result = Image::from_tensor_clamped(&denoise_f64(&net, img.tensor())?)?;
    pnm::write_image(&a.output, &result)?;
    emit(out, format!("denoise input={} output={}", a.input.display(), a.output.display()))?;
    if let Some(r) = &a.reference {
        let clean = pnm::read_image(r)?;
        let before = psnr(img.tensor(), clean.tensor())?;
        let after = psnr(result.tensor(), clean.tensor())?;
        emit(out, format!("psnr input={} output={} gain={:.4}", fmt_db(before), fmt_db(after), after - before))?;
    }
    Ok(())
}

fn eval(mut cfg: RunConfig, a: &EvalArgs, out: &mut dyn Write) -> CliResult {
    if let Some(s) = a.sigma {
        cfg.noise = NoiseMode::Fixed { sigma: s };
    }
    cfg.validate()?;
    let ck = required(a.checkpoint.as_ref().or(cfg.paths.checkpoint.as_ref()), "--checkpoint")?;
    let manifest = required(a.manifest.as_ref().or(cfg.paths.eval_manifest.as_ref()), "--manifest")?;
    let net: ResidualDenoiser<f32> = checkpoint::load(ck)?;
    let paths = nonempty_manifest(manifest)?;
    let images = load_images(&paths, net.config().in_channels)?;
    let spec = cfg.noise_spec();
    let mut csv = String::from("image_path,sigma,psnr_noisy,psnr_denoised\n");
    let (mut sum_noisy, mut sum_den) = (0.0, 0.0);
    for (i, (p, img)) in paths.iter().zip(&images).enumerate() {
        let (y, sigma) = add_gaussian_noise_stream(img, &spec, i as u64)?;
        let den = denoise_f64(&net, &y)?;
        let (pn, pd) = (psnr(&y, img.tensor())?, psnr(&den, img.tensor())?);
        sum_noisy += pn;
        sum_den += pd;
        emit(out, format!("image path={} sigma={sigma} psnr_noisy={} psnr_denoised={}", p.display(), fmt_db(pn), fmt_db(pd)))?;
        csv.push_str(&format!("{},{sigma},{},{}\n", p.display(), fmt_db(pn), fmt_db(pd)));
    }
    let n = images.len() as f64;
    let (mn, md) = (sum_noisy / n, sum_den / n);
    emit(out, format!("mean images={} psnr_noisy={} psnr_denoised={}", images.len(), fmt_db(mn), fmt_db(md)))?;
    csv.push_str(&format!("mean,,{},{}\n", fmt_db(mn), fmt_db(md)));
    if let Some(dir) = out_dir(&cfg)? {
        let path = dir.join("eval.csv");
        fs::write(&path, csv).map_err(|e| Error::Io { path, source: e })?;
    }
    Ok(())
}

fn asm_bench(mut cfg: RunConfig, a: &AsmBenchArgs, out: &mut dyn Write) -> CliResult {
    if let Some(t) = a.trials {
        cfg.asm.trials = t;
    }
    if let Some(s) = a.sigma {
        cfg.noise = NoiseMode::Fixed { sigma: s };
    }
    cfg.validate()?;
    let exp = cfg.asm_config()?;
    let (names, images) = match (a.synthetic, a.manifest.as_ref().or(cfg.paths.eval_manifest.as_ref())) {
        (Some(n), _) => {
            if n == 0 {
                return Err(CliError::Usage("--synthetic needs at least one image".into()));
            }
            let names: Vec<String> = (0..n).map(|i| format!("synthetic:{i}")).collect();
            (names, gray_scenes(n, 180, 180, cfg.seed)?)
        }
        (None, Some(m)) => {
            let paths = nonempty_manifest(m)?;
            let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
            (names, load_images(&paths, 1)?)
        }
        (None, None) => return Err(CliError::Usage("asm-bench needs --manifest or --synthetic N".into())),
    };
    let report = asm_experiment(&images, &exp)?;
    let mut csv = String::from("image_path,trial,sigma,asm_elu,asm_relu,elu_lower\n");
    for t in &report.trials {
        csv.push_str(&format!(
            "{},{},{},{:.9e},{:.9e},{}\n",
            names[t.image],
            t.trial,
            t.sigma,
            t.asm_candidate,
            t.asm_baseline,
            u8::from(t.candidate_lower())
        ));
    }
    csv.push_str(&format!("summary,{},{},,,{:.6}\n", report.trials.len(), exp.sigma, report.fraction()));
    match out_dir(&cfg)? {
        Some(dir) => {
            let path = dir.join("asm.csv");
            fs::write(&path, &csv).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            emit(out, format!("csv path={}", path.display()))?;
        }
        None => out.write_all(csv.as_bytes()).map_err(|e| Error::Io { path: PathBuf::from("<stdout>"), source: e })?,
    }
    emit(
        out,
        format!(
            "asm images={} trials={} elu_lower={} elu_higher={} ties={} fraction={:.6}",
            images.len(),
            report.trials.len(),
            report.candidate_lower,
            report.candidate_higher,
            report.ties,
            report.fraction()
        ),
    )
}

fn grad_check(cfg: &RunConfig, a: &GradcheckArgs, out: &mut dyn Write) -> CliResult {
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let mut failures = 0;
    let mut total = 0;
    for seed in cfg.seed..cfg.seed + a.seeds {
        for r in gradcheck::run(a.scope, seed, a.corrupt_gradient)? {
            total += 1;
            let verdict = if r.passed() { "PASS" } else { "FAIL" };
            if !r.passed() {
                failures += 1;
            }
            emit(
                out,
                format!(
                    "check name={} seed={} entries={} max_rel_err={:.3e} tol={:.0e} worst_index={} analytic={:.6e} numeric={:.6e} {verdict}",
                    r.name, r.seed, r.entries, r.max_rel_err, r.tolerance, r.worst_index, r.worst_analytic, r.worst_numeric
                ),
            )?;
        }
    }
    emit(out, format!("gradcheck checks={total} failures={failures}"))?;
    if failures > 0 {
        return Err(CliError::Failed(format!("{failures} of {total} gradient checks failed")));
    }
    Ok(())
}
