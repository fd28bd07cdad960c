//! Plain-text run configuration.
//!
//! ```text
//! # comment
//! [run]
//! seed = 7
//!
//! [network]
//! blocks = 3
//! activation = elu
//! ```
//!
//! Unknown sections or keys are errors. [`RunConfig::set`] applies the same
//! `section.key` assignments from the command line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{NoiseMode, NoiseSpec};
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::loss::TvL2Config;
use crate::network::{ActivationKind, NetworkConfig};
use crate::optim::SgdConfig;
use crate::texture::{AsmExperimentConfig, GlcmConfig};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub lr: f64,
    pub lr_late: f64,
    /// Epoch at which both the learning rate and β switch.
    pub switch_epoch: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub beta: f64,
    pub beta_late: f64,
    pub tv_eps: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let sgd = SgdConfig::default();
        let tv = TvL2Config::default();
        TrainSettings {
            epochs: 50,
            batch_size: 128,
            patch_size: 40,
            stride: 20,
            lr: sgd.lr,
            lr_late: sgd.lr_late,
            switch_epoch: sgd.switch_epoch,
            momentum: sgd.momentum,
            weight_decay: sgd.weight_decay,
            beta: tv.beta,
            beta_late: tv.beta_late,
            tv_eps: tv.tv_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsmSettings {
    pub trials: usize,
    /// ELU α of the candidate arm.
    pub alpha: f64,
    pub lambda: f64,
    pub filter_range: f64,
}

impl Default for AsmSettings {
    fn default() -> Self {
        AsmSettings { trials: 20, alpha: 0.1, lambda: 1.0, filter_range: 0.5 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub train_manifest: Option<PathBuf>,
    pub eval_manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Master seed; initialization, shuffling and noise derive from it.
    pub seed: u64,
    pub network: NetworkConfig,
    pub train: TrainSettings,
    pub noise: NoiseMode,
    pub glcm: GlcmConfig,
    pub asm: AsmSettings,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            network: NetworkConfig::default(),
            train: TrainSettings::default(),
            noise: NoiseMode::Fixed { sigma: 25.0 },
            glcm: GlcmConfig::default(),
            asm: AsmSettings::default(),
            paths: Paths::default(),
        }
    }
}

const NOISE_SALT: u64 = 0x6e6f_6973_65;

fn parse_value<V: FromStr>(line: usize, key: &str, raw: &str) -> Result<V> {
    raw.parse().map_err(|_| Error::Config { line, reason: format!("invalid value {raw:?} for {key}") })
}

fn parse_bool(line: usize, key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config { line, reason: format!("invalid boolean {raw:?} for {key}") }),
    }
}

fn opt_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config { line, reason: format!("unterminated section header {content:?}") })?;
                section = name.trim().to_owned();
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Config { line, reason: format!("expected key = value, got {content:?}") })?;
            if section.is_empty() {
                return Err(Error::Config { line, reason: format!("key {:?} outside any section", key.trim()) });
            }
            cfg.assign(line, &section, key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Applies one `section.key=value` override.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let bad = || Error::Config { line: 0, reason: format!("override {assignment:?} is not section.key=value") };
        let (lhs, value) = assignment.split_once('=').ok_or_else(bad)?;
        let (section, key) = lhs.trim().split_once('.').ok_or_else(bad)?;
        self.assign(0, section, key, value.trim())?;
        self.validate()
    }

    fn assign(&mut self, line: usize, section: &str, key: &str, v: &str) -> Result<()> {
        let full = format!("{section}.{key}");
        let k = full.as_str();
        match k {
            "run.seed" => self.seed = parse_value(line, k, v)?,

            "network.blocks" => self.network.blocks = parse_value(line, k, v)?,
            "network.channels" => self.network.channels = parse_value(line, k, v)?,
            "network.in_channels" => self.network.in_channels = parse_value(line, k, v)?,
            "network.alpha" => self.network.alpha = parse_value(line, k, v)?,
            "network.activation" => {
                self.network.activation = match v {
                    "elu" => ActivationKind::Elu,
                    "relu" => ActivationKind::Relu,
                    _ => return Err(Error::Config { line, reason: format!("activation must be elu or relu, got {v:?}") }),
                }
            }

            "train.epochs" => self.train.epochs = parse_value(line, k, v)?,
            "train.batch_size" => self.train.batch_size = parse_value(line, k, v)?,
            "train.patch_size" => self.train.patch_size = parse_value(line, k, v)?,
            "train.stride" => self.train.stride = parse_value(line, k, v)?,
            "train.lr" => self.train.lr = parse_value(line, k, v)?,
            "train.lr_late" => self.train.lr_late = parse_value(line, k, v)?,
            "train.switch_epoch" => self.train.switch_epoch = parse_value(line, k, v)?,
            "train.momentum" => self.train.momentum = parse_value(line, k, v)?,
            "train.weight_decay" => self.train.weight_decay = parse_value(line, k, v)?,
            "train.beta" => self.train.beta = parse_value(line, k, v)?,
            "train.beta_late" => self.train.beta_late = parse_value(line, k, v)?,
            "train.tv_eps" => self.train.tv_eps = parse_value(line, k, v)?,

            "noise.mode" => {
                self.noise = match v {
                    "fixed" => NoiseMode::Fixed { sigma: 25.0 },
                    "randomized" => NoiseMode::Randomized { lo: 0.0, hi: 55.0 },
                    _ => return Err(Error::Config { line, reason: format!("noise mode must be fixed or randomized, got {v:?}") }),
                }
            }
            "noise.sigma" => match &mut self.noise {
                NoiseMode::Fixed { sigma } => *sigma = parse_value(line, k, v)?,
                NoiseMode::Randomized { .. } => {
                    return Err(Error::Config { line, reason: "sigma needs mode = fixed".into() });
                }
            },
            "noise.lo" | "noise.hi" => match &mut self.noise {
                NoiseMode::Randomized { lo, hi } => {
                    let slot = if key == "lo" { lo } else { hi };
                    *slot = parse_value(line, k, v)?;
                }
                NoiseMode::Fixed { .. } => {
                    return Err(Error::Config { line, reason: format!("{key} needs mode = randomized") });
                }
            },

            "glcm.levels" => self.glcm.levels = parse_value(line, k, v)?,
            "glcm.offset_dy" => self.glcm.offset.0 = parse_value(line, k, v)?,
            "glcm.offset_dx" => self.glcm.offset.1 = parse_value(line, k, v)?,
            "glcm.symmetric" => self.glcm.symmetric = parse_bool(line, k, v)?,

            "asm.trials" => self.asm.trials = parse_value(line, k, v)?,
            "asm.alpha" => self.asm.alpha = parse_value(line, k, v)?,
            "asm.lambda" => self.asm.lambda = parse_value(line, k, v)?,
            "asm.filter_range" => self.asm.filter_range = parse_value(line, k, v)?,

            "paths.train_manifest" => self.paths.train_manifest = opt_path(v),
            "paths.eval_manifest" => self.paths.eval_manifest = opt_path(v),
            "paths.checkpoint" => self.paths.checkpoint = opt_path(v),
            "paths.out_dir" => self.paths.out_dir = opt_path(v),

            _ => return Err(Error::Config { line, reason: format!("unknown key {k}") }),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config { line: 0, reason: e.to_string() };
        self.network_config().validate().map_err(wrap)?;
        self.train_config().validate().map_err(wrap)?;
        self.noise_spec().validate().map_err(wrap)?;
        self.glcm.validate().map_err(wrap)?;
        if self.train.patch_size < 3 || self.train.stride < 1 {
            return Err(Error::Config { line: 0, reason: "patch_size must be at least 3 and stride at least 1".into() });
        }
        if self.asm.trials < 1 || !(self.asm.filter_range > 0.0) {
            return Err(Error::Config { line: 0, reason: "asm needs trials >= 1 and filter_range > 0".into() });
        }
        Activation::elu(self.asm.alpha).map_err(wrap)?;
        Ok(())
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig { seed: self.seed, ..self.network.clone() }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.seed,
            sgd: SgdConfig {
                lr: t.lr,
                lr_late: t.lr_late,
                switch_epoch: t.switch_epoch,
                momentum: t.momentum,
                weight_decay: t.weight_decay,
            },
            loss: TvL2Config { beta: t.beta, beta_late: t.beta_late, switch_epoch: t.switch_epoch, tv_eps: t.tv_eps },
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec { mode: self.noise, seed: self.seed ^ NOISE_SALT }
    }

    /// ASM experiment settings; `sigma` comes from the fixed noise level.
    pub fn asm_config(&self) -> Result<AsmExperimentConfig> {
        let sigma = match self.noise {
            NoiseMode::Fixed { sigma } => sigma,
            NoiseMode::Randomized { .. } => {
                return Err(Error::InvalidArgument("the ASM experiment needs noise.mode = fixed".into()));
            }
        };
        Ok(AsmExperimentConfig {
            sigma,
            trials_per_image: self.asm.trials,
            seed: self.seed,
            lambda: self.asm.lambda,
            filter_range: self.asm.filter_range,
            glcm: self.glcm,
            candidate: Activation::elu(self.asm.alpha)?,
            baseline: Activation::Relu,
        })
    }

    /// Text form accepted by [`RunConfig::parse`].
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let n = &self.network;
        let t = &self.train;
        let act = match n.activation {
            ActivationKind::Elu => "elu",
            ActivationKind::Relu => "relu",
        };
        let _ = writeln!(s, "[run]\nseed = {}\n", self.seed);
        let _ = writeln!(
            s,
            "[network]\nblocks = {}\nchannels = {}\nin_channels = {}\nalpha = {:?}\nactivation = {act}\n",
            n.blocks, n.channels, n.in_channels, n.alpha
        );
        let _ = writeln!(
            s,
            "[train]\nepochs = {}\nbatch_size = {}\npatch_size = {}\nstride = {}\nlr = {:?}\nlr_late = {:?}\n\
             switch_epoch = {}\nmomentum = {:?}\nweight_decay = {:?}\nbeta = {:?}\nbeta_late = {:?}\ntv_eps = {:?}\n",
            t.epochs,
            t.batch_size,
            t.patch_size,
            t.stride,
            t.lr,
            t.lr_late,
            t.switch_epoch,
            t.momentum,
            t.weight_decay,
            t.beta,
            t.beta_late,
            t.tv_eps
        );
        match self.noise {
            NoiseMode::Fixed { sigma } => {
                let _ = writeln!(s, "[noise]\nmode = fixed\nsigma = {sigma:?}\n");
            }
            NoiseMode::Randomized { lo, hi } => {
                let _ = writeln!(s, "[noise]\nmode = randomized\nlo = {lo:?}\nhi = {hi:?}\n");
            }
        }
        let g = &self.glcm;
        let _ = writeln!(
            s,
            "[glcm]\nlevels = {}\noffset_dy = {}\noffset_dx = {}\nsymmetric = {}\n",
            g.levels, g.offset.0, g.offset.1, g.symmetric
        );
        let a = &self.asm;
        let _ = writeln!(
            s,
            "[asm]\ntrials = {}\nalpha = {:?}\nlambda = {:?}\nfilter_range = {:?}\n",
            a.trials, a.alpha, a.lambda, a.filter_range
        );
        let p = &self.paths;
        let show = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "[paths]\ntrain_manifest = {}\neval_manifest = {}\ncheckpoint = {}\nout_dir = {}",
            show(&p.train_manifest),
            show(&p.eval_manifest),
            show(&p.checkpoint),
            show(&p.out_dir)
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn custom_round_trip() {
        let text = "\
# toy run
[run]
seed = 42
[network]
blocks = 3
channels = 16
activation = relu
[train]
lr = 1e-5   # scaled
switch_epoch = 6
[noise]
mode = randomized
lo = 0
hi = 55
[glcm]
offset_dy = 1
offset_dx = -1
symmetric = false
[paths]
checkpoint = runs/model.etvd
";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.network.activation, ActivationKind::Relu);
        assert_eq!(c.train.lr, 1e-5);
        assert_eq!(c.noise, NoiseMode::Randomized { lo: 0.0, hi: 55.0 });
        assert_eq!(c.glcm.offset, (1, -1));
        assert_eq!(c.paths.checkpoint, Some(PathBuf::from("runs/model.etvd")));
        assert_eq!(c.train_config().loss.switch_epoch, 6);
        let again = RunConfig::parse(&c.serialize()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match RunConfig::parse("[run]\nseed = 1\n[train]\nepochz = 3\n") {
            Err(Error::Config { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::parse("seed = 1"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(RunConfig::parse("[run]\nseed = -1"), Err(Error::Config { line: 2, .. })));
        assert!(RunConfig::parse("[train]\nmomentum = 1.5").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = RunConfig::default();
        c.set("train.epochs=3").unwrap();
        c.set("network.alpha = 0.5").unwrap();
        assert_eq!((c.train.epochs, c.network.alpha), (3, 0.5));
        assert!(c.set("epochs=3").is_err());
        assert!(c.set("network.blocks=0").is_err());
    }

    #[test]
    fn derived_configs_share_the_seed() {
        let c = RunConfig { seed: 9, ..RunConfig::default() };
        assert_eq!(c.network_config().seed, 9);
        assert_eq!(c.train_config().seed, 9);
        assert_eq!(c.asm_config().unwrap().seed, 9);
        assert_ne!(c.noise_spec().seed, 9);
    }
}
