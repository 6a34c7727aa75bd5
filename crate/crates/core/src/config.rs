//! Experiment configuration.
//!
//! Configs are flat `key=value` text files. Blank lines and `#` comments are
//! ignored, unknown keys are rejected, and every key not given takes its
//! default. The canonical form lists all keys sorted; its SHA-256 prefix is
//! the config hash stamped on every artifact. `data_root` and `out_dir` are
//! locations, not experiment parameters, and are left out of the hash.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Environment variable overriding `data_root`.
pub const DATA_ROOT_ENV: &str = "PLR_DATA_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetId {
    Mnist,
    Usps,
    Svhn,
    MnistM,
}

impl DatasetId {
    pub const ALL: [DatasetId; 4] = [Self::Mnist, Self::Usps, Self::Svhn, Self::MnistM];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::Usps => "usps",
            Self::Svhn => "svhn",
            Self::MnistM => "mnist_m",
        }
    }

    pub fn native_channels(self) -> u8 {
        match self {
            Self::Mnist | Self::Usps => 1,
            Self::Svhn | Self::MnistM => 3,
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "mnist" => Ok(Self::Mnist),
            "usps" => Ok(Self::Usps),
            "svhn" => Ok(Self::Svhn),
            "mnist_m" | "mnistm" => Ok(Self::MnistM),
            other => Err(Error::invalid(format!("unknown dataset id {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GanObjective {
    CrossEntropy,
    LeastSquares,
    Hinge,
}

impl GanObjective {
    pub const ALL: [GanObjective; 3] = [Self::CrossEntropy, Self::LeastSquares, Self::Hinge];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CrossEntropy => "cross_entropy",
            Self::LeastSquares => "least_squares",
            Self::Hinge => "hinge",
        }
    }
}

impl fmt::Display for GanObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GanObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "cross_entropy" => Ok(Self::CrossEntropy),
            "least_squares" => Ok(Self::LeastSquares),
            "hinge" => Ok(Self::Hinge),
            other => Err(Error::invalid(format!(
                "unknown gan_objective {other:?} (expected cross_entropy, least_squares or hinge)"
            ))),
        }
    }
}

/// Which target labels the cGAN and the noisy-label classifier are trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LabelSource {
    /// Labels inferred by the source classifier (shift noise).
    Pseudo,
    /// True labels with uniform noise injected (see `noise_fraction`).
    Uniform,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pseudo => "pseudo",
            Self::Uniform => "uniform",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pseudo" => Ok(Self::Pseudo),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::invalid(format!(
                "unknown label_source {other:?} (expected pseudo or uniform)"
            ))),
        }
    }
}

/// Layer widths of the three networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchSpec {
    pub clf_conv1: usize,
    pub clf_conv2: usize,
    pub clf_fc: usize,
    /// Channels of the generator's 4×4 seed; halved at each upsampling stage.
    pub gen_base: usize,
    /// Channels of the discriminator's first stage; doubled at each stage.
    pub disc_base: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            clf_conv1: 64,
            clf_conv2: 128,
            clf_fc: 1024,
            gen_base: 256,
            disc_base: 64,
        }
    }
}

impl ArchSpec {
    pub fn summary(&self) -> String {
        format!(
            "classifier=conv{}-pool-conv{}-pool-fc{}-fc; generator=fc-{}x4x4-tconv{}-tconv{}-tconv; discriminator=conv{}-conv{}-conv{}-fc1",
            self.clf_conv1,
            self.clf_conv2,
            self.clf_fc,
            self.gen_base,
            self.gen_base / 2,
            self.gen_base / 4,
            self.disc_base,
            self.disc_base * 2,
            self.disc_base * 4
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budgets {
    pub source_epochs: usize,
    pub cgan_iters: usize,
    pub plr_iters: usize,
    pub eval_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: DatasetId,
    pub target: DatasetId,
    pub channels: u8,
    pub classes: usize,
    pub gan_objective: GanObjective,
    pub latent_dim: usize,
    pub eta: f64,
    pub delta: f64,
    pub pretrain_lr_source: f64,
    pub pretrain_lr_gan: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub budgets: Budgets,
    pub arch: ArchSpec,
    /// Epochs for the clean-label oracle used by GAN-test.
    pub oracle_epochs: usize,
    pub oracle_threshold: f64,
    /// Classifier steps for GAN-train; 0 means the source-pretraining step count.
    pub gan_train_steps: usize,
    /// Generated samples for GAN-test; 0 means the target training-set size.
    pub gan_test_samples: usize,
    /// Caps every loaded training split; 0 keeps all samples.
    pub max_train_samples: usize,
    pub label_source: LabelSource,
    /// Uniform noise fraction for `inject-noise`; `None` ("auto") takes the
    /// equivalent of the measured pseudo-label accuracy.
    pub noise_fraction: Option<f64>,
    pub seed: u64,
    pub data_root: PathBuf,
    pub out_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "adam_beta1",
    "adam_beta2",
    "batch_size",
    "cgan_iters",
    "channels",
    "classes",
    "clf_conv1",
    "clf_conv2",
    "clf_fc",
    "data_root",
    "delta",
    "disc_base",
    "eta",
    "eval_batch_size",
    "eval_every",
    "gan_objective",
    "gan_test_samples",
    "gan_train_steps",
    "gen_base",
    "label_source",
    "latent_dim",
    "max_train_samples",
    "noise_fraction",
    "oracle_epochs",
    "oracle_threshold",
    "out_dir",
    "plr_iters",
    "pretrain_lr_gan",
    "pretrain_lr_source",
    "seed",
    "source",
    "source_epochs",
    "target",
];

const UNHASHED: &[&str] = &["data_root", "out_dir"];

impl ExperimentConfig {
    /// Defaults for a source/target pair; channels follow the target's native format.
    pub fn new(source: DatasetId, target: DatasetId) -> Self {
        Self {
            source,
            target,
            channels: target.native_channels(),
            classes: 10,
            gan_objective: GanObjective::CrossEntropy,
            latent_dim: 100,
            eta: 1e-5,
            delta: 5e-5,
            pretrain_lr_source: 3e-4,
            pretrain_lr_gan: 1e-5,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 64,
            eval_batch_size: 256,
            budgets: Budgets {
                source_epochs: 2,
                cgan_iters: 10_000,
                plr_iters: 10_000,
                eval_every: 500,
            },
            arch: ArchSpec::default(),
            oracle_epochs: 3,
            oracle_threshold: 0.99,
            gan_train_steps: 0,
            gan_test_samples: 0,
            max_train_samples: 0,
            label_source: LabelSource::Pseudo,
            noise_fraction: None,
            seed: 0,
            data_root: PathBuf::from("data"),
            out_dir: PathBuf::from("runs"),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Applies the `PLR_DATA_ROOT` override when set.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV) {
            if !root.is_empty() {
                self.data_root = PathBuf::from(root);
            }
        }
        self
    }

    fn entries(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("source", self.source.to_string());
        m.insert("target", self.target.to_string());
        m.insert("channels", self.channels.to_string());
        m.insert("classes", self.classes.to_string());
        m.insert("gan_objective", self.gan_objective.to_string());
        m.insert("latent_dim", self.latent_dim.to_string());
        m.insert("eta", self.eta.to_string());
        m.insert("delta", self.delta.to_string());
        m.insert("pretrain_lr_source", self.pretrain_lr_source.to_string());
        m.insert("pretrain_lr_gan", self.pretrain_lr_gan.to_string());
        m.insert("adam_beta1", self.adam_beta1.to_string());
        m.insert("adam_beta2", self.adam_beta2.to_string());
        m.insert("batch_size", self.batch_size.to_string());
        m.insert("eval_batch_size", self.eval_batch_size.to_string());
        m.insert("source_epochs", self.budgets.source_epochs.to_string());
        m.insert("cgan_iters", self.budgets.cgan_iters.to_string());
        m.insert("plr_iters", self.budgets.plr_iters.to_string());
        m.insert("eval_every", self.budgets.eval_every.to_string());
        m.insert("clf_conv1", self.arch.clf_conv1.to_string());
        m.insert("clf_conv2", self.arch.clf_conv2.to_string());
        m.insert("clf_fc", self.arch.clf_fc.to_string());
        m.insert("gen_base", self.arch.gen_base.to_string());
        m.insert("disc_base", self.arch.disc_base.to_string());
        m.insert("oracle_epochs", self.oracle_epochs.to_string());
        m.insert("oracle_threshold", self.oracle_threshold.to_string());
        m.insert("gan_train_steps", self.gan_train_steps.to_string());
        m.insert("gan_test_samples", self.gan_test_samples.to_string());
        m.insert("max_train_samples", self.max_train_samples.to_string());
        m.insert("label_source", self.label_source.to_string());
        m.insert(
            "noise_fraction",
            self.noise_fraction.map_or_else(|| "auto".to_string(), |n| n.to_string()),
        );
        m.insert("seed", self.seed.to_string());
        m.insert("data_root", self.data_root.display().to_string());
        m.insert("out_dir", self.out_dir.display().to_string());
        m
    }

    /// All keys, sorted, one `key=value` per line.
    pub fn canonical(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn config_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (k, v) in self.entries() {
            if !UNHASHED.contains(&k) {
                hasher.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("eta", self.eta),
            ("delta", self.delta),
            ("pretrain_lr_source", self.pretrain_lr_source),
            ("pretrain_lr_gan", self.pretrain_lr_gan),
        ];
        for (k, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{k} must be a positive rate, got {v}")));
            }
        }
        for (k, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(format!("{k} must lie in [0, 1), got {v}")));
            }
        }
        let positive = [
            ("source_epochs", self.budgets.source_epochs),
            ("cgan_iters", self.budgets.cgan_iters),
            ("plr_iters", self.budgets.plr_iters),
            ("eval_every", self.budgets.eval_every),
            ("batch_size", self.batch_size),
            ("eval_batch_size", self.eval_batch_size),
            ("latent_dim", self.latent_dim),
            ("oracle_epochs", self.oracle_epochs),
            ("clf_conv1", self.arch.clf_conv1),
            ("clf_conv2", self.arch.clf_conv2),
            ("clf_fc", self.arch.clf_fc),
            ("disc_base", self.arch.disc_base),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{k} must be positive")));
            }
        }
        if self.arch.gen_base < 4 || self.arch.gen_base % 4 != 0 {
            return Err(Error::invalid("gen_base must be a positive multiple of 4"));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::invalid(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if self.classes < 2 {
            return Err(Error::invalid("classes must be at least 2"));
        }
        if let Some(n) = self.noise_fraction {
            if !(0.0..=1.0).contains(&n) {
                return Err(Error::invalid(format!("noise_fraction must lie in [0, 1], got {n}")));
            }
        }
        if !(0.0..=1.0).contains(&self.oracle_threshold) {
            return Err(Error::invalid("oracle_threshold must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format("config", format!("bad value {value:?} for key {key}")))
}

impl FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::format("config", format!("line {}: expected key=value", lineno + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::format(
                    "config",
                    format!("line {}: unknown key {k:?}", lineno + 1),
                ));
            }
            if pairs.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::format(
                    "config",
                    format!("line {}: duplicate key {k:?}", lineno + 1),
                ));
            }
        }
        let source: DatasetId = pairs
            .get("source")
            .ok_or_else(|| Error::format("config", "missing required key source"))?
            .parse()?;
        let target: DatasetId = pairs
            .get("target")
            .ok_or_else(|| Error::format("config", "missing required key target"))?
            .parse()?;
        let mut cfg = ExperimentConfig::new(source, target);
        for (k, v) in &pairs {
            let v = v.as_str();
            match k.as_str() {
                "source" | "target" => {}
                "channels" => cfg.channels = parse_value(k, v)?,
                "classes" => cfg.classes = parse_value(k, v)?,
                "gan_objective" => cfg.gan_objective = v.parse()?,
                "latent_dim" => cfg.latent_dim = parse_value(k, v)?,
                "eta" => cfg.eta = parse_value(k, v)?,
                "delta" => cfg.delta = parse_value(k, v)?,
                "pretrain_lr_source" => cfg.pretrain_lr_source = parse_value(k, v)?,
                "pretrain_lr_gan" => cfg.pretrain_lr_gan = parse_value(k, v)?,
                "adam_beta1" => cfg.adam_beta1 = parse_value(k, v)?,
                "adam_beta2" => cfg.adam_beta2 = parse_value(k, v)?,
                "batch_size" => cfg.batch_size = parse_value(k, v)?,
                "eval_batch_size" => cfg.eval_batch_size = parse_value(k, v)?,
                "source_epochs" => cfg.budgets.source_epochs = parse_value(k, v)?,
                "cgan_iters" => cfg.budgets.cgan_iters = parse_value(k, v)?,
                "plr_iters" => cfg.budgets.plr_iters = parse_value(k, v)?,
                "eval_every" => cfg.budgets.eval_every = parse_value(k, v)?,
                "clf_conv1" => cfg.arch.clf_conv1 = parse_value(k, v)?,
                "clf_conv2" => cfg.arch.clf_conv2 = parse_value(k, v)?,
                "clf_fc" => cfg.arch.clf_fc = parse_value(k, v)?,
                "gen_base" => cfg.arch.gen_base = parse_value(k, v)?,
                "disc_base" => cfg.arch.disc_base = parse_value(k, v)?,
                "oracle_epochs" => cfg.oracle_epochs = parse_value(k, v)?,
                "oracle_threshold" => cfg.oracle_threshold = parse_value(k, v)?,
                "gan_train_steps" => cfg.gan_train_steps = parse_value(k, v)?,
                "gan_test_samples" => cfg.gan_test_samples = parse_value(k, v)?,
                "max_train_samples" => cfg.max_train_samples = parse_value(k, v)?,
                "label_source" => cfg.label_source = v.parse()?,
                "noise_fraction" => {
                    cfg.noise_fraction = if v == "auto" { None } else { Some(parse_value(k, v)?) }
                }
                "seed" => cfg.seed = parse_value(k, v)?,
                "data_root" => cfg.data_root = PathBuf::from(v),
                "out_dir" => cfg.out_dir = PathBuf::from(v),
                _ => unreachable!("key list checked above"),
            }
        }
        cfg.validate()
            .map_err(|e| Error::format("config", e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_target_channels() {
        let cfg = ExperimentConfig::new(DatasetId::Mnist, DatasetId::Svhn);
        assert_eq!(cfg.channels, 3);
        let cfg = ExperimentConfig::new(DatasetId::Usps, DatasetId::Mnist);
        assert_eq!(cfg.channels, 1);
        assert_eq!(cfg.eta, 1e-5);
        assert_eq!(cfg.delta, 5e-5);
        assert_eq!(cfg.pretrain_lr_source, 3e-4);
        assert_eq!(cfg.pretrain_lr_gan, 1e-5);
        cfg.validate().unwrap();
    }

    #[test]
    fn parse_and_canonical_round_trip() {
        let text = "# usps to mnist\nsource = usps\ntarget=mnist\n\ngan_objective=hinge\nseed=3 # trailing\n";
        let cfg: ExperimentConfig = text.parse().unwrap();
        assert_eq!(cfg.gan_objective, GanObjective::Hinge);
        assert_eq!(cfg.seed, 3);
        let again: ExperimentConfig = cfg.canonical().parse().unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.config_hash(), cfg.config_hash());
        let canonical = cfg.canonical();
        let keys: Vec<&str> = canonical.lines().map(|l| l.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(keys.len(), KEYS.len());
    }

    #[test]
    fn hash_ignores_locations_but_not_parameters() {
        let a = ExperimentConfig::new(DatasetId::Usps, DatasetId::Mnist);
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        b.data_root = PathBuf::from("/data");
        assert_eq!(a.config_hash(), b.config_hash());
        assert_ne!(a.config_hash(), a.with_seed(1).config_hash());
        assert_eq!(a.config_hash().len(), 16);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!("target=mnist".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=mnist\nfoo=1".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=mnist\neta=0".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=mnist\neta=-1e-5".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=mnist\nplr_iters=0".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=mnist\nchannels=2".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=mnist\nseed=1\nseed=2".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=cifar".parse::<ExperimentConfig>().is_err());
        assert!("source=usps\ntarget=mnist\ngan_objective=wgan".parse::<ExperimentConfig>().is_err());
        assert!("source usps".parse::<ExperimentConfig>().is_err());
    }

    #[test]
    fn noise_settings() {
        let cfg: ExperimentConfig = "source=mnist\ntarget=mnist\nlabel_source=uniform\nnoise_fraction=0.3\n"
            .parse()
            .unwrap();
        assert_eq!(cfg.label_source, LabelSource::Uniform);
        assert_eq!(cfg.noise_fraction, Some(0.3));
        let again: ExperimentConfig = cfg.canonical().parse().unwrap();
        assert_eq!(again, cfg);
        let auto = ExperimentConfig::new(DatasetId::Mnist, DatasetId::Usps);
        assert!(auto.canonical().contains("noise_fraction=auto\n"));
        assert!("source=mnist\ntarget=mnist\nnoise_fraction=1.5\n".parse::<ExperimentConfig>().is_err());
        assert!("source=mnist\ntarget=mnist\nlabel_source=clean\n".parse::<ExperimentConfig>().is_err());
    }
}
