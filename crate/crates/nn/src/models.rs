//! Classifier, conditional generator and conditional discriminator.
//!
//! Each network owns its `VarStore`. Weights are initialized from libtorch's
//! generator after `tch::manual_seed(seed)`, so two builds with the same seed
//! are identical.

use plr_core::config::ArchSpec;
use plr_core::formats::{Checkpoint, Manifest, Role, TensorRecord};
use tch::nn;
use tch::{Device, Kind, Tensor};

use crate::data::SIDE;
use crate::error::{Error, Result};
use crate::rng;

/// Anything that maps `B×C×32×32` images to row-stochastic class scores.
pub trait Predictor {
    fn classes(&self) -> usize;
    fn channels(&self) -> usize;
    /// Class probabilities in inference mode, without gradient tracking.
    fn probabilities(&self, images: &Tensor) -> Tensor;
}

/// Anything that maps latent codes and class codes to images in `[-1, 1]`.
pub trait ConditionalSampler {
    fn classes(&self) -> usize;
    fn channels(&self) -> usize;
    fn latent_dim(&self) -> usize;
    /// Images in inference mode, without gradient tracking.
    fn generate(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor>;
}

/// Argmax predictions in chunks of `batch_size`; ties go to the lowest index.
pub fn predict(model: &dyn Predictor, images: &Tensor, batch_size: usize) -> Vec<usize> {
    let n = images.size()[0];
    let step = batch_size.max(1) as i64;
    let mut out = Vec::with_capacity(n as usize);
    tch::no_grad(|| {
        let mut start = 0;
        while start < n {
            let len = step.min(n - start);
            let probs = model.probabilities(&images.narrow(0, start, len));
            let arg = probs.argmax(1, false);
            out.extend(Vec::<i64>::try_from(arg).expect("argmax is int64").into_iter().map(|v| v as usize));
            start += len;
        }
    });
    out
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} outside [0, {classes})")));
    }
    Ok(rng::labels_tensor(labels).onehot(classes as i64).to_kind(Kind::Float))
}

fn check_channels(channels: usize) -> Result<()> {
    if channels == 1 || channels == 3 {
        Ok(())
    } else {
        Err(Error::invalid(format!("channels must be 1 or 3, got {channels}")))
    }
}

fn export(vs: &nn::VarStore, manifest: Manifest) -> Checkpoint {
    let tensors = vs
        .variables()
        .into_iter()
        .map(|(name, t)| {
            let t = t.detach().to_kind(Kind::Float).contiguous();
            TensorRecord {
                name,
                shape: t.size().iter().map(|&d| d as usize).collect(),
                data: Vec::<f32>::try_from(t.flatten(0, -1)).expect("float tensor"),
            }
        })
        .collect();
    Checkpoint::new(manifest, tensors)
}

fn import(vs: &mut nn::VarStore, ckpt: &Checkpoint) -> Result<()> {
    let vars = vs.variables();
    if vars.len() != ckpt.tensors.len() {
        return Err(Error::invalid(format!(
            "checkpoint holds {} tensors, network has {}",
            ckpt.tensors.len(),
            vars.len()
        )));
    }
    tch::no_grad(|| {
        for (name, mut var) in vars {
            let rec = ckpt
                .tensor(&name)
                .ok_or_else(|| Error::invalid(format!("checkpoint lacks tensor {name}")))?;
            let shape: Vec<i64> = rec.shape.iter().map(|&d| d as i64).collect();
            if shape != var.size() {
                return Err(Error::invalid(format!(
                    "tensor {name} has shape {:?} in checkpoint, {:?} in network",
                    shape,
                    var.size()
                )));
            }
            let src = Tensor::from_slice(&rec.data).view(shape.as_slice()).to_kind(var.kind());
            var.copy_(&src);
        }
        Ok(())
    })
}

fn expect_role(ckpt: &Checkpoint, allowed: &[Role]) -> Result<()> {
    if allowed.contains(&ckpt.manifest.role) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "checkpoint {} has role {}, expected {}",
            ckpt.manifest.id(),
            ckpt.manifest.role.as_str(),
            allowed.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(" or ")
        )))
    }
}

fn arch_from(m: &Manifest) -> Result<ArchSpec> {
    Ok(ArchSpec {
        clf_conv1: m.get_usize("clf_conv1")?,
        clf_conv2: m.get_usize("clf_conv2")?,
        clf_fc: m.get_usize("clf_fc")?,
        gen_base: m.get_usize("gen_base")?,
        disc_base: m.get_usize("disc_base")?,
    })
}

fn with_arch(m: Manifest, a: &ArchSpec) -> Manifest {
    m.with("clf_conv1", a.clf_conv1)
        .with("clf_conv2", a.clf_conv2)
        .with("clf_fc", a.clf_fc)
        .with("gen_base", a.gen_base)
        .with("disc_base", a.disc_base)
}

fn dcgan_init() -> nn::Init {
    nn::Init::Randn { mean: 0.0, stdev: 0.02 }
}

/// conv(5×5) - maxpool - conv(5×5) - maxpool - fc - fc, softmax on top.
#[derive(Debug)]
pub struct Classifier {
    pub vs: nn::VarStore,
    role: Role,
    classes: usize,
    channels: usize,
    arch: ArchSpec,
    conv1: nn::Conv2D,
    conv2: nn::Conv2D,
    fc1: nn::Linear,
    fc2: nn::Linear,
}

impl Classifier {
    pub fn new(classes: usize, channels: usize, arch: &ArchSpec, seed: u64) -> Result<Self> {
        Self::with_role(Role::Classifier, classes, channels, arch, seed)
    }

    pub fn oracle(classes: usize, channels: usize, arch: &ArchSpec, seed: u64) -> Result<Self> {
        Self::with_role(Role::Oracle, classes, channels, arch, seed)
    }

    fn with_role(role: Role, classes: usize, channels: usize, arch: &ArchSpec, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        check_channels(channels)?;
        tch::manual_seed(seed as i64);
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let c1 = arch.clf_conv1 as i64;
        let c2 = arch.clf_conv2 as i64;
        // 32 -> 28 -> 14 -> 10 -> 5 with valid 5×5 convolutions
        let flat = c2 * 5 * 5;
        let conv1 = nn::conv2d(&root / "conv1", channels as i64, c1, 5, Default::default());
        let conv2 = nn::conv2d(&root / "conv2", c1, c2, 5, Default::default());
        let fc1 = nn::linear(&root / "fc1", flat, arch.clf_fc as i64, Default::default());
        let fc2 = nn::linear(&root / "fc2", arch.clf_fc as i64, classes as i64, Default::default());
        Ok(Self {
            vs,
            role,
            classes,
            channels,
            arch: arch.clone(),
            conv1,
            conv2,
            fc1,
            fc2,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    /// Unnormalized class scores.
    pub fn logits(&self, images: &Tensor) -> Tensor {
        images
            .apply(&self.conv1)
            .max_pool2d_default(2)
            .relu()
            .apply(&self.conv2)
            .max_pool2d_default(2)
            .relu()
            .flatten(1, -1)
            .apply(&self.fc1)
            .relu()
            .apply(&self.fc2)
    }

    pub fn to_checkpoint(&self, step: u64, config_hash: &str) -> Checkpoint {
        let m = Manifest::new(self.role, step, config_hash, self.arch.summary())
            .with("classes", self.classes)
            .with("channels", self.channels);
        export(&self.vs, with_arch(m, &self.arch))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_role(ckpt, &[Role::Classifier, Role::Oracle])?;
        let m = &ckpt.manifest;
        let mut clf = Self::with_role(m.role, m.get_usize("classes")?, m.get_usize("channels")?, &arch_from(m)?, 0)?;
        import(&mut clf.vs, ckpt)?;
        Ok(clf)
    }

    /// An independent copy with identical parameters.
    pub fn duplicate(&self) -> Result<Self> {
        Self::from_checkpoint(&self.to_checkpoint(0, ""))
    }
}

impl Predictor for Classifier {
    fn classes(&self) -> usize {
        self.classes
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn probabilities(&self, images: &Tensor) -> Tensor {
        tch::no_grad(|| self.logits(images).softmax(-1, Kind::Float))
    }
}

/// fc to `4×4×gen_base`, then three transposed convolutions doubling the
/// resolution to 32, batch norm and ReLU in between, tanh output.
#[derive(Debug)]
pub struct Generator {
    pub vs: nn::VarStore,
    classes: usize,
    channels: usize,
    latent_dim: usize,
    arch: ArchSpec,
    fc: nn::Linear,
    bn0: nn::BatchNorm,
    up1: nn::ConvTranspose2D,
    bn1: nn::BatchNorm,
    up2: nn::ConvTranspose2D,
    bn2: nn::BatchNorm,
    up3: nn::ConvTranspose2D,
}

fn up_cfg() -> nn::ConvTransposeConfig {
    nn::ConvTransposeConfig {
        stride: 2,
        padding: 1,
        ws_init: dcgan_init(),
        ..Default::default()
    }
}

fn bn_cfg() -> nn::BatchNormConfig {
    nn::BatchNormConfig {
        ws_init: nn::Init::Randn { mean: 1.0, stdev: 0.02 },
        ..Default::default()
    }
}

impl Generator {
    pub fn new(latent_dim: usize, classes: usize, channels: usize, arch: &ArchSpec, seed: u64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::invalid("latent dimension must be at least 1"));
        }
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        check_channels(channels)?;
        if arch.gen_base < 4 {
            return Err(Error::invalid("gen_base must be at least 4"));
        }
        tch::manual_seed(seed as i64);
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let b = arch.gen_base as i64;
        let fc = nn::linear(
            &root / "fc",
            (latent_dim + classes) as i64,
            b * 16,
            nn::LinearConfig {
                ws_init: dcgan_init(),
                ..Default::default()
            },
        );
        let bn0 = nn::batch_norm1d(&root / "bn0", b * 16, bn_cfg());
        let up1 = nn::conv_transpose2d(&root / "up1", b, b / 2, 4, up_cfg());
        let bn1 = nn::batch_norm2d(&root / "bn1", b / 2, bn_cfg());
        let up2 = nn::conv_transpose2d(&root / "up2", b / 2, b / 4, 4, up_cfg());
        let bn2 = nn::batch_norm2d(&root / "bn2", b / 4, bn_cfg());
        let up3 = nn::conv_transpose2d(&root / "up3", b / 4, channels as i64, 4, up_cfg());
        Ok(Self {
            vs,
            classes,
            channels,
            latent_dim,
            arch: arch.clone(),
            fc,
            bn0,
            up1,
            bn1,
            up2,
            bn2,
            up3,
        })
    }

    pub fn forward_t(&self, z: &Tensor, onehot: &Tensor, train: bool) -> Tensor {
        let b = self.arch.gen_base as i64;
        Tensor::cat(&[z, onehot], 1)
            .apply(&self.fc)
            .apply_t(&self.bn0, train)
            .relu()
            .view([-1, b, 4, 4])
            .apply(&self.up1)
            .apply_t(&self.bn1, train)
            .relu()
            .apply(&self.up2)
            .apply_t(&self.bn2, train)
            .relu()
            .apply(&self.up3)
            .tanh()
    }

    pub fn to_checkpoint(&self, step: u64, config_hash: &str) -> Checkpoint {
        let m = Manifest::new(Role::Generator, step, config_hash, self.arch.summary())
            .with("classes", self.classes)
            .with("channels", self.channels)
            .with("latent_dim", self.latent_dim);
        export(&self.vs, with_arch(m, &self.arch))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_role(ckpt, &[Role::Generator])?;
        let m = &ckpt.manifest;
        let mut g = Self::new(
            m.get_usize("latent_dim")?,
            m.get_usize("classes")?,
            m.get_usize("channels")?,
            &arch_from(m)?,
            0,
        )?;
        import(&mut g.vs, ckpt)?;
        Ok(g)
    }
}

impl ConditionalSampler for Generator {
    fn classes(&self) -> usize {
        self.classes
    }

    fn channels(&self) -> usize {
        self.channels
    }

    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn generate(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let size = z.size();
        if size.len() != 2 || size[1] != self.latent_dim as i64 || size[0] != labels.len() as i64 {
            return Err(Error::invalid(format!(
                "latent batch {size:?} does not match {} labels of dimension {}",
                labels.len(),
                self.latent_dim
            )));
        }
        let onehot = one_hot(labels, self.classes)?;
        Ok(tch::no_grad(|| self.forward_t(z, &onehot, false)))
    }
}

/// Label planes concatenated to the image, three strided convolutions with
/// leaky ReLU (batch norm on the last two), then a linear raw score.
#[derive(Debug)]
pub struct Discriminator {
    pub vs: nn::VarStore,
    classes: usize,
    channels: usize,
    arch: ArchSpec,
    conv1: nn::Conv2D,
    conv2: nn::Conv2D,
    bn2: nn::BatchNorm,
    conv3: nn::Conv2D,
    bn3: nn::BatchNorm,
    fc: nn::Linear,
}

fn leaky(x: Tensor) -> Tensor {
    x.maximum(&(&x * 0.2))
}

impl Discriminator {
    pub fn new(classes: usize, channels: usize, arch: &ArchSpec, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::invalid(format!("need at least 2 classes, got {classes}")));
        }
        check_channels(channels)?;
        tch::manual_seed(seed as i64);
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let w = arch.disc_base as i64;
        let cfg = nn::ConvConfig {
            stride: 2,
            padding: 1,
            ws_init: dcgan_init(),
            ..Default::default()
        };
        let conv1 = nn::conv2d(&root / "conv1", (channels + classes) as i64, w, 4, cfg);
        let conv2 = nn::conv2d(&root / "conv2", w, w * 2, 4, cfg);
        let bn2 = nn::batch_norm2d(&root / "bn2", w * 2, bn_cfg());
        let conv3 = nn::conv2d(&root / "conv3", w * 2, w * 4, 4, cfg);
        let bn3 = nn::batch_norm2d(&root / "bn3", w * 4, bn_cfg());
        let fc = nn::linear(
            &root / "fc",
            w * 4 * 16,
            1,
            nn::LinearConfig {
                ws_init: dcgan_init(),
                ..Default::default()
            },
        );
        Ok(Self {
            vs,
            classes,
            channels,
            arch: arch.clone(),
            conv1,
            conv2,
            bn2,
            conv3,
            bn3,
            fc,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Raw `B×1` scores.
    pub fn forward_t(&self, images: &Tensor, onehot: &Tensor, train: bool) -> Tensor {
        let b = images.size()[0];
        let planes = onehot
            .view([b, self.classes as i64, 1, 1])
            .expand([b, self.classes as i64, SIDE, SIDE], false);
        let x = Tensor::cat(&[images, &planes], 1);
        let x = leaky(x.apply(&self.conv1));
        let x = leaky(x.apply(&self.conv2).apply_t(&self.bn2, train));
        let x = leaky(x.apply(&self.conv3).apply_t(&self.bn3, train));
        x.flatten(1, -1).apply(&self.fc)
    }

    /// Raw scores in inference mode for integer labels.
    pub fn scores(&self, images: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let onehot = one_hot(labels, self.classes)?;
        Ok(tch::no_grad(|| self.forward_t(images, &onehot, false)))
    }

    pub fn to_checkpoint(&self, step: u64, config_hash: &str) -> Checkpoint {
        let m = Manifest::new(Role::Discriminator, step, config_hash, self.arch.summary())
            .with("classes", self.classes)
            .with("channels", self.channels);
        export(&self.vs, with_arch(m, &self.arch))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        expect_role(ckpt, &[Role::Discriminator])?;
        let m = &ckpt.manifest;
        let mut d = Self::new(m.get_usize("classes")?, m.get_usize("channels")?, &arch_from(m)?, 0)?;
        import(&mut d.vs, ckpt)?;
        Ok(d)
    }
}
