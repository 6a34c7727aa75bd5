//! Source pretraining, oracle training, cGAN pretraining and the alternating
//! refinement loop.

use log::{info, warn};
use plr_core::formats::{Checkpoint, MetricsLog, MetricsRow};
use plr_core::{ExperimentConfig, GanObjective};
use tch::{nn, Tensor};

use crate::data::{LabeledDataset, PseudoLabeledDataset};
use crate::error::{Error, Result};
use crate::eval;
use crate::models::{one_hot, Classifier, ConditionalSampler, Discriminator, Generator, Predictor};
use crate::objectives::{classification_loss_from_logits, discriminator_loss, generator_loss};
use crate::rng::{self, purpose, BatchStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl AdamSettings {
    pub fn new(lr: f64, cfg: &ExperimentConfig) -> Self {
        Self {
            lr,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
        }
    }

    pub fn build(&self, vs: &nn::VarStore) -> Result<nn::Optimizer> {
        use tch::nn::OptimizerConfig;
        if !(self.lr > 0.0) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(nn::adam(self.beta1, self.beta2, 0.0).build(vs, self.lr)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierTraining {
    pub adam: AdamSettings,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

fn finite(step: u64, what: &'static str, value: f64, last_good: impl FnOnce() -> Vec<Checkpoint>) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Diverged {
            step,
            what,
            value,
            last_good: last_good(),
        })
    }
}

/// One Adam step of `clf` on `(images, labels)`; returns the loss before the step.
pub fn classifier_step(clf: &Classifier, opt: &mut nn::Optimizer, images: &Tensor, labels: &[usize]) -> f64 {
    let loss = classification_loss_from_logits(&clf.logits(images), &rng::labels_tensor(labels));
    opt.backward_step(&loss);
    loss.double_value(&[])
}

/// Minibatch training on fixed labels; returns the mean loss of the last epoch.
///
/// On a non-finite loss the error carries the parameters from the start of
/// the failing epoch.
pub fn fit_classifier(clf: &mut Classifier, images: &Tensor, labels: &[usize], opts: &ClassifierTraining) -> Result<f64> {
    let n = labels.len();
    if n == 0 || images.size()[0] != n as i64 {
        return Err(Error::invalid(format!("{} images with {n} labels", images.size()[0])));
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut opt = opts.adam.build(&clf.vs)?;
    let mut batches = BatchStream::new(n, opts.batch_size, opts.seed);
    let per_epoch = (n / opts.batch_size).max(1);
    let mut last_mean = f64::NAN;
    let mut step = 0u64;
    for epoch in 0..opts.epochs {
        let snapshot = clf.to_checkpoint(step, "");
        let mut sum = 0.0;
        for _ in 0..per_epoch {
            let idx = batches.next_batch();
            let x = images.index_select(0, &rng::labels_tensor(&idx));
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let loss = classifier_step(clf, &mut opt, &x, &y);
            step += 1;
            sum += finite(step, "classifier", loss, || vec![snapshot.clone()])?;
        }
        last_mean = sum / per_epoch as f64;
        info!("classifier epoch {} mean loss {:.4}", epoch + 1, last_mean);
    }
    Ok(last_mean)
}

/// Trains a fresh classifier on the labeled source domain.
pub fn pretrain_source(cfg: &ExperimentConfig, data: &LabeledDataset) -> Result<Classifier> {
    let mut clf = Classifier::new(data.classes, data.channels(), &cfg.arch, cfg.seed)?;
    let opts = ClassifierTraining {
        adam: AdamSettings::new(cfg.pretrain_lr_source, cfg),
        batch_size: cfg.batch_size,
        epochs: cfg.budgets.source_epochs,
        seed: cfg.seed,
    };
    fit_classifier(&mut clf, &data.images, &data.labels, &opts)?;
    Ok(clf)
}

#[derive(Debug)]
pub struct Oracle {
    pub model: Classifier,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Trains a classifier on clean labels and requires both accuracies to reach
/// `cfg.oracle_threshold`.
pub fn build_oracle(cfg: &ExperimentConfig, train: &LabeledDataset, test: &LabeledDataset) -> Result<Oracle> {
    let mut model = Classifier::oracle(train.classes, train.channels(), &cfg.arch, cfg.seed)?;
    let opts = ClassifierTraining {
        adam: AdamSettings::new(cfg.pretrain_lr_source, cfg),
        batch_size: cfg.batch_size,
        epochs: cfg.oracle_epochs,
        seed: cfg.seed,
    };
    fit_classifier(&mut model, &train.images, &train.labels, &opts)?;
    let train_accuracy = eval::evaluate_classifier(&model, train, cfg.eval_batch_size)?.accuracy;
    let test_accuracy = eval::evaluate_classifier(&model, test, cfg.eval_batch_size)?.accuracy;
    info!("oracle accuracy train {train_accuracy:.4} test {test_accuracy:.4}");
    if train_accuracy < cfg.oracle_threshold || test_accuracy < cfg.oracle_threshold {
        return Err(Error::OracleBelowThreshold {
            train: train_accuracy,
            test: test_accuracy,
            threshold: cfg.oracle_threshold,
        });
    }
    Ok(Oracle {
        model,
        train_accuracy,
        test_accuracy,
    })
}

/// Which network an update touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Update {
    Classifier,
    Discriminator,
    Generator,
}

/// One discriminator step followed by one generator step on the same codes.
#[allow(clippy::too_many_arguments)]
fn gan_step(
    g: &Generator,
    d: &Discriminator,
    opt_g: &mut nn::Optimizer,
    opt_d: &mut nn::Optimizer,
    kind: GanObjective,
    real: &Tensor,
    labels: &[usize],
    z: &Tensor,
    mut after: impl FnMut(Update),
) -> Result<(f64, f64)> {
    let onehot = one_hot(labels, d.classes())?;
    let fake = g.forward_t(z, &onehot, true);
    let d_loss = discriminator_loss(
        kind,
        &d.forward_t(real, &onehot, true),
        &d.forward_t(&fake.detach(), &onehot, true),
    );
    opt_d.backward_step(&d_loss);
    after(Update::Discriminator);
    let g_loss = generator_loss(kind, &d.forward_t(&fake, &onehot, true));
    opt_g.backward_step(&g_loss);
    after(Update::Generator);
    Ok((d_loss.double_value(&[]), g_loss.double_value(&[])))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CganTraining {
    pub iterations: usize,
    pub adam: AdamSettings,
    pub batch_size: usize,
    pub objective: GanObjective,
    pub seed: u64,
}

impl CganTraining {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            iterations: cfg.budgets.cgan_iters,
            adam: AdamSettings::new(cfg.pretrain_lr_gan, cfg),
            batch_size: cfg.batch_size,
            objective: cfg.gan_objective,
            seed: cfg.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CganSummary {
    /// Mean losses over the final tenth of training.
    pub d_loss: f64,
    pub g_loss: f64,
    /// Classes the oracle recognizes in generated samples, when an oracle was given.
    pub recognized_classes: Option<usize>,
}

/// A share below which an oracle class is not counted as produced.
const COLLAPSE_SHARE: f64 = 0.02;
const COLLAPSE_SAMPLES: usize = 1000;

/// Alternating D/G training on frozen pseudo-labels.
///
/// With an oracle, the generated samples are checked afterwards; fewer than
/// three recognized classes (for ten or more classes) logs a mode-collapse
/// warning.
pub fn pretrain_cgan(
    g: &mut Generator,
    d: &mut Discriminator,
    data: &PseudoLabeledDataset,
    opts: &CganTraining,
    oracle: Option<&dyn Predictor>,
) -> Result<CganSummary> {
    if data.is_empty() {
        return Err(Error::invalid("cGAN pretraining needs target samples"));
    }
    if g.classes() != data.classes || d.classes() != data.classes {
        return Err(Error::invalid("generator, discriminator and data disagree on the class count"));
    }
    let mut opt_g = opts.adam.build(&g.vs)?;
    let mut opt_d = opts.adam.build(&d.vs)?;
    let mut latent_rng = rng::stream(opts.seed, purpose::LATENT);
    let mut batches = BatchStream::new(data.len(), opts.batch_size, opts.seed);
    let tail = (opts.iterations / 10).max(1);
    let (mut d_sum, mut g_sum, mut counted) = (0.0, 0.0, 0usize);
    let mut snapshot = vec![g.to_checkpoint(0, ""), d.to_checkpoint(0, "")];
    for it in 0..opts.iterations {
        let step = it as u64 + 1;
        let idx = batches.next_batch();
        let (x, y) = data.batch(&idx);
        let z = rng::latent(&mut latent_rng, idx.len(), g.latent_dim());
        let (dl, gl) = gan_step(g, d, &mut opt_g, &mut opt_d, opts.objective, &x, &y, &z, |_| {})?;
        finite(step, "discriminator", dl, || snapshot.clone())?;
        finite(step, "generator", gl, || snapshot.clone())?;
        if opts.iterations - it <= tail {
            d_sum += dl;
            g_sum += gl;
            counted += 1;
        }
        if step % 1000 == 0 {
            info!("cgan iteration {step} loss_D {dl:.4} loss_G {gl:.4}");
            snapshot = vec![g.to_checkpoint(step, ""), d.to_checkpoint(step, "")];
        }
    }
    let recognized_classes = match oracle {
        Some(o) => {
            let report = eval::gan_test(o, g, COLLAPSE_SAMPLES, opts.seed, 256)?;
            let recognized = recognized_classes(&report.matrix);
            if data.classes >= 10 && recognized < 3 {
                warn!("possible mode collapse: oracle recognizes only {recognized} classes in generated samples");
            }
            Some(recognized)
        }
        None => None,
    };
    Ok(CganSummary {
        d_loss: d_sum / counted.max(1) as f64,
        g_loss: g_sum / counted.max(1) as f64,
        recognized_classes,
    })
}

/// Number of predicted classes holding at least a small share of all samples.
pub fn recognized_classes(matrix: &plr_core::ConfusionMatrix) -> usize {
    let c = matrix.classes();
    let total = matrix.total() as f64;
    (0..c)
        .filter(|&p| {
            let col: u64 = (0..c).map(|t| matrix.get(t, p)).sum();
            col as f64 >= COLLAPSE_SHARE * total
        })
        .count()
}

/// The three networks and step sizes of the refinement loop.
#[derive(Debug)]
pub struct TrainState {
    pub classifier: Classifier,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub step: u64,
    pub eta: f64,
    pub delta: f64,
    pub rng_seed: u64,
}

impl TrainState {
    pub fn new(
        classifier: Classifier,
        generator: Generator,
        discriminator: Discriminator,
        eta: f64,
        delta: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        if !(eta > 0.0) || !(delta > 0.0) {
            return Err(Error::invalid(format!("step sizes must be positive, got eta={eta} delta={delta}")));
        }
        let c = classifier.classes();
        if generator.classes() != c || discriminator.classes() != c {
            return Err(Error::invalid("networks disagree on the class count"));
        }
        if generator.channels() != classifier.channels() {
            return Err(Error::invalid("generator and classifier disagree on channels"));
        }
        Ok(Self {
            classifier,
            generator,
            discriminator,
            step: 0,
            eta,
            delta,
            rng_seed,
        })
    }

    pub fn snapshot(&self, config_hash: &str) -> Vec<Checkpoint> {
        vec![
            self.classifier.to_checkpoint(self.step, config_hash),
            self.generator.to_checkpoint(self.step, config_hash),
            self.discriminator.to_checkpoint(self.step, config_hash),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlrOptions {
    pub iterations: usize,
    pub eval_every: usize,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub objective: GanObjective,
    pub beta1: f64,
    pub beta2: f64,
    pub config_hash: String,
}

impl PlrOptions {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            iterations: cfg.budgets.plr_iters,
            eval_every: cfg.budgets.eval_every,
            batch_size: cfg.batch_size,
            eval_batch_size: cfg.eval_batch_size,
            objective: cfg.gan_objective,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            config_hash: cfg.config_hash(),
        }
    }
}

/// Observers of the refinement loop.
pub trait PlrHooks {
    fn on_update(&mut self, _step: u64, _net: Update) {}
    /// Class codes drawn for the classifier step.
    fn on_class_codes(&mut self, _codes: &[usize]) {}
    /// Called after each metrics row, with the state the row describes.
    fn on_eval(&mut self, _row: &MetricsRow, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

pub struct NoHooks;

impl PlrHooks for NoHooks {}

/// The refinement loop. Each iteration takes one classifier step on generated
/// samples with uniform class codes, then relabels a real target batch with
/// the live classifier and takes one discriminator and one generator step.
///
/// Only target data enters: `target` supplies the unlabeled images (its
/// stored pseudo-labels are not used) and `target_test` the held-out
/// measurement split.
pub fn plr_train(
    state: &mut TrainState,
    target: &PseudoLabeledDataset,
    target_test: &LabeledDataset,
    opts: &PlrOptions,
    hooks: &mut dyn PlrHooks,
) -> Result<MetricsLog> {
    if opts.eval_every == 0 {
        return Err(Error::invalid("eval_every must be positive"));
    }
    if target.is_empty() || opts.batch_size == 0 {
        return Err(Error::invalid("refinement needs target samples and a positive batch size"));
    }
    if target.classes != state.classifier.classes() || target_test.classes != target.classes {
        return Err(Error::invalid("target data and networks disagree on the class count"));
    }
    let classes = state.classifier.classes();
    let latent_dim = state.generator.latent_dim();
    let mut opt_c = AdamSettings {
        lr: state.eta,
        beta1: opts.beta1,
        beta2: opts.beta2,
    }
    .build(&state.classifier.vs)?;
    let gan_adam = AdamSettings {
        lr: state.delta,
        beta1: opts.beta1,
        beta2: opts.beta2,
    };
    let mut opt_g = gan_adam.build(&state.generator.vs)?;
    let mut opt_d = gan_adam.build(&state.discriminator.vs)?;

    let seed = state.rng_seed ^ state.step;
    let mut latent_rng = rng::stream(seed, purpose::LATENT);
    let mut code_rng = rng::stream(seed, purpose::CODES);
    let mut batches = BatchStream::new(target.len(), opts.batch_size, seed);

    let mut log = MetricsLog::default();
    let mut last_good = state.snapshot(&opts.config_hash);
    let nan = f64::NAN;
    record(state, target_test, opts, (nan, nan, nan), &mut log, hooks)?;
    let (mut sum_c, mut sum_d, mut sum_g, mut since) = (0.0, 0.0, 0.0, 0usize);

    for it in 1..=opts.iterations {
        let step = state.step + 1;

        // classifier step on generated samples with uniform codes
        let z = rng::latent(&mut latent_rng, opts.batch_size, latent_dim);
        let y = rng::uniform_labels(&mut code_rng, opts.batch_size, classes);
        hooks.on_class_codes(&y);
        let fake = state.generator.generate(&z, &y)?;
        let lc = classifier_step(&state.classifier, &mut opt_c, &fake, &y);
        hooks.on_update(step, Update::Classifier);
        finite(step, "classifier", lc, || last_good.clone())?;

        // cGAN step on target images labeled by the current classifier
        let idx = batches.next_batch();
        let (x, _) = target.batch(&idx);
        let relabeled = crate::models::predict(&state.classifier, &x, x.size()[0] as usize);
        let z = rng::latent(&mut latent_rng, idx.len(), latent_dim);
        let (ld, lg) = gan_step(
            &state.generator,
            &state.discriminator,
            &mut opt_g,
            &mut opt_d,
            opts.objective,
            &x,
            &relabeled,
            &z,
            |net| hooks.on_update(step, net),
        )?;
        finite(step, "discriminator", ld, || last_good.clone())?;
        finite(step, "generator", lg, || last_good.clone())?;

        state.step = step;
        sum_c += lc;
        sum_d += ld;
        sum_g += lg;
        since += 1;
        if it % opts.eval_every == 0 {
            let n = since as f64;
            let row = record(state, target_test, opts, (sum_c / n, sum_d / n, sum_g / n), &mut log, hooks)?;
            info!(
                "refinement step {} target accuracy {:.4} delta_A {:.4}",
                row.step, row.test_acc, row.delta_a
            );
            last_good = state.snapshot(&opts.config_hash);
            (sum_c, sum_d, sum_g, since) = (0.0, 0.0, 0.0, 0);
        }
    }
    Ok(log)
}

fn record(
    state: &TrainState,
    test: &LabeledDataset,
    opts: &PlrOptions,
    (loss_c, loss_d, loss_g): (f64, f64, f64),
    log: &mut MetricsLog,
    hooks: &mut dyn PlrHooks,
) -> Result<MetricsRow> {
    let report = eval::evaluate_classifier(&state.classifier, test, opts.eval_batch_size)?;
    let row = MetricsRow {
        step: state.step,
        test_acc: report.accuracy,
        delta_a: report.delta_a,
        loss_c,
        loss_d,
        loss_g,
    };
    log.push(row);
    hooks.on_eval(&row, state)?;
    Ok(row)
}
