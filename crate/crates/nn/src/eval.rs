//! Classifier accuracy, GAN-test and GAN-train, each reported with its
//! confusion matrix and asymmetry.

use plr_core::formats::{EvalReport, MetricKind};
use plr_core::noise::build_confusion_matrix;
use tch::Tensor;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::models::{predict, Classifier, ConditionalSampler, Predictor};
use crate::rng::{self, purpose};
use crate::train::{classifier_step, AdamSettings};

pub const MIN_GAN_TEST_SAMPLES: usize = 1000;

/// Accuracy of `model` against the true labels of `data`.
pub fn evaluate_classifier(model: &dyn Predictor, data: &LabeledDataset, batch_size: usize) -> Result<EvalReport> {
    evaluate_labeled(model, data, MetricKind::Classifier, batch_size)
}

fn evaluate_labeled(model: &dyn Predictor, data: &LabeledDataset, kind: MetricKind, batch_size: usize) -> Result<EvalReport> {
    if model.channels() != data.channels() {
        return Err(Error::invalid(format!(
            "model expects {} channels, {} {} has {}",
            model.channels(),
            data.name,
            data.split,
            data.channels()
        )));
    }
    if model.classes() != data.classes {
        return Err(Error::invalid(format!(
            "model has {} classes, data has {}",
            model.classes(),
            data.classes
        )));
    }
    let predicted = predict(model, &data.images, batch_size);
    let matrix = build_confusion_matrix(&data.labels, &predicted, data.classes)?;
    Ok(EvalReport::new(kind, format!("{}-{}", data.name, data.split), matrix))
}

/// Oracle accuracy on generated samples, taking the conditioning codes as truth.
pub fn gan_test(
    oracle: &dyn Predictor,
    generator: &dyn ConditionalSampler,
    n_samples: usize,
    seed: u64,
    batch_size: usize,
) -> Result<EvalReport> {
    if n_samples < MIN_GAN_TEST_SAMPLES {
        return Err(Error::invalid(format!(
            "GAN-test needs at least {MIN_GAN_TEST_SAMPLES} samples, got {n_samples}"
        )));
    }
    if oracle.classes() != generator.classes() {
        return Err(Error::invalid(format!(
            "oracle has {} classes, generator has {}",
            oracle.classes(),
            generator.classes()
        )));
    }
    if oracle.channels() != generator.channels() {
        return Err(Error::invalid("oracle and generator disagree on channels"));
    }
    let classes = generator.classes();
    let mut code_rng = rng::stream(seed, purpose::EVAL);
    let mut latent_rng = rng::stream(seed, purpose::LATENT);
    let codes = rng::uniform_labels(&mut code_rng, n_samples, classes);
    let batch = batch_size.max(1);
    let mut predicted = Vec::with_capacity(n_samples);
    for chunk in codes.chunks(batch) {
        let z = rng::latent(&mut latent_rng, chunk.len(), generator.latent_dim());
        let images = generator.generate(&z, chunk)?;
        predicted.extend(predict(oracle, &images, batch));
    }
    let matrix = build_confusion_matrix(&codes, &predicted, classes)?;
    Ok(EvalReport::new(MetricKind::GanTest, "generated", matrix))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanTrainOptions {
    pub steps: usize,
    pub adam: AdamSettings,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub seed: u64,
}

/// Trains a fresh classifier only on generated samples with uniform codes and
/// measures it on real test data.
pub fn gan_train(
    generator: &dyn ConditionalSampler,
    real_test: &LabeledDataset,
    arch: &plr_core::config::ArchSpec,
    opts: &GanTrainOptions,
) -> Result<EvalReport> {
    if generator.classes() != real_test.classes {
        return Err(Error::invalid(format!(
            "generator has {} classes, test data has {}",
            generator.classes(),
            real_test.classes
        )));
    }
    if generator.channels() != real_test.channels() {
        return Err(Error::invalid("generator and test data disagree on channels"));
    }
    let classes = generator.classes();
    let clf = Classifier::new(classes, generator.channels(), arch, opts.seed)?;
    let mut opt = opts.adam.build(&clf.vs)?;
    let mut code_rng = rng::stream(opts.seed, purpose::CODES);
    let mut latent_rng = rng::stream(opts.seed, purpose::LATENT);
    let mut last_good = clf.to_checkpoint(0, "");
    for step in 1..=opts.steps as u64 {
        let y = rng::uniform_labels(&mut code_rng, opts.batch_size, classes);
        let z = rng::latent(&mut latent_rng, opts.batch_size, generator.latent_dim());
        let x = generator.generate(&z, &y)?;
        let loss = classifier_step(&clf, &mut opt, &x, &y);
        if !loss.is_finite() {
            return Err(Error::Diverged {
                step,
                what: "GAN-train classifier",
                value: loss,
                last_good: vec![last_good],
            });
        }
        if step % 1000 == 0 {
            last_good = clf.to_checkpoint(step, "");
        }
    }
    evaluate_labeled(&clf, real_test, MetricKind::GanTrain, opts.eval_batch_size)
}

/// Generated images of shape `rows·per_row × C × 32 × 32`, row `k` conditioned on class `k`.
pub fn sample_grid(generator: &dyn ConditionalSampler, per_class: usize, seed: u64) -> Result<Tensor> {
    let classes = generator.classes();
    let labels: Vec<usize> = (0..classes).flat_map(|k| std::iter::repeat(k).take(per_class)).collect();
    let z = rng::latent(&mut rng::stream(seed, purpose::LATENT), labels.len(), generator.latent_dim());
    generator.generate(&z, &labels)
}

/// Stand-in models with known behaviour, for testing measurement code.
pub mod fixtures {
    use tch::{Kind, Tensor};

    use crate::data::LabeledDataset;
    use crate::error::{Error, Result};
    use crate::models::{ConditionalSampler, Predictor};

    /// Always predicts one class with certainty.
    #[derive(Debug)]
    pub struct ConstantClassifier {
        pub class: usize,
        pub classes: usize,
        pub channels: usize,
    }

    impl Predictor for ConstantClassifier {
        fn classes(&self) -> usize {
            self.classes
        }

        fn channels(&self) -> usize {
            self.channels
        }

        fn probabilities(&self, images: &Tensor) -> Tensor {
            let b = images.size()[0];
            Tensor::from_slice(&vec![self.class as i64; b as usize])
                .onehot(self.classes as i64)
                .to_kind(Kind::Float)
        }
    }

    /// Replays real images of the requested class, picked by the latent code.
    #[derive(Debug)]
    pub struct ReplayGenerator {
        images: Tensor,
        by_class: Vec<Vec<i64>>,
        channels: usize,
        latent_dim: usize,
    }

    impl ReplayGenerator {
        pub fn new(data: &LabeledDataset, latent_dim: usize) -> Result<Self> {
            let mut by_class = vec![Vec::new(); data.classes];
            for (i, &l) in data.labels.iter().enumerate() {
                by_class[l].push(i as i64);
            }
            if by_class.iter().any(Vec::is_empty) {
                return Err(Error::invalid("replay needs at least one image per class"));
            }
            Ok(Self {
                images: data.images.shallow_clone(),
                by_class,
                channels: data.channels(),
                latent_dim,
            })
        }
    }

    impl ConditionalSampler for ReplayGenerator {
        fn classes(&self) -> usize {
            self.by_class.len()
        }

        fn channels(&self) -> usize {
            self.channels
        }

        fn latent_dim(&self) -> usize {
            self.latent_dim
        }

        fn generate(&self, z: &Tensor, labels: &[usize]) -> Result<Tensor> {
            let first = Vec::<f32>::try_from(z.select(1, 0).contiguous())
                .map_err(|e| Error::invalid(e.to_string()))?;
            let mut idx = Vec::with_capacity(labels.len());
            for (&l, &u) in labels.iter().zip(&first) {
                let pool = self
                    .by_class
                    .get(l)
                    .ok_or_else(|| Error::invalid(format!("label {l} outside [0, {})", self.by_class.len())))?;
                let pick = (u.abs() * 1.0e6) as usize % pool.len();
                idx.push(pool[pick]);
            }
            Ok(self.images.index_select(0, &Tensor::from_slice(&idx)))
        }
    }

    /// Emits the same image whatever the code.
    #[derive(Debug)]
    pub struct ConstantGenerator {
        pub value: f64,
        pub classes: usize,
        pub channels: usize,
        pub latent_dim: usize,
    }

    impl ConditionalSampler for ConstantGenerator {
        fn classes(&self) -> usize {
            self.classes
        }

        fn channels(&self) -> usize {
            self.channels
        }

        fn latent_dim(&self) -> usize {
            self.latent_dim
        }

        fn generate(&self, _z: &Tensor, labels: &[usize]) -> Result<Tensor> {
            let b = labels.len() as i64;
            Ok(Tensor::full(
                [b, self.channels as i64, 32, 32],
                self.value,
                (Kind::Float, tch::Device::Cpu),
            ))
        }
    }
}
