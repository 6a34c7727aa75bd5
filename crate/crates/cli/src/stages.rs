//! One function per stage, all operating on a single seeded configuration.

use std::cell::RefCell;
use std::collections::HashMap;
use std::path::PathBuf;
use std::rc::Rc;
use std::time::{Instant, SystemTime};

use log::info;
use plr_core::config::DatasetId;
use plr_core::formats::{Checkpoint, EvalReport, MetricKind, MetricsLog, MetricsRow, PseudoLabelFile, Role};
use plr_core::noise::{build_confusion_matrix, inject_uniform_noise, uniform_noise_equivalent, NoiseSpec};
use plr_core::{ExperimentConfig, LabelSource};
use plr_nn::data::{assign_pseudo_labels, load_dataset, LabeledDataset, PseudoLabeledDataset, Split};
use plr_nn::eval::{evaluate_classifier, gan_test, gan_train, sample_grid, GanTrainOptions};
use plr_nn::models::{Classifier, Discriminator, Generator};
use plr_nn::train::{
    build_oracle, fit_classifier, plr_train, pretrain_cgan, pretrain_source, AdamSettings, CganTraining,
    ClassifierTraining, PlrHooks, PlrOptions, TrainState,
};

use crate::error::{CliError, Result};
use crate::grid;
use crate::run::RunDir;
use crate::stage::Stage;

pub const PSEUDO_LABELS: &str = "target_train.labels";
pub const NOISY_LABELS: &str = "target_train.labels";
pub const METRICS: &str = "metrics.csv";
pub const REPORT: &str = "report.txt";
pub const SUMMARY: &str = "summary.txt";
pub const GRID_COLUMNS: usize = 20;

/// Headline numbers of a stage, for printing and for aggregation across seeds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageOutput {
    pub artifacts: Vec<PathBuf>,
    pub metrics: Vec<(&'static str, f64)>,
}

impl StageOutput {
    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| *k == key).map(|&(_, v)| v)
    }
}

/// One seeded configuration with its run directory and loaded datasets.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub run: RunDir,
    cache: RefCell<HashMap<(DatasetId, Split), Rc<LabeledDataset>>>,
}

/// Seeds for the independently initialized networks of one run.
fn model_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_mul(16).wrapping_add(k)
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let run = RunDir::open(&cfg)?;
        Ok(Self {
            cfg,
            run,
            cache: RefCell::new(HashMap::new()),
        })
    }

    /// A preprocessed split; training splits are capped at `max_train_samples`.
    pub fn dataset(&self, id: DatasetId, split: Split) -> Result<Rc<LabeledDataset>> {
        if let Some(d) = self.cache.borrow().get(&(id, split)) {
            return Ok(Rc::clone(d));
        }
        let mut data = load_dataset(&self.cfg.data_root, id, split, self.cfg.channels)?;
        if data.classes != self.cfg.classes {
            data.classes = self.cfg.classes;
        }
        if split == Split::Train && self.cfg.max_train_samples > 0 && data.len() > self.cfg.max_train_samples {
            data = data.head(self.cfg.max_train_samples);
        }
        let data = Rc::new(data);
        self.cache.borrow_mut().insert((id, split), Rc::clone(&data));
        Ok(data)
    }

    fn hash(&self) -> &str {
        &self.run.hash
    }

    /// Runs one stage and records it in the run manifest.
    pub fn run_stage(&self, stage: Stage) -> Result<StageOutput> {
        let started = SystemTime::now();
        let clock = Instant::now();
        info!("[{}] {} (seed {})", self.hash(), stage, self.cfg.seed);
        let out = match stage {
            Stage::PretrainSource => self.pretrain_source(),
            Stage::InferPseudolabels => self.infer_pseudolabels(),
            Stage::AnalyzeNoise => self.analyze_noise(),
            Stage::InjectNoise => self.inject_noise(),
            Stage::FitLabels => self.fit_labels(),
            Stage::TrainOracle => self.train_oracle(),
            Stage::PretrainCgan => self.pretrain_cgan(),
            Stage::PlrTrain => self.plr_train(),
            Stage::Evaluate => self.evaluate(),
            Stage::GanTest => self.gan_test(),
            Stage::GanTrain => self.gan_train(),
            Stage::Samples => self.samples(),
            Stage::Plot => self.plot(),
            Stage::Pipeline => self.pipeline(),
        }?;
        if stage != Stage::Pipeline {
            self.run.record(stage, started, clock.elapsed(), &out.artifacts)?;
        }
        Ok(out)
    }

    fn pipeline(&self) -> Result<StageOutput> {
        let mut last = StageOutput::default();
        let mut artifacts = Vec::new();
        for stage in Stage::PIPELINE {
            last = self.run_stage(stage)?;
            artifacts.extend(last.artifacts.iter().cloned());
        }
        Ok(StageOutput {
            artifacts,
            metrics: last.metrics,
        })
    }

    fn classifier_training(&self, epochs: usize, seed: u64) -> ClassifierTraining {
        ClassifierTraining {
            adam: AdamSettings::new(self.cfg.pretrain_lr_source, &self.cfg),
            batch_size: self.cfg.batch_size,
            epochs,
            seed,
        }
    }

    fn pretrain_source(&self) -> Result<StageOutput> {
        self.run.reset(Stage::PretrainSource)?;
        let train = self.dataset(self.cfg.source, Split::Train)?;
        let test = self.dataset(self.cfg.source, Split::Test)?;
        let clf = pretrain_source(&self.cfg, &train)?;
        let steps = (self.cfg.budgets.source_epochs * (train.len() / self.cfg.batch_size).max(1)) as u64;
        let ckpt = self
            .run
            .save_checkpoint(Stage::PretrainSource, &clf.to_checkpoint(steps, self.hash()))?;
        let report = evaluate_classifier(&clf, &test, self.cfg.eval_batch_size)?;
        let path = self.run.save_report(Stage::PretrainSource, "source_test.txt", &report)?;
        Ok(StageOutput {
            artifacts: vec![ckpt, path],
            metrics: vec![("source_test_acc", report.accuracy)],
        })
    }

    fn source_classifier(&self) -> Result<(Classifier, Checkpoint)> {
        let ckpt = self.run.load_checkpoint(Stage::PretrainSource, Role::Classifier)?;
        Ok((Classifier::from_checkpoint(&ckpt)?, ckpt))
    }

    fn infer_pseudolabels(&self) -> Result<StageOutput> {
        self.run.reset(Stage::InferPseudolabels)?;
        let (clf, ckpt) = self.source_classifier()?;
        let target = self.dataset(self.cfg.target, Split::Train)?;
        let pseudo = assign_pseudo_labels(&clf, &target, ckpt.manifest.id(), self.cfg.eval_batch_size)?;
        let path = self.run.save_labels(Stage::InferPseudolabels, PSEUDO_LABELS, &pseudo.sidecar())?;
        Ok(StageOutput {
            artifacts: vec![path],
            metrics: vec![("n_labels", pseudo.len() as f64)],
        })
    }

    fn label_report(&self, file: &PseudoLabelFile, split: &str) -> Result<EvalReport> {
        let target = self.dataset(self.cfg.target, Split::Train)?;
        if file.labels.len() != target.len() {
            return Err(plr_nn::Error::invalid(format!(
                "{} labels for {} target images",
                file.labels.len(),
                target.len()
            ))
            .into());
        }
        let matrix = build_confusion_matrix(&target.labels, &file.labels, self.cfg.classes)?;
        Ok(EvalReport::new(MetricKind::Classifier, split, matrix))
    }

    fn analyze_noise(&self) -> Result<StageOutput> {
        self.run.reset(Stage::AnalyzeNoise)?;
        let labels = self.run.load_labels(Stage::InferPseudolabels, PSEUDO_LABELS)?;
        let report = self.label_report(&labels, &format!("{}-train-pseudolabels", self.cfg.target))?;
        let n = uniform_noise_equivalent(report.accuracy.max(1.0 / self.cfg.classes as f64), self.cfg.classes)?;
        let path = self.run.save_report(Stage::AnalyzeNoise, REPORT, &report)?;
        let eq = self.run.write_text(
            Stage::AnalyzeNoise,
            "uniform_equivalent.txt",
            &format!("accuracy={:.4}\nnoise_fraction={:.4}\n", report.accuracy, n),
        )?;
        Ok(StageOutput {
            artifacts: vec![path, eq],
            metrics: vec![
                ("accuracy", report.accuracy),
                ("delta_A", report.delta_a),
                ("uniform_noise_equivalent", n),
            ],
        })
    }

    fn noise_fraction(&self) -> Result<f64> {
        match self.cfg.noise_fraction {
            Some(n) => Ok(n),
            None => {
                let report = self.run.load_report(Stage::AnalyzeNoise, REPORT)?;
                let a = report.accuracy.max(1.0 / self.cfg.classes as f64);
                Ok(uniform_noise_equivalent(a, self.cfg.classes)?)
            }
        }
    }

    fn inject_noise(&self) -> Result<StageOutput> {
        self.run.reset(Stage::InjectNoise)?;
        let n = self.noise_fraction()?;
        let target = self.dataset(self.cfg.target, Split::Train)?;
        let spec = NoiseSpec::new(n, self.cfg.classes, model_seed(self.cfg.seed, 5))?;
        let noisy = inject_uniform_noise(&target.labels, &spec)?;
        let file = PseudoLabelFile {
            provenance: format!("uniform-n{:.4}@{}", n, self.hash()),
            labels: noisy,
        };
        let labels = self.run.save_labels(Stage::InjectNoise, NOISY_LABELS, &file)?;
        let report = self.label_report(&file, &format!("{}-train-uniform", self.cfg.target))?;
        let path = self.run.save_report(Stage::InjectNoise, REPORT, &report)?;
        Ok(StageOutput {
            artifacts: vec![labels, path],
            metrics: vec![
                ("noise_fraction", n),
                ("accuracy", report.accuracy),
                ("delta_A", report.delta_a),
            ],
        })
    }

    /// Target training images with the labels selected by `label_source`.
    fn noisy_target(&self) -> Result<PseudoLabeledDataset> {
        let file = match self.cfg.label_source {
            LabelSource::Pseudo => self.run.load_labels(Stage::InferPseudolabels, PSEUDO_LABELS)?,
            LabelSource::Uniform => self.run.load_labels(Stage::InjectNoise, NOISY_LABELS)?,
        };
        let target = self.dataset(self.cfg.target, Split::Train)?;
        Ok(PseudoLabeledDataset::from_sidecar(&target, file)?)
    }

    fn fit_labels(&self) -> Result<StageOutput> {
        self.run.reset(Stage::FitLabels)?;
        let noisy = self.noisy_target()?;
        let target = self.dataset(self.cfg.target, Split::Train)?;
        let mut clf = Classifier::new(self.cfg.classes, target.channels(), &self.cfg.arch, model_seed(self.cfg.seed, 4))?;
        let opts = self.classifier_training(self.cfg.budgets.source_epochs, model_seed(self.cfg.seed, 4));
        fit_classifier(&mut clf, &noisy.images, &noisy.pseudo_labels, &opts)?;
        let mut report = evaluate_classifier(&clf, &target, self.cfg.eval_batch_size)?;
        report.split = format!("{}-train-{}", self.cfg.target, self.cfg.label_source);
        let path = self.run.save_report(Stage::FitLabels, REPORT, &report)?;
        let ckpt_path = self.run.save_checkpoint(Stage::FitLabels, &clf.to_checkpoint(0, self.hash()))?;
        Ok(StageOutput {
            artifacts: vec![path, ckpt_path],
            metrics: vec![("accuracy", report.accuracy), ("delta_A", report.delta_a)],
        })
    }

    fn train_oracle(&self) -> Result<StageOutput> {
        self.run.reset(Stage::TrainOracle)?;
        let train = self.dataset(self.cfg.target, Split::Train)?;
        let test = self.dataset(self.cfg.target, Split::Test)?;
        let mut cfg = self.cfg.clone();
        cfg.seed = model_seed(self.cfg.seed, 3);
        let oracle = build_oracle(&cfg, &train, &test)?;
        let steps = (cfg.oracle_epochs * (train.len() / cfg.batch_size).max(1)) as u64;
        let ckpt = self
            .run
            .save_checkpoint(Stage::TrainOracle, &oracle.model.to_checkpoint(steps, self.hash()))?;
        let report = evaluate_classifier(&oracle.model, &test, self.cfg.eval_batch_size)?;
        let path = self.run.save_report(Stage::TrainOracle, REPORT, &report)?;
        Ok(StageOutput {
            artifacts: vec![ckpt, path],
            metrics: vec![("train_acc", oracle.train_accuracy), ("test_acc", oracle.test_accuracy)],
        })
    }

    fn oracle(&self) -> Result<Classifier> {
        let ckpt = self.run.load_checkpoint(Stage::TrainOracle, Role::Oracle)?;
        Ok(Classifier::from_checkpoint(&ckpt)?)
    }

    fn pretrain_cgan(&self) -> Result<StageOutput> {
        self.run.reset(Stage::PretrainCgan)?;
        let noisy = self.noisy_target()?;
        let c = self.cfg.classes;
        let ch = noisy.channels();
        let mut g = Generator::new(self.cfg.latent_dim, c, ch, &self.cfg.arch, model_seed(self.cfg.seed, 1))?;
        let mut d = Discriminator::new(c, ch, &self.cfg.arch, model_seed(self.cfg.seed, 2))?;
        // the collapse check is optional; it runs only when an oracle exists
        let oracle = self.oracle().ok();
        let mut opts = CganTraining::from_config(&self.cfg);
        opts.seed = model_seed(self.cfg.seed, 6);
        let summary = pretrain_cgan(
            &mut g,
            &mut d,
            &noisy,
            &opts,
            oracle.as_ref().map(|o| o as &dyn plr_nn::models::Predictor),
        )?;
        let step = self.cfg.budgets.cgan_iters as u64;
        let gp = self.run.save_checkpoint(Stage::PretrainCgan, &g.to_checkpoint(step, self.hash()))?;
        let dp = self.run.save_checkpoint(Stage::PretrainCgan, &d.to_checkpoint(step, self.hash()))?;
        let mut metrics = vec![("loss_D", summary.d_loss), ("loss_G", summary.g_loss)];
        if let Some(k) = summary.recognized_classes {
            metrics.push(("recognized_classes", k as f64));
        }
        Ok(StageOutput {
            artifacts: vec![gp, dp],
            metrics,
        })
    }

    fn plr_train(&self) -> Result<StageOutput> {
        let (clf, _) = self.source_classifier()?;
        let g = Generator::from_checkpoint(&self.run.load_checkpoint(Stage::PretrainCgan, Role::Generator)?)?;
        let d = Discriminator::from_checkpoint(&self.run.load_checkpoint(Stage::PretrainCgan, Role::Discriminator)?)?;
        let target = self.noisy_target()?;
        let test = self.dataset(self.cfg.target, Split::Test)?;
        self.run.reset(Stage::PlrTrain)?;
        let mut state = TrainState::new(clf, g, d, self.cfg.eta, self.cfg.delta, model_seed(self.cfg.seed, 7))?;
        let opts = PlrOptions::from_config(&self.cfg);
        let mut hooks = Persist {
            run: &self.run,
            artifacts: Vec::new(),
        };
        let log = plr_train(&mut state, &target, &test, &opts, &mut hooks)?;
        let last = log.last().copied().expect("log always holds the step-0 row");
        let mut artifacts = vec![self.run.path(Stage::PlrTrain, METRICS)];
        artifacts.extend(hooks.artifacts);
        Ok(StageOutput {
            artifacts,
            metrics: vec![
                ("initial_test_acc", log.rows[0].test_acc),
                ("final_test_acc", last.test_acc),
                ("final_delta_A", last.delta_a),
            ],
        })
    }

    fn evaluate(&self) -> Result<StageOutput> {
        self.run.reset(Stage::Evaluate)?;
        let test = self.dataset(self.cfg.target, Split::Test)?;
        let (baseline, _) = self.source_classifier()?;
        let plr_ckpt = self.run.load_checkpoint(Stage::PlrTrain, Role::Classifier)?;
        let refined = Classifier::from_checkpoint(&plr_ckpt)?;
        let base = evaluate_classifier(&baseline, &test, self.cfg.eval_batch_size)?;
        let plr = evaluate_classifier(&refined, &test, self.cfg.eval_batch_size)?;
        let bp = self.run.save_report(Stage::Evaluate, "baseline.txt", &base)?;
        let pp = self.run.save_report(Stage::Evaluate, "plr.txt", &plr)?;
        let summary = format!(
            "config_hash={}\ntask={}->{}\ngan_objective={}\nplr_step={}\ntrain_on_source={:.4}\nplr={:.4}\n",
            self.hash(),
            self.cfg.source,
            self.cfg.target,
            self.cfg.gan_objective,
            plr_ckpt.manifest.step,
            base.accuracy,
            plr.accuracy
        );
        let sp = self.run.write_text(Stage::Evaluate, SUMMARY, &summary)?;
        Ok(StageOutput {
            artifacts: vec![bp, pp, sp],
            metrics: vec![
                ("train_on_source", base.accuracy),
                ("plr", plr.accuracy),
                ("plr_delta_A", plr.delta_a),
            ],
        })
    }

    fn pretrained_generator(&self) -> Result<Generator> {
        Ok(Generator::from_checkpoint(
            &self.run.load_checkpoint(Stage::PretrainCgan, Role::Generator)?,
        )?)
    }

    fn gan_test(&self) -> Result<StageOutput> {
        self.run.reset(Stage::GanTest)?;
        let oracle = self.oracle()?;
        let g = self.pretrained_generator()?;
        let n = match self.cfg.gan_test_samples {
            0 => self.dataset(self.cfg.target, Split::Train)?.len(),
            n => n,
        };
        let report = gan_test(&oracle, &g, n, model_seed(self.cfg.seed, 8), self.cfg.eval_batch_size)?;
        let path = self.run.save_report(Stage::GanTest, REPORT, &report)?;
        Ok(StageOutput {
            artifacts: vec![path],
            metrics: vec![("accuracy", report.accuracy), ("delta_A", report.delta_a)],
        })
    }

    fn gan_train(&self) -> Result<StageOutput> {
        self.run.reset(Stage::GanTrain)?;
        let g = self.pretrained_generator()?;
        let test = self.dataset(self.cfg.target, Split::Test)?;
        let steps = match self.cfg.gan_train_steps {
            0 => {
                let n = self.dataset(self.cfg.source, Split::Train)?.len();
                self.cfg.budgets.source_epochs * (n / self.cfg.batch_size).max(1)
            }
            s => s,
        };
        let opts = GanTrainOptions {
            steps,
            adam: AdamSettings::new(self.cfg.pretrain_lr_source, &self.cfg),
            batch_size: self.cfg.batch_size,
            eval_batch_size: self.cfg.eval_batch_size,
            seed: model_seed(self.cfg.seed, 9),
        };
        let report = gan_train(&g, &test, &self.cfg.arch, &opts)?;
        let path = self.run.save_report(Stage::GanTrain, REPORT, &report)?;
        Ok(StageOutput {
            artifacts: vec![path],
            metrics: vec![("accuracy", report.accuracy), ("delta_A", report.delta_a)],
        })
    }

    fn samples(&self) -> Result<StageOutput> {
        // prefer the refined generator, fall back to the pretrained one
        let ckpt = match self.run.load_checkpoint(Stage::PlrTrain, Role::Generator) {
            Ok(c) => c,
            Err(CliError::MissingArtifact { .. }) => self.run.load_checkpoint(Stage::PretrainCgan, Role::Generator)?,
            Err(e) => return Err(e),
        };
        let g = Generator::from_checkpoint(&ckpt)?;
        self.run.reset(Stage::Samples)?;
        let images = sample_grid(&g, GRID_COLUMNS, model_seed(self.cfg.seed, 10))?;
        let path = self.run.path(Stage::Samples, "grid.png");
        grid::save_grid(&images, self.cfg.classes, GRID_COLUMNS, &path)?;
        Ok(StageOutput {
            artifacts: vec![path],
            metrics: vec![("generator_step", ckpt.manifest.step as f64)],
        })
    }

    fn plot(&self) -> Result<StageOutput> {
        let log = self.metrics_log()?;
        self.run.reset(Stage::Plot)?;
        let path = self.run.path(Stage::Plot, "accuracy.svg");
        crate::plot::accuracy_plot(&[log], &format!("{} -> {}", self.cfg.source, self.cfg.target), &path)?;
        Ok(StageOutput {
            artifacts: vec![path],
            metrics: vec![],
        })
    }

    /// The refinement metrics of this run.
    pub fn metrics_log(&self) -> Result<MetricsLog> {
        let path = self.run.path(Stage::PlrTrain, METRICS);
        if !path.is_file() {
            return Err(CliError::MissingArtifact {
                path,
                producer: Stage::PlrTrain,
            });
        }
        Ok(MetricsLog::read(&path)?)
    }
}

/// Appends each metrics row to disk and keeps the latest checkpoints.
struct Persist<'a> {
    run: &'a RunDir,
    artifacts: Vec<PathBuf>,
}

impl PlrHooks for Persist<'_> {
    fn on_eval(&mut self, row: &MetricsRow, state: &TrainState) -> plr_nn::Result<()> {
        let wrap = |e: CliError| plr_nn::Error::invalid(e.to_string());
        MetricsLog::append_row(&self.run.path(Stage::PlrTrain, METRICS), row)?;
        self.artifacts.clear();
        for ckpt in state.snapshot(&self.run.hash) {
            let role = ckpt.manifest.role;
            let path = self.run.save_checkpoint(Stage::PlrTrain, &ckpt).map_err(wrap)?;
            self.run.prune_checkpoints(Stage::PlrTrain, role, &path).map_err(wrap)?;
            self.artifacts.push(path);
        }
        Ok(())
    }
}
