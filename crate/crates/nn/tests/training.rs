mod common;

use common::{synthetic, tiny_arch};
use plr_core::formats::MetricsRow;
use plr_core::GanObjective;
use plr_nn::data::{LabeledDataset, PseudoLabeledDataset};
use plr_nn::models::{Classifier, Discriminator, Generator, Predictor};
use plr_nn::train::{
    fit_classifier, plr_train, pretrain_cgan, AdamSettings, CganTraining, ClassifierTraining, NoHooks, PlrHooks,
    PlrOptions, TrainState, Update,
};
use plr_nn::Error;

const LATENT: usize = 8;

fn state(seed: u64) -> TrainState {
    let arch = tiny_arch();
    TrainState::new(
        Classifier::new(4, 1, &arch, seed).unwrap(),
        Generator::new(LATENT, 4, 1, &arch, seed + 1).unwrap(),
        Discriminator::new(4, 1, &arch, seed + 2).unwrap(),
        1e-4,
        1e-4,
        seed,
    )
    .unwrap()
}

fn options(iterations: usize, eval_every: usize, batch_size: usize) -> PlrOptions {
    PlrOptions {
        iterations,
        eval_every,
        batch_size,
        eval_batch_size: 64,
        objective: GanObjective::CrossEntropy,
        beta1: 0.5,
        beta2: 0.999,
        config_hash: "0123456789abcdef".into(),
    }
}

fn target(n: usize) -> (PseudoLabeledDataset, LabeledDataset) {
    let train = synthetic(n, 4, 1, 1);
    let test = synthetic(40, 4, 1, 2);
    let pseudo = PseudoLabeledDataset::new(&train, train.labels.clone(), "fixture").unwrap();
    (pseudo, test)
}

#[derive(Default)]
struct Recorder {
    updates: Vec<Update>,
    codes: Vec<usize>,
    evals: Vec<MetricsRow>,
}

impl PlrHooks for Recorder {
    fn on_update(&mut self, _step: u64, net: Update) {
        self.updates.push(net);
    }

    fn on_class_codes(&mut self, codes: &[usize]) {
        self.codes.extend_from_slice(codes);
    }

    fn on_eval(&mut self, row: &MetricsRow, _state: &TrainState) -> plr_nn::Result<()> {
        self.evals.push(*row);
        Ok(())
    }
}

#[test]
fn updates_alternate_classifier_then_gan() {
    let (pseudo, test) = target(32);
    let mut st = state(1);
    let mut rec = Recorder::default();
    plr_train(&mut st, &pseudo, &test, &options(7, 3, 8), &mut rec).unwrap();
    assert_eq!(rec.updates.len(), 21);
    for triple in rec.updates.chunks(3) {
        assert_eq!(triple, [Update::Classifier, Update::Discriminator, Update::Generator]);
    }
    assert_eq!(st.step, 7);
}

#[test]
fn metrics_log_has_one_row_per_evaluation() {
    let (pseudo, test) = target(32);
    for (iters, every) in [(0usize, 1usize), (5, 2), (6, 3), (4, 10)] {
        let mut st = state(2);
        let mut rec = Recorder::default();
        let log = plr_train(&mut st, &pseudo, &test, &options(iters, every, 8), &mut rec).unwrap();
        assert_eq!(log.len(), iters / every + 1, "{iters}/{every}");
        assert_eq!(log.rows[0].step, 0);
        assert!(log.rows[0].loss_c.is_nan());
        let lines = |rows: &[MetricsRow]| rows.iter().map(MetricsRow::to_csv_line).collect::<Vec<_>>();
        assert_eq!(lines(&rec.evals), lines(&log.rows));
        for (k, row) in log.rows.iter().enumerate() {
            assert_eq!(row.step, (k * every) as u64);
        }
    }
}

#[test]
fn zero_iterations_leave_the_classifier_untouched() {
    let (pseudo, test) = target(16);
    let mut st = state(3);
    let before = st.classifier.to_checkpoint(0, "h");
    plr_train(&mut st, &pseudo, &test, &options(0, 5, 8), &mut NoHooks).unwrap();
    assert_eq!(st.classifier.to_checkpoint(0, "h"), before);
}

#[test]
fn zero_eval_interval_is_rejected() {
    let (pseudo, test) = target(16);
    let mut st = state(4);
    let err = plr_train(&mut st, &pseudo, &test, &options(3, 0, 8), &mut NoHooks).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)));
}

#[test]
fn non_positive_step_sizes_are_rejected() {
    let arch = tiny_arch();
    let build = |eta, delta| {
        TrainState::new(
            Classifier::new(4, 1, &arch, 0).unwrap(),
            Generator::new(LATENT, 4, 1, &arch, 0).unwrap(),
            Discriminator::new(4, 1, &arch, 0).unwrap(),
            eta,
            delta,
            0,
        )
    };
    assert!(build(0.0, 1e-4).is_err());
    assert!(build(1e-4, -1.0).is_err());
}

#[test]
fn non_finite_loss_aborts_with_last_snapshot() {
    let (_, test) = target(16);
    let mut poisoned = synthetic(16, 4, 1, 5);
    poisoned.images = poisoned.images.full_like(f64::NAN);
    let pseudo = PseudoLabeledDataset::new(&poisoned, poisoned.labels.clone(), "nan").unwrap();
    let mut st = state(5);
    let initial = st.snapshot("0123456789abcdef");
    match plr_train(&mut st, &pseudo, &test, &options(4, 2, 8), &mut NoHooks) {
        Err(Error::Diverged { step, last_good, .. }) => {
            assert_eq!(step, 1);
            assert_eq!(last_good, initial);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn class_codes_are_uniform() {
    let (pseudo, test) = target(16);
    let mut st = state(6);
    let mut rec = Recorder::default();
    let iterations = 10_000;
    plr_train(&mut st, &pseudo, &test, &options(iterations, iterations, 2), &mut rec).unwrap();
    let n = rec.codes.len() as f64;
    assert_eq!(n, 2.0 * iterations as f64);
    let p = 0.25;
    let sigma = (n * p * (1.0 - p)).sqrt();
    for k in 0..4 {
        let count = rec.codes.iter().filter(|&&c| c == k).count() as f64;
        assert!((count - n * p).abs() <= 3.0 * sigma, "class {k}: {count} of {n}");
    }
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let (pseudo, test) = target(32);
        let mut st = state(7);
        plr_train(&mut st, &pseudo, &test, &options(6, 2, 8), &mut NoHooks).unwrap().to_csv()
    };
    assert_eq!(run(), run());
}

#[test]
fn classifier_learns_separable_data() {
    let data = synthetic(400, 4, 1, 8);
    let mut clf = Classifier::new(4, 1, &tiny_arch(), 0).unwrap();
    let opts = ClassifierTraining {
        adam: AdamSettings {
            lr: 3e-3,
            beta1: 0.5,
            beta2: 0.999,
        },
        batch_size: 32,
        epochs: 20,
        seed: 0,
    };
    fit_classifier(&mut clf, &data.images, &data.labels, &opts).unwrap();
    let acc = plr_nn::eval::evaluate_classifier(&clf, &data, 128).unwrap().accuracy;
    assert!(acc > 0.95, "accuracy {acc}");
    assert_eq!(clf.classes(), 4);
}

#[test]
fn cgan_pretraining_updates_both_networks() {
    let (pseudo, _) = target(64);
    let arch = tiny_arch();
    let mut g = Generator::new(LATENT, 4, 1, &arch, 1).unwrap();
    let mut d = Discriminator::new(4, 1, &arch, 2).unwrap();
    let (g0, d0) = (g.to_checkpoint(0, ""), d.to_checkpoint(0, ""));
    let opts = CganTraining {
        iterations: 5,
        adam: AdamSettings {
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
        },
        batch_size: 16,
        objective: GanObjective::Hinge,
        seed: 0,
    };
    let summary = pretrain_cgan(&mut g, &mut d, &pseudo, &opts, None).unwrap();
    assert!(summary.d_loss.is_finite() && summary.g_loss.is_finite());
    assert!(summary.recognized_classes.is_none());
    assert_ne!(g.to_checkpoint(0, ""), g0);
    assert_ne!(d.to_checkpoint(0, ""), d0);
}
