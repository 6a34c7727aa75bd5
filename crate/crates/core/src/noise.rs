//! Label-noise analytics.
//!
//! A labeler that reaches accuracy `a` on `c` classes can be compared with a
//! labeler that randomizes a fraction `n` of the labels uniformly. The two
//! are related by `n = (1 - a) c / (c - 1)` and `a = 1 - n (c - 1) / c`;
//! randomized labels are redrawn over all `c` classes, so on average `1/c`
//! of them keep their correct value.
//!
//! How structured the residual noise is gets summarized by the asymmetry of
//! the confusion matrix, `||M - Mᵀ||_F / (2 ||M||_F)`, which lies in `[0, 1]`
//! and vanishes for symmetric matrices. Uniform noise on balanced classes
//! gives an almost symmetric matrix; the noise a source classifier produces
//! on a shifted domain does not.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Square count matrix, rows indexed by true class and columns by predicted class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// Builds a matrix from row-major counts. Rejects the all-zero matrix.
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if classes == 0 {
            return Err(Error::invalid("confusion matrix needs at least one class"));
        }
        if counts.len() != classes * classes {
            return Err(Error::invalid(format!(
                "expected {} counts for {classes} classes, got {}",
                classes * classes,
                counts.len()
            )));
        }
        if counts.iter().all(|&v| v == 0) {
            return Err(Error::invalid("confusion matrix has no entries"));
        }
        Ok(Self { classes, counts })
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let classes = rows.len();
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::invalid("confusion matrix rows must form a square"));
        }
        Self::from_counts(classes, rows.concat())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn asymmetry(&self) -> f64 {
        let values: Vec<f64> = self.counts.iter().map(|&v| v as f64).collect();
        asymmetry_of(self.classes, &values).expect("validated confusion matrix is nonzero")
    }

    /// Number of distinct predicted classes that received at least one sample.
    pub fn occupied_columns(&self) -> usize {
        (0..self.classes)
            .filter(|&j| (0..self.classes).any(|i| self.get(i, j) > 0))
            .count()
    }
}

/// Plain-text form: a `c=<int>` header line followed by `c` rows of counts.
impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "c={}", self.classes)?;
        for i in 0..self.classes {
            let row: Vec<String> = self.row(i).iter().map(u64::to_string).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for ConfusionMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::format("confusion matrix", "empty input"))?;
        let classes: usize = header
            .trim()
            .strip_prefix("c=")
            .and_then(|v| v.parse().ok())
            .filter(|&c| c > 0 && c <= 1 << 16)
            .ok_or_else(|| Error::format("confusion matrix", format!("bad header {header:?}")))?;
        let mut counts = Vec::with_capacity((classes * classes).min(s.len()));
        for row in 0..classes {
            let line = lines.next().ok_or_else(|| {
                Error::format("confusion matrix", format!("missing row {row} of {classes}"))
            })?;
            let before = counts.len();
            for tok in line.split_whitespace() {
                let v = tok.parse::<u64>().map_err(|_| {
                    Error::format("confusion matrix", format!("bad count {tok:?} in row {row}"))
                })?;
                counts.push(v);
            }
            if counts.len() - before != classes {
                return Err(Error::format(
                    "confusion matrix",
                    format!("row {row} has {} entries, expected {classes}", counts.len() - before),
                ));
            }
        }
        if lines.next().is_some() {
            return Err(Error::format("confusion matrix", "trailing rows"));
        }
        Self::from_counts(classes, counts)
            .map_err(|e| Error::format("confusion matrix", e.to_string()))
    }
}

/// Tallies `(true, predicted)` pairs into a `classes × classes` matrix.
pub fn build_confusion_matrix(
    true_labels: &[usize],
    predicted_labels: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::invalid(format!(
            "label sequences differ in length: {} true vs {} predicted",
            true_labels.len(),
            predicted_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::invalid("label sequences are empty"));
    }
    if classes == 0 {
        return Err(Error::invalid("class count must be positive"));
    }
    let mut counts = vec![0u64; classes * classes];
    for (pos, (&t, &p)) in true_labels.iter().zip(predicted_labels).enumerate() {
        if t >= classes || p >= classes {
            return Err(Error::invalid(format!(
                "label out of range at position {pos}: true={t}, predicted={p}, classes={classes}"
            )));
        }
        counts[t * classes + p] += 1;
    }
    ConfusionMatrix::from_counts(classes, counts)
}

/// Asymmetry of a confusion matrix, `||M - Mᵀ||_F / (2 ||M||_F)`.
pub fn asymmetry(matrix: &ConfusionMatrix) -> f64 {
    matrix.asymmetry()
}

/// Asymmetry of an arbitrary real square matrix given row-major.
///
/// Only nonnegative matrices are guaranteed to land in `[0, 1]`.
pub fn asymmetry_of(classes: usize, values: &[f64]) -> Result<f64> {
    if values.len() != classes * classes {
        return Err(Error::invalid("matrix is not square"));
    }
    let mut norm_sq = 0.0;
    let mut skew_sq = 0.0;
    for i in 0..classes {
        for j in 0..classes {
            let v = values[i * classes + j];
            let d = v - values[j * classes + i];
            norm_sq += v * v;
            skew_sq += d * d;
        }
    }
    if !(norm_sq > 0.0) || !norm_sq.is_finite() {
        return Err(Error::invalid("asymmetry undefined for a zero or non-finite matrix"));
    }
    Ok(skew_sq.sqrt() / (2.0 * norm_sq.sqrt()))
}

/// Fraction of uniformly randomized labels that yields accuracy `accuracy`.
pub fn uniform_noise_equivalent(accuracy: f64, classes: usize) -> Result<f64> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    let chance = 1.0 / classes as f64;
    if !(accuracy >= chance - 1e-12 && accuracy <= 1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "accuracy {accuracy} outside [{chance}, 1]; below chance would need n > 1"
        )));
    }
    let c = classes as f64;
    Ok(((1.0 - accuracy) * c / (c - 1.0)).clamp(0.0, 1.0))
}

/// Expected accuracy after uniformly randomizing a fraction `fraction` of the labels.
pub fn accuracy_from_noise(fraction: f64, classes: usize) -> Result<f64> {
    if classes < 2 {
        return Err(Error::invalid("need at least two classes"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("noise fraction {fraction} outside [0, 1]")));
    }
    let c = classes as f64;
    Ok(1.0 - fraction * (c - 1.0) / c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub fraction: f64,
    pub classes: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(fraction: f64, classes: usize, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid(format!("noise fraction {fraction} outside [0, 1]")));
        }
        if classes == 0 {
            return Err(Error::invalid("class count must be positive"));
        }
        Ok(Self {
            fraction,
            classes,
            seed,
        })
    }
}

/// Randomizes exactly `round(fraction * len)` labels chosen without replacement.
///
/// Each chosen label is redrawn uniformly over all classes, the original one
/// included. The output depends only on the labels and the spec.
pub fn inject_uniform_noise(labels: &[usize], spec: &NoiseSpec) -> Result<Vec<usize>> {
    let spec = NoiseSpec::new(spec.fraction, spec.classes, spec.seed)?;
    if let Some(pos) = labels.iter().position(|&l| l >= spec.classes) {
        return Err(Error::invalid(format!(
            "label {} at position {pos} outside [0, {})",
            labels[pos], spec.classes
        )));
    }
    let mut out = labels.to_vec();
    let amount = (spec.fraction * labels.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for pos in index::sample(&mut rng, labels.len(), amount.min(labels.len())) {
        out[pos] = rng.gen_range(0..spec.classes);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn confusion_matrix_examples() {
        let m = build_confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(m.counts(), &[1, 0, 0, 0, 1, 0, 0, 0, 1]);

        let m = build_confusion_matrix(&[0, 0], &[1, 1], 2).unwrap();
        assert_eq!(m.counts(), &[0, 2, 0, 0]);

        // pairs: (0,1) (1,0) (0,0) (1,1)
        let m = build_confusion_matrix(&[0, 1, 0, 1], &[1, 0, 0, 1], 2).unwrap();
        assert_eq!(m.counts(), &[1, 1, 1, 1]);
        assert_eq!(m.total(), 4);
    }

    #[test]
    fn confusion_matrix_rejects_bad_input() {
        assert!(build_confusion_matrix(&[0, 1], &[0], 2).is_err());
        assert!(build_confusion_matrix(&[], &[], 2).is_err());
        assert!(build_confusion_matrix(&[0, 2], &[0, 1], 2).is_err());
        assert!(build_confusion_matrix(&[0, 1], &[0, 5], 2).is_err());
        assert!(ConfusionMatrix::from_counts(2, vec![0; 4]).is_err());
        assert!(ConfusionMatrix::from_counts(2, vec![1; 3]).is_err());
    }

    #[test]
    fn asymmetry_examples() {
        let sym = ConfusionMatrix::from_rows(&[vec![5, 2, 1], vec![2, 7, 3], vec![1, 3, 9]]).unwrap();
        assert_eq!(sym.asymmetry(), 0.0);

        // ||M - Mᵀ||_F = sqrt(2), ||M||_F = 1
        let m = ConfusionMatrix::from_rows(&[vec![0, 1], vec![0, 0]]).unwrap();
        assert!(close(m.asymmetry(), std::f64::consts::SQRT_2 / 2.0, 1e-12));
        assert!(close(m.asymmetry(), 0.70711, 1e-5));
    }

    #[test]
    fn asymmetry_rejects_zero_matrix() {
        assert!(asymmetry_of(2, &[0.0; 4]).is_err());
        assert!(asymmetry_of(2, &[1.0; 3]).is_err());
    }

    #[test]
    fn noise_equivalence_examples() {
        assert_eq!(uniform_noise_equivalent(1.0, 10).unwrap(), 0.0);
        assert!(close(uniform_noise_equivalent(0.1, 10).unwrap(), 1.0, 1e-12));
        // (1 - 0.3) * 10 / 9
        assert!(close(uniform_noise_equivalent(0.300, 10).unwrap(), 0.77778, 1e-5));
        assert!(uniform_noise_equivalent(0.05, 10).is_err());
        assert!(uniform_noise_equivalent(0.5, 1).is_err());

        assert_eq!(accuracy_from_noise(0.0, 10).unwrap(), 1.0);
        assert!(close(accuracy_from_noise(1.0, 10).unwrap(), 0.1, 1e-12));
        // 1 - 0.5 * 9 / 10
        assert!(close(accuracy_from_noise(0.5, 10).unwrap(), 0.55, 1e-12));
        assert!(accuracy_from_noise(-0.1, 10).is_err());
        assert!(accuracy_from_noise(1.1, 10).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let spec = NoiseSpec::new(0.0, 10, 7).unwrap();
        assert_eq!(inject_uniform_noise(&labels, &spec).unwrap(), labels);
    }

    #[test]
    fn noise_touches_exact_count_of_positions() {
        // With 2 classes and labels all 0, only selected positions can change;
        // the count of changed positions is bounded by round(n * len).
        let labels = vec![0usize; 1001];
        let spec = NoiseSpec::new(0.25, 2, 3).unwrap();
        let out = inject_uniform_noise(&labels, &spec).unwrap();
        let changed = out.iter().filter(|&&l| l != 0).count();
        assert!(changed <= 250);
        assert!(changed > 80);
    }

    #[test]
    fn full_noise_agrees_at_chance() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
        let spec = NoiseSpec::new(1.0, 10, 11).unwrap();
        let out = inject_uniform_noise(&labels, &spec).unwrap();
        let agree = labels.iter().zip(&out).filter(|(a, b)| a == b).count() as f64 / 1e4;
        let sigma = (0.1f64 * 0.9 / 1e4).sqrt();
        assert!(close(agree, 0.1, 3.0 * sigma), "agreement {agree}");
    }

    /// Independent Monte-Carlo oracle: shuffle-based selection and a separate
    /// RNG family, averaged over 100 seeds.
    fn monte_carlo_agreement(fraction: f64, classes: usize, len: usize, seeds: u64) -> f64 {
        use rand::seq::SliceRandom;
        let mut total = 0.0;
        for seed in 0..seeds {
            let mut rng = rand::rngs::StdRng::seed_from_u64(1_000 + seed);
            let mut order: Vec<usize> = (0..len).collect();
            order.shuffle(&mut rng);
            let amount = (fraction * len as f64).round() as usize;
            let mut agree = len - amount;
            for _ in 0..amount {
                if rng.gen_range(0..classes) == 0 {
                    agree += 1;
                }
            }
            total += agree as f64 / len as f64;
        }
        total / seeds as f64
    }

    #[test]
    fn moderate_noise_matches_monte_carlo_oracle() {
        let oracle = monte_carlo_agreement(0.3, 10, 10_000, 100);
        // Oracle mean over 100 seeds, frozen: 0.73 within its own sampling error.
        assert!(close(oracle, 0.73, 0.002), "oracle {oracle}");
        let labels: Vec<usize> = (0..10_000).map(|i| (i * 7) % 10).collect();
        let out = inject_uniform_noise(&labels, &NoiseSpec::new(0.3, 10, 5).unwrap()).unwrap();
        let agree = labels.iter().zip(&out).filter(|(a, b)| a == b).count() as f64 / 1e4;
        // only the 3000 redrawn labels are random
        let sigma = (3000.0f64 * 0.1 * 0.9).sqrt() / 1e4;
        assert!(close(agree, oracle, 3.0 * sigma), "agreement {agree} vs {oracle}");
    }

    #[test]
    fn noise_injection_is_reproducible() {
        let labels: Vec<usize> = (0..5000).map(|i| i % 10).collect();
        let spec = NoiseSpec::new(0.4, 10, 99).unwrap();
        let a = inject_uniform_noise(&labels, &spec).unwrap();
        let b = inject_uniform_noise(&labels, &spec).unwrap();
        assert_eq!(a, b);
        let c = inject_uniform_noise(&labels, &NoiseSpec::new(0.4, 10, 100).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn noise_rejects_out_of_range_labels() {
        let spec = NoiseSpec::new(0.5, 3, 0).unwrap();
        assert!(inject_uniform_noise(&[0, 1, 3], &spec).is_err());
        assert!(NoiseSpec::new(1.5, 3, 0).is_err());
    }

    #[test]
    fn uniform_noise_gives_near_symmetric_matrix() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
        for (k, n) in [0.1, 0.3, 0.5].into_iter().enumerate() {
            let noisy =
                inject_uniform_noise(&labels, &NoiseSpec::new(n, 10, k as u64).unwrap()).unwrap();
            let m = build_confusion_matrix(&labels, &noisy, 10).unwrap();
            assert!(m.asymmetry() < 0.05, "n={n}: {}", m.asymmetry());
        }
    }

    /// Fully randomized labels leave only sampling noise, but with 1000 samples
    /// per class every off-diagonal cell is ~Poisson(100), which keeps δ_A
    /// around 0.063 (sd 0.007; 2000-seed simulation of the same setup).
    #[test]
    fn fully_random_labels_show_sampling_asymmetry() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 10).collect();
        let mean = (0..20)
            .map(|seed| {
                let noisy =
                    inject_uniform_noise(&labels, &NoiseSpec::new(1.0, 10, seed).unwrap()).unwrap();
                build_confusion_matrix(&labels, &noisy, 10).unwrap().asymmetry()
            })
            .sum::<f64>()
            / 20.0;
        assert!(close(mean, 0.063, 0.005), "mean δ_A {mean}");
    }

    #[test]
    fn text_format_round_trip() {
        let m = ConfusionMatrix::from_rows(&[vec![3, 0, 1], vec![0, 4, 0], vec![2, 0, 5]]).unwrap();
        let text = m.to_string();
        assert!(text.starts_with("c=3\n3 0 1\n"));
        assert_eq!(text.parse::<ConfusionMatrix>().unwrap(), m);
        assert!("c=2\n1 2\n".parse::<ConfusionMatrix>().is_err());
        assert!("c=2\n1 2\n3\n".parse::<ConfusionMatrix>().is_err());
        assert!("c=2\n0 0\n0 0\n".parse::<ConfusionMatrix>().is_err());
        assert!("2\n1 2\n3 4\n".parse::<ConfusionMatrix>().is_err());
    }

    fn nonzero_matrix() -> impl Strategy<Value = (usize, Vec<f64>)> {
        (1usize..8).prop_flat_map(|c| {
            proptest::collection::vec(0.0f64..1000.0, c * c)
                .prop_filter("nonzero", |v| v.iter().any(|&x| x > 1e-9))
                .prop_map(move |v| (c, v))
        })
    }

    proptest! {
        #[test]
        fn noise_round_trip(a in 0.1f64..=1.0, c in 2usize..50) {
            let a = a.max(1.0 / c as f64);
            let n = uniform_noise_equivalent(a, c).unwrap();
            prop_assert!((0.0..=1.0).contains(&n));
            prop_assert!((accuracy_from_noise(n, c).unwrap() - a).abs() <= 1e-12);
        }

        #[test]
        fn asymmetry_is_bounded((c, v) in nonzero_matrix()) {
            let d = asymmetry_of(c, &v).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn symmetrized_matrix_has_zero_asymmetry((c, v) in nonzero_matrix()) {
            let sym: Vec<f64> = (0..c * c).map(|k| v[k] + v[(k % c) * c + k / c]).collect();
            prop_assert_eq!(asymmetry_of(c, &sym).unwrap(), 0.0);
        }

        #[test]
        fn asymmetry_is_scale_invariant((c, v) in nonzero_matrix(), k in 1e-3f64..1e3) {
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            let a = asymmetry_of(c, &v).unwrap();
            prop_assert!((asymmetry_of(c, &scaled).unwrap() - a).abs() <= 1e-12);
        }
    }
}
