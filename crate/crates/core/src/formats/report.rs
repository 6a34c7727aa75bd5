//! Evaluation reports: accuracy and asymmetry of one confusion matrix.
//!
//! Text form:
//!
//! ```text
//! metric_kind=gan_test
//! split=train
//! n_samples=1000
//! accuracy=0.7720
//! delta_A=0.1140
//! c=10
//! <10 rows of counts>
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::noise::ConfusionMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    Classifier,
    GanTest,
    GanTrain,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Classifier => "classifier",
            MetricKind::GanTest => "gan_test",
            MetricKind::GanTrain => "gan_train",
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classifier" => Ok(MetricKind::Classifier),
            "gan_test" => Ok(MetricKind::GanTest),
            "gan_train" => Ok(MetricKind::GanTrain),
            other => Err(Error::invalid(format!("unknown metric kind {other:?}"))),
        }
    }
}

/// Accuracy and asymmetry are always derived from `matrix`, never set independently.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub kind: MetricKind,
    /// Which split the numbers refer to (`train`, `test`, `generated`).
    pub split: String,
    pub matrix: ConfusionMatrix,
    pub accuracy: f64,
    pub delta_a: f64,
    pub n_samples: u64,
}

impl EvalReport {
    pub fn new(kind: MetricKind, split: impl Into<String>, matrix: ConfusionMatrix) -> Self {
        Self {
            kind,
            split: split.into(),
            accuracy: matrix.accuracy(),
            delta_a: matrix.asymmetry(),
            n_samples: matrix.total(),
            matrix,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "metric_kind={}", self.kind.as_str())?;
        writeln!(f, "split={}", self.split)?;
        writeln!(f, "n_samples={}", self.n_samples)?;
        writeln!(f, "accuracy={:.4}", self.accuracy)?;
        writeln!(f, "delta_A={:.4}", self.delta_a)?;
        write!(f, "{}", self.matrix)
    }
}

impl FromStr for EvalReport {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::format("eval report", format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(|v| v.trim().to_string())
                .ok_or_else(|| Error::format("eval report", format!("expected {key}=, got {line:?}")))
        };
        let kind: MetricKind = field("metric_kind")?.parse()?;
        let split = field("split")?;
        let n_samples: u64 = field("n_samples")?
            .parse()
            .map_err(|_| Error::format("eval report", "bad n_samples"))?;
        let accuracy: f64 = field("accuracy")?
            .parse()
            .map_err(|_| Error::format("eval report", "bad accuracy"))?;
        let delta_a: f64 = field("delta_A")?
            .parse()
            .map_err(|_| Error::format("eval report", "bad delta_A"))?;
        let rest: String = lines.map(|l| format!("{l}\n")).collect();
        let matrix: ConfusionMatrix = rest.parse()?;
        let report = EvalReport::new(kind, split, matrix);
        if report.n_samples != n_samples
            || (report.accuracy - accuracy).abs() > 5e-5
            || (report.delta_a - delta_a).abs() > 5e-5
        {
            return Err(Error::format(
                "eval report",
                "summary numbers disagree with the confusion matrix",
            ));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_fields_match_matrix() {
        let m = ConfusionMatrix::from_rows(&[vec![8, 2], vec![0, 10]]).unwrap();
        let r = EvalReport::new(MetricKind::Classifier, "test", m.clone());
        assert_eq!(r.accuracy, m.accuracy());
        assert_eq!(r.delta_a, m.asymmetry());
        assert_eq!(r.n_samples, 20);
        assert!((r.accuracy - 0.9).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let m = ConfusionMatrix::from_rows(&[vec![8, 2, 0], vec![0, 10, 1], vec![3, 0, 4]]).unwrap();
        let r = EvalReport::new(MetricKind::GanTest, "generated", m);
        let text = r.to_string();
        assert!(text.contains("accuracy=0.7857\n"));
        assert_eq!(text.parse::<EvalReport>().unwrap(), r);
        let tampered = text.replace("accuracy=0.7857", "accuracy=0.9000");
        assert!(tampered.parse::<EvalReport>().is_err());
    }
}
