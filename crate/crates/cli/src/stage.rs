use std::fmt;
use std::str::FromStr;

/// Pipeline stages, in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    PretrainSource,
    InferPseudolabels,
    AnalyzeNoise,
    InjectNoise,
    FitLabels,
    TrainOracle,
    PretrainCgan,
    PlrTrain,
    Evaluate,
    GanTest,
    GanTrain,
    Plot,
    Samples,
    Pipeline,
}

impl Stage {
    pub const ALL: [Stage; 14] = [
        Stage::PretrainSource,
        Stage::InferPseudolabels,
        Stage::AnalyzeNoise,
        Stage::InjectNoise,
        Stage::FitLabels,
        Stage::TrainOracle,
        Stage::PretrainCgan,
        Stage::PlrTrain,
        Stage::Evaluate,
        Stage::GanTest,
        Stage::GanTrain,
        Stage::Plot,
        Stage::Samples,
        Stage::Pipeline,
    ];

    /// Stages run by `pipeline`.
    pub const PIPELINE: [Stage; 6] = [
        Stage::PretrainSource,
        Stage::InferPseudolabels,
        Stage::AnalyzeNoise,
        Stage::PretrainCgan,
        Stage::PlrTrain,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::PretrainSource => "pretrain-source",
            Stage::InferPseudolabels => "infer-pseudolabels",
            Stage::AnalyzeNoise => "analyze-noise",
            Stage::InjectNoise => "inject-noise",
            Stage::FitLabels => "fit-labels",
            Stage::TrainOracle => "train-oracle",
            Stage::PretrainCgan => "pretrain-cgan",
            Stage::PlrTrain => "plr-train",
            Stage::Evaluate => "evaluate",
            Stage::GanTest => "gan-test",
            Stage::GanTrain => "gan-train",
            Stage::Plot => "plot",
            Stage::Samples => "samples",
            Stage::Pipeline => "pipeline",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Stage::ALL.iter().map(|s| s.name()).collect();
                format!("unknown stage {s:?}; expected one of {}", names.join(", "))
            })
    }
}
