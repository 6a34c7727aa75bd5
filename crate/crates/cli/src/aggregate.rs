//! Running a stage over several seeds and summarizing the results.

use std::fmt::Write as _;
use std::path::PathBuf;

use plr_core::ExperimentConfig;

use crate::error::Result;
use crate::stage::Stage;
use crate::stages::{Context, StageOutput};

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub hash: String,
    pub output: StageOutput,
}

#[derive(Clone, Debug)]
pub struct Execution {
    pub stage: Stage,
    pub runs: Vec<SeedRun>,
    /// (metric, mean, std) over seeds, in the order the stage reports them.
    pub summary: Vec<(String, f64, f64)>,
    pub aggregate_dir: Option<PathBuf>,
}

impl Execution {
    pub fn mean(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _, _)| k == key).map(|s| s.1)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for run in &self.runs {
            let _ = write!(out, "{} seed={} hash={}", self.stage, run.seed, run.hash);
            for (k, v) in &run.output.metrics {
                let _ = write!(out, " {k}={v:.4}");
            }
            out.push('\n');
        }
        if self.runs.len() > 1 {
            for (k, mean, std) in &self.summary {
                let _ = writeln!(out, "{} {k} = {mean:.4} ± {std:.4} over {} seeds", self.stage, self.runs.len());
            }
        }
        out
    }
}

/// Runs `stage` for seeds `cfg.seed .. cfg.seed + seeds`, each in its own run
/// directory. With more than one seed a summary is written to
/// `<out_dir>/aggregate-<hash>-x<seeds>/`.
pub fn execute(cfg: &ExperimentConfig, stage: Stage, seeds: usize) -> Result<Execution> {
    let seeds = seeds.max(1);
    let mut runs = Vec::with_capacity(seeds);
    let mut logs = Vec::new();
    for k in 0..seeds as u64 {
        let ctx = Context::new(cfg.with_seed(cfg.seed + k))?;
        let output = ctx.run_stage(stage)?;
        if stage == Stage::Plot {
            logs.push(ctx.metrics_log()?);
        }
        runs.push(SeedRun {
            seed: ctx.cfg.seed,
            hash: ctx.run.hash.clone(),
            output,
        });
    }
    let summary: Vec<(String, f64, f64)> = runs[0]
        .output
        .metrics
        .iter()
        .map(|(key, _)| {
            let values: Vec<f64> = runs.iter().filter_map(|r| r.output.metric(key)).collect();
            let (m, s) = mean_std(&values);
            (key.to_string(), m, s)
        })
        .collect();
    let mut exec = Execution {
        stage,
        runs,
        summary,
        aggregate_dir: None,
    };
    if seeds > 1 {
        let dir = cfg.out_dir.join(format!("aggregate-{}-x{seeds}", cfg.config_hash()));
        std::fs::create_dir_all(&dir).map_err(|e| plr_core::Error::io(&dir, e))?;
        let mut text = String::new();
        for r in &exec.runs {
            let _ = writeln!(text, "run seed={} config_hash={}", r.seed, r.hash);
        }
        for (k, m, s) in &exec.summary {
            let _ = writeln!(text, "{k} mean={m:.6} std={s:.6} n={seeds}");
        }
        let path = dir.join(format!("{}.txt", stage.name()));
        std::fs::write(&path, text).map_err(|e| plr_core::Error::io(&path, e))?;
        if stage == Stage::Plot {
            let title = format!("{} -> {} ({} seeds)", cfg.source, cfg.target, seeds);
            crate::plot::accuracy_plot(&logs, &title, &dir.join("accuracy.svg"))?;
        }
        exec.aggregate_dir = Some(dir);
    }
    Ok(exec)
}

#[cfg(test)]
mod tests {
    use super::mean_std;

    #[test]
    fn population_statistics() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert!(mean_std(&[]).0.is_nan());
    }
}
