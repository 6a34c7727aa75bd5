//! Per-config run directories and their artifact bookkeeping.
//!
//! Every artifact of one seeded configuration lives under
//! `<out_dir>/<config_hash>/`, next to `config.txt` (the canonical
//! configuration) and `run_manifest.txt` (one line per completed stage).

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use plr_core::formats::{Checkpoint, EvalReport, PseudoLabelFile, Role};
use plr_core::ExperimentConfig;

use crate::error::{CliError, Result};
use crate::stage::Stage;

/// Present in a stage directory while the stage is being (re)computed.
const INCOMPLETE: &str = ".incomplete";

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
    pub hash: String,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| plr_core::Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| plr_core::Error::io(path, e).into())
}

fn read_text(path: &Path, producer: Stage) -> Result<String> {
    if !path.is_file() {
        return Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            producer,
        });
    }
    fs::read_to_string(path).map_err(|e| plr_core::Error::io(path, e).into())
}

impl RunDir {
    /// Opens (creating if needed) the run directory of `cfg`.
    ///
    /// An existing directory must hold the same canonical configuration.
    pub fn open(cfg: &ExperimentConfig) -> Result<Self> {
        let hash = cfg.config_hash();
        let root = cfg.out_dir.join(&hash);
        let config_path = root.join("config.txt");
        let canonical = hashed_canonical(cfg);
        if config_path.is_file() {
            let existing = fs::read_to_string(&config_path).map_err(|e| plr_core::Error::io(&config_path, e))?;
            if existing != canonical {
                return Err(CliError::HashMismatch {
                    path: config_path,
                    found: "a different configuration".into(),
                    expected: hash,
                });
            }
        } else {
            write(&config_path, &canonical)?;
        }
        Ok(Self { root, hash })
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn path(&self, stage: Stage, file: &str) -> PathBuf {
        self.stage_dir(stage).join(file)
    }

    /// Removes earlier outputs of `stage` so a rerun starts clean.
    pub fn reset(&self, stage: Stage) -> Result<PathBuf> {
        let dir = self.stage_dir(stage);
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| plr_core::Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| plr_core::Error::io(&dir, e))?;
        write(&dir.join(INCOMPLETE), "")?;
        Ok(dir)
    }

    pub fn write_text(&self, stage: Stage, file: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(stage, file);
        write(&path, text)?;
        Ok(path)
    }

    pub fn save_checkpoint(&self, stage: Stage, ckpt: &Checkpoint) -> Result<PathBuf> {
        if ckpt.manifest.config_hash != self.hash {
            return Err(CliError::HashMismatch {
                path: self.stage_dir(stage),
                found: ckpt.manifest.config_hash.clone(),
                expected: self.hash.clone(),
            });
        }
        let path = self.path(stage, &ckpt.manifest.role.file_name(ckpt.manifest.step));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| plr_core::Error::io(parent, e))?;
        }
        ckpt.save(&path)?;
        Ok(path)
    }

    /// The checkpoint of `role` with the highest step in the directory of `stage`.
    pub fn latest_checkpoint_path(&self, stage: Stage, role: Role) -> Result<PathBuf> {
        let dir = self.stage_dir(stage);
        let prefix = format!("{}_", role.as_str());
        let mut best: Option<(u64, PathBuf)> = None;
        if let Ok(entries) = fs::read_dir(&dir) {
            for entry in entries.flatten() {
                let name = entry.file_name().to_string_lossy().into_owned();
                let step = name
                    .strip_prefix(&prefix)
                    .and_then(|r| r.strip_suffix(".ckpt"))
                    .and_then(|s| s.parse::<u64>().ok());
                if let Some(step) = step {
                    if best.as_ref().map_or(true, |(b, _)| step > *b) {
                        best = Some((step, entry.path()));
                    }
                }
            }
        }
        best.map(|(_, p)| p).ok_or(CliError::MissingArtifact {
            path: dir.join(format!("{prefix}<step>.ckpt")),
            producer: stage,
        })
    }

    /// Loads the latest checkpoint of `role` written by `stage`, refusing one
    /// stamped with another configuration.
    pub fn load_checkpoint(&self, stage: Stage, role: Role) -> Result<Checkpoint> {
        let path = self.latest_checkpoint_path(stage, role)?;
        let ckpt = Checkpoint::load(&path)?;
        if ckpt.manifest.config_hash != self.hash {
            return Err(CliError::HashMismatch {
                path,
                found: ckpt.manifest.config_hash,
                expected: self.hash.clone(),
            });
        }
        Ok(ckpt)
    }

    /// Deletes checkpoints of `role` in `stage` other than `keep`.
    pub fn prune_checkpoints(&self, stage: Stage, role: Role, keep: &Path) -> Result<()> {
        let prefix = format!("{}_", role.as_str());
        let dir = self.stage_dir(stage);
        for entry in fs::read_dir(&dir).map_err(|e| plr_core::Error::io(&dir, e))?.flatten() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if name.starts_with(&prefix) && name.ends_with(".ckpt") && entry.path() != keep {
                fs::remove_file(entry.path()).map_err(|e| plr_core::Error::io(entry.path(), e))?;
            }
        }
        Ok(())
    }

    pub fn save_labels(&self, stage: Stage, file: &str, labels: &PseudoLabelFile) -> Result<PathBuf> {
        self.write_text(stage, file, &labels.to_string())
    }

    /// Loads a label sidecar, checking its provenance carries this run's hash.
    pub fn load_labels(&self, stage: Stage, file: &str) -> Result<PseudoLabelFile> {
        let path = self.path(stage, file);
        let labels: PseudoLabelFile = read_text(&path, stage)?.parse()?;
        let stamp = labels.provenance.rsplit('@').next().unwrap_or("");
        if stamp != self.hash {
            return Err(CliError::HashMismatch {
                path,
                found: stamp.to_string(),
                expected: self.hash.clone(),
            });
        }
        Ok(labels)
    }

    pub fn save_report(&self, stage: Stage, file: &str, report: &EvalReport) -> Result<PathBuf> {
        self.write_text(stage, file, &format!("config_hash={}\n{report}", self.hash))
    }

    /// Loads a report, checking the `config_hash` line written by [`Self::save_report`].
    pub fn load_report(&self, stage: Stage, file: &str) -> Result<EvalReport> {
        let path = self.path(stage, file);
        let text = read_text(&path, stage)?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let found = first.strip_prefix("config_hash=").unwrap_or("").trim();
        if found != self.hash {
            return Err(CliError::HashMismatch {
                path,
                found: found.to_string(),
                expected: self.hash.clone(),
            });
        }
        Ok(rest.parse()?)
    }

    /// Whether the manifest records `stage` as completed and its directory still exists.
    pub fn completed(&self, stage: Stage) -> bool {
        let prefix = format!("stage={} ", stage.name());
        self.stage_dir(stage).is_dir()
            && !self.path(stage, INCOMPLETE).exists()
            && fs::read_to_string(self.root.join("run_manifest.txt"))
                .map(|m| m.lines().any(|l| l.starts_with(&prefix)))
                .unwrap_or(false)
    }

    /// Appends one line describing a completed stage.
    pub fn record(&self, stage: Stage, started: SystemTime, wall: Duration, artifacts: &[PathBuf]) -> Result<()> {
        let path = self.root.join("run_manifest.txt");
        let started = started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let list: Vec<String> = artifacts.iter().map(|p| p.display().to_string()).collect();
        let line = format!(
            "stage={} config_hash={} started_unix={} wall_seconds={:.3} artifacts={}\n",
            stage.name(),
            self.hash,
            started,
            wall.as_secs_f64(),
            list.join(";")
        );
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| plr_core::Error::io(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| plr_core::Error::io(&path, e))?;
        let marker = self.path(stage, INCOMPLETE);
        if marker.exists() {
            fs::remove_file(&marker).map_err(|e| plr_core::Error::io(&marker, e))?;
        }
        Ok(())
    }
}

/// Canonical configuration without the location keys, which do not enter the hash.
fn hashed_canonical(cfg: &ExperimentConfig) -> String {
    cfg.canonical()
        .lines()
        .filter(|l| !l.starts_with("data_root=") && !l.starts_with("out_dir="))
        .map(|l| format!("{l}\n"))
        .collect()
}
