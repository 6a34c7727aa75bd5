//! Pseudo-label sidecar: a `provenance=<checkpoint-id>` header, then one
//! class index per line.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PseudoLabelFile {
    pub provenance: String,
    pub labels: Vec<usize>,
}

impl fmt::Display for PseudoLabelFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "provenance={}", self.provenance)?;
        for l in &self.labels {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

impl FromStr for PseudoLabelFile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("pseudo-labels", "empty file"))?;
        let provenance = header
            .strip_prefix("provenance=")
            .map(str::trim)
            .filter(|p| !p.is_empty() && !p.contains(char::is_whitespace))
            .ok_or_else(|| Error::format("pseudo-labels", format!("bad header {header:?}")))?
            .to_string();
        let labels = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<usize>().map_err(|_| {
                    Error::format("pseudo-labels", format!("line {}: bad label {l:?}", i + 2))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { provenance, labels })
    }
}
