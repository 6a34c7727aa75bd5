//! Training metrics as append-only CSV.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const HEADER: &str = "step,test_acc,delta_A,loss_C,loss_D,loss_G";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub test_acc: f64,
    pub delta_a: f64,
    pub loss_c: f64,
    pub loss_d: f64,
    pub loss_g: f64,
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.step, self.test_acc, self.delta_a, self.loss_c, self.loss_d, self.loss_g
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.to_csv_line());
        }
        out
    }

    /// Appends one row to `path`, writing the header first if the file is new or empty.
    pub fn append_row(path: &Path, row: &MetricsRow) -> Result<()> {
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
        let mut text = String::new();
        if empty {
            text.push_str(HEADER);
            text.push('\n');
        }
        text.push_str(&row.to_csv_line());
        text.push('\n');
        file.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }
}

impl FromStr for MetricsLog {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == HEADER => {}
            other => {
                return Err(Error::format(
                    "metrics csv",
                    format!("expected header {HEADER:?}, got {other:?}"),
                ))
            }
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let err = || Error::format("metrics csv", format!("row {}: {line:?}", i + 1));
            if fields.len() != 6 {
                return Err(err());
            }
            let num = |k: usize| fields[k].parse::<f64>().map_err(|_| err());
            rows.push(MetricsRow {
                step: fields[0].parse().map_err(|_| err())?,
                test_acc: num(1)?,
                delta_a: num(2)?,
                loss_c: num(3)?,
                loss_d: num(4)?,
                loss_g: num(5)?,
            });
        }
        Ok(Self { rows })
    }
}
