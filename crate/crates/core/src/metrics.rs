//! Per-epoch training metrics and their CSV representation.
//!
//! The CSV schema is a stability contract: exactly the [`EpochRecord`] fields
//! in declared order, comma-separated, '.'-decimal, one header row. Rows are
//! flushed as they are written so an aborted run leaves a valid partial file.

use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

/// One training epoch's observables.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    /// Seconds since the run started (the only column allowed to differ
    /// between reruns of a seeded experiment).
    pub wallclock_s: f64,
    /// Exact W1 between fresh generated and data minibatches.
    pub w1_minibatch: f64,
    /// `mean phi(gen) − mean phi(data)` on the metric batches.
    pub critic_objective: f64,
    /// Penalty value from the last critic step of the epoch.
    pub penalty: f64,
    pub k: u64,
    pub epsilon: f64,
    pub seed: u64,
    /// Training mode tag (`w1fe`, `wgan`, `wgan_persistent`, `particle`).
    pub mode: String,
}

/// Header row, fixed order.
pub const CSV_HEADER: &str =
    "epoch,wallclock_s,w1_minibatch,critic_objective,penalty,K,epsilon,seed,mode";

impl EpochRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.wallclock_s,
            self.w1_minibatch,
            self.critic_objective,
            self.penalty,
            self.k,
            self.epsilon,
            self.seed,
            self.mode
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::invalid(format!(
                "expected 9 CSV fields, found {} in {line:?}",
                fields.len()
            )));
        }
        let int = |s: &str, name: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::invalid(format!("bad {name} field {s:?}")))
        };
        let num = |s: &str, name: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::invalid(format!("bad {name} field {s:?}")))
        };
        Ok(EpochRecord {
            epoch: int(fields[0], "epoch")?,
            wallclock_s: num(fields[1], "wallclock_s")?,
            w1_minibatch: num(fields[2], "w1_minibatch")?,
            critic_objective: num(fields[3], "critic_objective")?,
            penalty: num(fields[4], "penalty")?,
            k: int(fields[5], "K")?,
            epsilon: num(fields[6], "epsilon")?,
            seed: int(fields[7], "seed")?,
            mode: fields[8].to_string(),
        })
    }
}

/// Appends records to a CSV file, header first, flushing after every row.
pub struct MetricsWriter {
    out: BufWriter<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{CSV_HEADER}")?;
        out.flush()?;
        Ok(MetricsWriter { out })
    }

    pub fn write(&mut self, rec: &EpochRecord) -> Result<()> {
        writeln!(self.out, "{}", rec.to_csv_row())?;
        self.out.flush()?;
        Ok(())
    }
}

/// Reads a metrics CSV back into records, checking the header.
pub fn read_metrics(path: &Path) -> Result<Vec<EpochRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::invalid(format!(
                "bad metrics header: {other:?}"
            )))
        }
    }
    lines.map(EpochRecord::from_csv_row).collect()
}
