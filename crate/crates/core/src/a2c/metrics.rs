use std::io::Write;

use crate::error::Result;

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    /// Environment steps so far, summed over instances.
    pub step: usize,
    pub wall_ms: u128,
    pub strategy: String,
    pub seed: u64,
    /// Mean undiscounted per-agent return over the episodes finished since the
    /// previous row; NaN when none finished.
    pub mean_return: f64,
    pub per_type_return: Vec<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
}

/// CSV sink for [`MetricRow`]s.
pub struct MetricsCsv<W: Write> {
    out: W,
    n_types: usize,
}

impl<W: Write> MetricsCsv<W> {
    pub fn new(mut out: W, n_types: usize) -> Result<Self> {
        let mut header = String::from("step,wall_ms,strategy,seed,mean_return");
        for t in 0..n_types {
            header.push_str(&format!(",per_type_return_{t}"));
        }
        header.push_str(",policy_loss,value_loss,entropy");
        writeln!(out, "{header}")?;
        Ok(Self { out, n_types })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        let mut line = format!(
            "{},{},{},{},{}",
            row.step, row.wall_ms, row.strategy, row.seed, row.mean_return
        );
        for t in 0..self.n_types {
            line.push_str(&format!(",{}", row.per_type_return.get(t).copied().unwrap_or(f64::NAN)));
        }
        line.push_str(&format!(",{},{},{}", row.policy_loss, row.value_loss, row.entropy));
        writeln!(self.out, "{line}")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
