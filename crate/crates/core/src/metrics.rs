//! Training progress as CSV rows: `phase,index,loss,score,wall_ms`.
//!
//! `score` is training accuracy for supervised epochs and success rate
//! for reinforcement-learning checkpoints.

use std::io::Write;
use std::time::Instant;

use crate::error::{Error, Result};

pub const HEADER: &str = "phase,index,loss,score,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub phase: &'static str,
    pub index: usize,
    pub loss: Option<f64>,
    pub score: Option<f64>,
    pub wall_ms: u128,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.phase,
            self.index,
            opt(self.loss),
            opt(self.score),
            self.wall_ms
        )
    }
}

pub trait MetricsSink {
    fn record(&mut self, row: MetricsRow);
}

impl MetricsSink for Vec<MetricsRow> {
    fn record(&mut self, row: MetricsRow) {
        self.push(row);
    }
}

/// Discards everything.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn record(&mut self, _row: MetricsRow) {}
}

/// Writes rows as they arrive. Write errors are kept and reported by
/// [`CsvSink::finish`].
pub struct CsvSink<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(mut out: W) -> Self {
        let error = writeln!(out, "{HEADER}").err();
        CsvSink { out, error }
    }

    pub fn finish(mut self) -> Result<W> {
        if self.error.is_none() {
            self.error = self.out.flush().err();
        }
        match self.error {
            Some(e) => Err(Error::Io {
                context: "metrics".into(),
                source: e,
            }),
            None => Ok(self.out),
        }
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn record(&mut self, row: MetricsRow) {
        if self.error.is_none() {
            self.error = writeln!(self.out, "{}", row.to_csv()).err();
        }
    }
}

/// Milliseconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Self {
        Stopwatch(Instant::now())
    }

    pub fn ms(&self) -> u128 {
        self.0.elapsed().as_millis()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_rows() {
        let mut sink = CsvSink::new(Vec::new());
        sink.record(MetricsRow {
            phase: "sl",
            index: 3,
            loss: Some(1.5),
            score: None,
            wall_ms: 12,
        });
        let text = String::from_utf8(sink.finish().unwrap()).unwrap();
        assert_eq!(text, "phase,index,loss,score,wall_ms\nsl,3,1.500000,,12\n");
    }
}
