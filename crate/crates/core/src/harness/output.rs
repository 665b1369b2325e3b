use std::io::{BufRead, Write};

use serde::Serialize;

use super::{HarnessError, MetricRow};
use crate::models::Sample;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub problem_id: usize,
    pub iteration: usize,
    pub variable: String,
    pub metric: String,
    pub value: f64,
}

impl TraceRow {
    pub fn new(problem_id: usize, iteration: usize, variable: &str, metric: String, value: f64) -> Self {
        TraceRow {
            problem_id,
            iteration,
            variable: variable.to_string(),
            metric,
            value,
        }
    }
}

fn write_csv<T: Serialize>(w: impl Write, rows: &[T]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| HarnessError::Runtime(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Columns: arm, problem_id, iteration, metric, value.
pub fn write_metrics_csv(w: impl Write, rows: &[MetricRow]) -> Result<(), HarnessError> {
    write_csv(w, rows)
}

/// Columns: problem_id, iteration, variable, metric, value.
pub fn write_trace_csv(w: impl Write, rows: &[TraceRow]) -> Result<(), HarnessError> {
    write_csv(w, rows)
}

/// One sample per line.
pub fn write_samples(mut w: impl Write, samples: &[Sample]) -> Result<(), HarnessError> {
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_samples(r: impl BufRead) -> Result<Vec<Sample>, HarnessError> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| HarnessError::Config(format!("dataset line {}: {e}", k + 1)))?,
        );
    }
    Ok(out)
}
