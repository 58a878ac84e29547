use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::Algorithm;
use crate::error::Result;

/// One finished episode of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub phase: usize,
    /// Environment steps taken by the run when the episode ended.
    pub env_step: u64,
    pub episode_return: f64,
    pub episode_length: usize,
    pub mean_mi: Option<f64>,
    pub mean_entropy: Option<f64>,
    pub beta: f64,
    pub value_loss: Option<f64>,
    pub q_loss: Option<f64>,
    pub policy_loss: Option<f64>,
}

/// Streams rows to a CSV file as they are produced.
pub struct MetricWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = BufWriter::new(File::create(path)?);
        Ok(Self {
            inner: csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(file),
        })
    }

    pub fn write(&mut self, row: &MetricRow) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut w = MetricWriter::create(path)?;
    for r in rows {
        w.write(r)?;
    }
    w.flush()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

/// Reads a headered CSV written by [`write_csv`].
pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Into::into)).collect()
}

/// Writes any serializable rows as LF-terminated CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
