//! Labeled distance datasets as CSV.
//!
//! The header is mandatory so columns cannot be swapped silently:
//!
//! ```text
//! left,middle,right,diag1,diag2,label[,source]
//! 30.06659,29.123,28.01785,31.38471,33.10589,1
//! ```
//!
//! `label` is 1 for open, 0 for closed. The optional `source` column names
//! the recording a row came from, so validation splits can hold out whole
//! recordings.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::classifier::{LipsState, Sample};

pub const DATASET_HEADER: [&str; 6] = ["left", "middle", "right", "diag1", "diag2", "label"];
const SOURCE_COLUMN: &str = "source";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetRow {
    pub left: f64,
    pub middle: f64,
    pub right: f64,
    pub diag1: f64,
    pub diag2: f64,
    pub label: LipsState,
    pub source: Option<u32>,
}

impl DatasetRow {
    pub fn distances(&self) -> [f64; 5] {
        [self.left, self.middle, self.right, self.diag1, self.diag2]
    }

    pub fn to_sample(&self) -> Sample {
        let s = Sample::new(self.distances(), self.label);
        match self.source {
            Some(src) => s.with_source(src),
            None => s,
        }
    }

    pub fn from_sample(s: &Sample) -> Self {
        let [left, middle, right, diag1, diag2] = s.x;
        Self {
            left,
            middle,
            right,
            diag1,
            diag2,
            label: s.label,
            source: s.source,
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset header must be {:?}", DATASET_HEADER.join(","))]
    MissingHeader,
    #[error("bad row at line {line}: {reason}")]
    BadRow { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn bad(line: u64, reason: impl Into<String>) -> DatasetError {
    DatasetError::BadRow {
        line,
        reason: reason.into(),
    }
}

pub fn read_dataset(reader: impl Read) -> Result<Vec<DatasetRow>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|_| DatasetError::MissingHeader)?.clone();
    let with_source = match header.len() {
        6 => false,
        7 if &header[6] == SOURCE_COLUMN => true,
        _ => return Err(DatasetError::MissingHeader),
    };
    if header.iter().zip(DATASET_HEADER).any(|(got, want)| got != want) {
        return Err(DatasetError::MissingHeader);
    }

    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            bad(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut d = [0.0; 5];
        for (k, slot) in d.iter_mut().enumerate() {
            let v: f64 = record[k]
                .parse()
                .map_err(|_| bad(line, format!("{} is not a number", DATASET_HEADER[k])))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(line, format!("{} must be a finite length", DATASET_HEADER[k])));
            }
            *slot = v;
        }
        let label = match &record[5] {
            "0" => LipsState::Closed,
            "1" => LipsState::Open,
            other => return Err(bad(line, format!("label {other:?} is not 0 or 1"))),
        };
        let source = if with_source && !record[6].is_empty() {
            Some(record[6].parse().map_err(|_| bad(line, "source must be an integer"))?)
        } else {
            None
        };
        let [left, middle, right, diag1, diag2] = d;
        rows.push(DatasetRow {
            left,
            middle,
            right,
            diag1,
            diag2,
            label,
            source,
        });
    }
    Ok(rows)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRow>, DatasetError> {
    read_dataset(File::open(path)?)
}

/// Writes rows with the mandatory header; adds `source` when any row has one.
pub fn write_dataset(writer: impl Write, rows: &[DatasetRow]) -> Result<(), DatasetError> {
    let with_source = rows.iter().any(|r| r.source.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = DATASET_HEADER.to_vec();
    if with_source {
        header.push(SOURCE_COLUMN);
    }
    let to_io = |e: csv::Error| DatasetError::Io(e.into());
    w.write_record(&header).map_err(to_io)?;
    for r in rows {
        let mut rec: Vec<String> = r.distances().iter().map(f64::to_string).collect();
        rec.push(r.label.as_bit().to_string());
        if with_source {
            rec.push(r.source.map(|s| s.to_string()).unwrap_or_default());
        }
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, rows: &[DatasetRow]) -> Result<(), DatasetError> {
    write_dataset(File::create(path)?, rows)
}
