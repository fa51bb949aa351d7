//! Recorded frame files played back with their original timing.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use log::warn;
use thiserror::Error;

use super::frame::parse_frame;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An NDJSON recording. Lines are kept verbatim, including ones that do not
/// parse: those are sent in place, paced with the frame before them, and
/// left for the receiver to reject.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Recording {
    frames: Vec<(Option<i64>, String)>,
    malformed: Vec<usize>,
}

impl Recording {
    pub fn from_reader(reader: impl BufRead) -> Result<Self, ReplayError> {
        let mut rec = Self::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let t = match parse_frame(&line) {
                Ok(frame) => Some(frame.t_ms),
                Err(e) => {
                    warn!("line {}: {e}", i + 1);
                    rec.malformed.push(i + 1);
                    None
                }
            };
            rec.frames.push((t, line));
        }
        Ok(rec)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ReplayError> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// 1-based line numbers that failed to parse.
    pub fn malformed(&self) -> &[usize] {
        &self.malformed
    }

    pub fn lines(&self) -> impl Iterator<Item = &str> {
        self.frames.iter().map(|(_, l)| l.as_str())
    }

    /// Offsets from the first frame, scaled by `1 / speed`. An infinite
    /// speed gives all-zero offsets.
    pub fn schedule(&self, speed: f64) -> Result<Vec<(Duration, &str)>, ReplayError> {
        if !(speed > 0.0) {
            return Err(ReplayError::BadSpeed(speed));
        }
        let t0 = self.frames.iter().find_map(|f| f.0).unwrap_or(0);
        let mut last = t0;
        Ok(self
            .frames
            .iter()
            .map(|(t, line)| {
                last = t.unwrap_or(last);
                let ms = (last - t0).max(0) as f64 / speed;
                let offset = if ms.is_finite() { Duration::from_secs_f64(ms / 1000.0) } else { Duration::ZERO };
                (offset, line.as_str())
            })
            .collect())
    }

    /// Paced iterator over the lines. Each item is yielded no earlier than
    /// its scheduled offset from the first call to `next`.
    pub fn replay(&self, speed: f64) -> Result<Replay<'_>, ReplayError> {
        Ok(Replay {
            schedule: self.schedule(speed)?.into_iter(),
            started: None,
        })
    }
}

pub struct Replay<'a> {
    schedule: std::vec::IntoIter<(Duration, &'a str)>,
    started: Option<Instant>,
}

impl<'a> Iterator for Replay<'a> {
    type Item = &'a str;

    fn next(&mut self) -> Option<&'a str> {
        let (offset, line) = self.schedule.next()?;
        let start = *self.started.get_or_insert_with(Instant::now);
        if let Some(wait) = offset.checked_sub(start.elapsed()) {
            if !wait.is_zero() {
                thread::sleep(wait);
            }
        }
        Some(line)
    }
}

/// Loads `path` and returns its lines paced at `speed`.
pub fn replay(path: impl AsRef<Path>, speed: f64) -> Result<Vec<(Duration, String)>, ReplayError> {
    let rec = Recording::from_path(path)?;
    Ok(rec
        .schedule(speed)?
        .into_iter()
        .map(|(d, l)| (d, l.to_owned()))
        .collect())
}
