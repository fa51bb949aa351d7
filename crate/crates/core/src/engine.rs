//! Debounced open/closed state tracking and action events.
//!
//! The engine holds a stable state and a candidate run of frames whose label
//! differs from it. Once the run reaches `debounce_frames` the stable state
//! switches and, if it was known, an [`ActionEvent`] is emitted stamped with
//! the first frame of the run. A gap longer than `hold_timeout_ms` drops the
//! state back to unknown; the next stable run re-anchors it silently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::LipsState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub debounce_frames: u32,
    pub hold_timeout_ms: i64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            debounce_frames: 2,
            hold_timeout_ms: 1000,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.debounce_frames < 1 {
            return Err(EngineError::BadConfig("debounce_frames must be >= 1".into()));
        }
        if self.hold_timeout_ms <= 0 {
            return Err(EngineError::BadConfig("hold_timeout_ms must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("timestamp {t_ms} precedes previous frame at {last_ms}")]
    NonMonotonicTimestamp { t_ms: i64, last_ms: i64 },
    #[error("invalid engine config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Opened,
    Closed,
}

impl ActionKind {
    pub fn entering(state: LipsState) -> Self {
        match state {
            LipsState::Open => ActionKind::Opened,
            LipsState::Closed => ActionKind::Closed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionEvent {
    pub t_ms: i64,
    pub kind: ActionKind,
}

/// A newly settled stable state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipsStateEvent {
    pub t_ms: i64,
    pub state: LipsState,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Candidate {
    label: LipsState,
    start_ms: i64,
    frames: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EngineState {
    stable: Option<LipsState>,
    candidate: Option<Candidate>,
    last_ms: Option<i64>,
}

/// Everything one step changed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepOutcome {
    /// Stable-state changes in time order; `None` is unknown.
    pub changes: Vec<(i64, Option<LipsState>)>,
    pub settled: Option<LipsStateEvent>,
    pub event: Option<ActionEvent>,
}

impl EngineState {
    /// Unknown state, no history.
    pub fn new() -> Self {
        Self::default()
    }

    /// Already settled in `state`, e.g. for tests that start from rest.
    pub fn settled(state: LipsState) -> Self {
        Self {
            stable: Some(state),
            ..Self::default()
        }
    }

    pub fn stable(&self) -> Option<LipsState> {
        self.stable
    }

    /// Start of the unconfirmed run, if any. Nothing before this instant can
    /// still change.
    pub fn pending_since(&self) -> Option<i64> {
        self.candidate.map(|c| c.start_ms)
    }

    pub fn last_ms(&self) -> Option<i64> {
        self.last_ms
    }

    pub fn advance(
        &self,
        cfg: &EngineConfig,
        label: LipsState,
        t_ms: i64,
        score: f64,
    ) -> Result<(EngineState, StepOutcome), EngineError> {
        let mut next = *self;
        let mut out = StepOutcome::default();
        if let Some(last_ms) = self.last_ms {
            if t_ms < last_ms {
                return Err(EngineError::NonMonotonicTimestamp { t_ms, last_ms });
            }
            if t_ms - last_ms > cfg.hold_timeout_ms {
                if next.stable.is_some() {
                    out.changes.push((last_ms + cfg.hold_timeout_ms, None));
                }
                next.stable = None;
                next.candidate = None;
            }
        }
        next.last_ms = Some(t_ms);

        if next.stable == Some(label) {
            next.candidate = None;
            return Ok((next, out));
        }
        let run = match next.candidate {
            Some(c) if c.label == label => Candidate {
                frames: c.frames + 1,
                ..c
            },
            _ => Candidate {
                label,
                start_ms: t_ms,
                frames: 1,
            },
        };
        if run.frames >= cfg.debounce_frames {
            if next.stable.is_some() {
                out.event = Some(ActionEvent {
                    t_ms: run.start_ms,
                    kind: ActionKind::entering(label),
                });
            }
            out.changes.push((run.start_ms, Some(label)));
            out.settled = Some(LipsStateEvent {
                t_ms: run.start_ms,
                state: label,
                score,
            });
            next.stable = Some(label);
            next.candidate = None;
        } else {
            next.candidate = Some(run);
        }
        Ok((next, out))
    }
}

/// Pure single step: the next state and the action event, if any.
pub fn engine_step(
    state: &EngineState,
    cfg: &EngineConfig,
    label: LipsState,
    t_ms: i64,
    score: f64,
) -> Result<(EngineState, Option<ActionEvent>), EngineError> {
    state
        .advance(cfg, label, t_ms, score)
        .map(|(s, out)| (s, out.event))
}

/// Folds a labeled stream through a fresh engine and collects the events.
pub fn run_engine(
    cfg: &EngineConfig,
    stream: impl IntoIterator<Item = (i64, LipsState)>,
) -> Result<Vec<ActionEvent>, EngineError> {
    let mut state = EngineState::new();
    let mut events = Vec::new();
    for (t, label) in stream {
        let (next, ev) = engine_step(&state, cfg, label, t, 0.0)?;
        state = next;
        events.extend(ev);
    }
    Ok(events)
}

/// Events with `t0 <= t_ms < t1`.
pub fn count_actions(events: &[ActionEvent], t0: i64, t1: i64) -> usize {
    events.iter().filter(|e| e.t_ms >= t0 && e.t_ms < t1).count()
}

/// Samples a ground-truth state function (seconds → state) at `fps` for
/// `duration_s` seconds. Sample `k` is taken at exactly `k / fps` seconds and
/// stamped with that time rounded to whole milliseconds.
pub fn simulate_sampling(
    true_state: impl Fn(f64) -> LipsState,
    fps: f64,
    duration_s: f64,
) -> Vec<(i64, LipsState)> {
    assert!(fps > 0.0, "fps must be positive");
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 / fps;
        if t >= duration_s {
            break;
        }
        out.push(((t * 1000.0).round() as i64, true_state(t)));
        k += 1;
    }
    out
}
