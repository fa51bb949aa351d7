//! The full per-frame path: landmark selection, features, classification,
//! debouncing and slot decoding.

use std::io::BufRead;

use log::warn;
use thiserror::Error;

use crate::classifier::{predict, LipsState, TrainedModel};
use crate::engine::{EngineConfig, EngineError, EngineState};
use crate::features::{extract, FeatureError};
use crate::io::feed::FeedMessage;
use crate::io::frame::{parse_frame, FrameError};
use crate::landmarks::{select_lip_landmarks, validate_frame, LandmarkError, LandmarkFrame, SchemeRegistry};
use crate::slots::{Command, SlotOutput, SlotTracker};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Landmark(#[from] LandmarkError),
    #[error("unknown detector scheme {0:?}")]
    UnknownScheme(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineStats {
    /// Frames that made it through to the engine.
    pub frames: u64,
    /// Lines or frames rejected anywhere along the way.
    pub errors: u64,
    pub actions: u64,
    pub commands: u64,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    model: TrainedModel,
    schemes: SchemeRegistry,
    engine_cfg: EngineConfig,
    engine: EngineState,
    tracker: SlotTracker,
    reported: Option<LipsState>,
    stats: PipelineStats,
}

impl Pipeline {
    pub fn new(
        model: TrainedModel,
        schemes: SchemeRegistry,
        engine_cfg: EngineConfig,
        tracker: SlotTracker,
    ) -> Result<Self, EngineError> {
        engine_cfg.validate()?;
        Ok(Self {
            model,
            schemes,
            engine_cfg,
            engine: EngineState::new(),
            tracker,
            reported: None,
            stats: PipelineStats::default(),
        })
    }

    pub fn stats(&self) -> PipelineStats {
        self.stats
    }

    pub fn model(&self) -> &TrainedModel {
        &self.model
    }

    pub fn engine(&self) -> &EngineState {
        &self.engine
    }

    /// Back to unknown state and an idle slot clock. Counters are kept.
    pub fn reset(&mut self) {
        self.engine = EngineState::new();
        self.tracker.reset();
        self.reported = None;
    }

    /// Runs one frame. On error nothing but the error counter changes.
    pub fn process_frame(&mut self, frame: LandmarkFrame) -> Result<Vec<FeedMessage>, PipelineError> {
        let result = self.step(frame);
        match &result {
            Ok(_) => self.stats.frames += 1,
            Err(_) => self.stats.errors += 1,
        }
        result
    }

    fn step(&mut self, frame: LandmarkFrame) -> Result<Vec<FeedMessage>, PipelineError> {
        let frame = validate_frame(frame)?;
        let scheme = self
            .schemes
            .get(&frame.scheme)
            .ok_or_else(|| PipelineError::UnknownScheme(frame.scheme.clone()))?;
        let lips = select_lip_landmarks(&frame, scheme)?;
        let fv = extract(&lips, &self.model.coeffs, self.model.norm_mode)?;
        let pred = predict(&self.model, &fv);
        let (engine, out) = self
            .engine
            .advance(&self.engine_cfg, pred.label, frame.t_ms, pred.score)?;
        self.engine = engine;

        let mut messages = Vec::new();
        if let Some(s) = out.settled {
            if self.reported != Some(s.state) {
                self.reported = Some(s.state);
                messages.push(FeedMessage::State {
                    t_ms: s.t_ms,
                    state: s.state,
                    score: s.score,
                });
            }
        }
        if out.event.is_some() {
            self.stats.actions += 1;
        }
        let horizon = engine.pending_since().unwrap_or(frame.t_ms);
        for o in self.tracker.observe(&out.changes, out.event, horizon) {
            match o {
                SlotOutput::Progress {
                    slot_id,
                    bits,
                    progress,
                } => messages.push(FeedMessage::Slot {
                    slot_id,
                    bits,
                    progress,
                }),
                SlotOutput::Complete {
                    symbol,
                    command: Command::Named(name),
                } => {
                    self.stats.commands += 1;
                    messages.push(FeedMessage::Command {
                        slot_id: symbol.slot_id,
                        value: symbol.value,
                        name,
                    });
                }
                SlotOutput::Complete { .. } => {}
            }
        }
        Ok(messages)
    }

    /// Parses and runs one frame line, logging and counting failures.
    pub fn process_line(&mut self, line: &str) -> Vec<FeedMessage> {
        let result = match parse_frame(line) {
            Ok(frame) => self.process_frame(frame),
            Err(e) => {
                self.stats.errors += 1;
                Err(e.into())
            }
        };
        result.unwrap_or_else(|e| {
            warn!("skipping frame: {e}");
            Vec::new()
        })
    }

    /// Offline batch run over every non-blank line.
    pub fn process_lines<'a>(&mut self, lines: impl IntoIterator<Item = &'a str>) -> Vec<FeedMessage> {
        lines
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .flat_map(|l| self.process_line(l))
            .collect()
    }

    pub fn process_reader(&mut self, reader: impl BufRead) -> std::io::Result<Vec<FeedMessage>> {
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.extend(self.process_line(&line));
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{ModelParams, SvmParams};
    use crate::features::{CoeffSet, NormMode};
    use crate::io::frame::serialize_frame;
    use crate::landmarks::{LipPoints, LipRole, Point, RawLandmark, FACEMESH468};
    use crate::slots::{Codebook, SlotConfig, SlotMode};

    // open iff the middle gap exceeds 22
    fn gap_model() -> TrainedModel {
        TrainedModel::new(
            ModelParams::Svm(SvmParams {
                w: [0.0, 1.0, 0.0, 0.0, 0.0],
                b: -22.0,
            }),
            CoeffSet::default(),
            NormMode::None,
            0.5,
        )
    }

    fn frame(t_ms: i64, gap: f64) -> LandmarkFrame {
        let pts = LipPoints::from_fn(|role| {
            let x = match role {
                LipRole::U1 | LipRole::L1 => -6.0,
                LipRole::U2 | LipRole::L2 => 0.0,
                LipRole::U3 | LipRole::L3 => 6.0,
            };
            let upper = matches!(role, LipRole::U1 | LipRole::U2 | LipRole::U3);
            Point::new(x, if upper { 0.0 } else { gap })
        });
        LandmarkFrame {
            version: 1,
            t_ms,
            src: "test".into(),
            scheme: FACEMESH468.into(),
            raw: None,
            pts: Some(pts),
        }
    }

    fn pipeline(n_a: u32, book: Codebook) -> Pipeline {
        let cfg = SlotConfig::new(300, n_a, SlotMode::Bits).unwrap();
        Pipeline::new(
            gap_model(),
            SchemeRegistry::default(),
            EngineConfig::default(),
            SlotTracker::new(cfg, book).unwrap(),
        )
        .unwrap()
    }

    // 30 ms frames; open for [open_from, open_to)
    fn script(open_from: i64, open_to: i64, until: i64) -> Vec<String> {
        (0..until / 30)
            .map(|k| {
                let t = k * 30;
                let gap = if (open_from..open_to).contains(&t) { 30.0 } else { 17.0 };
                serialize_frame(&frame(t, gap))
            })
            .collect()
    }

    #[test]
    fn open_close_cycle_yields_states_slots_and_command() {
        let book = Codebook::new(SlotMode::Bits, 2, [(2, "YES".to_string())].into()).unwrap();
        let mut p = pipeline(2, book);
        let lines = script(300, 600, 1200);
        let msgs = p.process_lines(lines.iter().map(String::as_str));
        let states: Vec<_> = msgs
            .iter()
            .filter_map(|m| match m {
                FeedMessage::State { t_ms, state, .. } => Some((*t_ms, *state)),
                _ => None,
            })
            .collect();
        assert_eq!(
            states,
            vec![(0, LipsState::Closed), (300, LipsState::Open), (600, LipsState::Closed)]
        );
        let rest: Vec<_> = msgs.iter().filter(|m| !matches!(m, FeedMessage::State { .. })).cloned().collect();
        assert_eq!(
            rest,
            vec![
                FeedMessage::Slot { slot_id: 0, bits: "1".into(), progress: 0.5 },
                FeedMessage::Slot { slot_id: 0, bits: "10".into(), progress: 1.0 },
                FeedMessage::Command { slot_id: 0, value: 2, name: "YES".into() },
            ]
        );
        assert_eq!(p.stats().actions, 2);
        assert_eq!(p.stats().commands, 1);
    }

    #[test]
    fn unmapped_symbol_sends_no_command() {
        let mut p = pipeline(2, Codebook::new(SlotMode::Bits, 2, Default::default()).unwrap());
        let lines = script(300, 600, 1200);
        let msgs = p.process_lines(lines.iter().map(String::as_str));
        assert!(msgs.iter().all(|m| !matches!(m, FeedMessage::Command { .. })));
        assert_eq!(msgs.iter().filter(|m| matches!(m, FeedMessage::Slot { .. })).count(), 2);
    }

    #[test]
    fn malformed_lines_change_nothing() {
        let book = Codebook::identity(SlotMode::Bits, 2);
        let lines = script(300, 600, 1500);
        let mut clean = pipeline(2, book.clone());
        let expected = clean.process_lines(lines.iter().map(String::as_str));

        let mut noisy = pipeline(2, book);
        let mut got = Vec::new();
        let garbage = [
            "{not json".to_string(),
            r#"{"v":1,"src":"x","scheme":"facemesh468","pts":{}}"#.to_string(),
            serialize_frame(&LandmarkFrame { scheme: "nope".into(), ..frame(10, 30.0) }),
            // time travel is rejected by the engine
            serialize_frame(&frame(-100, 30.0)),
            serialize_frame(&LandmarkFrame {
                pts: None,
                raw: Some(vec![RawLandmark { index: 0, point: Point::new(0.0, 0.0) }]),
                ..frame(10, 30.0)
            }),
        ];
        for (k, l) in lines.iter().enumerate() {
            got.extend(noisy.process_line(l));
            if k > 0 && k % 7 == 0 {
                for g in &garbage {
                    got.extend(noisy.process_line(g));
                }
            }
        }
        assert_eq!(got, expected);
        assert_eq!(noisy.stats().frames, clean.stats().frames);
        assert_eq!(noisy.stats().errors, 5 * 7);
    }

    #[test]
    fn reset_forgets_state() {
        let mut p = pipeline(2, Codebook::identity(SlotMode::Bits, 2));
        let lines = script(300, 600, 900);
        let first = p.process_lines(lines.iter().map(String::as_str));
        p.reset();
        // same timestamps again after a reconnect
        let second = p.process_lines(lines.iter().map(String::as_str));
        assert_eq!(first, second);
    }
}
