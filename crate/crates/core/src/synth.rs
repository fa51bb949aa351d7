//! Synthetic mouths, sweeps and throughput measurement.
//!
//! The generator draws a planar six-point mouth whose three vertical gaps
//! follow a square wave between a closed and an open amplitude. Head yaw is
//! modelled as foreshortening of x about the mouth center. Within each
//! cycle of length `1 / movement_rate` the mouth is closed for the first
//! quarter, open for the middle half and closed again for the last quarter,
//! so a stream starts at rest and every cycle is one opening plus one
//! closing. A rate of 0 holds the mouth open.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{predict_array, LipsState, Sample, TrainedModel};
use crate::engine::{run_engine, simulate_sampling, ActionKind, EngineConfig, EngineError};
use crate::features::{compute_features, extract, CoeffSet, NormMode};
use crate::landmarks::{
    DetectorScheme, LandmarkFrame, LipLandmarks, LipPoints, LipRole, Point, RawLandmark,
};
use crate::pipeline::Pipeline;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub fps: f64,
    pub duration_s: f64,
    /// Open-close cycles per second.
    pub movement_rate: f64,
    /// Vertical lip gap when open, in pixels.
    pub open_amplitude: f64,
    pub closed_amplitude: f64,
    /// Horizontal distance between the outer points, in pixels.
    pub mouth_width: f64,
    pub yaw_deg: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub scheme: DetectorScheme,
    /// Emit a raw landmark array instead of pre-selected points.
    pub emit_raw: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            duration_s: 10.0,
            movement_rate: 1.0,
            open_amplitude: 30.0,
            closed_amplitude: 17.0,
            mouth_width: 13.5,
            yaw_deg: 0.0,
            noise_sigma: 0.0,
            seed: 0,
            scheme: DetectorScheme::facemesh468(),
            emit_raw: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid synth config: {0}")]
pub struct SynthError(String);

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let fail = |m: &str| Err(SynthError(m.to_string()));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail("fps must be positive");
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return fail("duration must be non-negative");
        }
        if !(self.movement_rate >= 0.0 && self.movement_rate.is_finite()) {
            return fail("movement rate must be non-negative");
        }
        if !(self.open_amplitude >= 0.0 && self.closed_amplitude >= 0.0 && self.mouth_width >= 0.0) {
            return fail("amplitudes and width must be non-negative");
        }
        if !(self.yaw_deg.abs() < 90.0) {
            return fail("yaw must lie strictly between -90 and 90 degrees");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail("noise sigma must be non-negative");
        }
        Ok(())
    }
}

/// Ground-truth state at `t_s` seconds.
pub fn true_state(movement_rate: f64, t_s: f64) -> LipsState {
    if movement_rate == 0.0 {
        return LipsState::Open;
    }
    let phase = (movement_rate * t_s).rem_euclid(1.0);
    if (0.25..0.75).contains(&phase) {
        LipsState::Open
    } else {
        LipsState::Closed
    }
}

/// A true state change, at a fractional millisecond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub t_ms: f64,
    pub kind: ActionKind,
}

/// Every state change in `[0, duration_s)`.
pub fn true_transitions(movement_rate: f64, duration_s: f64) -> Vec<Transition> {
    let mut out = Vec::new();
    if movement_rate == 0.0 {
        return out;
    }
    for cycle in 0.. {
        let base = cycle as f64;
        let open = (base + 0.25) / movement_rate;
        if open >= duration_s {
            break;
        }
        out.push(Transition {
            t_ms: open * 1000.0,
            kind: ActionKind::Opened,
        });
        let close = (base + 0.75) / movement_rate;
        if close < duration_s {
            out.push(Transition {
                t_ms: close * 1000.0,
                kind: ActionKind::Closed,
            });
        }
    }
    out
}

const CENTER: Point = Point::new(320.0, 240.0);

/// Six lip points with per-side vertical gaps `[left, middle, right]`,
/// foreshortened by `yaw_deg`.
pub fn mouth_points(width: f64, gaps: [f64; 3], yaw_deg: f64) -> LipPoints {
    let squash = yaw_deg.to_radians().cos();
    LipPoints::from_fn(|role| {
        let (col, upper) = match role {
            LipRole::U1 => (0, true),
            LipRole::U2 => (1, true),
            LipRole::U3 => (2, true),
            LipRole::L1 => (0, false),
            LipRole::L2 => (1, false),
            LipRole::L3 => (2, false),
        };
        let x = (col as f64 - 1.0) * width / 2.0;
        let half = gaps[col] / 2.0;
        Point::new(
            CENTER.x + x * squash,
            if upper { CENTER.y - half } else { CENTER.y + half },
        )
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStream {
    pub frames: Vec<LandmarkFrame>,
    /// Ground truth per frame.
    pub labels: Vec<LipsState>,
    pub transitions: Vec<Transition>,
}

/// Deterministic in `cfg`, seed included.
pub fn synth_stream(cfg: &SynthConfig) -> Result<SynthStream, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = (cfg.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, cfg.noise_sigma).expect("sigma checked"));
    let samples = simulate_sampling(|t| true_state(cfg.movement_rate, t), cfg.fps, cfg.duration_s);

    let mut frames = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len());
    for (t_ms, label) in samples {
        let gap = match label {
            LipsState::Open => cfg.open_amplitude,
            LipsState::Closed => cfg.closed_amplitude,
        };
        let mut pts = mouth_points(cfg.mouth_width, [gap; 3], cfg.yaw_deg);
        if let Some(n) = &noise {
            for role in LipRole::ALL {
                let p = pts[role];
                pts.set(role, Point::new(p.x + n.sample(&mut rng), p.y + n.sample(&mut rng)));
            }
        }
        let (pts, raw) = if cfg.emit_raw {
            let raw = LipRole::ALL
                .iter()
                .map(|&role| RawLandmark {
                    index: cfg.scheme.raw_index(role),
                    point: pts[role],
                })
                .collect();
            (None, Some(raw))
        } else {
            (Some(pts), None)
        };
        frames.push(LandmarkFrame {
            version: 1,
            t_ms,
            src: "synth".into(),
            scheme: cfg.scheme.name().to_owned(),
            raw,
            pts,
        });
        labels.push(label);
    }
    Ok(SynthStream {
        frames,
        labels,
        transitions: true_transitions(cfg.movement_rate, cfg.duration_s),
    })
}

/// Feature samples for a stream of pre-selected points.
pub fn stream_samples(stream: &SynthStream, coeffs: &CoeffSet, norm: NormMode) -> Vec<Sample> {
    stream
        .frames
        .iter()
        .zip(&stream.labels)
        .filter_map(|(f, &label)| {
            let lips = LipLandmarks::new(f.pts?, f.t_ms);
            let fv = extract(&lips, coeffs, norm).ok()?;
            Some(Sample::from_features(&fv, label))
        })
        .collect()
}

/// Balanced distance dataset with the spread of hand-labeled webcam data:
/// closed gaps around 15 to 20 px, open gaps around 26 to 36 px, per-side
/// jitter, mouth widths of 11 to 16 px and a small lower-lip skew.
pub fn synth_dataset(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { LipsState::Closed } else { LipsState::Open };
            let base = match label {
                LipsState::Closed => rng.random_range(15.5..19.0),
                LipsState::Open => rng.random_range(27.0..35.0),
            };
            let gaps = [(); 3].map(|_| base + rng.random_range(-1.0..1.0));
            let width = rng.random_range(11.0..16.0);
            let skew = rng.random_range(-1.0..1.0);
            let mut pts = mouth_points(width, gaps, 0.0);
            for role in [LipRole::L1, LipRole::L2, LipRole::L3] {
                let p = pts[role];
                pts.set(role, Point::new(p.x + skew, p.y));
            }
            let fv = compute_features(&LipLandmarks::new(pts, 0), &CoeffSet::default())
                .expect("finite geometry");
            Sample::from_features(&fv, label)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// `confusion[truth][predicted]`, index 0 closed, 1 open.
    pub confusion: [[u64; 2]; 2],
    pub samples: u64,
}

/// Per-sample accuracy and confusion of `model` on `samples`.
pub fn evaluate(model: &TrainedModel, samples: &[Sample]) -> Metrics {
    metrics_from_pairs(
        samples
            .iter()
            .map(|s| (s.label, predict_array(model, &s.x).label)),
    )
}

/// Metrics from `(truth, predicted)` pairs.
pub fn metrics_from_pairs(pairs: impl IntoIterator<Item = (LipsState, LipsState)>) -> Metrics {
    let mut confusion = [[0u64; 2]; 2];
    for (truth, pred) in pairs {
        confusion[truth.as_bit() as usize][pred.as_bit() as usize] += 1;
    }
    let samples: u64 = confusion.iter().flatten().sum();
    let correct = confusion[0][0] + confusion[1][1];
    Metrics {
        accuracy: if samples == 0 { 0.0 } else { correct as f64 / samples as f64 },
        confusion,
        samples,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleRow {
    pub yaw_deg: f64,
    pub accuracy: f64,
    pub frames: u64,
}

/// Per-frame accuracy of `model` on streams that differ from `base` only in
/// yaw.
pub fn angle_sweep(model: &TrainedModel, yaws: &[f64], base: &SynthConfig) -> Result<Vec<AngleRow>, SynthError> {
    yaws.iter()
        .map(|&yaw| {
            let stream = synth_stream(&SynthConfig {
                yaw_deg: yaw,
                emit_raw: false,
                ..base.clone()
            })?;
            let m = evaluate(model, &stream_samples(&stream, &model.coeffs, model.norm_mode));
            Ok(AngleRow {
                yaw_deg: yaw,
                accuracy: m.accuracy,
                frames: m.samples,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRow {
    pub movement_rate: f64,
    pub events_true: u64,
    pub events_detected: u64,
    pub recall: f64,
}

/// Matches detections to true transitions in time order. A detection
/// counts for a transition of the same kind when it is stamped no earlier
/// than the transition and within one frame period after it (plus 1 ms for
/// timestamp rounding). Returns the number of matched transitions.
pub fn match_transitions(truth: &[Transition], detected: &[(i64, ActionKind)], fps: f64) -> u64 {
    let window = 1000.0 / fps + 1.0;
    let mut used = vec![false; detected.len()];
    let mut matched = 0;
    for tr in truth {
        let hit = detected.iter().enumerate().position(|(i, &(t, kind))| {
            let t = t as f64;
            !used[i] && kind == tr.kind && t >= tr.t_ms - 1.0 && t <= tr.t_ms + window
        });
        if let Some(i) = hit {
            used[i] = true;
            matched += 1;
        }
    }
    matched
}

/// Fraction of true transitions the engine recovers from perfectly
/// classified frames sampled at `fps`. Transitions too close to the end of
/// the stream to collect `debounce_frames` samples are not counted.
pub fn rate_sweep(
    engine: &EngineConfig,
    fps: f64,
    rates: &[f64],
    duration_s: f64,
) -> Result<Vec<RateRow>, EngineError> {
    rates
        .iter()
        .map(|&rate| {
            let stream = simulate_sampling(|t| true_state(rate, t), fps, duration_s);
            let events = run_engine(engine, stream)?;
            let confirm_ms = engine.debounce_frames as f64 * 1000.0 / fps;
            let truth: Vec<_> = true_transitions(rate, duration_s)
                .into_iter()
                .filter(|t| t.t_ms + confirm_ms <= duration_s * 1000.0)
                .collect();
            let detected: Vec<_> = events.iter().map(|e| (e.t_ms, e.kind)).collect();
            let matched = match_transitions(&truth, &detected, fps);
            Ok(RateRow {
                movement_rate: rate,
                events_true: truth.len() as u64,
                events_detected: events.len() as u64,
                recall: if truth.is_empty() { 1.0 } else { matched as f64 / truth.len() as f64 },
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: u64,
    pub elapsed_s: f64,
    pub frames_per_second: f64,
    pub mean_latency_us: f64,
    pub p99_latency_us: f64,
    pub messages: u64,
}

/// Times `pipeline` over pre-parsed `frames`.
pub fn bench_throughput(pipeline: &mut Pipeline, frames: Vec<LandmarkFrame>) -> BenchReport {
    let n = frames.len();
    let mut latencies = Vec::with_capacity(n);
    let mut messages = 0u64;
    let start = Instant::now();
    for frame in frames {
        let t = Instant::now();
        if let Ok(m) = pipeline.process_frame(frame) {
            messages += m.len() as u64;
        }
        latencies.push(t.elapsed().as_secs_f64() * 1e6);
    }
    let elapsed_s = start.elapsed().as_secs_f64();
    latencies.sort_by(f64::total_cmp);
    let p99 = if n == 0 {
        0.0
    } else {
        latencies[((n as f64 * 0.99).ceil() as usize).clamp(1, n) - 1]
    };
    BenchReport {
        frames: n as u64,
        elapsed_s,
        frames_per_second: n as f64 / elapsed_s,
        mean_latency_us: latencies.iter().sum::<f64>() / n.max(1) as f64,
        p99_latency_us: p99,
        messages,
    }
}

/// `angle_deg,<label>_pct,...`, one column per labeled sweep.
pub fn write_angle_table(mut w: impl Write, sweeps: &[(&str, Vec<AngleRow>)]) -> std::io::Result<()> {
    write!(w, "angle_deg")?;
    for (label, _) in sweeps {
        write!(w, ",{label}_pct")?;
    }
    writeln!(w)?;
    let rows = sweeps.first().map_or(0, |s| s.1.len());
    for i in 0..rows {
        write!(w, "{:+}", sweeps[0].1[i].yaw_deg)?;
        for (_, rows) in sweeps {
            write!(w, ",{:.2}", rows[i].accuracy * 100.0)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `movements_per_sec,<label>_pct,...`, one column per labeled sweep.
pub fn write_rate_table(mut w: impl Write, sweeps: &[(&str, Vec<RateRow>)]) -> std::io::Result<()> {
    write!(w, "movements_per_sec")?;
    for (label, _) in sweeps {
        write!(w, ",{label}_pct")?;
    }
    writeln!(w)?;
    let rows = sweeps.first().map_or(0, |s| s.1.len());
    for i in 0..rows {
        write!(w, "{}", sweeps[0].1[i].movement_rate)?;
        for (_, rows) in sweeps {
            write!(w, ",{:.2}", rows[i].recall * 100.0)?;
        }
        writeln!(w)?;
    }
    Ok(())
}
