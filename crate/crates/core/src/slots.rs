//! Time slots, symbols and codebooks.
//!
//! A slot spans `t_a_ms * n_a` milliseconds and is cut into `n_a` action
//! intervals. In bits mode each interval contributes one bit, set when the
//! lips were open for a strict majority of it, earliest interval first. In
//! count mode the symbol is the number of openings inside the slot.
//!
//! [`SlotTracker`] does the same online. An interval is only evaluated once
//! every instant inside it is final, i.e. once the engine has no pending run
//! that could still be back-dated into it.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::LipsState;
use crate::engine::{ActionEvent, ActionKind};

pub const MAX_N_A: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotMode {
    #[default]
    Bits,
    Count,
}

impl FromStr for SlotMode {
    type Err = SlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bits" => Ok(SlotMode::Bits),
            "count" => Ok(SlotMode::Count),
            other => Err(SlotError::BadConfig(format!("unknown slot mode {other:?}"))),
        }
    }
}

impl fmt::Display for SlotMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotMode::Bits => "bits",
            SlotMode::Count => "count",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Anchor {
    /// The slot clock starts at the first opening after an idle slot.
    #[default]
    FirstAction,
    /// Slots tile stream time from zero.
    WallClock,
}

impl FromStr for Anchor {
    type Err = SlotError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first-action" => Ok(Anchor::FirstAction),
            "wall-clock" => Ok(Anchor::WallClock),
            other => Err(SlotError::BadConfig(format!("unknown anchor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotConfig {
    pub t_a_ms: i64,
    pub n_a: u32,
    pub mode: SlotMode,
    pub anchor: Anchor,
}

impl Default for SlotConfig {
    fn default() -> Self {
        Self {
            t_a_ms: 600,
            n_a: 4,
            mode: SlotMode::Bits,
            anchor: Anchor::FirstAction,
        }
    }
}

impl SlotConfig {
    pub fn new(t_a_ms: i64, n_a: u32, mode: SlotMode) -> Result<Self, SlotError> {
        let cfg = Self {
            t_a_ms,
            n_a,
            mode,
            anchor: Anchor::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SlotError> {
        if self.t_a_ms <= 0 {
            return Err(SlotError::BadConfig("t_a_ms must be positive".into()));
        }
        if !(1..=MAX_N_A).contains(&self.n_a) {
            return Err(SlotError::BadConfig(format!(
                "n_a must lie in 1..={MAX_N_A}, got {}",
                self.n_a
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SlotError {
    #[error("invalid slot config: {0}")]
    BadConfig(String),
    #[error("codebook key {key} does not fit capacity {capacity}")]
    OversizedKey { key: u32, capacity: u32 },
    #[error("command name {0:?} used twice")]
    DuplicateName(String),
    #[error("empty command name for key {0}")]
    EmptyName(u32),
    #[error("codebook is for {book_mode}/{book_n_a}, symbol is {mode}/{n_a}")]
    ModeMismatch {
        book_mode: SlotMode,
        book_n_a: u32,
        mode: SlotMode,
        n_a: u32,
    },
    #[error("codebook parse error: {0}")]
    Parse(String),
}

/// Slot duration `T_s = T_a * N_a`.
pub fn slot_span(cfg: &SlotConfig) -> i64 {
    cfg.t_a_ms * cfg.n_a as i64
}

/// Number of distinct symbols: `2^n_a` in bits mode, `n_a + 1` in count mode.
pub fn capacity(cfg: &SlotConfig) -> u32 {
    capacity_of(cfg.mode, cfg.n_a)
}

fn capacity_of(mode: SlotMode, n_a: u32) -> u32 {
    match mode {
        SlotMode::Bits => 1 << n_a,
        SlotMode::Count => n_a + 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symbol {
    pub slot_id: u64,
    pub value: u32,
    pub mode: SlotMode,
    pub n_a: u32,
}

impl Symbol {
    /// `value` as `n_a` binary digits, most significant first.
    pub fn bit_string(&self) -> String {
        bit_string(self.value, self.n_a as usize)
    }
}

fn bit_string(value: u32, width: usize) -> String {
    (0..width)
        .rev()
        .map(|k| if value >> k & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// Piecewise-constant stable-state history. Before the first change the
/// state is unknown.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateTimeline {
    changes: Vec<(i64, Option<LipsState>)>,
}

impl StateTimeline {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a change at `t_ms`. Changes must arrive in time order; a
    /// change at the same instant replaces the previous one.
    pub fn push(&mut self, t_ms: i64, state: Option<LipsState>) {
        if let Some(last) = self.changes.last_mut() {
            assert!(t_ms >= last.0, "timeline changes out of order");
            if last.0 == t_ms {
                last.1 = state;
                return;
            }
        }
        self.changes.push((t_ms, state));
    }

    pub fn state_at(&self, t_ms: i64) -> Option<LipsState> {
        let idx = self.changes.partition_point(|c| c.0 <= t_ms);
        idx.checked_sub(1).and_then(|i| self.changes[i].1)
    }

    /// Milliseconds of `[a, b)` spent open.
    pub fn open_ms(&self, a: i64, b: i64) -> i64 {
        if b <= a {
            return 0;
        }
        let mut total = 0;
        let mut cursor = a;
        let mut state = self.state_at(a);
        let start = self.changes.partition_point(|c| c.0 <= a);
        for &(t, s) in &self.changes[start..] {
            if t >= b {
                break;
            }
            if state == Some(LipsState::Open) {
                total += t - cursor;
            }
            cursor = t;
            state = s;
        }
        if state == Some(LipsState::Open) {
            total += b - cursor;
        }
        total
    }

    /// True when no part of `[a, b)` has a known state.
    pub fn unknown_throughout(&self, a: i64, b: i64) -> bool {
        if self.state_at(a).is_some() {
            return false;
        }
        let start = self.changes.partition_point(|c| c.0 <= a);
        !self.changes[start..]
            .iter()
            .take_while(|c| c.0 < b)
            .any(|c| c.1.is_some())
    }

    /// First change strictly after `t_ms`.
    pub fn next_change_after(&self, t_ms: i64) -> Option<i64> {
        let i = self.changes.partition_point(|c| c.0 <= t_ms);
        self.changes.get(i).map(|c| c.0)
    }

    /// Drops history before `t_ms` without changing any answer for times
    /// at or after it.
    pub fn prune_before(&mut self, t_ms: i64) {
        let keep_from = self.changes.partition_point(|c| c.0 <= t_ms).saturating_sub(1);
        self.changes.drain(..keep_from);
    }

    pub fn len(&self) -> usize {
        self.changes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.changes.is_empty()
    }
}

/// Strict-majority rule: exactly half open is a 0.
pub fn interval_bit(timeline: &StateTimeline, a: i64, b: i64) -> bool {
    2 * timeline.open_ms(a, b) > b - a
}

/// Encodes the slot starting at `window_start`.
pub fn encode_slot(
    timeline: &StateTimeline,
    events: &[ActionEvent],
    window_start: i64,
    cfg: &SlotConfig,
    slot_id: u64,
) -> Symbol {
    let value = match cfg.mode {
        SlotMode::Bits => (0..cfg.n_a as i64).fold(0u32, |acc, k| {
            let a = window_start + k * cfg.t_a_ms;
            (acc << 1) | interval_bit(timeline, a, a + cfg.t_a_ms) as u32
        }),
        SlotMode::Count => {
            let end = window_start + slot_span(cfg);
            events
                .iter()
                .filter(|e| e.kind == ActionKind::Opened && e.t_ms >= window_start && e.t_ms < end)
                .count()
                .min(cfg.n_a as usize) as u32
        }
    };
    Symbol {
        slot_id,
        value,
        mode: cfg.mode,
        n_a: cfg.n_a,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Named(String),
    NoCommand,
}

impl Command {
    pub fn name(&self) -> Option<&str> {
        match self {
            Command::Named(n) => Some(n),
            Command::NoCommand => None,
        }
    }
}

/// Symbol value → command name, for one mode and width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CodebookFile", into = "CodebookFile")]
pub struct Codebook {
    mode: SlotMode,
    n_a: u32,
    entries: BTreeMap<u32, String>,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    mode: SlotMode,
    n_a: u32,
    entries: BTreeMap<String, String>,
}

impl TryFrom<CodebookFile> for Codebook {
    type Error = SlotError;

    fn try_from(f: CodebookFile) -> Result<Self, Self::Error> {
        let entries = f
            .entries
            .into_iter()
            .map(|(k, v)| {
                k.parse::<u32>()
                    .map(|k| (k, v))
                    .map_err(|_| SlotError::Parse(format!("key {k:?} is not a symbol value")))
            })
            .collect::<Result<_, _>>()?;
        Codebook::new(f.mode, f.n_a, entries)
    }
}

impl From<Codebook> for CodebookFile {
    fn from(b: Codebook) -> Self {
        CodebookFile {
            mode: b.mode,
            n_a: b.n_a,
            entries: b.entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

impl Codebook {
    /// Builds and checks a codebook against its own mode and width.
    pub fn new(mode: SlotMode, n_a: u32, entries: BTreeMap<u32, String>) -> Result<Self, SlotError> {
        if !(1..=MAX_N_A).contains(&n_a) {
            return Err(SlotError::BadConfig(format!("codebook n_a {n_a} out of range")));
        }
        let book = Self { mode, n_a, entries };
        book.check_entries()?;
        Ok(book)
    }

    /// Every value maps to its own decimal string.
    pub fn identity(mode: SlotMode, n_a: u32) -> Self {
        let entries = (0..capacity_of(mode, n_a)).map(|v| (v, v.to_string())).collect();
        Self::new(mode, n_a, entries).expect("identity codebook is valid")
    }

    pub fn mode(&self) -> SlotMode {
        self.mode
    }

    pub fn n_a(&self) -> u32 {
        self.n_a
    }

    pub fn entries(&self) -> &BTreeMap<u32, String> {
        &self.entries
    }

    fn check_entries(&self) -> Result<(), SlotError> {
        let cap = capacity_of(self.mode, self.n_a);
        let mut names = HashSet::new();
        for (&key, name) in &self.entries {
            if key >= cap {
                return Err(SlotError::OversizedKey { key, capacity: cap });
            }
            if name.is_empty() {
                return Err(SlotError::EmptyName(key));
            }
            if !names.insert(name.as_str()) {
                return Err(SlotError::DuplicateName(name.clone()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SlotError> {
        // serde's try_from wraps our error in a string; parse in two steps
        // so the specific variant survives
        let file: CodebookFile =
            serde_json::from_str(text).map_err(|e| SlotError::Parse(e.to_string()))?;
        Codebook::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("codebook serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SlotError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| SlotError::Parse(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

/// Checks that `book` fits `cfg`: same mode and width, keys below capacity,
/// unique non-empty names.
pub fn validate_codebook(book: &Codebook, cfg: &SlotConfig) -> Result<(), SlotError> {
    if book.mode != cfg.mode || book.n_a != cfg.n_a {
        return Err(SlotError::ModeMismatch {
            book_mode: book.mode,
            book_n_a: book.n_a,
            mode: cfg.mode,
            n_a: cfg.n_a,
        });
    }
    book.check_entries()
}

pub fn decode_symbol(sym: &Symbol, book: &Codebook) -> Result<Command, SlotError> {
    if sym.mode != book.mode || sym.n_a != book.n_a {
        return Err(SlotError::ModeMismatch {
            book_mode: book.mode,
            book_n_a: book.n_a,
            mode: sym.mode,
            n_a: sym.n_a,
        });
    }
    Ok(match book.entries.get(&sym.value) {
        Some(name) => Command::Named(name.clone()),
        None => Command::NoCommand,
    })
}

/// What the tracker reports as slots fill up.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotOutput {
    /// One more interval is final. `bits` holds the interval bits so far.
    Progress {
        slot_id: u64,
        bits: String,
        progress: f64,
    },
    /// The slot is complete.
    Complete { symbol: Symbol, command: Command },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ActiveSlot {
    id: u64,
    start: i64,
    intervals_done: u32,
}

/// Online slot clock driven by stream time.
#[derive(Debug, Clone)]
pub struct SlotTracker {
    cfg: SlotConfig,
    book: Codebook,
    timeline: StateTimeline,
    events: Vec<ActionEvent>,
    active: Option<ActiveSlot>,
    bits: String,
    next_id: u64,
    /// Openings before this instant cannot anchor a new slot.
    idle_since: i64,
}

impl SlotTracker {
    pub fn new(cfg: SlotConfig, book: Codebook) -> Result<Self, SlotError> {
        cfg.validate()?;
        validate_codebook(&book, &cfg)?;
        Ok(Self {
            cfg,
            book,
            timeline: StateTimeline::new(),
            events: Vec::new(),
            active: None,
            bits: String::new(),
            next_id: 0,
            idle_since: i64::MIN,
        })
    }

    pub fn config(&self) -> &SlotConfig {
        &self.cfg
    }

    pub fn codebook(&self) -> &Codebook {
        &self.book
    }

    /// Forgets all history and returns to idle, numbering slots from 0 again.
    pub fn reset(&mut self) {
        self.timeline = StateTimeline::new();
        self.events.clear();
        self.active = None;
        self.bits.clear();
        self.next_id = 0;
        self.idle_since = i64::MIN;
    }

    /// Feeds one engine step. `horizon` is the instant before which the
    /// state history is final.
    pub fn observe(
        &mut self,
        changes: &[(i64, Option<LipsState>)],
        event: Option<ActionEvent>,
        horizon: i64,
    ) -> Vec<SlotOutput> {
        for &(t, s) in changes {
            self.timeline.push(t, s);
        }
        self.events.extend(event);

        let mut out = Vec::new();
        let t_a = self.cfg.t_a_ms;
        let span = slot_span(&self.cfg);
        loop {
            let Some(mut slot) = self.active else {
                match self.cfg.anchor {
                    Anchor::FirstAction => {
                        let Some(first) = self.events.iter().find(|e| {
                            e.kind == ActionKind::Opened && e.t_ms >= self.idle_since
                        }) else {
                            break;
                        };
                        self.start_slot(first.t_ms);
                    }
                    Anchor::WallClock => {
                        if horizon == i64::MIN {
                            break;
                        }
                        let start = horizon.div_euclid(span) * span;
                        self.start_slot(start);
                    }
                }
                continue;
            };

            if slot.intervals_done == 0 && self.cfg.anchor == Anchor::WallClock {
                // skip whole slots with no known state (stream gaps)
                let end = slot.start + span;
                if end <= horizon && self.timeline.unknown_throughout(slot.start, end) {
                    let resume = self.timeline.next_change_after(slot.start).unwrap_or(horizon);
                    let skip = ((resume.min(horizon) - slot.start) / span).max(1);
                    slot.start += skip * span;
                    slot.id += skip as u64;
                    self.active = Some(slot);
                    continue;
                }
            }

            let a = slot.start + slot.intervals_done as i64 * t_a;
            let b = a + t_a;
            if b > horizon {
                break;
            }
            self.bits
                .push(if interval_bit(&self.timeline, a, b) { '1' } else { '0' });
            slot.intervals_done += 1;
            self.active = Some(slot);
            out.push(SlotOutput::Progress {
                slot_id: slot.id,
                bits: self.bits.clone(),
                progress: slot.intervals_done as f64 / self.cfg.n_a as f64,
            });
            if slot.intervals_done == self.cfg.n_a {
                out.push(self.complete(slot));
            }
        }

        let keep_from = match self.active {
            Some(s) => s.start,
            None => self.idle_since,
        };
        if keep_from > i64::MIN {
            self.timeline.prune_before(keep_from);
            self.events.retain(|e| e.t_ms >= keep_from);
        }
        out
    }

    fn start_slot(&mut self, start: i64) {
        let id = match self.cfg.anchor {
            Anchor::FirstAction => {
                let id = self.next_id;
                self.next_id += 1;
                id
            }
            Anchor::WallClock => start.div_euclid(slot_span(&self.cfg)) as u64,
        };
        self.active = Some(ActiveSlot {
            id,
            start,
            intervals_done: 0,
        });
        self.bits.clear();
    }

    fn complete(&mut self, slot: ActiveSlot) -> SlotOutput {
        let span = slot_span(&self.cfg);
        let end = slot.start + span;
        let symbol = encode_slot(&self.timeline, &self.events, slot.start, &self.cfg, slot.id);
        let command = decode_symbol(&symbol, &self.book).expect("codebook validated at construction");
        self.bits.clear();
        match self.cfg.anchor {
            Anchor::FirstAction => {
                let active = self.events.iter().any(|e| e.t_ms >= slot.start && e.t_ms < end);
                if active {
                    self.active = Some(ActiveSlot {
                        id: self.next_id,
                        start: end,
                        intervals_done: 0,
                    });
                    self.next_id += 1;
                } else {
                    self.active = None;
                    self.idle_since = end;
                }
            }
            Anchor::WallClock => {
                self.active = Some(ActiveSlot {
                    id: slot.id + 1,
                    start: end,
                    intervals_done: 0,
                });
            }
        }
        SlotOutput::Complete { symbol, command }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use LipsState::{Closed, Open};

    fn bits_cfg(t_a: i64, n_a: u32) -> SlotConfig {
        SlotConfig::new(t_a, n_a, SlotMode::Bits).unwrap()
    }

    /// Each interval fully open or closed per the bits of `v`, MSB first.
    fn timeline_for(v: u32, start: i64, cfg: &SlotConfig) -> StateTimeline {
        let mut tl = StateTimeline::new();
        for k in 0..cfg.n_a {
            let bit = v >> (cfg.n_a - 1 - k) & 1 == 1;
            tl.push(start + k as i64 * cfg.t_a_ms, Some(if bit { Open } else { Closed }));
        }
        tl.push(start + slot_span(cfg), Some(Closed));
        tl
    }

    #[test]
    fn span_and_capacity() {
        assert_eq!(slot_span(&bits_cfg(600, 4)), 2400);
        assert_eq!(slot_span(&bits_cfg(600, 1)), 600);
        assert_eq!(slot_span(&bits_cfg(100, 8)), 800);
        assert_eq!(capacity(&bits_cfg(600, 4)), 16);
        assert_eq!(capacity(&bits_cfg(600, 1)), 2);
        assert_eq!(capacity(&SlotConfig::new(600, 4, SlotMode::Count).unwrap()), 5);
        assert_eq!(capacity(&bits_cfg(10, 16)), 65536);
    }

    #[test]
    fn config_bounds() {
        assert!(SlotConfig::new(0, 4, SlotMode::Bits).is_err());
        assert!(SlotConfig::new(100, 0, SlotMode::Bits).is_err());
        assert!(SlotConfig::new(100, 17, SlotMode::Bits).is_err());
    }

    #[test]
    fn closed_slot_is_zero() {
        let cfg = bits_cfg(600, 4);
        let mut tl = StateTimeline::new();
        tl.push(0, Some(Closed));
        assert_eq!(encode_slot(&tl, &[], 0, &cfg, 0).value, 0);
        // unknown counts as not open
        assert_eq!(encode_slot(&StateTimeline::new(), &[], 0, &cfg, 0).value, 0);
    }

    #[test]
    fn majority_rule_on_constructed_timeline() {
        // open during intervals 1 and 3, with partial spill that stays below
        // half of the neighbouring intervals
        let cfg = bits_cfg(600, 4);
        let mut tl = StateTimeline::new();
        tl.push(0, Some(Closed));
        tl.push(450, Some(Open)); // 150 ms into interval 0 (25%)
        tl.push(1300, Some(Closed)); // 100 ms into interval 2
        tl.push(1900, Some(Open)); // 100 ms before interval 3 starts...
        tl.push(2000, Some(Closed)); // ...and only 200 ms of interval 3
        // interval 3: [1800, 2400) has open [1900, 2000) = 100 ms → 0
        assert_eq!(encode_slot(&tl, &[], 0, &cfg, 0).value, 0b0100);
        let mut tl = StateTimeline::new();
        tl.push(0, Some(Closed));
        tl.push(600, Some(Open));
        tl.push(1200, Some(Closed));
        tl.push(1800, Some(Open));
        tl.push(2400, Some(Closed));
        assert_eq!(encode_slot(&tl, &[], 0, &cfg, 0).value, 5);
    }

    #[test]
    fn exact_half_is_zero() {
        let cfg = bits_cfg(600, 1);
        let mut tl = StateTimeline::new();
        tl.push(0, Some(Open));
        tl.push(300, Some(Closed));
        assert_eq!(encode_slot(&tl, &[], 0, &cfg, 0).value, 0);
        tl.push(300, Some(Open));
        tl.push(301, Some(Closed));
        assert_eq!(encode_slot(&tl, &[], 0, &cfg, 0).value, 1);
    }

    #[test]
    fn count_mode_counts_openings() {
        let cfg = SlotConfig::new(500, 4, SlotMode::Count).unwrap();
        let ev = |t, kind| ActionEvent { t_ms: t, kind };
        let events = [
            ev(-10, ActionKind::Opened),
            ev(100, ActionKind::Opened),
            ev(200, ActionKind::Closed),
            ev(700, ActionKind::Opened),
            ev(900, ActionKind::Closed),
            ev(1500, ActionKind::Opened),
            ev(2000, ActionKind::Opened),
        ];
        let sym = encode_slot(&StateTimeline::new(), &events, 0, &cfg, 3);
        assert_eq!(sym.value, 3);
        assert_eq!(sym.slot_id, 3);
    }

    #[test]
    fn decoding() {
        let book = Codebook::new(
            SlotMode::Bits,
            4,
            [(5, "CALL".to_string()), (10, "WATER".to_string())].into(),
        )
        .unwrap();
        let sym = |value| Symbol {
            slot_id: 0,
            value,
            mode: SlotMode::Bits,
            n_a: 4,
        };
        assert_eq!(decode_symbol(&sym(5), &book).unwrap(), Command::Named("CALL".into()));
        assert_eq!(decode_symbol(&sym(6), &book).unwrap(), Command::NoCommand);
        let wrong = Symbol { n_a: 3, ..sym(5) };
        assert!(matches!(decode_symbol(&wrong, &book), Err(SlotError::ModeMismatch { .. })));
    }

    #[test]
    fn codebook_validation() {
        let cfg = bits_cfg(600, 4);
        let full: BTreeMap<u32, String> = (0..16).map(|v| (v, format!("C{v}"))).collect();
        let book = Codebook::new(SlotMode::Bits, 4, full).unwrap();
        assert!(validate_codebook(&book, &cfg).is_ok());
        assert_eq!(
            Codebook::new(SlotMode::Bits, 4, [(16, "X".to_string())].into()),
            Err(SlotError::OversizedKey { key: 16, capacity: 16 })
        );
        assert_eq!(
            Codebook::new(SlotMode::Bits, 4, [(1, "GO".to_string()), (2, "GO".to_string())].into()),
            Err(SlotError::DuplicateName("GO".into()))
        );
        let count_book = Codebook::identity(SlotMode::Count, 4);
        assert!(matches!(
            validate_codebook(&count_book, &cfg),
            Err(SlotError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn codebook_json() {
        let book = Codebook::from_json(
            r#"{"mode":"bits","n_a":4,"entries":{"5":"CALL_NURSE","10":"WATER"}}"#,
        )
        .unwrap();
        assert_eq!(book.entries()[&5], "CALL_NURSE");
        assert_eq!(Codebook::from_json(&book.to_json()).unwrap(), book);
        assert_eq!(
            Codebook::from_json(r#"{"mode":"bits","n_a":4,"entries":{"16":"X"}}"#),
            Err(SlotError::OversizedKey { key: 16, capacity: 16 })
        );
        assert!(matches!(
            Codebook::from_json(r#"{"mode":"bits","n_a":4,"entries":{"x":"X"}}"#),
            Err(SlotError::Parse(_))
        ));
    }

    #[test]
    fn round_trip_all_sixteen() {
        let cfg = bits_cfg(600, 4);
        let book = Codebook::identity(SlotMode::Bits, 4);
        for v in 0..16 {
            let sym = encode_slot(&timeline_for(v, 0, &cfg), &[], 0, &cfg, 0);
            assert_eq!(decode_symbol(&sym, &book).unwrap(), Command::Named(v.to_string()));
        }
    }

    #[test]
    fn timeline_queries_and_pruning() {
        let mut tl = StateTimeline::new();
        tl.push(10, Some(Open));
        tl.push(20, None);
        tl.push(30, Some(Closed));
        assert_eq!(tl.state_at(5), None);
        assert_eq!(tl.state_at(10), Some(Open));
        assert_eq!(tl.state_at(25), None);
        assert_eq!(tl.open_ms(0, 100), 10);
        assert!(tl.unknown_throughout(20, 30));
        assert!(!tl.unknown_throughout(20, 31));
        let before = (tl.open_ms(15, 40), tl.state_at(15));
        tl.prune_before(15);
        assert_eq!((tl.open_ms(15, 40), tl.state_at(15)), before);
        assert_eq!(tl.len(), 3);
    }

    fn opened(t: i64) -> Option<ActionEvent> {
        Some(ActionEvent {
            t_ms: t,
            kind: ActionKind::Opened,
        })
    }

    fn closed(t: i64) -> Option<ActionEvent> {
        Some(ActionEvent {
            t_ms: t,
            kind: ActionKind::Closed,
        })
    }

    #[test]
    fn tracker_anchors_on_first_opening() {
        let cfg = bits_cfg(500, 4);
        let book = Codebook::new(SlotMode::Bits, 4, [(0b1010, "WATER".to_string())].into()).unwrap();
        let mut tr = SlotTracker::new(cfg, book).unwrap();
        assert!(tr.observe(&[(0, Some(Closed))], None, 900).is_empty());
        assert!(tr.observe(&[(1000, Some(Open))], opened(1000), 1100).is_empty());
        assert!(tr.observe(&[(1400, Some(Closed))], closed(1400), 1450).is_empty());
        let out = tr.observe(&[], None, 1600);
        assert_eq!(
            out,
            vec![SlotOutput::Progress {
                slot_id: 0,
                bits: "1".into(),
                progress: 0.25
            }]
        );
        assert_eq!(tr.observe(&[(2000, Some(Open))], opened(2000), 2100).len(), 1);
        assert!(tr.observe(&[(2400, Some(Closed))], closed(2400), 2600).len() == 1);
        let out = tr.observe(&[], None, 3000);
        assert_eq!(out.len(), 2);
        match &out[1] {
            SlotOutput::Complete { symbol, command } => {
                assert_eq!(symbol.value, 0b1010);
                assert_eq!(command, &Command::Named("WATER".into()));
            }
            other => panic!("{other:?}"),
        }
        // next slot is contiguous, has no events, and ends the run
        let out = tr.observe(&[], None, 5000);
        assert_eq!(out.len(), 5);
        assert!(matches!(&out[4], SlotOutput::Complete { symbol, .. } if symbol.value == 0 && symbol.slot_id == 1));
        assert!(tr.observe(&[], None, 9000).is_empty());
        // a later opening starts slot 2
        tr.observe(&[(9100, Some(Open))], opened(9100), 9200);
        let out = tr.observe(&[], None, 9600);
        assert!(matches!(&out[0], SlotOutput::Progress { slot_id: 2, .. }));
    }

    #[test]
    fn tracker_waits_for_final_history() {
        let cfg = bits_cfg(100, 1);
        let mut tr = SlotTracker::new(cfg, Codebook::identity(SlotMode::Bits, 1)).unwrap();
        tr.observe(&[(0, Some(Open))], opened(0), 0);
        // horizon held back by a pending run at 40
        assert!(tr.observe(&[], None, 40).is_empty());
        let out = tr.observe(&[(40, Some(Closed))], closed(40), 150);
        assert!(matches!(&out[1], SlotOutput::Complete { symbol, .. } if symbol.value == 0));
    }

    #[test]
    fn wall_clock_tiles_and_skips_gaps() {
        let cfg = SlotConfig {
            anchor: Anchor::WallClock,
            ..bits_cfg(100, 2)
        };
        let mut tr = SlotTracker::new(cfg, Codebook::identity(SlotMode::Bits, 2)).unwrap();
        tr.observe(&[(250, Some(Open))], None, 250);
        let out = tr.observe(&[], None, 400);
        // slot 1 = [200, 400): closed-unknown then open
        assert!(matches!(&out[2], SlotOutput::Complete { symbol, .. } if symbol.slot_id == 1 && symbol.value == 0b01));
        // long gap to unknown, then data again around 10_000
        let out = tr.observe(&[(1400, None), (10_050, Some(Closed))], None, 10_100);
        let ids: Vec<u64> = out
            .iter()
            .filter_map(|o| match o {
                SlotOutput::Complete { symbol, .. } => Some(symbol.slot_id),
                _ => None,
            })
            .collect();
        // slots 2..=6 hold the open stretch, 7..=49 are unknown and skipped
        assert_eq!(ids, vec![2, 3, 4, 5, 6]);
        let out = tr.observe(&[], None, 10_200);
        assert!(matches!(&out[1], SlotOutput::Complete { symbol, .. } if symbol.slot_id == 50 && symbol.value == 0));
    }

    proptest! {
        #[test]
        fn exhaustive_round_trip(n_a in 1u32..=8, t_a in 1i64..1000, start in -10_000i64..10_000) {
            let cfg = bits_cfg(t_a, n_a);
            let book = Codebook::identity(SlotMode::Bits, n_a);
            for v in 0..capacity(&cfg) {
                let sym = encode_slot(&timeline_for(v, start, &cfg), &[], start, &cfg, 0);
                prop_assert!(sym.value < capacity(&cfg));
                prop_assert_eq!(decode_symbol(&sym, &book).unwrap(), Command::Named(v.to_string()));
            }
        }

        #[test]
        fn shift_invariance(changes in proptest::collection::vec((0i64..3000, any::<bool>()), 1..20), shift in -100_000i64..100_000) {
            let cfg = bits_cfg(300, 6);
            let mut sorted = changes;
            sorted.sort_by_key(|c| c.0);
            let build = |off: i64| {
                let mut tl = StateTimeline::new();
                for &(t, open) in &sorted {
                    tl.push(t + off, Some(if open { Open } else { Closed }));
                }
                tl
            };
            let a = encode_slot(&build(0), &[], 0, &cfg, 0);
            let b = encode_slot(&build(shift), &[], shift, &cfg, 0);
            prop_assert_eq!(a.value, b.value);
        }

        #[test]
        fn count_symbols_stay_in_range(times in proptest::collection::vec(0i64..2000, 0..40)) {
            let cfg = SlotConfig::new(500, 4, SlotMode::Count).unwrap();
            let events: Vec<_> = times.into_iter().map(|t| ActionEvent { t_ms: t, kind: ActionKind::Opened }).collect();
            prop_assert!(encode_slot(&StateTimeline::new(), &events, 0, &cfg, 0).value <= 4);
        }
    }
}
