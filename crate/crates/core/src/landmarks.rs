//! Landmark frames and detector index schemes.
//!
//! A detector emits a frame of indexed 2D points. The engine only needs six of
//! them: the left, middle and right points of the upper lip (`U1`..`U3`) and
//! of the lower lip (`L1`..`L3`). A [`DetectorScheme`] records which detector
//! index carries each role.
//!
//! Scheme indices are symbolic labels. `index_base` says which numbering the
//! labels are written in; raw frame indices are always zero-based, so the raw
//! index looked up for a role is `label - index_base`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six lip landmark roles, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LipRole {
    U1,
    U2,
    U3,
    L1,
    L2,
    L3,
}

impl LipRole {
    pub const ALL: [LipRole; 6] = [
        LipRole::U1,
        LipRole::U2,
        LipRole::U3,
        LipRole::L1,
        LipRole::L2,
        LipRole::L3,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LipRole::U1 => "U1",
            LipRole::U2 => "U2",
            LipRole::U3 => "U3",
            LipRole::L1 => "L1",
            LipRole::L2 => "L2",
            LipRole::L3 => "L3",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for LipRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LipRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LipRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown lip role {s:?}"))
    }
}

/// A point in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// One indexed landmark as shipped by a detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawLandmark {
    pub index: u32,
    pub point: Point,
}

/// The six lip points, indexable by [`LipRole`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LipPoints([Point; 6]);

impl LipPoints {
    pub fn new(points: [Point; 6]) -> Self {
        Self(points)
    }

    pub fn from_fn(mut f: impl FnMut(LipRole) -> Point) -> Self {
        Self(LipRole::ALL.map(&mut f))
    }

    pub fn get(&self, role: LipRole) -> Point {
        self.0[role.slot()]
    }

    pub fn set(&mut self, role: LipRole, p: Point) {
        self.0[role.slot()] = p;
    }

    pub fn iter(&self) -> impl Iterator<Item = (LipRole, Point)> + '_ {
        LipRole::ALL.into_iter().zip(self.0.iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(Point::is_finite)
    }
}

impl std::ops::Index<LipRole> for LipPoints {
    type Output = Point;

    fn index(&self, role: LipRole) -> &Point {
        &self.0[role.slot()]
    }
}

/// One timestamped set of landmarks from a detector, either the full raw
/// array, the six pre-selected lip points, or both.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub version: u32,
    pub t_ms: i64,
    pub src: String,
    pub scheme: String,
    pub raw: Option<Vec<RawLandmark>>,
    pub pts: Option<LipPoints>,
}

/// Why a frame was rejected by [`validate_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameDefect {
    NonFinite,
    DuplicateIndex(u32),
    NoLandmarks,
}

impl fmt::Display for FrameDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameDefect::NonFinite => f.write_str("non-finite coordinate"),
            FrameDefect::DuplicateIndex(i) => write!(f, "duplicate raw index {i}"),
            FrameDefect::NoLandmarks => f.write_str("neither raw nor pts present"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LandmarkError {
    #[error("invalid frame: {0}")]
    InvalidFrame(FrameDefect),
    #[error("missing landmark {role} (raw index {index})")]
    MissingLandmark { role: LipRole, index: u32 },
    #[error("frame names scheme {frame:?} but {scheme:?} was supplied")]
    SchemeMismatch { frame: String, scheme: String },
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
}

/// A frame that passed [`validate_frame`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedFrame(LandmarkFrame);

impl ValidatedFrame {
    pub fn into_inner(self) -> LandmarkFrame {
        self.0
    }
}

impl std::ops::Deref for ValidatedFrame {
    type Target = LandmarkFrame;

    fn deref(&self) -> &LandmarkFrame {
        &self.0
    }
}

/// Checks the structural invariants of a frame: at least one of `raw`/`pts`,
/// finite coordinates, unique raw indices. When both are present `pts` is
/// authoritative and `raw` is still checked.
pub fn validate_frame(frame: LandmarkFrame) -> Result<ValidatedFrame, LandmarkError> {
    if frame.raw.is_none() && frame.pts.is_none() {
        return Err(LandmarkError::InvalidFrame(FrameDefect::NoLandmarks));
    }
    if let Some(pts) = &frame.pts {
        if !pts.is_finite() {
            return Err(LandmarkError::InvalidFrame(FrameDefect::NonFinite));
        }
    }
    if let Some(raw) = &frame.raw {
        let mut seen = HashSet::with_capacity(raw.len());
        for lm in raw {
            if !lm.point.is_finite() {
                return Err(LandmarkError::InvalidFrame(FrameDefect::NonFinite));
            }
            if !seen.insert(lm.index) {
                return Err(LandmarkError::InvalidFrame(FrameDefect::DuplicateIndex(
                    lm.index,
                )));
            }
        }
    }
    Ok(ValidatedFrame(frame))
}

/// Maps each lip role to a detector landmark label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemeFile", into = "SchemeFile")]
pub struct DetectorScheme {
    name: String,
    index_base: u32,
    mapping: [u32; 6],
}

impl DetectorScheme {
    /// Builds a scheme from `(role, label)` pairs in [`LipRole::ALL`] order.
    pub fn new(
        name: impl Into<String>,
        index_base: u32,
        mapping: [u32; 6],
    ) -> Result<Self, LandmarkError> {
        let name = name.into();
        if name.is_empty() {
            return Err(LandmarkError::InvalidScheme("empty name".into()));
        }
        if index_base > 1 {
            return Err(LandmarkError::InvalidScheme(format!(
                "index_base must be 0 or 1, got {index_base}"
            )));
        }
        let distinct: HashSet<_> = mapping.iter().collect();
        if distinct.len() != 6 {
            return Err(LandmarkError::InvalidScheme(
                "lip roles must map to six distinct indices".into(),
            ));
        }
        if let Some(&bad) = mapping.iter().find(|&&i| i < index_base) {
            return Err(LandmarkError::InvalidScheme(format!(
                "index {bad} is below index_base {index_base}"
            )));
        }
        Ok(Self {
            name,
            index_base,
            mapping,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn index_base(&self) -> u32 {
        self.index_base
    }

    /// The label as written in the scheme (in `index_base` numbering).
    pub fn label(&self, role: LipRole) -> u32 {
        self.mapping[role.slot()]
    }

    /// The zero-based raw frame index for `role`.
    pub fn raw_index(&self, role: LipRole) -> u32 {
        self.label(role) - self.index_base
    }

    /// Same labels, different numbering origin.
    pub fn with_index_base(&self, index_base: u32) -> Result<Self, LandmarkError> {
        Self::new(self.name.clone(), index_base, self.mapping)
    }

    /// 68-point detector labels (upper 51/52/53, lower 59/58/57), numbered
    /// from 1 as in the usual 68-point diagrams.
    pub fn dlib68() -> Self {
        Self::new(DLIB68, 1, [51, 52, 53, 59, 58, 57]).expect("built-in scheme is valid")
    }

    /// 468-point face mesh labels, numbered from 0.
    pub fn facemesh468() -> Self {
        Self::new(FACEMESH468, 0, [37, 267, 0, 84, 314, 17]).expect("built-in scheme is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LandmarkError> {
        serde_json::from_str(text).map_err(|e| LandmarkError::InvalidScheme(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("scheme serializes")
    }
}

pub const DLIB68: &str = "dlib68";
pub const FACEMESH468: &str = "facemesh468";

/// The two built-in schemes: `dlib68` and `facemesh468`.
pub fn builtin_schemes() -> Vec<DetectorScheme> {
    vec![DetectorScheme::dlib68(), DetectorScheme::facemesh468()]
}

#[derive(Serialize, Deserialize)]
struct SchemeFile {
    name: String,
    index_base: u32,
    mapping: BTreeMap<String, u32>,
}

impl TryFrom<SchemeFile> for DetectorScheme {
    type Error = LandmarkError;

    fn try_from(file: SchemeFile) -> Result<Self, Self::Error> {
        let mut mapping = [0u32; 6];
        for role in LipRole::ALL {
            mapping[role.slot()] = *file.mapping.get(role.as_str()).ok_or_else(|| {
                LandmarkError::InvalidScheme(format!("mapping lacks role {role}"))
            })?;
        }
        if let Some(extra) = file
            .mapping
            .keys()
            .find(|k| k.parse::<LipRole>().is_err())
        {
            return Err(LandmarkError::InvalidScheme(format!(
                "unknown role {extra:?} in mapping"
            )));
        }
        DetectorScheme::new(file.name, file.index_base, mapping)
    }
}

impl From<DetectorScheme> for SchemeFile {
    fn from(s: DetectorScheme) -> Self {
        SchemeFile {
            mapping: LipRole::ALL
                .iter()
                .map(|r| (r.as_str().to_string(), s.label(*r)))
                .collect(),
            name: s.name,
            index_base: s.index_base,
        }
    }
}

/// The six selected lip points of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipLandmarks {
    pub points: LipPoints,
    pub t_ms: i64,
}

impl LipLandmarks {
    pub fn new(points: LipPoints, t_ms: i64) -> Self {
        Self { points, t_ms }
    }

    pub fn get(&self, role: LipRole) -> Point {
        self.points.get(role)
    }
}

/// Projects a frame onto the six lip roles of `scheme`.
///
/// Pre-selected `pts` win over `raw`. A frame that names a different scheme
/// is rejected rather than silently reinterpreted.
pub fn select_lip_landmarks(
    frame: &ValidatedFrame,
    scheme: &DetectorScheme,
) -> Result<LipLandmarks, LandmarkError> {
    if frame.scheme != scheme.name {
        return Err(LandmarkError::SchemeMismatch {
            frame: frame.scheme.clone(),
            scheme: scheme.name.clone(),
        });
    }
    if let Some(pts) = frame.pts {
        return Ok(LipLandmarks::new(pts, frame.t_ms));
    }
    let raw = frame.raw.as_deref().unwrap_or_default();
    let mut points = LipPoints::default();
    for role in LipRole::ALL {
        let index = scheme.raw_index(role);
        let lm = raw.iter().find(|lm| lm.index == index).ok_or(LandmarkError::MissingLandmark {
            role,
            index,
        })?;
        points.set(role, lm.point);
    }
    Ok(LipLandmarks::new(points, frame.t_ms))
}

/// Built-in schemes by name, optionally extended or overridden from files.
#[derive(Debug, Clone)]
pub struct SchemeRegistry {
    schemes: Vec<DetectorScheme>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self {
            schemes: builtin_schemes(),
        }
    }
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        Self { schemes: vec![] }
    }

    /// Adds `scheme`, replacing any scheme with the same name.
    pub fn insert(&mut self, scheme: DetectorScheme) {
        self.schemes.retain(|s| s.name != scheme.name);
        self.schemes.push(scheme);
    }

    pub fn get(&self, name: &str) -> Option<&DetectorScheme> {
        self.schemes.iter().find(|s| s.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &DetectorScheme> {
        self.schemes.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_frame(scheme: &str, raw: Vec<(u32, f64, f64)>) -> LandmarkFrame {
        LandmarkFrame {
            version: 1,
            t_ms: 42,
            src: "test".into(),
            scheme: scheme.into(),
            raw: Some(
                raw.into_iter()
                    .map(|(index, x, y)| RawLandmark {
                        index,
                        point: Point::new(x, y),
                    })
                    .collect(),
            ),
            pts: None,
        }
    }

    fn full_raw(n: u32) -> Vec<(u32, f64, f64)> {
        (0..n).map(|i| (i, i as f64 * 1.5, 1000.0 - i as f64)).collect()
    }

    #[test]
    fn builtin_labels_follow_table() {
        let schemes = builtin_schemes();
        assert_eq!(schemes.len(), 2);
        let dlib = &schemes[0];
        assert_eq!(dlib.name(), "dlib68");
        assert_eq!(dlib.label(LipRole::U1), 51);
        assert_eq!(dlib.label(LipRole::L3), 57);
        let mesh = &schemes[1];
        assert_eq!(mesh.name(), "facemesh468");
        assert_eq!(mesh.label(LipRole::L3), 17);
        assert_eq!(mesh.label(LipRole::U3), 0);
        for s in &schemes {
            let labels: HashSet<_> = LipRole::ALL.iter().map(|r| s.label(*r)).collect();
            assert_eq!(labels.len(), 6);
        }
    }

    #[test]
    fn default_index_bases() {
        assert_eq!(DetectorScheme::dlib68().index_base(), 1);
        assert_eq!(DetectorScheme::dlib68().raw_index(LipRole::U1), 50);
        assert_eq!(DetectorScheme::facemesh468().index_base(), 0);
        assert_eq!(DetectorScheme::facemesh468().raw_index(LipRole::U2), 267);
    }

    #[test]
    fn selects_u1_from_raw() {
        let scheme = DetectorScheme::dlib68().with_index_base(0).unwrap();
        let mut raw = full_raw(68);
        raw[51] = (51, 10.0, 20.0);
        let frame = validate_frame(raw_frame("dlib68", raw)).unwrap();
        let lips = select_lip_landmarks(&frame, &scheme).unwrap();
        assert_eq!(lips.get(LipRole::U1), Point::new(10.0, 20.0));
        assert_eq!(lips.t_ms, 42);
    }

    #[test]
    fn one_based_labels_shift_raw_lookup() {
        let mut raw = full_raw(68);
        raw[50] = (50, 7.0, 8.0);
        let frame = validate_frame(raw_frame("dlib68", raw)).unwrap();
        let lips = select_lip_landmarks(&frame, &DetectorScheme::dlib68()).unwrap();
        assert_eq!(lips.get(LipRole::U1), Point::new(7.0, 8.0));
    }

    #[test]
    fn missing_index_is_reported() {
        let scheme = DetectorScheme::dlib68().with_index_base(0).unwrap();
        let raw = full_raw(68).into_iter().filter(|r| r.0 != 57).collect();
        let frame = validate_frame(raw_frame("dlib68", raw)).unwrap();
        assert_eq!(
            select_lip_landmarks(&frame, &scheme),
            Err(LandmarkError::MissingLandmark {
                role: LipRole::L3,
                index: 57
            })
        );
    }

    #[test]
    fn pts_win_over_raw() {
        let pts = LipPoints::from_fn(|r| Point::new(r as usize as f64, -(r as usize as f64)));
        let mut frame = raw_frame("facemesh468", full_raw(468));
        frame.pts = Some(pts);
        let frame = validate_frame(frame).unwrap();
        let lips = select_lip_landmarks(&frame, &DetectorScheme::facemesh468()).unwrap();
        assert_eq!(lips.points, pts);
    }

    #[test]
    fn scheme_mismatch() {
        let frame = validate_frame(raw_frame("dlib68", full_raw(68))).unwrap();
        assert!(matches!(
            select_lip_landmarks(&frame, &DetectorScheme::facemesh468()),
            Err(LandmarkError::SchemeMismatch { .. })
        ));
    }

    #[test]
    fn validation_rejections() {
        let nan = raw_frame("dlib68", vec![(0, f64::NAN, 1.0)]);
        assert_eq!(
            validate_frame(nan),
            Err(LandmarkError::InvalidFrame(FrameDefect::NonFinite))
        );
        let dup = raw_frame("dlib68", vec![(3, 1.0, 1.0), (3, 2.0, 2.0)]);
        assert_eq!(
            validate_frame(dup),
            Err(LandmarkError::InvalidFrame(FrameDefect::DuplicateIndex(3)))
        );
        let mut empty = raw_frame("dlib68", vec![]);
        empty.raw = None;
        assert_eq!(
            validate_frame(empty),
            Err(LandmarkError::InvalidFrame(FrameDefect::NoLandmarks))
        );
        let mut both = raw_frame("dlib68", full_raw(3));
        both.pts = Some(LipPoints::default());
        assert!(validate_frame(both).is_ok());
    }

    #[test]
    fn scheme_validation() {
        assert!(DetectorScheme::new("x", 0, [1, 1, 2, 3, 4, 5]).is_err());
        assert!(DetectorScheme::new("x", 2, [1, 2, 3, 4, 5, 6]).is_err());
        assert!(DetectorScheme::new("x", 1, [0, 2, 3, 4, 5, 6]).is_err());
        assert!(DetectorScheme::from_json(r#"{"name":"x","index_base":0,"mapping":{"U1":1}}"#)
            .is_err());
    }

    #[test]
    fn registry_override() {
        let mut reg = SchemeRegistry::default();
        reg.insert(DetectorScheme::dlib68().with_index_base(0).unwrap());
        assert_eq!(reg.get("dlib68").unwrap().index_base(), 0);
        assert_eq!(reg.iter().count(), 2);
    }

    proptest! {
        #[test]
        fn scheme_json_round_trip(
            name in "[a-z][a-z0-9_]{0,12}",
            base in 0u32..=1,
            labels in proptest::sample::subsequence((1u32..500).collect::<Vec<_>>(), 6).prop_shuffle(),
        ) {
            let mapping: [u32; 6] = labels.try_into().unwrap();
            let s = DetectorScheme::new(name, base, mapping).unwrap();
            prop_assert_eq!(DetectorScheme::from_json(&s.to_json()).unwrap(), s);
        }

        #[test]
        fn selection_is_a_pure_projection(
            coords in proptest::collection::vec((-1e4f64..1e4, -1e4f64..1e4), 468),
            which in 0usize..2,
        ) {
            let scheme = builtin_schemes().remove(which);
            let raw: Vec<_> = coords.iter().enumerate().map(|(i, &(x, y))| (i as u32, x, y)).collect();
            let frame = validate_frame(raw_frame(scheme.name(), raw)).unwrap();
            let lips = select_lip_landmarks(&frame, &scheme).unwrap();
            for role in LipRole::ALL {
                let (x, y) = coords[scheme.raw_index(role) as usize];
                prop_assert_eq!(lips.get(role).x.to_bits(), x.to_bits());
                prop_assert_eq!(lips.get(role).y.to_bits(), y.to_bits());
            }
            // selecting again from the selected points is a no-op
            let mut again = frame.clone().into_inner();
            again.raw = None;
            again.pts = Some(lips.points);
            let again = validate_frame(again).unwrap();
            prop_assert_eq!(select_lip_landmarks(&again, &scheme).unwrap(), lips);
        }
    }
}
