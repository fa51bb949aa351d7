//! Frame lines.
//!
//! One JSON object per line:
//!
//! ```text
//! {"v":1,"t_ms":0,"src":"cam0","scheme":"facemesh468","pts":{"U1":[x,y],..,"L3":[x,y]}}
//! {"v":1,"t_ms":0,"src":"cam0","scheme":"dlib68","raw":[[idx,x,y],...]}
//! ```
//!
//! Unknown fields are ignored. Raw indices are zero-based array positions.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::landmarks::{LandmarkFrame, LipPoints, LipRole, Point, RawLandmark};

pub const FRAME_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("schema violation at {0}")]
    SchemaViolation(String),
    #[error("unsupported frame version {0}")]
    UnsupportedVersion(u64),
}

fn violation(field: impl Into<String>) -> FrameError {
    FrameError::SchemaViolation(field.into())
}

fn number(v: &Value, field: impl Fn() -> String) -> Result<f64, FrameError> {
    v.as_f64().ok_or_else(|| violation(field()))
}

fn parse_pts(v: &Value) -> Result<LipPoints, FrameError> {
    let obj = v.as_object().ok_or_else(|| violation("pts"))?;
    let mut pts = LipPoints::default();
    for role in LipRole::ALL {
        let field = || format!("pts.{role}");
        let pair = obj
            .get(role.as_str())
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .ok_or_else(|| violation(field()))?;
        pts.set(role, Point::new(number(&pair[0], field)?, number(&pair[1], field)?));
    }
    Ok(pts)
}

fn parse_raw(v: &Value) -> Result<Vec<RawLandmark>, FrameError> {
    let arr = v.as_array().ok_or_else(|| violation("raw"))?;
    arr.iter()
        .enumerate()
        .map(|(i, entry)| {
            let field = || format!("raw[{i}]");
            let triple = entry
                .as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| violation(field()))?;
            let index = triple[0]
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| violation(field()))?;
            Ok(RawLandmark {
                index,
                point: Point::new(number(&triple[1], field)?, number(&triple[2], field)?),
            })
        })
        .collect()
}

/// Parses and schema-checks one frame line.
pub fn parse_frame(line: &str) -> Result<LandmarkFrame, FrameError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| FrameError::MalformedJson(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| violation("frame"))?;

    let version = obj.get("v").ok_or_else(|| violation("v"))?;
    let version = version.as_u64().ok_or_else(|| violation("v"))?;
    if version != FRAME_VERSION as u64 {
        return Err(FrameError::UnsupportedVersion(version));
    }
    let t_ms = obj
        .get("t_ms")
        .and_then(Value::as_i64)
        .ok_or_else(|| violation("t_ms"))?;
    let text = |key: &str| {
        obj.get(key)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| violation(key))
    };
    let src = text("src")?;
    let scheme = text("scheme")?;

    let present = |key| obj.get(key).filter(|v| !v.is_null());
    let pts = present("pts").map(parse_pts).transpose()?;
    let raw = present("raw").map(parse_raw).transpose()?;
    if pts.is_none() && raw.is_none() {
        return Err(violation("pts"));
    }
    Ok(LandmarkFrame {
        version: FRAME_VERSION,
        t_ms,
        src,
        scheme,
        raw,
        pts,
    })
}

/// Writes the wire form of `frame` without a trailing newline.
pub fn serialize_frame(frame: &LandmarkFrame) -> String {
    let mut obj = Map::new();
    obj.insert("v".into(), frame.version.into());
    obj.insert("t_ms".into(), frame.t_ms.into());
    obj.insert("src".into(), frame.src.clone().into());
    obj.insert("scheme".into(), frame.scheme.clone().into());
    if let Some(pts) = &frame.pts {
        let map: Map<String, Value> = pts
            .iter()
            .map(|(role, p)| (role.as_str().to_owned(), Value::from(vec![p.x, p.y])))
            .collect();
        obj.insert("pts".into(), map.into());
    }
    if let Some(raw) = &frame.raw {
        let rows: Vec<Value> = raw
            .iter()
            .map(|lm| Value::from(vec![Value::from(lm.index), lm.point.x.into(), lm.point.y.into()]))
            .collect();
        obj.insert("raw".into(), rows.into());
    }
    Value::Object(obj).to_string()
}
