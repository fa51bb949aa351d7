//! Messages broadcast to feed subscribers, one JSON object per message.
//!
//! ```text
//! {"type":"state","t_ms":1200,"state":"open","score":0.97}
//! {"type":"slot","slot_id":3,"bits":"01","progress":0.5}
//! {"type":"command","slot_id":3,"value":5,"name":"CALL_NURSE"}
//! ```

use serde::{Deserialize, Serialize};

use crate::classifier::LipsState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum FeedMessage {
    State {
        t_ms: i64,
        state: LipsState,
        score: f64,
    },
    Slot {
        slot_id: u64,
        bits: String,
        progress: f64,
    },
    Command {
        slot_id: u64,
        value: u32,
        name: String,
    },
}

impl FeedMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("feed message serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
