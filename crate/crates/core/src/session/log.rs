//! JSON-lines session logs. The first line is the header; every following
//! line is one event in wire format (`{"v":1,"seq":..,"t_s":..,"type":..}`).

use std::io::{BufRead, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EndReason, EventBody, Protocol, SessionConfig, SessionError, SessionEvent};
use crate::classifier::KnnModel;

pub const WIRE_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename = "header")]
pub struct LogHeader {
    pub v: u64,
    /// SHA-256 of the model file JSON, hex encoded.
    pub model_sha256: String,
    pub protocol: Protocol,
    pub config: SessionConfig,
}

impl LogHeader {
    pub fn new(model: &KnnModel, protocol: &Protocol, config: &SessionConfig) -> Self {
        let json = model.to_json().expect("model serialises");
        Self {
            v: WIRE_VERSION,
            model_sha256: hex::encode(Sha256::digest(json.as_bytes())),
            protocol: protocol.clone(),
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub events: Vec<SessionEvent>,
}

/// One wire line, without the trailing newline.
pub fn encode_event(event: &SessionEvent) -> String {
    let mut value = serde_json::to_value(event).expect("events serialise");
    if let Some(obj) = value.as_object_mut() {
        obj.insert("v".into(), WIRE_VERSION.into());
    }
    value.to_string()
}

pub fn decode_event(line: &str) -> Result<SessionEvent, String> {
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    match value.get("v").and_then(serde_json::Value::as_u64) {
        Some(WIRE_VERSION) => {}
        Some(v) => return Err(format!("unsupported wire version {v}")),
        None => return Err("missing wire version `v`".into()),
    }
    serde_json::from_value(value).map_err(|e| e.to_string())
}

pub fn write_log<W: Write>(log: &SessionLog, mut w: W) -> Result<(), SessionError> {
    let header = serde_json::to_string(&log.header).expect("header serialises");
    writeln!(w, "{header}")?;
    for e in &log.events {
        writeln!(w, "{}", encode_event(e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log<R: BufRead>(r: R) -> Result<SessionLog, SessionError> {
    let mut lines = r.lines().filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
    let header_line = lines.next().ok_or_else(|| SessionError::CorruptLog {
        index: 0,
        message: "missing header line".into(),
    })??;
    let header: LogHeader =
        serde_json::from_str(&header_line).map_err(|e| SessionError::CorruptLog {
            index: 0,
            message: format!("header: {e}"),
        })?;
    let mut events = Vec::new();
    for (index, line) in lines.enumerate() {
        let event = decode_event(&line?).map_err(|message| SessionError::CorruptLog { index, message })?;
        events.push(event);
    }
    Ok(SessionLog { header, events })
}

/// The events a replay re-emits. A log without events replays as a single
/// immediate `session_end`.
pub fn replay(log: &SessionLog) -> Vec<SessionEvent> {
    if log.events.is_empty() {
        return vec![SessionEvent {
            seq: 0,
            t_s: 0.0,
            body: EventBody::SessionEnd {
                reason: EndReason::SourceExhausted,
                detail: Some("log has no events".into()),
            },
        }];
    }
    log.events.clone()
}

/// Hands each replayed event to `sink`, either at its recorded offset from
/// the start of the replay or immediately when `fast` is set.
pub fn replay_paced(log: &SessionLog, fast: bool, mut sink: impl FnMut(&SessionEvent)) -> usize {
    let events = replay(log);
    let start = Instant::now();
    for e in &events {
        if !fast {
            let due = Duration::from_secs_f64(e.t_s.max(0.0));
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        sink(e);
    }
    events.len()
}
