//! Trace files: one canonical JSON value per line.
//!
//! A line is either an accepted envelope, exactly as it went over the wire,
//! or an event record carrying an `"event"` field.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AgentInfo, RejectReason};
use crate::canonical::to_canonical_string;
use crate::domain::{GuesthouseId, RequestId, UserId};
use crate::protocol::{AgentId, CodecError, Command, Envelope, Notice, ProtocolConfig};
use crate::store::{GuesthouseUpdate, StoreSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TraceEvent {
    /// First line of every run: the cast and the deadlines in force.
    Topology {
        agents: Vec<AgentInfo>,
        config: ProtocolConfig,
    },
    /// The router refused an envelope; it was not delivered.
    Rejected {
        at: u64,
        reason: RejectReason,
        detail: String,
        raw: String,
    },
    Timeout {
        at: u64,
        agent: AgentId,
        request_id: RequestId,
        pending: Vec<AgentId>,
    },
    Fault {
        at: u64,
        agent: AgentId,
        request_id: Option<RequestId>,
        detail: String,
    },
    Notice {
        at: u64,
        user: UserId,
        notice: Notice,
    },
    /// User input handed to an agent.
    Command {
        at: u64,
        agent: AgentId,
        command: Command,
    },
    Admin {
        at: u64,
        guesthouse_id: GuesthouseId,
        update: GuesthouseUpdate,
        result: String,
    },
    /// A scripted storage fault armed for the next hold at a guesthouse.
    FaultArmed {
        at: u64,
        guesthouse_id: GuesthouseId,
    },
    Snapshot {
        at: u64,
        store: StoreSnapshot,
    },
    /// Last line. `quiescent` is false when the horizon cut the run short.
    End {
        at: u64,
        quiescent: bool,
        pending_events: usize,
        pending_requests: Vec<RequestId>,
    },
}

impl TraceEvent {
    pub fn to_line(&self) -> String {
        to_canonical_string(self).expect("trace events always serialise")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceLine {
    Envelope(Envelope),
    Event(TraceEvent),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: {detail}")]
    Line { line: usize, detail: String },
}

impl TraceLine {
    pub fn parse(text: &str) -> Result<Self, String> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if value.get("event").is_some() {
            serde_json::from_value(value)
                .map(TraceLine::Event)
                .map_err(|e| e.to_string())
        } else {
            Envelope::decode(text.as_bytes())
                .map(TraceLine::Envelope)
                .map_err(|e: CodecError| e.to_string())
        }
    }
}

/// Parses a whole trace; blank lines are skipped.
pub fn parse_trace(text: &str) -> Result<Vec<TraceLine>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| TraceLine::parse(l).map_err(|detail| TraceError::Line { line: i + 1, detail }))
        .collect()
}

/// Joins trace lines into file contents, newline-terminated.
pub fn render(lines: &[String]) -> String {
    let mut out = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        out.push_str(l);
        out.push('\n');
    }
    out
}

/// Lowercase hex SHA-256 of the trace bytes.
pub fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
