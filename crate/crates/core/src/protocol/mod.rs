//! Message vocabulary and the per-role conversation state machines.
//!
//! Each agent type consumes envelopes, timer expiries and (for personal
//! agents) user commands, and answers with [`Action`]s. Agents never talk
//! to a transport directly, so every transition can be driven and
//! inspected synchronously.

mod envelope;
mod guesthouse;
mod national;
mod personal;
mod ranking;
mod zonal;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use envelope::{
    AgentId, BadAgentId, BookRef, CodecError, Envelope, Payload, Performative, Role, SorryReason, WIRE_VERSION,
};
pub use guesthouse::GuesthouseAgent;
pub use national::NationalAgent;
pub use personal::{Choice, PersonalAgent, RequestPhase, RequestStatus};
pub use ranking::{rank_proposals, Classification, Criteria, RankKey};
pub use zonal::ZonalAgent;

use crate::domain::{BookingId, Proposal, RequestDraft, RequestId, UserId};
use crate::store::HistoryEntry;

/// Logical-time budgets and limits shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    /// How long a ZA waits for each guesthouse's answer in the booking phase.
    pub ga_reply: u64,
    /// How long a GA with a prefix waits for its siblings.
    pub collaboration: u64,
    /// How long a ZA collects tells and sorries for one request.
    pub zone_collection: u64,
    /// How long the NA waits for every ZA; covers the zone window plus transit.
    pub national_collection: u64,
    pub max_legs: usize,
    /// How long a classification may be booked from.
    pub offer_ttl: u64,
    pub criteria: Criteria,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            ga_reply: 30,
            collaboration: 20,
            zone_collection: 100,
            national_collection: 130,
            max_legs: crate::domain::DEFAULT_MAX_LEGS,
            offer_ttl: 300,
            criteria: Criteria::default(),
        }
    }
}

impl ProtocolConfig {
    /// How long a GA remembers that it took part in a request. Long enough
    /// that no collaboration request for it can still be in flight.
    pub fn participation_memory(&self) -> u64 {
        self.zone_collection + self.collaboration + self.ga_reply
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("proposals for {0} and {1} cannot be ranked together")]
    MixedRequests(RequestId, RequestId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "timer", rename_all = "kebab-case")]
pub enum Timer {
    /// End of a ZA's or the NA's collection window.
    Collection { request_id: RequestId },
    /// End of a GA's wait for completions of its prefix.
    Collaboration { request_id: RequestId },
    /// A GA may drop its participation record.
    Forget { request_id: RequestId },
    /// A ZA's wait for one booking reply; `step` tells stale timers apart.
    Booking { booking_id: BookingId, step: u32 },
}

/// Operational events worth recording in a trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "note", rename_all = "kebab-case")]
pub enum Note {
    /// A deadline fired with peers still silent.
    Timeout {
        request_id: RequestId,
        pending: Vec<AgentId>,
    },
    /// Something was received that the conversation cannot accept.
    Fault {
        request_id: Option<RequestId>,
        detail: String,
    },
}

/// What a personal agent tells its user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "notice", rename_all = "kebab-case")]
pub enum Notice {
    Submitted {
        request_id: RequestId,
    },
    Rejected {
        request_id: Option<RequestId>,
        reason: String,
    },
    Classified {
        classification: Classification,
    },
    Booked {
        request_id: RequestId,
        booking_id: BookingId,
        proposal: Proposal,
    },
    Failed {
        request_id: RequestId,
        booking_id: Option<BookingId>,
        reason: String,
    },
    /// A reply line for a text channel.
    Line {
        text: String,
    },
}

/// User-side input for personal agents and gateways.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    Submit {
        request_id: RequestId,
        draft: RequestDraft,
    },
    Select {
        request_id: RequestId,
        choice: Choice,
    },
    /// One line typed on a text channel.
    Line {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outgoing {
    pub to: AgentId,
    pub request_id: Option<RequestId>,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send(Outgoing),
    Timer { after: u64, timer: Timer },
    Note(Note),
    Notify { user: UserId, notice: Notice },
    History(HistoryEntry),
}

impl Action {
    pub fn send(to: AgentId, request_id: impl Into<Option<RequestId>>, payload: Payload) -> Self {
        Action::Send(Outgoing {
            to,
            request_id: request_id.into(),
            payload,
        })
    }

    pub fn fault(request_id: Option<RequestId>, detail: impl Into<String>) -> Self {
        Action::Note(Note::Fault {
            request_id,
            detail: detail.into(),
        })
    }
}

/// An agent's conversation logic. Implementations are single-owner: the
/// transport delivers one input at a time.
pub trait Agent: Send {
    fn id(&self) -> &AgentId;

    fn on_envelope(&mut self, now: u64, envelope: &Envelope) -> Vec<Action>;

    fn on_timer(&mut self, now: u64, timer: Timer) -> Vec<Action>;

    fn on_command(&mut self, _now: u64, command: Command) -> Vec<Action> {
        vec![Action::fault(
            None,
            format!("{} accepts no commands, got {command:?}", self.id()),
        )]
    }
}
