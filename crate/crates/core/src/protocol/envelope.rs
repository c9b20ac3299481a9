use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::ranking::Classification;
use crate::canonical::to_canonical_string;
use crate::domain::{
    BookingId, GuesthouseId, Proposal, ProposalId, ProposalLeg, RequestId, ReservationRequest, StayInterval, UserId,
    ZoneId,
};

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Pa,
    Na,
    Za,
    Ga,
    Cma,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::Pa, Role::Na, Role::Za, Role::Ga, Role::Cma];

    fn prefix(self) -> &'static str {
        match self {
            Role::Pa => "pa",
            Role::Na => "na",
            Role::Za => "za",
            Role::Ga => "ga",
            Role::Cma => "cma",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.prefix().to_uppercase())
    }
}

/// Router address. The role is part of the id: `na`, `za:<zone>`,
/// `ga:<guesthouse>`, `pa:<user>`, `cma:<user>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AgentId {
    role: Role,
    name: String,
}

impl AgentId {
    pub fn national() -> Self {
        Self {
            role: Role::Na,
            name: String::new(),
        }
    }

    pub fn zonal(zone: &ZoneId) -> Self {
        Self::named(Role::Za, zone.as_str())
    }

    pub fn guesthouse(id: &GuesthouseId) -> Self {
        Self::named(Role::Ga, id.as_str())
    }

    pub fn personal(user: &UserId) -> Self {
        Self::named(Role::Pa, user.as_str())
    }

    pub fn gateway(user: &UserId) -> Self {
        Self::named(Role::Cma, user.as_str())
    }

    fn named(role: Role, name: &str) -> Self {
        Self {
            role,
            name: name.to_owned(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    /// Zone, guesthouse or user the agent stands for; empty for the NA.
    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.role == Role::Na {
            f.write_str("na")
        } else {
            write!(f, "{}:{}", self.role.prefix(), self.name)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed agent id `{0}`")]
pub struct BadAgentId(String);

impl FromStr for AgentId {
    type Err = BadAgentId;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "na" {
            return Ok(Self::national());
        }
        let (prefix, name) = s.split_once(':').ok_or_else(|| BadAgentId(s.to_owned()))?;
        let role = Role::ALL
            .into_iter()
            .find(|r| *r != Role::Na && r.prefix() == prefix)
            .ok_or_else(|| BadAgentId(s.to_owned()))?;
        if name.is_empty() {
            return Err(BadAgentId(s.to_owned()));
        }
        Ok(Self::named(role, name))
    }
}

impl TryFrom<String> for AgentId {
    type Error = BadAgentId;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AgentId> for String {
    fn from(id: AgentId) -> Self {
        id.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Performative {
    Ask,
    Tell,
    Sorry,
    CollabAsk,
    CollabTell,
    CollabSorry,
    Classify,
    Book,
    HoldOk,
    HoldFail,
    Confirm,
    Release,
    Booked,
    Failed,
}

impl Performative {
    pub const ALL: [Performative; 14] = [
        Performative::Ask,
        Performative::Tell,
        Performative::Sorry,
        Performative::CollabAsk,
        Performative::CollabTell,
        Performative::CollabSorry,
        Performative::Classify,
        Performative::Book,
        Performative::HoldOk,
        Performative::HoldFail,
        Performative::Confirm,
        Performative::Release,
        Performative::Booked,
        Performative::Failed,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Performative::Ask => "ask",
            Performative::Tell => "tell",
            Performative::Sorry => "sorry",
            Performative::CollabAsk => "collab-ask",
            Performative::CollabTell => "collab-tell",
            Performative::CollabSorry => "collab-sorry",
            Performative::Classify => "classify",
            Performative::Book => "book",
            Performative::HoldOk => "hold-ok",
            Performative::HoldFail => "hold-fail",
            Performative::Confirm => "confirm",
            Performative::Release => "release",
            Performative::Booked => "booked",
            Performative::Failed => "failed",
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Performative {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|p| p.token() == s)
            .ok_or_else(|| CodecError::UnknownPerformative(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SorryReason {
    /// The guesthouse cannot serve the request or remainder.
    NoMatch,
    /// Exclusivity: already part of a proposal for this request.
    AlreadyParticipating,
    /// Busy looking for a completion of its own prefix.
    Collaborating,
    /// A prefix was found but no sibling completed it.
    NoCompletion,
    /// The completion could not be composed (cap or contiguity).
    ComposeFailed,
    Invalid,
}

/// Request-scoped booking reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BookRef {
    pub booking_id: BookingId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    tag = "performative",
    content = "body",
    rename_all = "kebab-case",
    deny_unknown_fields
)]
pub enum Payload {
    Ask {
        request: ReservationRequest,
    },
    /// From a GA: its one proposal. From a ZA: everything it collected,
    /// possibly nothing.
    Tell {
        proposals: Vec<Proposal>,
    },
    Sorry {
        reason: SorryReason,
    },
    CollabAsk {
        request: ReservationRequest,
        remainder: StayInterval,
    },
    CollabTell {
        leg: ProposalLeg,
    },
    CollabSorry {
        reason: SorryReason,
    },
    Classify {
        classification: Classification,
    },
    /// The proposal travels with the book once it leaves the PA; the
    /// gateway's selection names only the proposal id.
    Book {
        proposal_id: ProposalId,
        #[serde(default)]
        booking_id: Option<BookingId>,
        user_id: UserId,
        #[serde(default)]
        proposal: Option<Proposal>,
    },
    HoldOk(BookRef),
    HoldFail {
        booking_id: BookingId,
        reason: String,
    },
    Confirm(BookRef),
    Release(BookRef),
    Booked {
        booking_id: BookingId,
        proposal: Proposal,
    },
    Failed {
        #[serde(default)]
        booking_id: Option<BookingId>,
        reason: String,
    },
}

impl Payload {
    pub fn performative(&self) -> Performative {
        match self {
            Payload::Ask { .. } => Performative::Ask,
            Payload::Tell { .. } => Performative::Tell,
            Payload::Sorry { .. } => Performative::Sorry,
            Payload::CollabAsk { .. } => Performative::CollabAsk,
            Payload::CollabTell { .. } => Performative::CollabTell,
            Payload::CollabSorry { .. } => Performative::CollabSorry,
            Payload::Classify { .. } => Performative::Classify,
            Payload::Book { .. } => Performative::Book,
            Payload::HoldOk(_) => Performative::HoldOk,
            Payload::HoldFail { .. } => Performative::HoldFail,
            Payload::Confirm(_) => Performative::Confirm,
            Payload::Release(_) => Performative::Release,
            Payload::Booked { .. } => Performative::Booked,
            Payload::Failed { .. } => Performative::Failed,
        }
    }

    pub fn failed(booking_id: Option<BookingId>, reason: impl Into<String>) -> Self {
        Payload::Failed {
            booking_id,
            reason: reason.into(),
        }
    }

    fn body(&self) -> Value {
        match serde_json::to_value(self) {
            Ok(Value::Object(mut map)) => map.remove("body").unwrap_or(Value::Null),
            _ => Value::Null,
        }
    }

    fn from_parts(performative: Performative, body: Value) -> Result<Self, CodecError> {
        let mut map = serde_json::Map::new();
        map.insert("performative".into(), Value::String(performative.token().into()));
        map.insert("body".into(), body);
        serde_json::from_value(Value::Object(map))
            .map_err(|e| CodecError::Malformed(format!("{performative} body: {e}")))
    }
}

/// One authenticated message between two agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub msg_id: String,
    /// Absent only on administrative traffic.
    pub request_id: Option<RequestId>,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub payload: Payload,
    pub sent_at: u64,
    /// Lowercase hex MAC over [`Envelope::signing_bytes`].
    pub auth_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error("unknown performative `{0}`")]
    UnknownPerformative(String),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u64),
    #[error("envelope bytes are not in canonical form")]
    NonCanonical,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Wire {
    v: u64,
    msg_id: String,
    request_id: Option<RequestId>,
    sender: String,
    receiver: String,
    performative: String,
    body: Value,
    sent_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    auth_tag: Option<String>,
}

impl Envelope {
    pub fn performative(&self) -> Performative {
        self.payload.performative()
    }

    fn wire(&self, with_tag: bool) -> Wire {
        Wire {
            v: u64::from(WIRE_VERSION),
            msg_id: self.msg_id.clone(),
            request_id: self.request_id.clone(),
            sender: self.sender.to_string(),
            receiver: self.receiver.to_string(),
            performative: self.performative().token().to_owned(),
            body: self.payload.body(),
            sent_at: self.sent_at,
            auth_tag: with_tag.then(|| self.auth_tag.clone()),
        }
    }

    /// The bytes the auth tag covers: the canonical encoding minus the tag.
    pub fn signing_bytes(&self) -> Vec<u8> {
        to_canonical_string(&self.wire(false))
            .expect("envelope fields always serialise")
            .into_bytes()
    }

    /// Canonical JSON, one line, no trailing newline.
    pub fn encode(&self) -> String {
        to_canonical_string(&self.wire(true)).expect("envelope fields always serialise")
    }

    /// Parses an envelope. Accepts any key order and whitespace; use
    /// [`Envelope::decode_canonical`] where the exact bytes matter.
    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        let text = std::str::from_utf8(bytes).map_err(|e| CodecError::Malformed(e.to_string()))?;
        let raw: Value = serde_json::from_str(text).map_err(|e| CodecError::Malformed(e.to_string()))?;
        if let Some(v) = raw.get("v").and_then(Value::as_u64) {
            if v != u64::from(WIRE_VERSION) {
                return Err(CodecError::SchemaVersion(v));
            }
        }
        let wire: Wire = serde_json::from_value(raw).map_err(|e| CodecError::Malformed(e.to_string()))?;
        let performative: Performative = wire.performative.parse()?;
        let parse_agent = |s: &str| s.parse::<AgentId>().map_err(|e| CodecError::Malformed(e.to_string()));
        Ok(Envelope {
            msg_id: wire.msg_id,
            request_id: wire.request_id,
            sender: parse_agent(&wire.sender)?,
            receiver: parse_agent(&wire.receiver)?,
            payload: Payload::from_parts(performative, wire.body)?,
            sent_at: wire.sent_at,
            auth_tag: wire.auth_tag.unwrap_or_default(),
        })
    }

    /// Decodes and requires that re-encoding reproduces the input exactly,
    /// so that no two byte strings authenticate as the same envelope.
    pub fn decode_canonical(bytes: &[u8]) -> Result<Self, CodecError> {
        let env = Self::decode(bytes)?;
        if env.encode().as_bytes() != bytes {
            return Err(CodecError::NonCanonical);
        }
        Ok(env)
    }
}
