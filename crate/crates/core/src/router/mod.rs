//! The message bus: who is registered, who may talk to whom, and how
//! envelopes travel.
//!
//! Every envelope passes [`Router::admit`] before delivery. Admission checks
//! the wire form, the sender's MAC, that the receiver exists and that the
//! role pair is allowed. Two transports sit on top: [`SimNet`], a seeded
//! single-threaded event loop, and [`LiveNet`], one tokio task per agent.

mod auth;
mod live;
mod permission;
mod registry;
mod sim;
pub mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use auth::AuthKey;
pub use live::{LiveNet, LiveOptions, NoticeSink};
pub use permission::PermissionMatrix;
pub use registry::{AgentInfo, AgentRecord, Registry, RegistryError};
pub use sim::{Hook, Latency, SimNet, SimRun, SimStats};
pub use trace::{TraceEvent, TraceLine};

use crate::protocol::{AgentId, Envelope, Outgoing, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    /// Bad or missing MAC, or an unregistered sender.
    Auth,
    /// The role pair is not in the permission matrix.
    Permission,
    /// No such receiver.
    Routing,
    /// Bytes that do not decode as a canonical envelope.
    Malformed,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Auth => "auth",
            RejectReason::Permission => "permission",
            RejectReason::Routing => "routing",
            RejectReason::Malformed => "malformed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub reason: RejectReason,
    pub detail: String,
}

impl Rejection {
    fn new(reason: RejectReason, detail: impl Into<String>) -> Self {
        Self {
            reason,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rejected ({}): {}", self.reason, self.detail)
    }
}

impl std::error::Error for Rejection {}

#[derive(Debug, Clone, Default)]
pub struct Router {
    registry: Registry,
    matrix: PermissionMatrix,
}

impl Router {
    pub fn new(registry: Registry, matrix: PermissionMatrix) -> Self {
        Self { registry, matrix }
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn matrix(&self) -> &PermissionMatrix {
        &self.matrix
    }

    /// Whether `sender` may address `receiver`. Guesthouses only talk to
    /// guesthouses of their own zone.
    pub fn permits(&self, sender: &AgentId, receiver: &AgentId) -> Result<(), Rejection> {
        if !self.matrix.allows(sender.role(), receiver.role()) {
            return Err(Rejection::new(
                RejectReason::Permission,
                format!("{} may not address {}", sender.role(), receiver.role()),
            ));
        }
        if sender.role() == Role::Ga && receiver.role() == Role::Ga {
            let (a, b) = (self.registry.zone_of(sender), self.registry.zone_of(receiver));
            if a.is_none() || a != b {
                return Err(Rejection::new(
                    RejectReason::Permission,
                    format!("{sender} and {receiver} are in different zones"),
                ));
            }
        }
        Ok(())
    }

    /// Decides whether wire bytes may be delivered.
    pub fn admit(&self, bytes: &[u8]) -> Result<Envelope, Rejection> {
        let env =
            Envelope::decode_canonical(bytes).map_err(|e| Rejection::new(RejectReason::Malformed, e.to_string()))?;
        let key = self
            .registry
            .key(&env.sender)
            .ok_or_else(|| Rejection::new(RejectReason::Auth, format!("unknown sender {}", env.sender)))?;
        if !key.verify(&env.signing_bytes(), &env.auth_tag) {
            return Err(Rejection::new(
                RejectReason::Auth,
                format!("bad tag from {}", env.sender),
            ));
        }
        if !self.registry.contains(&env.receiver) {
            return Err(Rejection::new(
                RejectReason::Routing,
                format!("unknown receiver {}", env.receiver),
            ));
        }
        self.permits(&env.sender, &env.receiver)?;
        Ok(env)
    }
}

/// Builds, signs and encodes an envelope.
pub fn seal(key: &AuthKey, msg_id: String, sender: AgentId, out: Outgoing, sent_at: u64) -> (Envelope, String) {
    let mut env = Envelope {
        msg_id,
        request_id: out.request_id,
        sender,
        receiver: out.to,
        payload: out.payload,
        sent_at,
        auth_tag: String::new(),
    };
    env.auth_tag = key.sign(&env.signing_bytes());
    let wire = env.encode();
    (env, wire)
}

#[cfg(test)]
mod tests;
