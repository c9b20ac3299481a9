use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;
use thiserror::Error;

use crate::agents::Topology;
use crate::domain::{GuesthouseId, ProposalId, RequestDraft, UserId};
use crate::protocol::{AgentId, ProtocolConfig};
use crate::router::Latency;
use crate::store::GuesthouseUpdate;

pub const SCENARIO_VERSION: u32 = 1;

/// One scripted input at a logical time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioEvent {
    /// A user submits a request; `ref` names it for later events.
    Submit {
        at: u64,
        user: UserId,
        #[serde(rename = "ref")]
        reference: String,
        request: RequestDraft,
    },
    /// A user books one proposal of an earlier request, by rank or id.
    Select {
        at: u64,
        user: UserId,
        #[serde(rename = "ref")]
        reference: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rank: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        proposal_id: Option<ProposalId>,
    },
    /// A line typed on a user's text channel.
    Cma { at: u64, user: UserId, line: String },
    /// Staff update through the store.
    Admin {
        at: u64,
        guesthouse: GuesthouseId,
        update: GuesthouseUpdate,
    },
    /// A hand-built envelope offered to the router, signed with the
    /// sender's key and optionally with one bit flipped afterwards.
    Inject {
        at: u64,
        from: AgentId,
        to: AgentId,
        performative: String,
        #[serde(default, rename = "ref", skip_serializing_if = "Option::is_none")]
        reference: Option<String>,
        #[serde(default)]
        body: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tamper_bit: Option<usize>,
    },
    /// The next hold at this guesthouse fails as a storage fault.
    Fault { at: u64, guesthouse: GuesthouseId },
}

impl ScenarioEvent {
    pub fn at(&self) -> u64 {
        match self {
            ScenarioEvent::Submit { at, .. }
            | ScenarioEvent::Select { at, .. }
            | ScenarioEvent::Cma { at, .. }
            | ScenarioEvent::Admin { at, .. }
            | ScenarioEvent::Inject { at, .. }
            | ScenarioEvent::Fault { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub horizon: u64,
    #[serde(default)]
    pub latency: Latency,
    #[serde(default)]
    pub config: ProtocolConfig,
    pub topology: Topology,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", render_issues(.0))]
pub struct ScenarioError(pub Vec<Issue>);

fn render_issues(issues: &[Issue]) -> String {
    issues
        .iter()
        .map(|i| format!("line {}: {}", i.line, i.message))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Deserialize)]
struct Outline<'a> {
    #[serde(borrow)]
    events: Option<Vec<&'a RawValue>>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

impl Scenario {
    /// Parses and validates. Every problem found is reported with the line
    /// it starts on.
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| {
            ScenarioError(vec![Issue {
                line: e.line(),
                message: e.to_string(),
            }])
        })?;
        // Locate each event in the source so semantic errors can point at it.
        let lines: Vec<usize> = serde_json::from_str::<Outline>(text)
            .ok()
            .and_then(|o| o.events)
            .map(|evs| {
                evs.iter()
                    .map(|raw| line_of(text, raw.get().as_ptr() as usize - text.as_ptr() as usize))
                    .collect()
            })
            .unwrap_or_default();
        let issues = scenario.check(|i| lines.get(i).copied().unwrap_or(1));
        if issues.is_empty() {
            Ok(scenario)
        } else {
            Err(ScenarioError(issues))
        }
    }

    /// Validates a scenario built in code. Issues carry the event index
    /// (from 1) in place of a line.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let issues = self.check(|i| i + 1);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError(issues))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenarios always serialise")
    }

    fn check(&self, line: impl Fn(usize) -> usize) -> Vec<Issue> {
        let mut issues = Vec::new();
        if self.version != SCENARIO_VERSION {
            issues.push(Issue {
                line: 1,
                message: format!("unsupported version {}, expected {SCENARIO_VERSION}", self.version),
            });
        }
        if let Err(e) = self.topology.validate() {
            issues.push(Issue {
                line: 1,
                message: e.to_string(),
            });
        }
        if let Latency::Uniform(lo, hi) = self.latency {
            if lo > hi {
                issues.push(Issue {
                    line: 1,
                    message: format!("latency bounds {lo} > {hi}"),
                });
            }
        }
        let mut last = 0;
        let mut refs: BTreeMap<&str, &UserId> = BTreeMap::new();
        for (i, ev) in self.events.iter().enumerate() {
            let mut bad = |message: String| issues.push(Issue { line: line(i), message });
            if ev.at() < last {
                bad(format!("event time {} goes back from {last}", ev.at()));
            }
            last = ev.at();
            match ev {
                ScenarioEvent::Submit { user, reference, .. } => {
                    if self.topology.user(user).is_none() {
                        bad(format!("unknown user {user}"));
                    }
                    if refs.insert(reference, user).is_some() {
                        bad(format!("ref {reference} is used twice"));
                    }
                }
                ScenarioEvent::Select {
                    user,
                    reference,
                    rank,
                    proposal_id,
                    ..
                } => {
                    match refs.get(reference.as_str()) {
                        None => bad(format!("ref {reference} names no earlier submission")),
                        Some(owner) if *owner != user => bad(format!("ref {reference} belongs to {owner}, not {user}")),
                        _ => {}
                    }
                    match (rank, proposal_id) {
                        (Some(0), _) => bad("ranks start at 1".into()),
                        (Some(_), None) | (None, Some(_)) => {}
                        _ => bad("give exactly one of rank and proposal_id".into()),
                    }
                }
                ScenarioEvent::Cma { user, .. } => match self.topology.user(user) {
                    None => bad(format!("unknown user {user}")),
                    Some(u) if !u.text_channel => bad(format!("user {user} has no text channel")),
                    _ => {}
                },
                ScenarioEvent::Admin { guesthouse, .. } | ScenarioEvent::Fault { guesthouse, .. } => {
                    if self.topology.guesthouse(guesthouse).is_none() {
                        bad(format!("unknown guesthouse {guesthouse}"));
                    }
                }
                ScenarioEvent::Inject { from, reference, .. } => {
                    if !self.has_agent(from) {
                        bad(format!("injected sender {from} is not in the topology"));
                    }
                    if let Some(r) = reference {
                        if !refs.contains_key(r.as_str()) {
                            bad(format!("ref {r} names no earlier submission"));
                        }
                    }
                }
            }
        }
        issues
    }

    /// Whether the cast built from the topology includes `id`.
    pub fn has_agent(&self, id: &AgentId) -> bool {
        use crate::protocol::Role;
        let t = &self.topology;
        match id.role() {
            Role::Na => true,
            Role::Za => t.zones.iter().any(|z| z.as_str() == id.name()),
            Role::Ga => t
                .guesthouses
                .iter()
                .any(|g| g.profile.guesthouse_id.as_str() == id.name()),
            Role::Pa => t.users.iter().any(|u| u.user_id.as_str() == id.name()),
            Role::Cma => t
                .users
                .iter()
                .any(|u| u.text_channel && u.user_id.as_str() == id.name()),
        }
    }
}
