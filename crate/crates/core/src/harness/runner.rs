use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::check::{check_trace, PropertyReport};
use super::scenario::{Scenario, ScenarioError, ScenarioEvent};
use crate::agents::{build_cast, BuildError};
use crate::canonical::canonical_value;
use crate::domain::{BookingId, GuesthouseId, Money, ProposalId, RequestId, UserId};
use crate::protocol::{AgentId, Choice, Command, Notice, WIRE_VERSION};
use crate::router::trace::{digest, render};
use crate::router::{AuthKey, SimNet, TraceEvent};
use crate::store::{AdminPrincipal, Store, StoreConfig};

/// Overrides for a single run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario:\n{0}")]
    Invalid(#[from] ScenarioError),
    #[error(transparent)]
    Build(#[from] BuildError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pending,
    Rejected,
    Classified,
    Booked,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedProposal {
    pub rank: usize,
    pub proposal_id: ProposalId,
    pub guesthouses: Vec<GuesthouseId>,
    pub total_price: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestReport {
    /// The scenario's name for the request; absent for text-channel requests.
    pub reference: Option<String>,
    pub user_id: UserId,
    pub request_id: RequestId,
    pub outcome: Outcome,
    pub reason: Option<String>,
    pub proposals: Vec<RankedProposal>,
    pub booking_id: Option<BookingId>,
    pub booked: Option<ProposalId>,
    /// Failed booking attempts and refused selections.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub horizon: u64,
    pub quiescent: bool,
    pub envelopes: u64,
    pub rejected: u64,
    pub requests: Vec<RequestReport>,
    pub properties: PropertyReport,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.properties.passed()
    }

    pub fn request(&self, reference: &str) -> Option<&RequestReport> {
        self.requests.iter().find(|r| r.reference.as_deref() == Some(reference))
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scenario {} seed {} horizon {}: {} envelopes, {} rejected, {}",
            self.name,
            self.seed,
            self.horizon,
            self.envelopes,
            self.rejected,
            if self.quiescent { "quiescent" } else { "cut at horizon" }
        )?;
        for r in &self.requests {
            let name = r.reference.as_deref().unwrap_or("-");
            write!(
                f,
                "request {name} ({}) user {}: {:?}",
                r.request_id, r.user_id, r.outcome
            )?;
            if let Some(reason) = &r.reason {
                write!(f, ", {reason}")?;
            }
            writeln!(f)?;
            for p in &r.proposals {
                let chain: Vec<&str> = p.guesthouses.iter().map(GuesthouseId::as_str).collect();
                writeln!(
                    f,
                    "  {}. {} {} total {}",
                    p.rank,
                    p.proposal_id,
                    chain.join("+"),
                    p.total_price
                )?;
            }
            if let (Some(b), Some(p)) = (&r.booking_id, &r.booked) {
                writeln!(f, "  booked {p} as {b}")?;
            }
            for failure in &r.failures {
                writeln!(f, "  failed: {failure}")?;
            }
        }
        write!(f, "{}", self.properties)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: String,
    pub digest: String,
    pub report: RunReport,
}

/// Runs a scenario on the simulated transport and checks the trace.
pub fn run(scenario: &Scenario, options: RunOptions) -> Result<RunOutput, RunError> {
    scenario.validate()?;
    let seed = options.seed.unwrap_or(scenario.seed);
    let horizon = options.horizon.unwrap_or(scenario.horizon);
    let store = Arc::new(Store::in_memory(StoreConfig::default()));
    scenario.topology.seed_store(&store)?;
    let cast = build_cast(
        &scenario.topology,
        &store,
        scenario.config,
        |id| AuthKey::derive(seed, &id.to_string()),
        seed,
    )?;
    let mut net = SimNet::new(cast.router, Arc::clone(&store), seed, scenario.latency, scenario.config);
    for agent in cast.agents {
        net.add_agent(agent);
    }

    // A stream of its own, so request ids never collide with the ids the
    // text gateways draw from the same seed.
    let mut ids = ChaCha8Rng::seed_from_u64(seed);
    ids.set_stream(1);
    let mut refs: BTreeMap<&str, RequestId> = BTreeMap::new();
    let mut book = Book::default();
    let mut injected = 0u64;
    for event in &scenario.events {
        match event {
            ScenarioEvent::Submit {
                at,
                user,
                reference,
                request,
            } => {
                let rid = RequestId::from_bits(ids.gen());
                refs.insert(reference, rid.clone());
                book.entry(Some(reference.clone()), user, &rid);
                net.schedule_command(
                    *at,
                    AgentId::personal(user),
                    Command::Submit {
                        request_id: rid,
                        draft: request.clone(),
                    },
                );
            }
            ScenarioEvent::Select {
                at,
                user,
                reference,
                rank,
                proposal_id,
            } => {
                let choice = match (rank, proposal_id) {
                    (Some(r), _) => Choice::Rank(*r),
                    (None, Some(p)) => Choice::Proposal(p.clone()),
                    (None, None) => unreachable!("validated"),
                };
                net.schedule_command(
                    *at,
                    AgentId::personal(user),
                    Command::Select {
                        request_id: refs[reference.as_str()].clone(),
                        choice,
                    },
                );
            }
            ScenarioEvent::Cma { at, user, line } => {
                net.schedule_command(*at, AgentId::gateway(user), Command::Line { text: line.clone() });
            }
            ScenarioEvent::Admin { at, guesthouse, update } => {
                let (gh, update) = (guesthouse.clone(), update.clone());
                net.schedule_hook(
                    *at,
                    Box::new(move |now, store: &Store| {
                        let principal = AdminPrincipal {
                            guesthouse_id: gh.clone(),
                        };
                        let result = match store.update_guesthouse(&principal, &gh, update.clone()) {
                            Ok(()) => "applied".to_owned(),
                            Err(e) => e.to_string(),
                        };
                        vec![TraceEvent::Admin {
                            at: now,
                            guesthouse_id: gh,
                            update,
                            result,
                        }]
                    }),
                );
            }
            ScenarioEvent::Fault { at, guesthouse } => {
                let gh = guesthouse.clone();
                net.schedule_hook(
                    *at,
                    Box::new(move |now, store: &Store| {
                        store.inject_hold_fault(gh.clone());
                        vec![TraceEvent::FaultArmed {
                            at: now,
                            guesthouse_id: gh,
                        }]
                    }),
                );
            }
            ScenarioEvent::Inject {
                at,
                from,
                to,
                performative,
                reference,
                body,
                tamper_bit,
            } => {
                injected += 1;
                let key = net
                    .router()
                    .registry()
                    .key(from)
                    .cloned()
                    .unwrap_or_else(|| AuthKey::derive(seed, &from.to_string()));
                let rid = reference.as_deref().map(|r| refs[r].clone());
                let wire = forge(&key, injected, from, to, performative, rid, body, *at, *tamper_bit);
                net.schedule_raw(*at, wire);
            }
        }
    }

    let sim = net.run(horizon);
    for (_, user, notice) in &sim.notices {
        book.apply(user, notice);
    }
    let trace = render(&sim.lines);
    let properties = check_trace(&trace).expect("the runner writes parseable traces");
    let report = RunReport {
        name: scenario.name.clone(),
        seed,
        horizon,
        quiescent: sim.quiescent,
        envelopes: sim.stats.accepted,
        rejected: sim.stats.rejected,
        requests: book.requests,
        properties,
    };
    Ok(RunOutput {
        digest: digest(&trace),
        trace,
        report,
    })
}

/// Builds a signed envelope by hand, the way an outside party could, and
/// flips one bit of the result if asked.
#[allow(clippy::too_many_arguments)]
fn forge(
    key: &AuthKey,
    n: u64,
    from: &AgentId,
    to: &AgentId,
    performative: &str,
    request_id: Option<RequestId>,
    body: &Value,
    at: u64,
    tamper_bit: Option<usize>,
) -> Vec<u8> {
    let mut wire = Map::new();
    wire.insert("v".into(), Value::from(WIRE_VERSION));
    wire.insert("msg_id".into(), Value::from(format!("x{n:08}")));
    wire.insert(
        "request_id".into(),
        request_id.map_or(Value::Null, |r| Value::from(r.to_string())),
    );
    wire.insert("sender".into(), Value::from(from.to_string()));
    wire.insert("receiver".into(), Value::from(to.to_string()));
    wire.insert("performative".into(), Value::from(performative));
    wire.insert("body".into(), body.clone());
    wire.insert("sent_at".into(), Value::from(at));
    let tag = key.sign(canonical_value(&Value::Object(wire.clone())).as_bytes());
    wire.insert("auth_tag".into(), Value::from(tag));
    let mut bytes = canonical_value(&Value::Object(wire)).into_bytes();
    if let Some(bit) = tamper_bit {
        let i = (bit / 8) % bytes.len();
        bytes[i] ^= 1 << (bit % 8);
    }
    bytes
}

/// Per-request outcomes rebuilt from what users were told.
#[derive(Default)]
struct Book {
    requests: Vec<RequestReport>,
    index: BTreeMap<RequestId, usize>,
}

impl Book {
    fn entry(&mut self, reference: Option<String>, user: &UserId, rid: &RequestId) -> &mut RequestReport {
        let i = *self.index.entry(rid.clone()).or_insert_with(|| {
            self.requests.push(RequestReport {
                reference,
                user_id: user.clone(),
                request_id: rid.clone(),
                outcome: Outcome::Pending,
                reason: None,
                proposals: Vec::new(),
                booking_id: None,
                booked: None,
                failures: Vec::new(),
            });
            self.requests.len() - 1
        });
        &mut self.requests[i]
    }

    fn apply(&mut self, user: &UserId, notice: &Notice) {
        match notice {
            Notice::Submitted { request_id } => {
                self.entry(None, user, request_id);
            }
            Notice::Rejected {
                request_id: Some(rid),
                reason,
            }
            | Notice::Failed {
                request_id: rid,
                reason,
                ..
            } => {
                let r = self.entry(None, user, rid);
                match r.outcome {
                    Outcome::Pending => {
                        r.outcome = Outcome::Rejected;
                        r.reason = Some(reason.clone());
                    }
                    Outcome::Rejected => {}
                    Outcome::Classified | Outcome::Failed => {
                        if matches!(notice, Notice::Failed { .. }) {
                            r.outcome = Outcome::Failed;
                        }
                        r.failures.push(reason.clone());
                    }
                    Outcome::Booked => r.failures.push(reason.clone()),
                }
            }
            Notice::Classified { classification } => {
                let r = self.entry(None, user, &classification.request_id);
                r.outcome = Outcome::Classified;
                r.proposals = classification
                    .proposals
                    .iter()
                    .enumerate()
                    .map(|(i, p)| RankedProposal {
                        rank: i + 1,
                        proposal_id: p.proposal_id.clone(),
                        guesthouses: p.guesthouse_chain(),
                        total_price: p.total_price,
                    })
                    .collect();
            }
            Notice::Booked {
                request_id,
                booking_id,
                proposal,
            } => {
                let r = self.entry(None, user, request_id);
                r.outcome = Outcome::Booked;
                r.booking_id = Some(booking_id.clone());
                r.booked = Some(proposal.proposal_id.clone());
            }
            Notice::Rejected { request_id: None, .. } | Notice::Line { .. } => {}
        }
    }
}
