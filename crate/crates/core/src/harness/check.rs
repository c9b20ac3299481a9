//! Property checks over a recorded trace. Everything here is a pure
//! function of the trace text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{GuesthouseId, Proposal, ProposalId, RequestId, ReservationRequest, ZoneId};
use crate::protocol::{AgentId, Envelope, Payload, ProtocolConfig, Role};
use crate::router::trace::TraceError;
use crate::router::{PermissionMatrix, TraceEvent, TraceLine};
use crate::store::{check_conservation, StoreSnapshot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub properties: Vec<PropertyResult>,
}

impl PropertyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

/// Violations listed per property are capped so a badly broken trace still
/// yields a readable report.
const SHOWN: usize = 20;

impl fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.properties {
            writeln!(f, "{} {}", if p.passed { "PASS" } else { "FAIL" }, p.name)?;
            for v in p.violations.iter().take(SHOWN) {
                writeln!(f, "  {v}")?;
            }
            if p.violations.len() > SHOWN {
                writeln!(f, "  ... {} more", p.violations.len() - SHOWN)?;
            }
        }
        Ok(())
    }
}

pub const PROPERTIES: [&str; 8] = [
    "canonical",
    "permission",
    "delivery",
    "exclusivity",
    "contiguity",
    "bypass",
    "conservation",
    "liveness",
];

struct Parsed {
    /// Envelopes with their line numbers and exact text.
    envelopes: Vec<(usize, String, Envelope)>,
    events: Vec<(usize, TraceEvent)>,
}

impl Parsed {
    fn zones(&self) -> BTreeMap<AgentId, ZoneId> {
        let mut zones = BTreeMap::new();
        for (_, ev) in &self.events {
            match ev {
                TraceEvent::Topology { agents, .. } => {
                    for a in agents {
                        if let Some(z) = &a.zone {
                            zones.insert(a.agent_id.clone(), z.clone());
                        }
                    }
                }
                TraceEvent::Snapshot { store, .. } => {
                    for g in &store.guesthouses {
                        zones
                            .entry(AgentId::guesthouse(&g.profile.guesthouse_id))
                            .or_insert_with(|| g.profile.zone_id.clone());
                    }
                }
                _ => {}
            }
        }
        zones
    }

    fn cast(&self) -> Option<BTreeSet<AgentId>> {
        self.events.iter().find_map(|(_, ev)| match ev {
            TraceEvent::Topology { agents, .. } => Some(agents.iter().map(|a| a.agent_id.clone()).collect()),
            _ => None,
        })
    }

    fn config(&self) -> ProtocolConfig {
        self.events
            .iter()
            .find_map(|(_, ev)| match ev {
                TraceEvent::Topology { config, .. } => Some(*config),
                _ => None,
            })
            .unwrap_or_default()
    }

    fn snapshot(&self) -> Option<&StoreSnapshot> {
        self.events.iter().rev().find_map(|(_, ev)| match ev {
            TraceEvent::Snapshot { store, .. } => Some(store),
            _ => None,
        })
    }

    /// Requests whose conversations were cut off by the horizon.
    fn unfinished(&self) -> Option<BTreeSet<RequestId>> {
        self.events.iter().rev().find_map(|(_, ev)| match ev {
            TraceEvent::End {
                quiescent: false,
                pending_requests,
                ..
            } => Some(pending_requests.iter().cloned().collect()),
            TraceEvent::End { .. } => Some(BTreeSet::new()),
            _ => None,
        })
    }

    fn requests(&self) -> BTreeMap<RequestId, ReservationRequest> {
        let mut out = BTreeMap::new();
        for (_, _, env) in &self.envelopes {
            if let Payload::Ask { request } = &env.payload {
                out.entry(request.request_id.clone()).or_insert_with(|| request.clone());
            }
        }
        out
    }

    /// Envelopes grouped by request id, in trace order.
    fn by_request(&self) -> BTreeMap<&RequestId, Vec<&(usize, String, Envelope)>> {
        let mut out: BTreeMap<&RequestId, Vec<_>> = BTreeMap::new();
        for entry in &self.envelopes {
            if let Some(rid) = &entry.2.request_id {
                out.entry(rid).or_default().push(entry);
            }
        }
        out
    }

    /// Every proposal mentioned anywhere, per request, keyed by id.
    fn proposals(&self) -> BTreeMap<RequestId, BTreeMap<ProposalId, (usize, Proposal)>> {
        let mut out: BTreeMap<RequestId, BTreeMap<ProposalId, (usize, Proposal)>> = BTreeMap::new();
        for (line, _, env) in &self.envelopes {
            let found: Vec<&Proposal> = match &env.payload {
                Payload::Tell { proposals } => proposals.iter().collect(),
                Payload::Classify { classification } => classification.proposals.iter().collect(),
                _ => continue,
            };
            for p in found {
                out.entry(p.request_id.clone())
                    .or_default()
                    .entry(p.proposal_id.clone())
                    .or_insert_with(|| (*line, p.clone()));
            }
        }
        out
    }
}

fn parse(text: &str) -> Result<Parsed, TraceError> {
    let mut parsed = Parsed {
        envelopes: Vec::new(),
        events: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match TraceLine::parse(line).map_err(|detail| TraceError::Line { line: i + 1, detail })? {
            TraceLine::Envelope(env) => parsed.envelopes.push((i + 1, line.to_owned(), env)),
            TraceLine::Event(ev) => parsed.events.push((i + 1, ev)),
        }
    }
    Ok(parsed)
}

/// Parses a trace and evaluates every property on it.
pub fn check_trace(text: &str) -> Result<PropertyReport, TraceError> {
    let t = parse(text)?;
    let results = [
        ("canonical", canonical(&t)),
        ("permission", permission(&t)),
        ("delivery", delivery(&t)),
        ("exclusivity", exclusivity(&t)),
        ("contiguity", contiguity(&t)),
        ("bypass", bypass(&t)),
        ("conservation", conservation(&t)),
        ("liveness", liveness(&t)),
    ];
    Ok(PropertyReport {
        properties: results
            .into_iter()
            .map(|(name, violations)| PropertyResult {
                name: name.into(),
                passed: violations.is_empty(),
                violations,
            })
            .collect(),
    })
}

fn canonical(t: &Parsed) -> Vec<String> {
    t.envelopes
        .iter()
        .filter(|(_, text, env)| env.encode() != *text)
        .map(|(line, _, env)| format!("line {line}: envelope {} is not in canonical form", env.msg_id))
        .collect()
}

fn permission(t: &Parsed) -> Vec<String> {
    let matrix = PermissionMatrix::default();
    let zones = t.zones();
    let cast = t.cast();
    let mut out = Vec::new();
    for (line, _, env) in &t.envelopes {
        let (s, r) = (&env.sender, &env.receiver);
        if !matrix.allows(s.role(), r.role()) {
            out.push(format!("line {line}: {s} may not address {r}"));
            continue;
        }
        if s.role() == Role::Ga && r.role() == Role::Ga && zones.get(s) != zones.get(r) {
            out.push(format!("line {line}: {s} and {r} are not in the same zone"));
        }
        if let Some(cast) = &cast {
            for a in [s, r] {
                if !cast.contains(a) {
                    out.push(format!("line {line}: {a} is not a registered agent"));
                }
            }
        }
    }
    out
}

fn delivery(t: &Parsed) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (line, _, env) in &t.envelopes {
        if let Some(first) = seen.insert(env.msg_id.as_str(), *line) {
            out.push(format!(
                "line {line}: msg_id {} already used on line {first}",
                env.msg_id
            ));
        }
    }
    let accepted: BTreeSet<&str> = t.envelopes.iter().map(|(_, text, _)| text.as_str()).collect();
    for (line, ev) in &t.events {
        if let TraceEvent::Rejected { raw, .. } = ev {
            if accepted.contains(raw.as_str()) {
                out.push(format!("line {line}: a rejected message also appears as accepted"));
            }
        }
    }
    out
}

fn exclusivity(t: &Parsed) -> Vec<String> {
    let mut out = Vec::new();
    let mut tells: BTreeMap<(&RequestId, &AgentId), usize> = BTreeMap::new();
    for (line, _, env) in &t.envelopes {
        let is_tell = matches!(env.payload, Payload::Tell { .. } | Payload::CollabTell { .. });
        if !is_tell || env.sender.role() != Role::Ga {
            continue;
        }
        let Some(rid) = &env.request_id else { continue };
        if let Some(first) = tells.insert((rid, &env.sender), *line) {
            out.push(format!(
                "line {line}: {} told twice for {rid}, first on line {first}",
                env.sender
            ));
        }
    }
    for (rid, proposals) in t.proposals() {
        let mut owner: BTreeMap<&GuesthouseId, &ProposalId> = BTreeMap::new();
        for (pid, (line, p)) in &proposals {
            for gh in p.guesthouse_ids() {
                if let Some(other) = owner.insert(gh, pid) {
                    if other != pid {
                        out.push(format!("line {line}: {gh} appears in both {other} and {pid} for {rid}"));
                    }
                }
            }
        }
    }
    out
}

fn contiguity(t: &Parsed) -> Vec<String> {
    let requests = t.requests();
    let max_legs = t.config().max_legs;
    let mut out = Vec::new();
    for (rid, proposals) in t.proposals() {
        let Some(request) = requests.get(&rid) else {
            out.push(format!("no ask carries request {rid}"));
            continue;
        };
        for (pid, (line, p)) in proposals {
            if let Err(e) = p.validate(request, max_legs) {
                out.push(format!("line {line}: {pid}: {e}"));
            }
        }
    }
    out
}

fn bypass(t: &Parsed) -> Vec<String> {
    let na = AgentId::national();
    let zonals: BTreeSet<AgentId> = t
        .cast()
        .unwrap_or_default()
        .into_iter()
        .filter(|a| a.role() == Role::Za)
        .collect();
    let unfinished = t.unfinished().unwrap_or_default();
    let requests = t.requests();
    let mut out = Vec::new();
    for (rid, envs) in t.by_request() {
        let Some(request) = requests.get(rid) else { continue };
        if request.zone.is_some() {
            for (line, _, env) in &envs {
                if env.sender == na || env.receiver == na {
                    out.push(format!(
                        "line {line}: {rid} names a zone but {} went through the national agent",
                        env.msg_id
                    ));
                }
            }
            continue;
        }
        let reached_na = envs
            .iter()
            .any(|(_, _, e)| e.receiver == na && matches!(e.payload, Payload::Ask { .. }));
        if !reached_na || unfinished.contains(rid) {
            continue;
        }
        let refused = envs
            .iter()
            .any(|(_, _, e)| e.sender == na && matches!(e.payload, Payload::Failed { .. }));
        let asked: BTreeSet<&AgentId> = envs
            .iter()
            .filter(|(_, _, e)| e.sender == na && matches!(e.payload, Payload::Ask { .. }))
            .map(|(_, _, e)| &e.receiver)
            .collect();
        let missed: Vec<String> = zonals
            .iter()
            .filter(|z| !asked.contains(z))
            .map(|z| z.to_string())
            .collect();
        if !refused && !missed.is_empty() {
            out.push(format!(
                "{rid} has no zone but the national agent never asked {}",
                missed.join(", ")
            ));
        }
    }
    out
}

fn conservation(t: &Parsed) -> Vec<String> {
    t.snapshot()
        .map(|s| check_conservation(s).iter().map(ToString::to_string).collect())
        .unwrap_or_default()
}

fn liveness(t: &Parsed) -> Vec<String> {
    let unfinished = t.unfinished().unwrap_or_default();
    type Waits<'a> = Vec<(usize, &'a [AgentId])>;
    let mut timeouts: BTreeMap<(&AgentId, &RequestId), Waits> = BTreeMap::new();
    for (line, ev) in &t.events {
        if let TraceEvent::Timeout {
            agent,
            request_id,
            pending,
            ..
        } = ev
        {
            timeouts.entry((agent, request_id)).or_default().push((*line, pending));
        }
    }
    let mut out = Vec::new();
    for (rid, envs) in t.by_request() {
        if unfinished.contains(rid) {
            continue;
        }
        for (i, (line, _, ask)) in envs.iter().enumerate() {
            if !matches!(ask.payload, Payload::Ask { .. } | Payload::CollabAsk { .. }) {
                continue;
            }
            let answered = envs[i + 1..]
                .iter()
                .any(|(_, _, e)| e.sender == ask.receiver && e.receiver == ask.sender);
            let timed_out = timeouts.get(&(&ask.sender, rid)).is_some_and(|ts| {
                ts.iter()
                    .any(|(l, pending)| l > line && pending.contains(&ask.receiver))
            });
            if !answered && !timed_out {
                out.push(format!(
                    "line {line}: {} never answered {} about {rid}",
                    ask.receiver, ask.sender
                ));
            }
        }
    }
    out
}
