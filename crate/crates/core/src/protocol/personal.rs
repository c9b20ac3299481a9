use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Action, Agent, AgentId, Classification, Command, Envelope, Notice, Payload, ProtocolConfig, Role, Timer};
use crate::domain::{BookingId, Proposal, ProposalId, RequestDraft, RequestId, ReservationRequest, UserId};
use crate::store::HistoryEntry;

/// Which proposal of a classification the user picked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Choice {
    /// 1-based position in the classification.
    Rank(usize),
    Proposal(ProposalId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestPhase {
    Searching,
    Classified,
    Booking,
    Booked,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestStatus {
    pub request: ReservationRequest,
    pub phase: RequestPhase,
    pub classification: Option<Classification>,
    pub classified_at: Option<u64>,
    pub booking_id: Option<BookingId>,
    pub booked: Option<Proposal>,
}

#[derive(Debug)]
struct Tracked {
    status: RequestStatus,
    route: AgentId,
    gateway: Option<AgentId>,
    attempts: u32,
    selected: Option<ProposalId>,
}

/// Personal agent: submits its user's requests, keeps the classification,
/// turns a selection into a book and records the outcome.
///
/// A request naming a zone goes straight to that zone's agent and is ranked
/// here; anything else goes through the national agent.
#[derive(Debug)]
pub struct PersonalAgent {
    id: AgentId,
    user_id: UserId,
    config: ProtocolConfig,
    requests: BTreeMap<RequestId, Tracked>,
}

impl PersonalAgent {
    pub fn new(user_id: UserId, config: ProtocolConfig) -> Self {
        Self {
            id: AgentId::personal(&user_id),
            user_id,
            config,
            requests: BTreeMap::new(),
        }
    }

    pub fn status(&self, request_id: &RequestId) -> Option<&RequestStatus> {
        self.requests.get(request_id).map(|t| &t.status)
    }

    fn notify(&self, notice: Notice) -> Action {
        Action::Notify {
            user: self.user_id.clone(),
            notice,
        }
    }

    fn rejected(&self, request_id: Option<RequestId>, reason: impl Into<String>) -> Vec<Action> {
        vec![self.notify(Notice::Rejected {
            request_id,
            reason: reason.into(),
        })]
    }

    fn submit(&mut self, request: ReservationRequest, gateway: Option<AgentId>) -> Vec<Action> {
        let rid = request.request_id.clone();
        if self.requests.contains_key(&rid) {
            return self.rejected(Some(rid), "duplicate request id");
        }
        if let Err(e) = request.validate().and_then(|_| request.validate_capacity()) {
            return self.rejected(Some(rid), e.to_string());
        }
        let route = match &request.zone {
            Some(zone) => AgentId::zonal(zone),
            None => AgentId::national(),
        };
        let ask = Action::send(
            route.clone(),
            rid.clone(),
            Payload::Ask {
                request: request.clone(),
            },
        );
        self.requests.insert(
            rid.clone(),
            Tracked {
                status: RequestStatus {
                    request,
                    phase: RequestPhase::Searching,
                    classification: None,
                    classified_at: None,
                    booking_id: None,
                    booked: None,
                },
                route,
                gateway,
                attempts: 0,
                selected: None,
            },
        );
        vec![ask, self.notify(Notice::Submitted { request_id: rid })]
    }

    fn select(&mut self, now: u64, rid: &RequestId, choice: Choice) -> Vec<Action> {
        let offer_ttl = self.config.offer_ttl;
        let user_id = self.user_id.clone();
        let Some(tracked) = self.requests.get_mut(rid) else {
            return self.rejected(Some(rid.clone()), "unknown request");
        };
        let status = &tracked.status;
        let classification = match (status.phase, &status.classification) {
            (RequestPhase::Classified, Some(c)) => c,
            (RequestPhase::Booking, Some(c)) => {
                let same = match &choice {
                    Choice::Rank(n) => c.proposals.get(n.wrapping_sub(1)).map(|p| &p.proposal_id),
                    Choice::Proposal(id) => Some(id),
                } == tracked.selected.as_ref();
                if same {
                    return Vec::new();
                }
                return self.rejected(Some(rid.clone()), "a booking for this request is in progress");
            }
            (RequestPhase::Booked, _) => return self.rejected(Some(rid.clone()), "request already booked"),
            (RequestPhase::Rejected, _) => return self.rejected(Some(rid.clone()), "request was rejected"),
            _ => return self.rejected(Some(rid.clone()), "no classification yet"),
        };
        let proposal = match &choice {
            Choice::Rank(n) => n.checked_sub(1).and_then(|i| classification.proposals.get(i)),
            Choice::Proposal(id) => classification.get(id.as_str()),
        };
        let Some(proposal) = proposal.cloned() else {
            return self.rejected(Some(rid.clone()), "unknown proposal");
        };
        if status.classified_at.is_some_and(|t| now > t + offer_ttl) {
            let reason = "the offer has expired".to_owned();
            let mut actions = Vec::new();
            if let Some(gw) = &tracked.gateway {
                actions.push(Action::send(
                    gw.clone(),
                    rid.clone(),
                    Payload::failed(None, reason.clone()),
                ));
            }
            actions.push(self.notify(Notice::Failed {
                request_id: rid.clone(),
                booking_id: None,
                reason,
            }));
            return actions;
        }
        tracked.attempts += 1;
        let booking_id = BookingId::new(format!("bk-{rid}-{}", tracked.attempts));
        tracked.status.phase = RequestPhase::Booking;
        tracked.status.booking_id = Some(booking_id.clone());
        tracked.selected = Some(proposal.proposal_id.clone());
        vec![Action::send(
            tracked.route.clone(),
            rid.clone(),
            Payload::Book {
                proposal_id: proposal.proposal_id.clone(),
                booking_id: Some(booking_id),
                user_id,
                proposal: Some(proposal),
            },
        )]
    }

    fn classified(&mut self, now: u64, env: &Envelope, classification: Classification) -> Vec<Action> {
        let rid = classification.request_id.clone();
        let user_id = self.user_id.clone();
        let Some(tracked) = self.requests.get_mut(&rid) else {
            return vec![Action::fault(Some(rid), "classification for unknown request")];
        };
        if tracked.route != env.sender || tracked.status.phase != RequestPhase::Searching {
            return vec![Action::fault(
                Some(rid),
                format!("unexpected classification from {}", env.sender),
            )];
        }
        tracked.status.phase = RequestPhase::Classified;
        tracked.status.classification = Some(classification.clone());
        tracked.status.classified_at = Some(now);
        let mut actions = Vec::new();
        if let Some(gw) = &tracked.gateway {
            actions.push(Action::send(
                gw.clone(),
                rid.clone(),
                Payload::Classify {
                    classification: classification.clone(),
                },
            ));
        }
        actions.push(Action::History(HistoryEntry {
            user_id,
            timestamp: now,
            request: tracked.status.request.clone(),
            classification: classification.proposals.clone(),
            outcome: None,
        }));
        actions.push(self.notify(Notice::Classified { classification }));
        actions
    }

    fn outcome(&mut self, now: u64, env: &Envelope) -> Vec<Action> {
        let Some(rid) = env.request_id.clone() else {
            return vec![Action::fault(None, "outcome without request id")];
        };
        let user_id = self.user_id.clone();
        let Some(tracked) = self.requests.get_mut(&rid) else {
            return vec![Action::fault(Some(rid), "outcome for unknown request")];
        };
        if tracked.route != env.sender {
            return vec![Action::fault(Some(rid), format!("outcome from {} ignored", env.sender))];
        }
        let mut actions = Vec::new();
        if let Some(gw) = &tracked.gateway {
            actions.push(Action::send(gw.clone(), rid.clone(), env.payload.clone()));
        }
        match &env.payload {
            Payload::Booked { booking_id, proposal }
                if tracked.status.phase == RequestPhase::Booking
                    && tracked.status.booking_id.as_ref() == Some(booking_id) =>
            {
                tracked.status.phase = RequestPhase::Booked;
                tracked.status.booked = Some(proposal.clone());
                actions.push(Action::History(HistoryEntry {
                    user_id,
                    timestamp: now,
                    request: tracked.status.request.clone(),
                    classification: tracked
                        .status
                        .classification
                        .as_ref()
                        .map(|c| c.proposals.clone())
                        .unwrap_or_default(),
                    outcome: Some(booking_id.clone()),
                }));
                actions.push(self.notify(Notice::Booked {
                    request_id: rid,
                    booking_id: booking_id.clone(),
                    proposal: proposal.clone(),
                }));
            }
            Payload::Failed {
                booking_id: Some(booking_id),
                reason,
            } if tracked.status.phase == RequestPhase::Booking
                && tracked.status.booking_id.as_ref() == Some(booking_id) =>
            {
                // Back to the classification so another proposal can be tried.
                tracked.status.phase = RequestPhase::Classified;
                tracked.selected = None;
                actions.push(self.notify(Notice::Failed {
                    request_id: rid,
                    booking_id: Some(booking_id.clone()),
                    reason: reason.clone(),
                }));
            }
            Payload::Failed {
                booking_id: None,
                reason,
            } if tracked.status.phase == RequestPhase::Searching => {
                tracked.status.phase = RequestPhase::Rejected;
                actions.push(self.notify(Notice::Failed {
                    request_id: rid,
                    booking_id: None,
                    reason: reason.clone(),
                }));
            }
            Payload::Sorry { .. } if tracked.status.phase == RequestPhase::Searching => {
                tracked.status.phase = RequestPhase::Rejected;
                actions.push(self.notify(Notice::Failed {
                    request_id: rid,
                    booking_id: None,
                    reason: "the zone rejected the request".into(),
                }));
            }
            other => {
                actions.clear();
                actions.push(Action::fault(Some(rid), format!("unexpected {}", other.performative())));
            }
        }
        actions
    }

    fn on_gateway(&mut self, now: u64, env: &Envelope) -> Vec<Action> {
        if env.sender != AgentId::gateway(&self.user_id) {
            return vec![Action::fault(
                env.request_id.clone(),
                format!("{} is not this user's gateway", env.sender),
            )];
        }
        match &env.payload {
            Payload::Ask { request } => {
                if request.user_id != self.user_id || env.request_id.as_ref() != Some(&request.request_id) {
                    return vec![Action::send(
                        env.sender.clone(),
                        env.request_id.clone(),
                        Payload::failed(None, "request does not belong to this user"),
                    )];
                }
                let mut actions = self.submit(request.clone(), Some(env.sender.clone()));
                self.echo_rejection(env, &mut actions);
                actions
            }
            Payload::Book { proposal_id, .. } => {
                let Some(rid) = env.request_id.clone() else {
                    return vec![Action::fault(None, "book without request id")];
                };
                let mut actions = self.select(now, &rid, Choice::Proposal(proposal_id.clone()));
                self.echo_rejection(env, &mut actions);
                actions
            }
            _ => vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected {} from {}", env.performative(), env.sender),
            )],
        }
    }

    /// The gateway cannot see notices, so rejections are also sent back as
    /// `failed`.
    fn echo_rejection(&self, env: &Envelope, actions: &mut Vec<Action>) {
        let reasons: Vec<String> = actions
            .iter()
            .filter_map(|a| match a {
                Action::Notify {
                    notice: Notice::Rejected { reason, .. },
                    ..
                } => Some(reason.clone()),
                _ => None,
            })
            .collect();
        for reason in reasons {
            actions.push(Action::send(
                env.sender.clone(),
                env.request_id.clone(),
                Payload::failed(None, reason),
            ));
        }
    }
}

impl Agent for PersonalAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn on_envelope(&mut self, now: u64, env: &Envelope) -> Vec<Action> {
        match (&env.payload, env.sender.role()) {
            (_, Role::Cma) => self.on_gateway(now, env),
            (Payload::Classify { classification }, Role::Na) => self.classified(now, env, classification.clone()),
            (Payload::Tell { proposals }, Role::Za) => {
                let Some(rid) = env.request_id.clone() else {
                    return vec![Action::fault(None, "tell without request id")];
                };
                match Classification::rank(rid.clone(), proposals.clone(), self.config.criteria) {
                    Ok(c) => self.classified(now, env, c),
                    Err(e) => vec![Action::fault(Some(rid), e.to_string())],
                }
            }
            (Payload::Booked { .. } | Payload::Failed { .. } | Payload::Sorry { .. }, Role::Na | Role::Za) => {
                self.outcome(now, env)
            }
            _ => vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected {} from {}", env.performative(), env.sender),
            )],
        }
    }

    fn on_timer(&mut self, _now: u64, timer: Timer) -> Vec<Action> {
        vec![Action::fault(None, format!("unexpected timer {timer:?}"))]
    }

    fn on_command(&mut self, now: u64, command: Command) -> Vec<Action> {
        match command {
            Command::Submit { request_id, draft } => {
                let request = RequestDraft::into_request(draft, request_id, self.user_id.clone());
                self.submit(request, None)
            }
            Command::Select { request_id, choice } => self.select(now, &request_id, choice),
            Command::Line { .. } => self.rejected(None, "personal agents take structured commands"),
        }
    }
}
