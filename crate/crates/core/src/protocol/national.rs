use std::collections::{BTreeMap, BTreeSet};

use super::{Action, Agent, AgentId, Classification, Envelope, Note, Payload, ProtocolConfig, Role, Timer};
use crate::domain::{BookingId, Proposal, ProposalId, RequestId, ReservationRequest, ZoneId};

#[derive(Debug)]
struct Search {
    personal: AgentId,
    request: ReservationRequest,
    pending: BTreeSet<ZoneId>,
    proposals: Vec<Proposal>,
    origin: BTreeMap<ProposalId, ZoneId>,
    classification: Option<Classification>,
}

/// National agent: the single entry point for zone-free requests. Asks
/// every zone, ranks everything that comes back, and relays bookings to
/// the zone that made the offer.
#[derive(Debug)]
pub struct NationalAgent {
    id: AgentId,
    zones: BTreeSet<ZoneId>,
    personals: BTreeSet<AgentId>,
    config: ProtocolConfig,
    searches: BTreeMap<RequestId, Search>,
    bookings: BTreeMap<BookingId, (RequestId, AgentId)>,
}

impl NationalAgent {
    pub fn new(
        zones: impl IntoIterator<Item = ZoneId>,
        personals: impl IntoIterator<Item = AgentId>,
        config: ProtocolConfig,
    ) -> Self {
        Self {
            id: AgentId::national(),
            zones: zones.into_iter().collect(),
            personals: personals.into_iter().collect(),
            config,
            searches: BTreeMap::new(),
            bookings: BTreeMap::new(),
        }
    }

    fn reject(env: &Envelope, reason: impl Into<String>) -> Vec<Action> {
        vec![Action::send(
            env.sender.clone(),
            env.request_id.clone(),
            Payload::failed(None, reason),
        )]
    }

    fn on_ask(&mut self, env: &Envelope, request: &ReservationRequest) -> Vec<Action> {
        let rid = request.request_id.clone();
        if !self.personals.contains(&env.sender) {
            return Self::reject(env, format!("unknown personal agent {}", env.sender));
        }
        if env.request_id.as_ref() != Some(&rid) {
            return Self::reject(env, "ask body names a different request");
        }
        if env.sender.name() != request.user_id.as_str() {
            return Self::reject(env, "request belongs to another user");
        }
        if request.zone.is_some() {
            return Self::reject(env, "zone-specific requests go to the zonal agent");
        }
        if self.searches.contains_key(&rid) {
            return Self::reject(env, format!("duplicate request id {rid}"));
        }
        if let Err(e) = request.validate() {
            return Self::reject(env, e.to_string());
        }
        let mut search = Search {
            personal: env.sender.clone(),
            request: request.clone(),
            pending: self.zones.clone(),
            proposals: Vec::new(),
            origin: BTreeMap::new(),
            classification: None,
        };
        let mut actions: Vec<Action> = self
            .zones
            .iter()
            .map(|z| {
                Action::send(
                    AgentId::zonal(z),
                    rid.clone(),
                    Payload::Ask {
                        request: request.clone(),
                    },
                )
            })
            .collect();
        if self.zones.is_empty() {
            actions.extend(self.classify(&mut search));
        } else {
            actions.push(Action::Timer {
                after: self.config.national_collection,
                timer: Timer::Collection {
                    request_id: rid.clone(),
                },
            });
        }
        self.searches.insert(rid, search);
        actions
    }

    fn on_zone_reply(&mut self, env: &Envelope, proposals: &[Proposal]) -> Vec<Action> {
        let zone = ZoneId::from(env.sender.name());
        let Some(rid) = env.request_id.clone() else {
            return vec![Action::fault(None, "reply without request id")];
        };
        let Some(mut search) = self.searches.remove(&rid) else {
            return vec![Action::fault(
                Some(rid),
                format!("reply from {} for unknown request", env.sender),
            )];
        };
        let mut actions = Vec::new();
        if search.classification.is_some() {
            actions.push(Action::fault(
                Some(rid.clone()),
                format!("late reply from {} dropped", env.sender),
            ));
        } else if !search.pending.remove(&zone) {
            actions.push(Action::fault(
                Some(rid.clone()),
                format!("unsolicited reply from {}", env.sender),
            ));
        } else {
            for p in proposals {
                match p.validate(&search.request, self.config.max_legs) {
                    Ok(()) if !search.origin.contains_key(&p.proposal_id) => {
                        search.origin.insert(p.proposal_id.clone(), zone.clone());
                        search.proposals.push(p.clone());
                    }
                    Ok(()) => actions.push(Action::fault(
                        Some(rid.clone()),
                        format!("duplicate proposal {}", p.proposal_id),
                    )),
                    Err(e) => actions.push(Action::fault(Some(rid.clone()), format!("proposal dropped: {e}"))),
                }
            }
            if search.pending.is_empty() {
                actions.extend(self.classify(&mut search));
            }
        }
        self.searches.insert(rid, search);
        actions
    }

    fn classify(&self, search: &mut Search) -> Vec<Action> {
        let rid = search.request.request_id.clone();
        let classification = Classification::rank(rid.clone(), search.proposals.clone(), self.config.criteria)
            .expect("proposals were validated against this request");
        search.classification = Some(classification.clone());
        vec![Action::send(
            search.personal.clone(),
            rid,
            Payload::Classify { classification },
        )]
    }

    fn on_book(&mut self, env: &Envelope) -> Vec<Action> {
        let Payload::Book {
            proposal_id,
            booking_id,
            user_id,
            ..
        } = &env.payload
        else {
            unreachable!("dispatched on performative");
        };
        let fail = |reason: String| {
            vec![Action::send(
                env.sender.clone(),
                env.request_id.clone(),
                Payload::failed(booking_id.clone(), reason),
            )]
        };
        let Some(booking_id) = booking_id.clone() else {
            return fail("book without booking id".into());
        };
        let Some(search) = env.request_id.as_ref().and_then(|r| self.searches.get(r)) else {
            return fail("unknown request".into());
        };
        if search.personal != env.sender {
            return fail("request belongs to another user".into());
        }
        let (Some(classification), Some(zone)) = (&search.classification, search.origin.get(proposal_id)) else {
            return fail(format!("proposal {proposal_id} was not offered"));
        };
        let Some(proposal) = classification.get(proposal_id.as_str()) else {
            return fail(format!("proposal {proposal_id} was not offered"));
        };
        if self.bookings.contains_key(&booking_id) {
            return vec![Action::fault(
                env.request_id.clone(),
                format!("duplicate book {booking_id}"),
            )];
        }
        let rid = search.request.request_id.clone();
        let action = Action::send(
            AgentId::zonal(zone),
            rid.clone(),
            Payload::Book {
                proposal_id: proposal_id.clone(),
                booking_id: Some(booking_id.clone()),
                user_id: user_id.clone(),
                proposal: Some(proposal.clone()),
            },
        );
        self.bookings.insert(booking_id, (rid, env.sender.clone()));
        vec![action]
    }

    fn relay_outcome(&mut self, env: &Envelope) -> Vec<Action> {
        let booking_id = match &env.payload {
            Payload::Booked { booking_id, .. } => Some(booking_id),
            Payload::Failed { booking_id, .. } => booking_id.as_ref(),
            _ => None,
        };
        let Some((rid, personal)) = booking_id.and_then(|b| self.bookings.get(b)) else {
            return vec![Action::fault(
                env.request_id.clone(),
                format!("{} for unknown booking", env.performative()),
            )];
        };
        vec![Action::send(personal.clone(), rid.clone(), env.payload.clone())]
    }
}

impl Agent for NationalAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn on_envelope(&mut self, _now: u64, env: &Envelope) -> Vec<Action> {
        let from_pa = env.sender.role() == Role::Pa;
        let from_za = env.sender.role() == Role::Za;
        match &env.payload {
            Payload::Ask { request } if from_pa => self.on_ask(env, request),
            Payload::Book { .. } if from_pa => self.on_book(env),
            Payload::Tell { proposals } if from_za => self.on_zone_reply(env, proposals),
            Payload::Sorry { .. } if from_za => self.on_zone_reply(env, &[]),
            Payload::Booked { .. } | Payload::Failed { .. } if from_za => self.relay_outcome(env),
            _ => vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected {} from {}", env.performative(), env.sender),
            )],
        }
    }

    fn on_timer(&mut self, _now: u64, timer: Timer) -> Vec<Action> {
        let Timer::Collection { request_id } = timer else {
            return vec![Action::fault(None, format!("unexpected timer {timer:?}"))];
        };
        let Some(mut search) = self.searches.remove(&request_id) else {
            return Vec::new();
        };
        let mut actions = Vec::new();
        if search.classification.is_none() {
            actions.push(Action::Note(Note::Timeout {
                request_id: request_id.clone(),
                pending: search.pending.iter().map(AgentId::zonal).collect(),
            }));
            actions.extend(self.classify(&mut search));
        }
        self.searches.insert(request_id, search);
        actions
    }
}
