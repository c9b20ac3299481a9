use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{Action, Agent, AgentId, BookRef, Envelope, Note, Payload, ProtocolConfig, Role, SorryReason, Timer};
use crate::domain::{
    compose, evaluate_request, BookingId, GuesthouseId, MatchResult, Proposal, ProposalLeg, RequestId,
    ReservationRequest, StayInterval, ZoneId,
};
use crate::store::{BookingSpec, HoldOutcome, Store, StoreError};

#[derive(Debug)]
struct Collaboration {
    request: ReservationRequest,
    prefix: ProposalLeg,
    pending: BTreeSet<GuesthouseId>,
    offers: BTreeMap<GuesthouseId, ProposalLeg>,
}

/// Guesthouse agent: answers asks from its calendar, recruits siblings to
/// complete a stay it can only start, and holds/confirms its legs.
pub struct GuesthouseAgent {
    id: AgentId,
    guesthouse_id: GuesthouseId,
    zonal: AgentId,
    siblings: BTreeSet<GuesthouseId>,
    store: Arc<Store>,
    config: ProtocolConfig,
    /// Requests this guesthouse is part of a proposal for.
    participating: BTreeSet<RequestId>,
    collaborations: BTreeMap<RequestId, Collaboration>,
    bookings: BTreeMap<BookingId, Proposal>,
    silent: bool,
}

impl std::fmt::Debug for GuesthouseAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GuesthouseAgent")
            .field("id", &self.id)
            .field("participating", &self.participating)
            .field("collaborations", &self.collaborations.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl GuesthouseAgent {
    /// Fails if the store has no calendar for this guesthouse.
    pub fn new(
        guesthouse_id: GuesthouseId,
        zone: &ZoneId,
        siblings: impl IntoIterator<Item = GuesthouseId>,
        store: Arc<Store>,
        config: ProtocolConfig,
    ) -> Result<Self, StoreError> {
        store.calendar(&guesthouse_id)?;
        let siblings = siblings.into_iter().filter(|g| g != &guesthouse_id).collect();
        Ok(Self {
            id: AgentId::guesthouse(&guesthouse_id),
            guesthouse_id,
            zonal: AgentId::zonal(zone),
            siblings,
            store,
            config,
            participating: BTreeSet::new(),
            collaborations: BTreeMap::new(),
            bookings: BTreeMap::new(),
            silent: false,
        })
    }

    /// A guesthouse whose agent never answers; for exercising deadlines.
    pub fn silenced(mut self) -> Self {
        self.silent = true;
        self
    }

    pub fn is_participating(&self, request_id: &RequestId) -> bool {
        self.participating.contains(request_id)
    }

    fn evaluate(&self, request: &ReservationRequest) -> Result<(MatchResult, ProposalLeg), String> {
        let profile = self.store.profile(&self.guesthouse_id).map_err(|e| e.to_string())?;
        let calendar = self.store.calendar(&self.guesthouse_id).map_err(|e| e.to_string())?;
        let (result, price) = evaluate_request(&profile, &calendar, request).map_err(|e| e.to_string())?;
        let interval = match result {
            MatchResult::Prefix { cover_until } => request.interval.prefix(cover_until).map_err(|e| e.to_string())?,
            _ => request.interval,
        };
        let leg = ProposalLeg {
            guesthouse_id: self.guesthouse_id.clone(),
            interval,
            rooms: request.rooms,
            leg_price: price,
        };
        Ok((result, leg))
    }

    fn participate(&mut self, request_id: &RequestId) -> Action {
        self.participating.insert(request_id.clone());
        Action::Timer {
            after: self.config.participation_memory(),
            timer: Timer::Forget {
                request_id: request_id.clone(),
            },
        }
    }

    fn sorry(&self, request_id: &RequestId, reason: SorryReason) -> Action {
        Action::send(self.zonal.clone(), request_id.clone(), Payload::Sorry { reason })
    }

    fn tell(&mut self, proposal: Proposal) -> Vec<Action> {
        let rid = proposal.request_id.clone();
        vec![
            Action::send(
                self.zonal.clone(),
                rid.clone(),
                Payload::Tell {
                    proposals: vec![proposal],
                },
            ),
            self.participate(&rid),
        ]
    }

    fn on_ask(&mut self, env: &Envelope, request: &ReservationRequest) -> Vec<Action> {
        let rid = request.request_id.clone();
        if env.request_id.as_ref() != Some(&rid) || env.sender != self.zonal {
            return vec![Action::fault(
                env.request_id.clone(),
                format!("ask from {} rejected", env.sender),
            )];
        }
        if self.participating.contains(&rid) {
            return vec![self.sorry(&rid, SorryReason::AlreadyParticipating)];
        }
        let (result, leg) = match self.evaluate(request) {
            Ok(r) => r,
            Err(why) => {
                return vec![
                    Action::fault(Some(rid.clone()), why),
                    self.sorry(&rid, SorryReason::Invalid),
                ]
            }
        };
        match result {
            MatchResult::None => vec![self.sorry(&rid, SorryReason::NoMatch)],
            MatchResult::Full => match Proposal::from_legs(rid.clone(), vec![leg]) {
                Ok(p) => self.tell(p),
                Err(why) => vec![
                    Action::fault(Some(rid.clone()), why.to_string()),
                    self.sorry(&rid, SorryReason::Invalid),
                ],
            },
            MatchResult::Prefix { cover_until } => {
                let over_cap = request.max_total_price.is_some_and(|cap| leg.leg_price > cap);
                if self.config.max_legs < 2 || over_cap {
                    return vec![self.sorry(&rid, SorryReason::NoMatch)];
                }
                if self.siblings.is_empty() {
                    return vec![self.sorry(&rid, SorryReason::NoCompletion)];
                }
                let remainder = match request.interval.suffix(cover_until) {
                    Ok(r) => r,
                    Err(why) => return vec![Action::fault(Some(rid.clone()), why.to_string())],
                };
                let mut actions: Vec<Action> = self
                    .siblings
                    .iter()
                    .map(|g| {
                        Action::send(
                            AgentId::guesthouse(g),
                            rid.clone(),
                            Payload::CollabAsk {
                                request: request.clone(),
                                remainder,
                            },
                        )
                    })
                    .collect();
                actions.push(Action::Timer {
                    after: self.config.collaboration,
                    timer: Timer::Collaboration {
                        request_id: rid.clone(),
                    },
                });
                self.collaborations.insert(
                    rid,
                    Collaboration {
                        request: request.clone(),
                        prefix: leg,
                        pending: self.siblings.clone(),
                        offers: BTreeMap::new(),
                    },
                );
                actions
            }
        }
    }

    fn on_collab_ask(&mut self, env: &Envelope, request: &ReservationRequest, remainder: StayInterval) -> Vec<Action> {
        let rid = request.request_id.clone();
        let from = GuesthouseId::from(env.sender.name());
        if env.request_id.as_ref() != Some(&rid) || !self.siblings.contains(&from) {
            return vec![Action::fault(
                env.request_id.clone(),
                format!("collab-ask from {} rejected", env.sender),
            )];
        }
        let reply = |reason| {
            vec![Action::send(
                env.sender.clone(),
                rid.clone(),
                Payload::CollabSorry { reason },
            )]
        };
        if self.participating.contains(&rid) {
            return reply(SorryReason::AlreadyParticipating);
        }
        if self.collaborations.contains_key(&rid) {
            return reply(SorryReason::Collaborating);
        }
        if remainder.departure() != request.interval.departure() || remainder.arrival() <= request.interval.arrival() {
            return reply(SorryReason::Invalid);
        }
        // The cap is applied to the composed proposal, not to this leg.
        let tail = ReservationRequest {
            interval: remainder,
            max_total_price: None,
            ..request.clone()
        };
        match self.evaluate(&tail) {
            Ok((MatchResult::Full, leg)) => vec![
                Action::send(env.sender.clone(), rid.clone(), Payload::CollabTell { leg }),
                self.participate(&rid),
            ],
            Ok(_) => reply(SorryReason::NoMatch),
            Err(why) => {
                let mut actions = reply(SorryReason::Invalid);
                actions.push(Action::fault(Some(rid.clone()), why));
                actions
            }
        }
    }

    fn on_collab_reply(&mut self, env: &Envelope, leg: Option<&ProposalLeg>) -> Vec<Action> {
        let Some(rid) = env.request_id.clone() else {
            return vec![Action::fault(None, "collaboration reply without request id")];
        };
        let from = GuesthouseId::from(env.sender.name());
        let Some(collab) = self.collaborations.get_mut(&rid) else {
            return vec![Action::fault(
                Some(rid),
                format!("late {} from {from} dropped", env.performative()),
            )];
        };
        if !collab.pending.remove(&from) {
            return vec![Action::fault(
                Some(rid),
                format!("unsolicited {} from {from}", env.performative()),
            )];
        }
        if let Some(leg) = leg {
            if leg.guesthouse_id == from {
                collab.offers.insert(from, leg.clone());
            } else {
                return vec![Action::fault(
                    Some(rid),
                    format!("{from} offered a leg for {}", leg.guesthouse_id),
                )];
            }
        }
        if collab.pending.is_empty() {
            self.resolve(&rid)
        } else {
            Vec::new()
        }
    }

    /// Composes with the lowest-id completion, or says sorry.
    fn resolve(&mut self, rid: &RequestId) -> Vec<Action> {
        let Some(collab) = self.collaborations.remove(rid) else {
            return Vec::new();
        };
        let Some((_, completion)) = collab.offers.into_iter().next() else {
            return vec![self.sorry(rid, SorryReason::NoCompletion)];
        };
        match compose(collab.prefix, completion, &collab.request) {
            Ok(p) => self.tell(p),
            Err(why) => vec![
                Action::fault(Some(rid.clone()), format!("composition failed: {why}")),
                self.sorry(rid, SorryReason::ComposeFailed),
            ],
        }
    }

    fn on_book(&mut self, now: u64, env: &Envelope) -> Vec<Action> {
        let Payload::Book {
            booking_id: Some(booking_id),
            user_id,
            proposal: Some(proposal),
            ..
        } = &env.payload
        else {
            return vec![Action::fault(
                env.request_id.clone(),
                "book without booking id or proposal",
            )];
        };
        let reply = |payload| vec![Action::send(env.sender.clone(), env.request_id.clone(), payload)];
        let spec = BookingSpec {
            booking_id: booking_id.clone(),
            request_id: proposal.request_id.clone(),
            user_id: user_id.clone(),
            legs: proposal.legs.clone(),
        };
        self.bookings.insert(booking_id.clone(), proposal.clone());
        match self.store.hold(&spec, &self.guesthouse_id, now) {
            Ok(HoldOutcome::Held) => reply(Payload::HoldOk(BookRef {
                booking_id: booking_id.clone(),
            })),
            Ok(HoldOutcome::Short { date, room_type }) => reply(Payload::HoldFail {
                booking_id: booking_id.clone(),
                reason: format!("no {room_type} room free on {date}"),
            }),
            Err(e) => reply(Payload::HoldFail {
                booking_id: booking_id.clone(),
                reason: e.to_string(),
            }),
        }
    }

    fn on_confirm(&mut self, now: u64, env: &Envelope, booking_id: &BookingId) -> Vec<Action> {
        let reply = |payload| vec![Action::send(env.sender.clone(), env.request_id.clone(), payload)];
        let Some(proposal) = self.bookings.get(booking_id).cloned() else {
            return reply(Payload::failed(Some(booking_id.clone()), "unknown booking"));
        };
        match self.store.confirm_leg(booking_id, &self.guesthouse_id, now) {
            Ok(_) => reply(Payload::Booked {
                booking_id: booking_id.clone(),
                proposal,
            }),
            Err(e) => reply(Payload::failed(Some(booking_id.clone()), e.to_string())),
        }
    }

    fn on_release(&mut self, env: &Envelope, booking_id: &BookingId) -> Vec<Action> {
        match self.store.release_leg(booking_id, &self.guesthouse_id) {
            Ok(()) | Err(StoreError::UnknownBooking(_)) => Vec::new(),
            Err(e) => vec![Action::fault(
                env.request_id.clone(),
                format!("release of {booking_id}: {e}"),
            )],
        }
    }
}

impl Agent for GuesthouseAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn on_envelope(&mut self, now: u64, env: &Envelope) -> Vec<Action> {
        if self.silent {
            return Vec::new();
        }
        let from_zone = env.sender == self.zonal;
        let from_sibling = env.sender.role() == Role::Ga;
        match &env.payload {
            Payload::Ask { request } => self.on_ask(env, request),
            Payload::CollabAsk { request, remainder } if from_sibling => self.on_collab_ask(env, request, *remainder),
            Payload::CollabTell { leg } if from_sibling => self.on_collab_reply(env, Some(leg)),
            Payload::CollabSorry { .. } if from_sibling => self.on_collab_reply(env, None),
            Payload::Book { .. } if from_zone => self.on_book(now, env),
            Payload::Confirm(BookRef { booking_id }) if from_zone => self.on_confirm(now, env, booking_id),
            Payload::Release(BookRef { booking_id }) if from_zone => self.on_release(env, booking_id),
            _ => vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected {} from {}", env.performative(), env.sender),
            )],
        }
    }

    fn on_timer(&mut self, _now: u64, timer: Timer) -> Vec<Action> {
        if self.silent {
            return Vec::new();
        }
        match timer {
            Timer::Collaboration { request_id } => {
                let Some(collab) = self.collaborations.get(&request_id) else {
                    return Vec::new();
                };
                let mut actions = vec![Action::Note(Note::Timeout {
                    request_id: request_id.clone(),
                    pending: collab.pending.iter().map(AgentId::guesthouse).collect(),
                })];
                actions.extend(self.resolve(&request_id));
                actions
            }
            Timer::Forget { request_id } => {
                self.participating.remove(&request_id);
                Vec::new()
            }
            other => vec![Action::fault(None, format!("unexpected timer {other:?}"))],
        }
    }
}
