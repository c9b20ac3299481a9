use std::collections::{BTreeMap, BTreeSet};

use super::{Action, Agent, AgentId, BookRef, Envelope, Note, Payload, ProtocolConfig, Role, SorryReason, Timer};
use crate::domain::{BookingId, GuesthouseId, Proposal, ProposalId, RequestId, ReservationRequest, UserId, ZoneId};

#[derive(Debug)]
struct Collection {
    upstream: AgentId,
    request: ReservationRequest,
    pending: BTreeSet<GuesthouseId>,
    proposals: Vec<Proposal>,
    participants: BTreeSet<GuesthouseId>,
    done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BookingPhase {
    Holding,
    Confirming,
    Done,
}

#[derive(Debug)]
struct BookingRun {
    upstream: AgentId,
    request_id: RequestId,
    user_id: UserId,
    proposal: Proposal,
    order: Vec<GuesthouseId>,
    held: Vec<GuesthouseId>,
    awaiting: BTreeSet<GuesthouseId>,
    phase: BookingPhase,
    step: u32,
}

/// Zonal agent: fans a request out to its guesthouses, validates and
/// forwards what comes back, and runs the hold/confirm sequence for
/// bookings of its proposals.
#[derive(Debug)]
pub struct ZonalAgent {
    id: AgentId,
    zone: ZoneId,
    roster: BTreeSet<GuesthouseId>,
    config: ProtocolConfig,
    collections: BTreeMap<RequestId, Collection>,
    offers: BTreeMap<ProposalId, (Proposal, AgentId)>,
    bookings: BTreeMap<BookingId, BookingRun>,
}

impl ZonalAgent {
    pub fn new(zone: ZoneId, roster: impl IntoIterator<Item = GuesthouseId>, config: ProtocolConfig) -> Self {
        Self {
            id: AgentId::zonal(&zone),
            zone,
            roster: roster.into_iter().collect(),
            config,
            collections: BTreeMap::new(),
            offers: BTreeMap::new(),
            bookings: BTreeMap::new(),
        }
    }

    pub fn roster(&self) -> impl Iterator<Item = &GuesthouseId> {
        self.roster.iter()
    }

    fn on_ask(&mut self, env: &Envelope, request: &ReservationRequest) -> Vec<Action> {
        let rid = request.request_id.clone();
        if env.request_id.as_ref() != Some(&rid) {
            return vec![Action::fault(
                env.request_id.clone(),
                "ask body names a different request",
            )];
        }
        if self.collections.contains_key(&rid) {
            return vec![Action::fault(Some(rid), "duplicate ask")];
        }
        let wrong_zone = request.zone.as_ref().is_some_and(|z| z != &self.zone);
        if wrong_zone || request.validate().is_err() {
            return vec![Action::send(
                env.sender.clone(),
                rid,
                Payload::Sorry {
                    reason: SorryReason::Invalid,
                },
            )];
        }
        let mut collection = Collection {
            upstream: env.sender.clone(),
            request: request.clone(),
            pending: self.roster.clone(),
            proposals: Vec::new(),
            participants: BTreeSet::new(),
            done: false,
        };
        let mut actions: Vec<Action> = self
            .roster
            .iter()
            .map(|gh| {
                Action::send(
                    AgentId::guesthouse(gh),
                    rid.clone(),
                    Payload::Ask {
                        request: request.clone(),
                    },
                )
            })
            .collect();
        if self.roster.is_empty() {
            actions.extend(self.finish(&mut collection));
        } else {
            actions.push(Action::Timer {
                after: self.config.zone_collection,
                timer: Timer::Collection {
                    request_id: rid.clone(),
                },
            });
        }
        self.collections.insert(rid, collection);
        actions
    }

    /// Checks a GA's proposal before it is forwarded. The sender must be
    /// the first leg, every leg must be a roster member not yet seen in
    /// another proposal, and the proposal must answer the request exactly.
    fn admit(&self, collection: &Collection, from: &GuesthouseId, p: &Proposal) -> Result<(), String> {
        p.validate(&collection.request, self.config.max_legs)
            .map_err(|e| e.to_string())?;
        if p.legs.first().map(|l| &l.guesthouse_id) != Some(from) {
            return Err(format!("{from} told a proposal it does not lead"));
        }
        for gh in p.guesthouse_ids() {
            if !self.roster.contains(gh) {
                return Err(format!("{gh} is not in zone {}", self.zone));
            }
            if collection.participants.contains(gh) {
                return Err(format!("{gh} already appears in a proposal"));
            }
        }
        Ok(())
    }

    fn on_reply(&mut self, env: &Envelope, proposals: &[Proposal]) -> Vec<Action> {
        let Some(rid) = env.request_id.clone() else {
            return vec![Action::fault(None, "reply without request id")];
        };
        let from = GuesthouseId::from(env.sender.name());
        let Some(mut collection) = self.collections.remove(&rid) else {
            return vec![Action::fault(
                Some(rid),
                format!("reply from {} for unknown request", env.sender),
            )];
        };
        let mut actions = Vec::new();
        if collection.done {
            actions.push(Action::fault(
                Some(rid.clone()),
                format!("late reply from {} dropped", env.sender),
            ));
        } else if !collection.pending.remove(&from) {
            actions.push(Action::fault(
                Some(rid.clone()),
                format!("unsolicited reply from {}", env.sender),
            ));
        } else {
            if proposals.len() > 1 {
                actions.push(Action::fault(
                    Some(rid.clone()),
                    format!("{} told more than one proposal", env.sender),
                ));
            }
            for p in proposals.iter().take(1) {
                match self.admit(&collection, &from, p) {
                    Ok(()) => {
                        collection.participants.extend(p.guesthouse_ids().cloned());
                        collection.proposals.push(p.clone());
                    }
                    Err(why) => actions.push(Action::fault(Some(rid.clone()), format!("proposal dropped: {why}"))),
                }
            }
            if collection.pending.is_empty() {
                actions.extend(self.finish(&mut collection));
            }
        }
        self.collections.insert(rid, collection);
        actions
    }

    fn finish(&mut self, collection: &mut Collection) -> Vec<Action> {
        collection.done = true;
        let mut proposals = collection.proposals.clone();
        proposals.sort_by(|a, b| a.proposal_id.cmp(&b.proposal_id));
        for p in &proposals {
            self.offers
                .insert(p.proposal_id.clone(), (p.clone(), collection.upstream.clone()));
        }
        vec![Action::send(
            collection.upstream.clone(),
            collection.request.request_id.clone(),
            Payload::Tell { proposals },
        )]
    }

    fn on_book(&mut self, env: &Envelope) -> Vec<Action> {
        let Payload::Book {
            proposal_id,
            booking_id,
            user_id,
            proposal,
        } = &env.payload
        else {
            unreachable!("dispatched on performative");
        };
        let rid = env.request_id.clone();
        let reply_fail = |booking_id: Option<BookingId>, reason: String| {
            vec![Action::send(
                env.sender.clone(),
                rid.clone(),
                Payload::failed(booking_id, reason),
            )]
        };
        let Some(booking_id) = booking_id.clone() else {
            return reply_fail(None, "book without booking id".into());
        };
        if self.bookings.contains_key(&booking_id) {
            return vec![Action::fault(rid, format!("duplicate book {booking_id}"))];
        }
        let Some((offered, upstream)) = self.offers.get(proposal_id) else {
            return reply_fail(Some(booking_id), format!("proposal {proposal_id} was not offered"));
        };
        if upstream != &env.sender || proposal.as_ref().is_some_and(|p| p != offered) {
            return reply_fail(
                Some(booking_id),
                format!("proposal {proposal_id} does not match the offer"),
            );
        }
        if rid.as_ref() != Some(&offered.request_id) {
            return reply_fail(Some(booking_id), "book names a different request".into());
        }
        let mut order = offered.guesthouse_chain();
        order.sort();
        let run = BookingRun {
            upstream: env.sender.clone(),
            request_id: offered.request_id.clone(),
            user_id: user_id.clone(),
            proposal: offered.clone(),
            order,
            held: Vec::new(),
            awaiting: BTreeSet::new(),
            phase: BookingPhase::Holding,
            step: 0,
        };
        self.bookings.insert(booking_id.clone(), run);
        self.hold_next(&booking_id)
    }

    fn hold_next(&mut self, booking_id: &BookingId) -> Vec<Action> {
        let ga_reply = self.config.ga_reply;
        let run = self.bookings.get_mut(booking_id).expect("caller checked");
        run.step += 1;
        let timer = Action::Timer {
            after: ga_reply,
            timer: Timer::Booking {
                booking_id: booking_id.clone(),
                step: run.step,
            },
        };
        if let Some(next) = run.order.get(run.held.len()).cloned() {
            run.awaiting = [next.clone()].into();
            return vec![
                Action::send(
                    AgentId::guesthouse(&next),
                    run.request_id.clone(),
                    Payload::Book {
                        proposal_id: run.proposal.proposal_id.clone(),
                        booking_id: Some(booking_id.clone()),
                        user_id: run.user_id.clone(),
                        proposal: Some(run.proposal.clone()),
                    },
                ),
                timer,
            ];
        }
        run.phase = BookingPhase::Confirming;
        run.awaiting = run.held.iter().cloned().collect();
        run.held
            .iter()
            .map(|gh| {
                Action::send(
                    AgentId::guesthouse(gh),
                    run.request_id.clone(),
                    Payload::Confirm(BookRef {
                        booking_id: booking_id.clone(),
                    }),
                )
            })
            .collect()
    }

    /// Releases every leg that may be held and reports failure upstream.
    fn abort(&mut self, booking_id: &BookingId, reason: String) -> Vec<Action> {
        let run = self.bookings.get_mut(booking_id).expect("caller checked");
        run.phase = BookingPhase::Done;
        let mut release: BTreeSet<GuesthouseId> = run.held.iter().cloned().collect();
        // A guesthouse that has not answered may still hold later.
        release.extend(run.awaiting.iter().cloned());
        run.awaiting.clear();
        let mut actions: Vec<Action> = release
            .iter()
            .map(|gh| {
                Action::send(
                    AgentId::guesthouse(gh),
                    run.request_id.clone(),
                    Payload::Release(BookRef {
                        booking_id: booking_id.clone(),
                    }),
                )
            })
            .collect();
        actions.push(Action::send(
            run.upstream.clone(),
            run.request_id.clone(),
            Payload::failed(Some(booking_id.clone()), reason),
        ));
        actions
    }

    fn on_booking_reply(&mut self, env: &Envelope, booking_id: &BookingId) -> Vec<Action> {
        let from = GuesthouseId::from(env.sender.name());
        let Some(run) = self.bookings.get_mut(booking_id) else {
            return vec![Action::fault(
                env.request_id.clone(),
                format!("reply for unknown booking {booking_id}"),
            )];
        };
        let expected = run.awaiting.contains(&from);
        match (&env.payload, run.phase) {
            (Payload::HoldOk(_), BookingPhase::Done) => vec![
                Action::fault(env.request_id.clone(), format!("late hold from {from} released")),
                Action::send(
                    env.sender.clone(),
                    run.request_id.clone(),
                    Payload::Release(BookRef {
                        booking_id: booking_id.clone(),
                    }),
                ),
            ],
            (Payload::HoldOk(_), BookingPhase::Holding) if expected => {
                run.awaiting.remove(&from);
                run.held.push(from);
                self.hold_next(booking_id)
            }
            (Payload::HoldFail { reason, .. }, BookingPhase::Holding) if expected => {
                run.awaiting.remove(&from);
                let reason = format!("{from}: {reason}");
                self.abort(booking_id, reason)
            }
            (Payload::Booked { .. }, BookingPhase::Confirming) if expected => {
                run.awaiting.remove(&from);
                if !run.awaiting.is_empty() {
                    return Vec::new();
                }
                run.phase = BookingPhase::Done;
                vec![Action::send(
                    run.upstream.clone(),
                    run.request_id.clone(),
                    Payload::Booked {
                        booking_id: booking_id.clone(),
                        proposal: run.proposal.clone(),
                    },
                )]
            }
            (Payload::Failed { reason, .. }, BookingPhase::Confirming) if expected => {
                // The store confirms all legs or none, so one refusal
                // means the whole booking is gone.
                run.phase = BookingPhase::Done;
                run.awaiting.clear();
                vec![Action::send(
                    run.upstream.clone(),
                    run.request_id.clone(),
                    Payload::failed(Some(booking_id.clone()), format!("{from}: {reason}")),
                )]
            }
            _ => vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected {} from {from} for {booking_id}", env.performative()),
            )],
        }
    }
}

impl Agent for ZonalAgent {
    fn id(&self) -> &AgentId {
        &self.id
    }

    fn on_envelope(&mut self, _now: u64, env: &Envelope) -> Vec<Action> {
        let from_ga = env.sender.role() == Role::Ga;
        let upstream = matches!(env.sender.role(), Role::Na | Role::Pa);
        match &env.payload {
            Payload::Ask { request } if upstream => self.on_ask(env, request),
            Payload::Book { .. } if upstream => self.on_book(env),
            Payload::Tell { proposals } if from_ga => self.on_reply(env, proposals),
            Payload::Sorry { .. } if from_ga => self.on_reply(env, &[]),
            Payload::HoldOk(BookRef { booking_id })
            | Payload::HoldFail { booking_id, .. }
            | Payload::Booked { booking_id, .. }
                if from_ga =>
            {
                let booking_id = booking_id.clone();
                self.on_booking_reply(env, &booking_id)
            }
            Payload::Failed {
                booking_id: Some(booking_id),
                ..
            } if from_ga => {
                let booking_id = booking_id.clone();
                self.on_booking_reply(env, &booking_id)
            }
            _ => vec![Action::fault(
                env.request_id.clone(),
                format!("unexpected {} from {}", env.performative(), env.sender),
            )],
        }
    }

    fn on_timer(&mut self, _now: u64, timer: Timer) -> Vec<Action> {
        match timer {
            Timer::Collection { request_id } => {
                let Some(mut collection) = self.collections.remove(&request_id) else {
                    return Vec::new();
                };
                let mut actions = Vec::new();
                if !collection.done {
                    actions.push(Action::Note(Note::Timeout {
                        request_id: request_id.clone(),
                        pending: collection.pending.iter().map(AgentId::guesthouse).collect(),
                    }));
                    actions.extend(self.finish(&mut collection));
                }
                self.collections.insert(request_id, collection);
                actions
            }
            Timer::Booking { booking_id, step } => {
                let Some(run) = self.bookings.get(&booking_id) else {
                    return Vec::new();
                };
                if run.step != step || run.phase != BookingPhase::Holding {
                    return Vec::new();
                }
                let mut actions = vec![Action::Note(Note::Timeout {
                    request_id: run.request_id.clone(),
                    pending: run.awaiting.iter().map(AgentId::guesthouse).collect(),
                })];
                actions.extend(self.abort(&booking_id, "guesthouse did not answer the hold".into()));
                actions
            }
            other => vec![Action::fault(None, format!("unexpected timer {other:?}"))],
        }
    }
}
