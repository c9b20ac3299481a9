use serde::{Deserialize, Serialize};

use crate::domain::{BookingId, GuesthouseId, ProposalLeg, RequestId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BookingState {
    Held,
    Confirmed,
    Released,
    Failed,
}

impl BookingState {
    pub fn is_terminal(self) -> bool {
        !matches!(self, BookingState::Held)
    }
}

/// Per-leg progress. A booking's room-nights are counted from these, never
/// from the summary state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LegState {
    Pending,
    Held,
    Confirmed,
    Released,
}

/// What a booking is for, as known before any leg is held.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BookingSpec {
    pub booking_id: BookingId,
    pub request_id: RequestId,
    pub user_id: UserId,
    pub legs: Vec<ProposalLeg>,
}

impl BookingSpec {
    pub fn leg_for(&self, guesthouse_id: &GuesthouseId) -> Option<(usize, &ProposalLeg)> {
        self.legs
            .iter()
            .enumerate()
            .find(|(_, l)| &l.guesthouse_id == guesthouse_id)
    }
}

/// A (possibly multi-leg) reservation moving through hold → confirm, or
/// ending released or failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Booking {
    pub booking_id: BookingId,
    pub request_id: RequestId,
    pub user_id: UserId,
    pub legs: Vec<ProposalLeg>,
    pub state: BookingState,
    pub hold_expiry: u64,
    pub leg_states: Vec<LegState>,
}

impl Booking {
    pub(super) fn from_spec(spec: &BookingSpec, hold_expiry: u64) -> Self {
        Self {
            booking_id: spec.booking_id.clone(),
            request_id: spec.request_id.clone(),
            user_id: spec.user_id.clone(),
            legs: spec.legs.clone(),
            state: BookingState::Held,
            hold_expiry,
            leg_states: vec![LegState::Pending; spec.legs.len()],
        }
    }

    pub fn spec(&self) -> BookingSpec {
        BookingSpec {
            booking_id: self.booking_id.clone(),
            request_id: self.request_id.clone(),
            user_id: self.user_id.clone(),
            legs: self.legs.clone(),
        }
    }

    pub fn leg_index(&self, guesthouse_id: &GuesthouseId) -> Option<usize> {
        self.legs.iter().position(|l| &l.guesthouse_id == guesthouse_id)
    }

    pub fn any_confirmed(&self) -> bool {
        self.leg_states.contains(&LegState::Confirmed)
    }

    /// Legs currently occupying room-nights, with their state.
    pub fn occupying(&self) -> impl Iterator<Item = (&ProposalLeg, LegState)> {
        self.legs
            .iter()
            .zip(self.leg_states.iter().copied())
            .filter(|(_, s)| matches!(s, LegState::Held | LegState::Confirmed))
    }
}
