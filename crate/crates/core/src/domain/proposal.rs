use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    price_total, DomainError, GuesthouseId, GuesthouseProfile, Money, ProposalId, RequestId, ReservationRequest,
    RoomRequest, StayInterval,
};

/// Longest chain of guesthouses one proposal may stitch together.
pub const DEFAULT_MAX_LEGS: usize = 2;

/// One guesthouse hosting the party for a contiguous part of the stay.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalLeg {
    pub guesthouse_id: GuesthouseId,
    pub interval: StayInterval,
    pub rooms: RoomRequest,
    pub leg_price: Money,
}

impl ProposalLeg {
    /// Prices the leg from the guesthouse's nightly rates.
    pub fn priced(
        profile: &GuesthouseProfile,
        interval: StayInterval,
        rooms: RoomRequest,
    ) -> Result<Self, DomainError> {
        Ok(Self {
            guesthouse_id: profile.guesthouse_id.clone(),
            interval,
            rooms,
            leg_price: price_total(profile, &rooms, &interval)?,
        })
    }
}

/// A candidate reservation answering one request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Proposal {
    pub proposal_id: ProposalId,
    pub request_id: RequestId,
    pub legs: Vec<ProposalLeg>,
    pub total_price: Money,
}

impl Proposal {
    /// Builds a proposal from ordered legs. The id is derived from the request
    /// and the guesthouse chain, which the exclusivity rule keeps unique.
    pub fn from_legs(request_id: RequestId, legs: Vec<ProposalLeg>) -> Result<Self, DomainError> {
        let total_price = Money::checked_sum(legs.iter().map(|l| l.leg_price))?;
        let chain = legs
            .iter()
            .map(|l| l.guesthouse_id.as_str())
            .collect::<Vec<_>>()
            .join("+");
        Ok(Self {
            proposal_id: ProposalId::new(format!("{request_id}/{chain}")),
            request_id,
            legs,
            total_price,
        })
    }

    pub fn guesthouse_ids(&self) -> impl Iterator<Item = &GuesthouseId> {
        self.legs.iter().map(|l| &l.guesthouse_id)
    }

    /// Guesthouse chain as it appears in the leg order.
    pub fn guesthouse_chain(&self) -> Vec<GuesthouseId> {
        self.guesthouse_ids().cloned().collect()
    }

    /// Checks every structural invariant against the request it answers:
    /// legs partition the stay exactly, guesthouses are distinct, each leg
    /// books the requested rooms, prices add up and respect the cap.
    ///
    /// Leg prices are checked for internal consistency only; matching them
    /// against nightly rates needs the profiles (see [`Self::check_rates`]).
    pub fn validate(&self, request: &ReservationRequest, max_legs: usize) -> Result<(), DomainError> {
        if self.request_id != request.request_id {
            return Err(DomainError::RequestMismatch {
                expected: request.request_id.clone(),
                found: self.request_id.clone(),
            });
        }
        let (first, last) = match (self.legs.first(), self.legs.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(DomainError::NoLegs),
        };
        if self.legs.len() > max_legs {
            return Err(DomainError::TooManyLegs {
                legs: self.legs.len(),
                max: max_legs,
            });
        }
        for pair in self.legs.windows(2) {
            let (left, right) = (&pair[0], &pair[1]);
            if left.interval.departure() != right.interval.arrival() {
                return Err(DomainError::NotContiguous {
                    left_departure: left.interval.departure(),
                    right_arrival: right.interval.arrival(),
                });
            }
        }
        if first.interval.arrival() != request.interval.arrival()
            || last.interval.departure() != request.interval.departure()
        {
            return Err(DomainError::CoverageMismatch {
                covered_from: first.interval.arrival(),
                covered_to: last.interval.departure(),
                arrival: request.interval.arrival(),
                departure: request.interval.departure(),
            });
        }
        let mut seen = BTreeSet::new();
        for leg in &self.legs {
            if !seen.insert(&leg.guesthouse_id) {
                return Err(DomainError::DuplicateGuesthouse(leg.guesthouse_id.clone()));
            }
            if leg.rooms != request.rooms {
                return Err(DomainError::RoomsMismatch);
            }
        }
        let sum = Money::checked_sum(self.legs.iter().map(|l| l.leg_price))?;
        if sum != self.total_price {
            return Err(DomainError::PriceMismatch);
        }
        if let Some(cap) = request.max_total_price {
            if self.total_price > cap {
                return Err(DomainError::PriceCapExceeded {
                    total: self.total_price,
                    cap,
                });
            }
        }
        Ok(())
    }

    /// Recomputes each leg price from the owning guesthouse's rates.
    pub fn check_rates<'a, F>(&self, profile_of: F) -> Result<(), DomainError>
    where
        F: Fn(&GuesthouseId) -> Option<&'a GuesthouseProfile>,
    {
        for leg in &self.legs {
            let profile = profile_of(&leg.guesthouse_id).ok_or(DomainError::PriceMismatch)?;
            if price_total(profile, &leg.rooms, &leg.interval)? != leg.leg_price {
                return Err(DomainError::PriceMismatch);
            }
        }
        Ok(())
    }
}

/// Joins a prefix leg and the leg completing the rest of the stay into one
/// two-leg proposal.
pub fn compose(
    prefix_leg: ProposalLeg,
    completion_leg: ProposalLeg,
    request: &ReservationRequest,
) -> Result<Proposal, DomainError> {
    let proposal = Proposal::from_legs(request.request_id.clone(), vec![prefix_leg, completion_leg])?;
    proposal.validate(request, DEFAULT_MAX_LEGS)?;
    Ok(proposal)
}
