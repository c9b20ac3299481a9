use serde::{Deserialize, Serialize};

use super::{DomainError, FacilitySet, Money, RequestId, RoomRequest, StayInterval, UserId, ZoneId};

/// A user's preference bundle for one stay.
///
/// `max_total_price` caps the whole stay across all rooms, not a nightly rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReservationRequest {
    pub request_id: RequestId,
    pub user_id: UserId,
    #[serde(default)]
    pub zone: Option<ZoneId>,
    pub persons: u32,
    pub interval: StayInterval,
    pub rooms: RoomRequest,
    #[serde(default)]
    pub max_total_price: Option<Money>,
    #[serde(default)]
    pub required_facilities: FacilitySet,
}

impl ReservationRequest {
    /// Structural checks. Whether the rooms sleep the party is a matching
    /// criterion and is checked separately by [`Self::validate_capacity`].
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.persons == 0 {
            return Err(DomainError::NoPersons);
        }
        self.rooms.validate_request()?;
        if self.max_total_price == Some(Money::ZERO) {
            return Err(DomainError::NonPositiveCap);
        }
        Ok(())
    }

    pub fn validate_capacity(&self) -> Result<(), DomainError> {
        if !self.rooms.sleeps(self.persons) {
            return Err(DomainError::InsufficientCapacity {
                persons: self.persons,
                capacity: self.rooms.capacity(),
            });
        }
        Ok(())
    }

    /// The request without its identity, as a client would submit it.
    pub fn draft(&self) -> RequestDraft {
        RequestDraft {
            zone: self.zone.clone(),
            persons: self.persons,
            interval: self.interval,
            rooms: self.rooms,
            max_total_price: self.max_total_price,
            required_facilities: self.required_facilities.clone(),
        }
    }
}

/// A reservation request before it has been assigned an id and owner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestDraft {
    #[serde(default)]
    pub zone: Option<ZoneId>,
    pub persons: u32,
    pub interval: StayInterval,
    pub rooms: RoomRequest,
    #[serde(default)]
    pub max_total_price: Option<Money>,
    #[serde(default)]
    pub required_facilities: FacilitySet,
}

impl RequestDraft {
    pub fn into_request(self, request_id: RequestId, user_id: UserId) -> ReservationRequest {
        ReservationRequest {
            request_id,
            user_id,
            zone: self.zone,
            persons: self.persons,
            interval: self.interval,
            rooms: self.rooms,
            max_total_price: self.max_total_price,
            required_facilities: self.required_facilities,
        }
    }
}
