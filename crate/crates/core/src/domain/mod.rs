//! Reservation data model and the matching, pricing and composition rules
//! every agent shares.
//!
//! Everything here is a pure function over immutable values.

mod calendar;
mod facility;
mod ids;
mod interval;
mod matching;
mod money;
mod profile;
mod proposal;
mod request;
mod rooms;

use chrono::NaiveDate;
use thiserror::Error;

pub use calendar::AvailabilityCalendar;
pub use facility::{facilities_satisfied, facilities_satisfied_tokens, parse_facilities, Facility, FacilitySet};
pub use ids::{BookingId, GuesthouseId, ProposalId, RequestId, UserId, ZoneId};
pub use interval::{add_days, StayInterval};
pub use matching::{evaluate_request, longest_prefix, price_total, rooms_available, MatchResult};
pub use money::Money;
pub use profile::GuesthouseProfile;
pub use proposal::{compose, Proposal, ProposalLeg, DEFAULT_MAX_LEGS};
pub use request::{RequestDraft, ReservationRequest};
pub use rooms::{ByRoomType, RoomRequest, RoomType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown facility token `{0}`")]
    UnknownFacility(String),
    #[error("stay {arrival}..{departure} has no nights")]
    EmptyInterval { arrival: NaiveDate, departure: NaiveDate },
    #[error("date {0} lies outside the stay")]
    OutsideInterval(NaiveDate),
    #[error("at least one room must be requested")]
    NoRooms,
    #[error("persons must be at least 1")]
    NoPersons,
    #[error("maximum price must be positive")]
    NonPositiveCap,
    #[error("rooms sleep {capacity} but {persons} persons requested")]
    InsufficientCapacity { persons: u32, capacity: u64 },
    #[error("money overflow")]
    Overflow,
    #[error("proposal has no legs")]
    NoLegs,
    #[error("proposal has {legs} legs, at most {max} allowed")]
    TooManyLegs { legs: usize, max: usize },
    #[error("legs not contiguous: one ends {left_departure}, next starts {right_arrival}")]
    NotContiguous {
        left_departure: NaiveDate,
        right_arrival: NaiveDate,
    },
    #[error("legs cover {covered_from}..{covered_to}, request is {arrival}..{departure}")]
    CoverageMismatch {
        covered_from: NaiveDate,
        covered_to: NaiveDate,
        arrival: NaiveDate,
        departure: NaiveDate,
    },
    #[error("guesthouse {0} appears in more than one leg")]
    DuplicateGuesthouse(GuesthouseId),
    #[error("leg or total price does not match its breakdown")]
    PriceMismatch,
    #[error("total {total} exceeds cap {cap}")]
    PriceCapExceeded { total: Money, cap: Money },
    #[error("proposal belongs to request {found}, expected {expected}")]
    RequestMismatch { expected: RequestId, found: RequestId },
    #[error("leg rooms differ from the requested rooms")]
    RoomsMismatch,
    #[error("free count {free} exceeds inventory {inventory} for {room_type} on {date}")]
    InventoryExceeded {
        date: NaiveDate,
        room_type: RoomType,
        free: u32,
        inventory: u32,
    },
    #[error("no {room_type} room free on {date}")]
    Shortfall { date: NaiveDate, room_type: RoomType },
}
