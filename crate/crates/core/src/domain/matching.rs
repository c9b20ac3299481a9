use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{
    facilities_satisfied, AvailabilityCalendar, DomainError, GuesthouseProfile, Money, ReservationRequest, RoomRequest,
    StayInterval,
};

/// How much of a stay one guesthouse can host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MatchResult {
    Full,
    /// Hosts `[arrival, cover_until)`; `cover_until` is strictly inside the stay.
    Prefix {
        cover_until: NaiveDate,
    },
    None,
}

pub fn rooms_available(calendar: &AvailabilityCalendar, rooms: &RoomRequest, interval: &StayInterval) -> bool {
    calendar.first_shortfall(rooms, interval).is_none()
}

pub fn longest_prefix(calendar: &AvailabilityCalendar, rooms: &RoomRequest, interval: &StayInterval) -> MatchResult {
    match calendar.first_shortfall(rooms, interval) {
        None => MatchResult::Full,
        Some((date, _)) if date == interval.arrival() => MatchResult::None,
        Some((date, _)) => MatchResult::Prefix { cover_until: date },
    }
}

/// Σ count × nightly rate × nights, in exact integer arithmetic.
pub fn price_total(
    profile: &GuesthouseProfile,
    rooms: &RoomRequest,
    interval: &StayInterval,
) -> Result<Money, DomainError> {
    let nights = u64::from(interval.nights());
    Money::checked_sum(
        rooms
            .iter()
            .map(|(ty, count)| {
                profile
                    .nightly_rate
                    .get(ty)
                    .checked_mul(u64::from(count))?
                    .checked_mul(nights)
            })
            .collect::<Result<Vec<_>, _>>()?,
    )
}

/// A guesthouse's answer to a request, with the price of what it covers.
///
/// Facilities and party capacity are checked first. A full match priced
/// above the cap is no match; a prefix is quoted uncapped because the cap
/// applies to the composed proposal.
pub fn evaluate_request(
    profile: &GuesthouseProfile,
    calendar: &AvailabilityCalendar,
    request: &ReservationRequest,
) -> Result<(MatchResult, Money), DomainError> {
    request.validate()?;
    if !facilities_satisfied(&profile.facilities, &request.required_facilities)
        || !request.rooms.sleeps(request.persons)
    {
        return Ok((MatchResult::None, Money::ZERO));
    }
    match longest_prefix(calendar, &request.rooms, &request.interval) {
        MatchResult::None => Ok((MatchResult::None, Money::ZERO)),
        MatchResult::Full => {
            let price = price_total(profile, &request.rooms, &request.interval)?;
            match request.max_total_price {
                Some(cap) if price > cap => Ok((MatchResult::None, Money::ZERO)),
                _ => Ok((MatchResult::Full, price)),
            }
        }
        MatchResult::Prefix { cover_until } => {
            let covered = request.interval.prefix(cover_until)?;
            let price = price_total(profile, &request.rooms, &covered)?;
            Ok((MatchResult::Prefix { cover_until }, price))
        }
    }
}
