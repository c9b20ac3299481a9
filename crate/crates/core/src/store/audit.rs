//! Point-in-time store snapshots and the room-night conservation check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Booking, LegState};
use crate::domain::{AvailabilityCalendar, ByRoomType, GuesthouseId, GuesthouseProfile, RoomType};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuesthouseSnapshot {
    pub profile: GuesthouseProfile,
    pub calendar: AvailabilityCalendar,
    /// Rooms taken out of service by staff, per night.
    #[serde(default)]
    pub closed: BTreeMap<NaiveDate, ByRoomType<u32>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSnapshot {
    pub guesthouses: Vec<GuesthouseSnapshot>,
    pub bookings: Vec<Booking>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationViolation {
    pub guesthouse_id: GuesthouseId,
    pub date: NaiveDate,
    pub room_type: RoomType,
    pub free: u32,
    pub held: u64,
    pub confirmed: u64,
    pub closed: u32,
    pub inventory: u32,
}

impl fmt::Display for ConservationViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: free {} + held {} + confirmed {} + closed {} != inventory {}",
            self.guesthouse_id,
            self.date,
            self.room_type,
            self.free,
            self.held,
            self.confirmed,
            self.closed,
            self.inventory
        )
    }
}

#[derive(Default, Clone, Copy)]
struct Occupancy {
    held: u64,
    confirmed: u64,
}

/// Checks free + held + confirmed + closed = inventory for every
/// (guesthouse, night, room type) that any record mentions.
///
/// Room-nights are recounted from booking legs independently of the
/// calendar's own bookkeeping.
pub fn check_conservation(snapshot: &StoreSnapshot) -> Vec<ConservationViolation> {
    let mut occupancy: BTreeMap<(&GuesthouseId, NaiveDate, RoomType), Occupancy> = BTreeMap::new();
    for booking in &snapshot.bookings {
        for (leg, state) in booking.occupying() {
            for date in leg.interval.dates() {
                for (ty, count) in leg.rooms.iter() {
                    let slot = occupancy.entry((&leg.guesthouse_id, date, ty)).or_default();
                    match state {
                        LegState::Held => slot.held += u64::from(count),
                        LegState::Confirmed => slot.confirmed += u64::from(count),
                        _ => {}
                    }
                }
            }
        }
    }

    let mut violations = Vec::new();
    let mut known = BTreeSet::new();
    for gh in &snapshot.guesthouses {
        let id = &gh.profile.guesthouse_id;
        known.insert(id);
        let mut dates: BTreeSet<NaiveDate> = gh.calendar.listed().map(|(d, _)| d).collect();
        dates.extend(gh.closed.keys().copied());
        dates.extend(occupancy.keys().filter(|(g, _, _)| *g == id).map(|(_, d, _)| *d));
        let inventory = gh.calendar.inventory();
        for date in dates {
            for ty in RoomType::ALL {
                let occ = occupancy.get(&(id, date, ty)).copied().unwrap_or_default();
                let free = gh.calendar.free(date, ty);
                let closed = gh.closed.get(&date).map(|c| c.get(ty)).unwrap_or(0);
                let total = u64::from(free) + occ.held + occ.confirmed + u64::from(closed);
                if total != u64::from(inventory.get(ty)) {
                    violations.push(ConservationViolation {
                        guesthouse_id: id.clone(),
                        date,
                        room_type: ty,
                        free,
                        held: occ.held,
                        confirmed: occ.confirmed,
                        closed,
                        inventory: inventory.get(ty),
                    });
                }
            }
        }
    }
    // Bookings against guesthouses that do not exist are violations too.
    for ((id, date, ty), occ) in occupancy {
        if !known.contains(id) {
            violations.push(ConservationViolation {
                guesthouse_id: id.clone(),
                date,
                room_type: ty,
                free: 0,
                held: occ.held,
                confirmed: occ.confirmed,
                closed: 0,
                inventory: 0,
            });
        }
    }
    violations
}
