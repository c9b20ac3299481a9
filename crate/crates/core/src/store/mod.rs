//! Guesthouse registry, availability calendars, bookings and user history.
//!
//! Calendar mutations for one guesthouse are serialised by that
//! guesthouse's lock; reads clone a snapshot. Whenever both are needed the
//! guesthouse lock is taken before the bookings lock, and multi-leg
//! operations walk legs in guesthouse-id order.

mod audit;
mod booking;
mod history;
mod persist;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDate;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{check_conservation, ConservationViolation, GuesthouseSnapshot, StoreSnapshot};
pub use booking::{Booking, BookingSpec, BookingState, LegState};
pub use history::HistoryEntry;

use crate::domain::{
    price_total, AvailabilityCalendar, BookingId, ByRoomType, DomainError, FacilitySet, GuesthouseId,
    GuesthouseProfile, Money, RoomType, UserId,
};
use persist::{CalendarRecord, FileBackend};

pub const DEFAULT_HOLD_TTL: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    /// Logical time units a hold survives without confirmation.
    pub hold_ttl: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            hold_ttl: DEFAULT_HOLD_TTL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("unknown guesthouse {0}")]
    UnknownGuesthouse(GuesthouseId),
    #[error("guesthouse {0} already registered")]
    DuplicateGuesthouse(GuesthouseId),
    #[error("unknown booking {0}")]
    UnknownBooking(BookingId),
    #[error("guesthouse {guesthouse_id} has no leg in booking {booking_id}")]
    NotInBooking {
        booking_id: BookingId,
        guesthouse_id: GuesthouseId,
    },
    #[error("booking {booking_id} is {state:?}")]
    InvalidState { booking_id: BookingId, state: BookingState },
    #[error("booking {0} is confirmed and cannot be released")]
    AlreadyConfirmed(BookingId),
    #[error("hold for booking {0} expired")]
    Expired(BookingId),
    #[error("booking {0} was created with different legs")]
    SpecMismatch(BookingId),
    #[error("principal for {principal} may not modify {target}")]
    Forbidden {
        principal: GuesthouseId,
        target: GuesthouseId,
    },
    #[error("update conflicts with committed bookings: {0}")]
    Conflict(String),
    #[error(transparent)]
    Invalid(#[from] DomainError),
    #[error("storage fault at guesthouse {0}")]
    Fault(GuesthouseId),
    #[error("storage i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum HoldOutcome {
    Held,
    /// Some night lacked the rooms; nothing was decremented.
    Short {
        date: NaiveDate,
        room_type: RoomType,
    },
}

/// Staff credentials scoped to exactly one guesthouse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdminPrincipal {
    pub guesthouse_id: GuesthouseId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileUpdate {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub address: Option<String>,
    #[serde(default)]
    pub telephone: Option<String>,
    #[serde(default)]
    pub facilities: Option<FacilitySet>,
    #[serde(default)]
    pub inventory: Option<ByRoomType<u32>>,
    #[serde(default)]
    pub nightly_rate: Option<ByRoomType<Money>>,
}

/// Sets the number of rooms offered for sale on a night. Rooms neither
/// offered nor booked are recorded as closed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalendarEntry {
    pub date: NaiveDate,
    pub room_type: RoomType,
    pub free: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuesthouseUpdate {
    Profile(ProfileUpdate),
    Calendar(Vec<CalendarEntry>),
}

#[derive(Debug)]
struct Slot {
    profile: GuesthouseProfile,
    calendar: AvailabilityCalendar,
    closed: BTreeMap<NaiveDate, ByRoomType<u32>>,
}

impl Slot {
    fn snapshot(&self) -> GuesthouseSnapshot {
        GuesthouseSnapshot {
            profile: self.profile.clone(),
            calendar: self.calendar.clone(),
            closed: self.closed.clone(),
        }
    }

    fn night_record(&self, date: NaiveDate) -> CalendarRecord {
        CalendarRecord::Night {
            date,
            free: self.calendar.free_on(date),
            closed: self.closed.get(&date).copied().unwrap_or_default(),
        }
    }

    fn snapshot_record(&self) -> CalendarRecord {
        CalendarRecord::Snapshot {
            calendar: self.calendar.clone(),
            closed: self.closed.clone(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Store {
    config: StoreConfig,
    slots: RwLock<BTreeMap<GuesthouseId, Arc<Mutex<Slot>>>>,
    bookings: Mutex<BTreeMap<BookingId, Booking>>,
    history: Mutex<BTreeMap<UserId, Vec<HistoryEntry>>>,
    faults: Mutex<BTreeSet<GuesthouseId>>,
    backend: Option<FileBackend>,
}

impl Store {
    pub fn in_memory(config: StoreConfig) -> Self {
        Self {
            config,
            ..Self::default()
        }
    }

    /// Opens (or creates) a file-backed store, replaying its logs.
    pub fn open(dir: impl AsRef<Path>, config: StoreConfig) -> Result<Self, StoreError> {
        let backend = FileBackend::new(dir.as_ref())?;
        let loaded = backend.load()?;
        let mut slots = BTreeMap::new();
        for profile in loaded.profiles {
            let id = profile.guesthouse_id.clone();
            let (calendar, closed) = loaded.calendars.get(&id).cloned().unwrap_or_else(|| {
                (
                    AvailabilityCalendar::new(id.clone(), profile.inventory),
                    BTreeMap::new(),
                )
            });
            let slot = Slot {
                profile,
                calendar,
                closed,
            };
            backend.compact_calendar(&id, &slot.snapshot_record())?;
            slots.insert(id, Arc::new(Mutex::new(slot)));
        }
        Ok(Self {
            config,
            slots: RwLock::new(slots),
            bookings: Mutex::new(loaded.bookings),
            history: Mutex::new(loaded.history),
            faults: Mutex::default(),
            backend: Some(backend),
        })
    }

    pub fn config(&self) -> StoreConfig {
        self.config
    }

    /// Registers a guesthouse. Without an explicit calendar every night is free.
    pub fn add_guesthouse(
        &self,
        profile: GuesthouseProfile,
        calendar: Option<AvailabilityCalendar>,
    ) -> Result<(), StoreError> {
        let id = profile.guesthouse_id.clone();
        let calendar = calendar.unwrap_or_else(|| AvailabilityCalendar::new(id.clone(), profile.inventory));
        if calendar.guesthouse_id != id || calendar.inventory() != profile.inventory {
            return Err(StoreError::Conflict(format!(
                "calendar for {} does not match the profile inventory",
                calendar.guesthouse_id
            )));
        }
        let mut slots = self.slots.write();
        if slots.contains_key(&id) {
            return Err(StoreError::DuplicateGuesthouse(id));
        }
        let slot = Slot {
            profile,
            calendar,
            closed: BTreeMap::new(),
        };
        if let Some(backend) = &self.backend {
            backend.compact_calendar(&id, &slot.snapshot_record())?;
        }
        slots.insert(id, Arc::new(Mutex::new(slot)));
        self.persist_registry(&slots)?;
        Ok(())
    }

    fn persist_registry(&self, slots: &BTreeMap<GuesthouseId, Arc<Mutex<Slot>>>) -> Result<(), StoreError> {
        if let Some(backend) = &self.backend {
            let profiles: Vec<_> = slots.values().map(|s| s.lock().profile.clone()).collect();
            backend.write_registry(&profiles)?;
        }
        Ok(())
    }

    fn slot(&self, id: &GuesthouseId) -> Result<Arc<Mutex<Slot>>, StoreError> {
        self.slots
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownGuesthouse(id.clone()))
    }

    pub fn has_guesthouse(&self, id: &GuesthouseId) -> bool {
        self.slots.read().contains_key(id)
    }

    pub fn guesthouse_ids(&self) -> Vec<GuesthouseId> {
        self.slots.read().keys().cloned().collect()
    }

    pub fn profile(&self, id: &GuesthouseId) -> Result<GuesthouseProfile, StoreError> {
        Ok(self.slot(id)?.lock().profile.clone())
    }

    pub fn calendar(&self, id: &GuesthouseId) -> Result<AvailabilityCalendar, StoreError> {
        Ok(self.slot(id)?.lock().calendar.clone())
    }

    pub fn guesthouse_snapshot(&self, id: &GuesthouseId) -> Result<GuesthouseSnapshot, StoreError> {
        Ok(self.slot(id)?.lock().snapshot())
    }

    /// Makes the next hold at `id` fail as a storage fault. For failure
    /// injection in tests and simulations.
    pub fn inject_hold_fault(&self, id: GuesthouseId) {
        self.faults.lock().insert(id);
    }

    fn persist_booking(&self, booking: &Booking) -> Result<(), StoreError> {
        if let Some(backend) = &self.backend {
            backend.append_booking(booking)?;
        }
        Ok(())
    }

    fn persist_nights<I>(&self, slot: &Slot, dates: I) -> Result<(), StoreError>
    where
        I: IntoIterator<Item = NaiveDate>,
    {
        if let Some(backend) = &self.backend {
            let records: Vec<_> = dates.into_iter().map(|d| slot.night_record(d)).collect();
            backend.append_calendar(&slot.profile.guesthouse_id, &records)?;
        }
        Ok(())
    }

    /// Holds this guesthouse's leg of a booking: every room-night of the
    /// leg is decremented, or none is.
    ///
    /// The first hold creates the booking record and starts its TTL. A
    /// repeated hold of an already-held leg is a no-op.
    pub fn hold(&self, spec: &BookingSpec, guesthouse_id: &GuesthouseId, now: u64) -> Result<HoldOutcome, StoreError> {
        let (index, leg) = spec.leg_for(guesthouse_id).ok_or_else(|| StoreError::NotInBooking {
            booking_id: spec.booking_id.clone(),
            guesthouse_id: guesthouse_id.clone(),
        })?;
        let slot = self.slot(guesthouse_id)?;
        let mut slot = slot.lock();
        if self.faults.lock().remove(guesthouse_id) {
            return Err(StoreError::Fault(guesthouse_id.clone()));
        }
        if price_total(&slot.profile, &leg.rooms, &leg.interval)? != leg.leg_price {
            return Err(DomainError::PriceMismatch.into());
        }

        let mut bookings = self.bookings.lock();
        if let Some(existing) = bookings.get(&spec.booking_id) {
            if existing.spec() != *spec {
                return Err(StoreError::SpecMismatch(spec.booking_id.clone()));
            }
            if existing.state != BookingState::Held {
                return Err(StoreError::InvalidState {
                    booking_id: spec.booking_id.clone(),
                    state: existing.state,
                });
            }
            match existing.leg_states[index] {
                LegState::Held | LegState::Confirmed => return Ok(HoldOutcome::Held),
                LegState::Released => {
                    return Err(StoreError::InvalidState {
                        booking_id: spec.booking_id.clone(),
                        state: existing.state,
                    })
                }
                LegState::Pending => {}
            }
            if now > existing.hold_expiry && !existing.any_confirmed() {
                drop(bookings);
                drop(slot);
                self.fail(&spec.booking_id)?;
                return Err(StoreError::Expired(spec.booking_id.clone()));
            }
        }

        let mut calendar = slot.calendar.clone();
        match calendar.take(&leg.rooms, &leg.interval) {
            Ok(()) => {}
            Err(DomainError::Shortfall { date, room_type }) => {
                let booking = bookings
                    .entry(spec.booking_id.clone())
                    .or_insert_with(|| Booking::from_spec(spec, now + self.config.hold_ttl));
                booking.state = BookingState::Failed;
                let booking = booking.clone();
                self.persist_booking(&booking)?;
                return Ok(HoldOutcome::Short { date, room_type });
            }
            Err(e) => return Err(e.into()),
        }
        slot.calendar = calendar;
        self.persist_nights(&slot, leg.interval.dates())?;

        let booking = bookings
            .entry(spec.booking_id.clone())
            .or_insert_with(|| Booking::from_spec(spec, now + self.config.hold_ttl));
        booking.leg_states[index] = LegState::Held;
        let booking = booking.clone();
        self.persist_booking(&booking)?;
        Ok(HoldOutcome::Held)
    }

    /// Holds every leg in guesthouse-id order. If any leg cannot be held,
    /// the legs already held are released and the booking is marked failed.
    pub fn hold_all(&self, spec: &BookingSpec, now: u64) -> Result<HoldOutcome, StoreError> {
        let mut order: Vec<&GuesthouseId> = spec.legs.iter().map(|l| &l.guesthouse_id).collect();
        order.sort();
        for gh in order {
            match self.hold(spec, gh, now) {
                Ok(HoldOutcome::Held) => {}
                Ok(short @ HoldOutcome::Short { .. }) => {
                    self.fail(&spec.booking_id)?;
                    return Ok(short);
                }
                Err(e) => {
                    if self.booking(&spec.booking_id).is_some() {
                        self.fail(&spec.booking_id)?;
                    }
                    return Err(e);
                }
            }
        }
        Ok(HoldOutcome::Held)
    }

    /// Confirms one guesthouse's held leg. The booking becomes confirmed
    /// once every leg is.
    pub fn confirm_leg(
        &self,
        booking_id: &BookingId,
        guesthouse_id: &GuesthouseId,
        now: u64,
    ) -> Result<BookingState, StoreError> {
        let mut bookings = self.bookings.lock();
        let booking = bookings
            .get_mut(booking_id)
            .ok_or_else(|| StoreError::UnknownBooking(booking_id.clone()))?;
        let index = booking
            .leg_index(guesthouse_id)
            .ok_or_else(|| StoreError::NotInBooking {
                booking_id: booking_id.clone(),
                guesthouse_id: guesthouse_id.clone(),
            })?;
        if booking.state == BookingState::Confirmed {
            return Ok(BookingState::Confirmed);
        }
        if booking.state != BookingState::Held {
            return Err(StoreError::InvalidState {
                booking_id: booking_id.clone(),
                state: booking.state,
            });
        }
        if now > booking.hold_expiry && !booking.any_confirmed() {
            drop(bookings);
            self.fail(booking_id)?;
            return Err(StoreError::Expired(booking_id.clone()));
        }
        match booking.leg_states[index] {
            LegState::Held => booking.leg_states[index] = LegState::Confirmed,
            LegState::Confirmed => {}
            _ => {
                return Err(StoreError::InvalidState {
                    booking_id: booking_id.clone(),
                    state: booking.state,
                })
            }
        }
        if booking.leg_states.iter().all(|s| *s == LegState::Confirmed) {
            collect_payment(booking)?;
            booking.state = BookingState::Confirmed;
        }
        let snapshot = booking.clone();
        self.persist_booking(&snapshot)?;
        Ok(snapshot.state)
    }

    /// Confirms every leg at once. Confirming a confirmed booking is a no-op.
    pub fn confirm(&self, booking_id: &BookingId, now: u64) -> Result<BookingState, StoreError> {
        let mut bookings = self.bookings.lock();
        let booking = bookings
            .get_mut(booking_id)
            .ok_or_else(|| StoreError::UnknownBooking(booking_id.clone()))?;
        match booking.state {
            BookingState::Confirmed => return Ok(BookingState::Confirmed),
            BookingState::Held => {}
            state => {
                return Err(StoreError::InvalidState {
                    booking_id: booking_id.clone(),
                    state,
                })
            }
        }
        if now > booking.hold_expiry && !booking.any_confirmed() {
            drop(bookings);
            self.fail(booking_id)?;
            return Err(StoreError::Expired(booking_id.clone()));
        }
        if !booking
            .leg_states
            .iter()
            .all(|s| matches!(s, LegState::Held | LegState::Confirmed))
        {
            return Err(StoreError::InvalidState {
                booking_id: booking_id.clone(),
                state: booking.state,
            });
        }
        collect_payment(booking)?;
        booking.leg_states.iter_mut().for_each(|s| *s = LegState::Confirmed);
        booking.state = BookingState::Confirmed;
        let snapshot = booking.clone();
        self.persist_booking(&snapshot)?;
        Ok(BookingState::Confirmed)
    }

    /// Returns one held leg's room-nights to the calendar.
    pub fn release_leg(&self, booking_id: &BookingId, guesthouse_id: &GuesthouseId) -> Result<(), StoreError> {
        let slot = self.slot(guesthouse_id)?;
        let mut slot = slot.lock();
        let mut bookings = self.bookings.lock();
        let booking = bookings
            .get_mut(booking_id)
            .ok_or_else(|| StoreError::UnknownBooking(booking_id.clone()))?;
        let index = booking
            .leg_index(guesthouse_id)
            .ok_or_else(|| StoreError::NotInBooking {
                booking_id: booking_id.clone(),
                guesthouse_id: guesthouse_id.clone(),
            })?;
        match booking.leg_states[index] {
            LegState::Confirmed => return Err(StoreError::AlreadyConfirmed(booking_id.clone())),
            LegState::Released => return Ok(()),
            LegState::Pending => {}
            LegState::Held => {
                let leg = &booking.legs[index];
                let mut calendar = slot.calendar.clone();
                calendar.give_back(&leg.rooms, &leg.interval)?;
                slot.calendar = calendar;
                self.persist_nights(&slot, leg.interval.dates())?;
            }
        }
        booking.leg_states[index] = LegState::Released;
        if booking.state == BookingState::Held && booking.occupying().next().is_none() {
            booking.state = BookingState::Released;
        }
        let snapshot = booking.clone();
        self.persist_booking(&snapshot)?;
        Ok(())
    }

    fn release_all(&self, booking_id: &BookingId) -> Result<Booking, StoreError> {
        let booking = self
            .booking(booking_id)
            .ok_or_else(|| StoreError::UnknownBooking(booking_id.clone()))?;
        if booking.any_confirmed() {
            return Err(StoreError::AlreadyConfirmed(booking_id.clone()));
        }
        let mut order: Vec<&GuesthouseId> = booking.legs.iter().map(|l| &l.guesthouse_id).collect();
        order.sort();
        for gh in order {
            self.release_leg(booking_id, gh)?;
        }
        Ok(booking)
    }

    /// Releases every held leg. Confirmed bookings cannot be released.
    pub fn release(&self, booking_id: &BookingId) -> Result<(), StoreError> {
        let before = self.release_all(booking_id)?;
        if before.state == BookingState::Held {
            self.set_state(booking_id, BookingState::Released)?;
        }
        Ok(())
    }

    /// Releases every held leg and marks the booking failed.
    pub fn fail(&self, booking_id: &BookingId) -> Result<(), StoreError> {
        self.release_all(booking_id)?;
        self.set_state(booking_id, BookingState::Failed)
    }

    fn set_state(&self, booking_id: &BookingId, state: BookingState) -> Result<(), StoreError> {
        let mut bookings = self.bookings.lock();
        if let Some(b) = bookings.get_mut(booking_id) {
            if b.state != state {
                b.state = state;
                let snapshot = b.clone();
                self.persist_booking(&snapshot)?;
            }
        }
        Ok(())
    }

    /// Auto-releases every held booking whose TTL has passed.
    pub fn expire(&self, now: u64) -> Result<Vec<BookingId>, StoreError> {
        let due: Vec<BookingId> = self
            .bookings
            .lock()
            .values()
            .filter(|b| b.state == BookingState::Held && !b.any_confirmed() && now > b.hold_expiry)
            .map(|b| b.booking_id.clone())
            .collect();
        for id in &due {
            self.release(id)?;
        }
        Ok(due)
    }

    pub fn booking(&self, booking_id: &BookingId) -> Option<Booking> {
        self.bookings.lock().get(booking_id).cloned()
    }

    pub fn bookings(&self) -> Vec<Booking> {
        self.bookings.lock().values().cloned().collect()
    }

    fn committed(bookings: &BTreeMap<BookingId, Booking>, gh: &GuesthouseId, date: NaiveDate) -> ByRoomType<u32> {
        let mut total = ByRoomType::default();
        for booking in bookings.values() {
            for (leg, _) in booking.occupying() {
                if &leg.guesthouse_id == gh && leg.interval.contains(date) {
                    for ty in RoomType::ALL {
                        *total.get_mut(ty) += leg.rooms.get(ty);
                    }
                }
            }
        }
        total
    }

    /// Staff update of a guesthouse's profile or calendar.
    ///
    /// Never strands committed room-nights: an inventory shrink or a
    /// calendar change that would need more rooms than remain unbooked is
    /// rejected with [`StoreError::Conflict`] and nothing changes.
    pub fn update_guesthouse(
        &self,
        principal: &AdminPrincipal,
        guesthouse_id: &GuesthouseId,
        update: GuesthouseUpdate,
    ) -> Result<(), StoreError> {
        if &principal.guesthouse_id != guesthouse_id {
            return Err(StoreError::Forbidden {
                principal: principal.guesthouse_id.clone(),
                target: guesthouse_id.clone(),
            });
        }
        let slot = self.slot(guesthouse_id)?;
        match update {
            GuesthouseUpdate::Profile(delta) => {
                {
                    let mut slot = slot.lock();
                    let mut profile = slot.profile.clone();
                    let mut calendar = slot.calendar.clone();
                    if let Some(inventory) = delta.inventory {
                        calendar.set_inventory(inventory).map_err(|e| match e {
                            DomainError::Shortfall { date, room_type } => StoreError::Conflict(format!(
                                "{room_type} rooms on {date} are committed beyond the new inventory"
                            )),
                            other => other.into(),
                        })?;
                        profile.inventory = inventory;
                    }
                    if let Some(v) = delta.name {
                        profile.name = v;
                    }
                    if let Some(v) = delta.address {
                        profile.address = v;
                    }
                    if let Some(v) = delta.telephone {
                        profile.telephone = v;
                    }
                    if let Some(v) = delta.facilities {
                        profile.facilities = v;
                    }
                    if let Some(v) = delta.nightly_rate {
                        profile.nightly_rate = v;
                    }
                    slot.profile = profile;
                    if slot.calendar != calendar {
                        slot.calendar = calendar;
                        if let Some(backend) = &self.backend {
                            backend.append_calendar(guesthouse_id, &[slot.snapshot_record()])?;
                        }
                    }
                }
                self.persist_registry(&self.slots.read())?;
            }
            GuesthouseUpdate::Calendar(entries) => {
                let mut slot = slot.lock();
                let bookings = self.bookings.lock();
                let inventory = slot.calendar.inventory();
                let mut calendar = slot.calendar.clone();
                let mut closed = slot.closed.clone();
                let mut touched = BTreeSet::new();
                for entry in &entries {
                    let committed = Self::committed(&bookings, guesthouse_id, entry.date).get(entry.room_type);
                    let sellable = inventory.get(entry.room_type).saturating_sub(committed);
                    if entry.free > sellable {
                        return Err(StoreError::Conflict(format!(
                            "{} {} rooms on {}: {} booked of {}, cannot offer {}",
                            guesthouse_id,
                            entry.room_type,
                            entry.date,
                            committed,
                            inventory.get(entry.room_type),
                            entry.free
                        )));
                    }
                    let mut free = calendar.free_on(entry.date);
                    *free.get_mut(entry.room_type) = entry.free;
                    calendar.set_free(entry.date, free)?;
                    let mut shut = closed.get(&entry.date).copied().unwrap_or_default();
                    *shut.get_mut(entry.room_type) = sellable - entry.free;
                    if shut == ByRoomType::default() {
                        closed.remove(&entry.date);
                    } else {
                        closed.insert(entry.date, shut);
                    }
                    touched.insert(entry.date);
                }
                slot.calendar = calendar;
                slot.closed = closed;
                self.persist_nights(&slot, touched)?;
            }
        }
        Ok(())
    }

    pub fn append_history(&self, entry: HistoryEntry) -> Result<(), StoreError> {
        let mut history = self.history.lock();
        if let Some(backend) = &self.backend {
            backend.append_history(&entry)?;
        }
        history.entry(entry.user_id.clone()).or_default().push(entry);
        Ok(())
    }

    /// The user's entries, newest first. Unknown users have an empty record.
    pub fn query_history(&self, user_id: &UserId) -> Vec<HistoryEntry> {
        let mut entries = self.history.lock().get(user_id).cloned().unwrap_or_default();
        // Stable: equal timestamps keep append order before the reversal.
        entries.sort_by_key(|e| e.timestamp);
        entries.reverse();
        entries
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let slots: Vec<_> = self.slots.read().values().cloned().collect();
        let guesthouses = slots.iter().map(|s| s.lock().snapshot()).collect();
        StoreSnapshot {
            guesthouses,
            bookings: self.bookings(),
        }
    }

    pub fn audit(&self) -> Vec<ConservationViolation> {
        check_conservation(&self.snapshot())
    }
}

/// Payment step between hold and confirmation. Always succeeds.
fn collect_payment(_booking: &Booking) -> Result<(), StoreError> {
    Ok(())
}

pub type SharedStore = Arc<Store>;

#[cfg(test)]
mod tests;
