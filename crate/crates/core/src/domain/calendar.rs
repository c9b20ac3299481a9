use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{ByRoomType, DomainError, GuesthouseId, RoomRequest, RoomType, StayInterval};

/// Free rooms per night and type for one guesthouse.
///
/// Only nights that differ from the full inventory are stored; every
/// unlisted night is fully free. Keeping the map normalised means a hold
/// followed by its release leaves the calendar value-identical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvailabilityCalendar {
    pub guesthouse_id: GuesthouseId,
    inventory: ByRoomType<u32>,
    #[serde(default)]
    free: BTreeMap<NaiveDate, ByRoomType<u32>>,
}

impl AvailabilityCalendar {
    pub fn new(guesthouse_id: GuesthouseId, inventory: ByRoomType<u32>) -> Self {
        Self {
            guesthouse_id,
            inventory,
            free: BTreeMap::new(),
        }
    }

    pub fn inventory(&self) -> ByRoomType<u32> {
        self.inventory
    }

    pub fn free(&self, date: NaiveDate, ty: RoomType) -> u32 {
        self.free_on(date).get(ty)
    }

    pub fn free_on(&self, date: NaiveDate) -> ByRoomType<u32> {
        self.free.get(&date).copied().unwrap_or(self.inventory)
    }

    /// Nights whose free counts differ from inventory, in date order.
    pub fn listed(&self) -> impl Iterator<Item = (NaiveDate, ByRoomType<u32>)> + '_ {
        self.free.iter().map(|(d, c)| (*d, *c))
    }

    pub fn set_free(&mut self, date: NaiveDate, counts: ByRoomType<u32>) -> Result<(), DomainError> {
        for (ty, free) in counts.iter() {
            let inventory = self.inventory.get(ty);
            if free > inventory {
                return Err(DomainError::InventoryExceeded {
                    date,
                    room_type: ty,
                    free,
                    inventory,
                });
            }
        }
        if counts == self.inventory {
            self.free.remove(&date);
        } else {
            self.free.insert(date, counts);
        }
        Ok(())
    }

    /// Builder-style `set_free` for fixtures.
    pub fn with_free(mut self, date: NaiveDate, counts: ByRoomType<u32>) -> Result<Self, DomainError> {
        self.set_free(date, counts)?;
        Ok(self)
    }

    /// First night and room type that cannot supply `rooms`, if any.
    pub fn first_shortfall(&self, rooms: &RoomRequest, interval: &StayInterval) -> Option<(NaiveDate, RoomType)> {
        interval.dates().find_map(|date| {
            let free = self.free_on(date);
            RoomType::ALL
                .into_iter()
                .find(|&ty| free.get(ty) < rooms.get(ty))
                .map(|ty| (date, ty))
        })
    }

    /// Decrements every room-night of the stay, or nothing at all.
    pub fn take(&mut self, rooms: &RoomRequest, interval: &StayInterval) -> Result<(), DomainError> {
        if let Some((date, room_type)) = self.first_shortfall(rooms, interval) {
            return Err(DomainError::Shortfall { date, room_type });
        }
        for date in interval.dates() {
            let mut counts = self.free_on(date);
            for ty in RoomType::ALL {
                *counts.get_mut(ty) -= rooms.get(ty);
            }
            self.set_free(date, counts)?;
        }
        Ok(())
    }

    /// Inverse of [`Self::take`]. Fails without change if any night would
    /// exceed inventory.
    pub fn give_back(&mut self, rooms: &RoomRequest, interval: &StayInterval) -> Result<(), DomainError> {
        for date in interval.dates() {
            let free = self.free_on(date);
            for ty in RoomType::ALL {
                let restored = free.get(ty) + rooms.get(ty);
                if restored > self.inventory.get(ty) {
                    return Err(DomainError::InventoryExceeded {
                        date,
                        room_type: ty,
                        free: restored,
                        inventory: self.inventory.get(ty),
                    });
                }
            }
        }
        for date in interval.dates() {
            let mut counts = self.free_on(date);
            for ty in RoomType::ALL {
                *counts.get_mut(ty) += rooms.get(ty);
            }
            self.set_free(date, counts)?;
        }
        Ok(())
    }

    /// Changes the inventory, shifting every listed night by the same delta.
    /// Fails without change if some night has fewer free rooms than the
    /// reduction removes.
    pub fn set_inventory(&mut self, inventory: ByRoomType<u32>) -> Result<(), DomainError> {
        let mut shifted = BTreeMap::new();
        for (&date, counts) in &self.free {
            let mut next = *counts;
            for ty in RoomType::ALL {
                let (old, new) = (self.inventory.get(ty), inventory.get(ty));
                let free = counts.get(ty);
                *next.get_mut(ty) = if new >= old {
                    free + (new - old)
                } else {
                    free.checked_sub(old - new)
                        .ok_or(DomainError::Shortfall { date, room_type: ty })?
                };
            }
            shifted.insert(date, next);
        }
        self.inventory = inventory;
        self.free = shifted.into_iter().filter(|(_, c)| *c != inventory).collect();
        Ok(())
    }
}
