use std::fmt;

use serde::{Deserialize, Serialize};

use super::DomainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomType {
    Single,
    Double,
    Triple,
}

impl RoomType {
    pub const ALL: [RoomType; 3] = [RoomType::Single, RoomType::Double, RoomType::Triple];

    /// Persons one room of this type sleeps.
    pub fn capacity(self) -> u32 {
        match self {
            RoomType::Single => 1,
            RoomType::Double => 2,
            RoomType::Triple => 3,
        }
    }
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoomType::Single => "single",
            RoomType::Double => "double",
            RoomType::Triple => "triple",
        })
    }
}

/// A value per room type. Used for room requests, inventories, free counts
/// and nightly rates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ByRoomType<T> {
    pub single: T,
    pub double: T,
    pub triple: T,
}

impl<T: Copy> ByRoomType<T> {
    pub fn new(single: T, double: T, triple: T) -> Self {
        Self { single, double, triple }
    }

    pub fn uniform(value: T) -> Self {
        Self::new(value, value, value)
    }

    pub fn get(&self, ty: RoomType) -> T {
        match ty {
            RoomType::Single => self.single,
            RoomType::Double => self.double,
            RoomType::Triple => self.triple,
        }
    }

    pub fn get_mut(&mut self, ty: RoomType) -> &mut T {
        match ty {
            RoomType::Single => &mut self.single,
            RoomType::Double => &mut self.double,
            RoomType::Triple => &mut self.triple,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (RoomType, T)> + '_ {
        RoomType::ALL.into_iter().map(move |ty| (ty, self.get(ty)))
    }
}

/// Rooms wanted per type.
pub type RoomRequest = ByRoomType<u32>;

impl ByRoomType<u32> {
    pub fn total(&self) -> u32 {
        self.single + self.double + self.triple
    }

    /// 1·single + 2·double + 3·triple.
    pub fn capacity(&self) -> u64 {
        self.iter().map(|(ty, n)| u64::from(n) * u64::from(ty.capacity())).sum()
    }

    /// A room request must ask for at least one room.
    pub fn validate_request(&self) -> Result<(), DomainError> {
        if self.total() == 0 {
            return Err(DomainError::NoRooms);
        }
        Ok(())
    }

    pub fn sleeps(&self, persons: u32) -> bool {
        self.capacity() >= u64::from(persons)
    }

    pub fn covers(&self, wanted: &RoomRequest) -> bool {
        RoomType::ALL.iter().all(|&ty| self.get(ty) >= wanted.get(ty))
    }
}
