use serde::{Deserialize, Serialize};

use super::{ByRoomType, FacilitySet, GuesthouseId, Money, ZoneId};

/// General information and commercial terms of one guesthouse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuesthouseProfile {
    pub guesthouse_id: GuesthouseId,
    pub zone_id: ZoneId,
    pub name: String,
    #[serde(default)]
    pub address: String,
    #[serde(default)]
    pub telephone: String,
    #[serde(default)]
    pub facilities: FacilitySet,
    /// Total rooms per type.
    pub inventory: ByRoomType<u32>,
    /// Price per room-night per type.
    pub nightly_rate: ByRoomType<Money>,
}
