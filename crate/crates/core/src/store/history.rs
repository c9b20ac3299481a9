use serde::{Deserialize, Serialize};

use crate::domain::{BookingId, Proposal, ReservationRequest, UserId};

/// One line of a user's historical record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub user_id: UserId,
    pub timestamp: u64,
    pub request: ReservationRequest,
    /// Ranked proposals as the user saw them.
    pub classification: Vec<Proposal>,
    pub outcome: Option<BookingId>,
}
