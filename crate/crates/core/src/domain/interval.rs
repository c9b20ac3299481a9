use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::DomainError;

/// Half-open stay `[arrival, departure)`. The departure day is not a room-night.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct StayInterval {
    arrival: NaiveDate,
    departure: NaiveDate,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterval {
    arrival: NaiveDate,
    departure: NaiveDate,
}

impl TryFrom<RawInterval> for StayInterval {
    type Error = DomainError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        StayInterval::new(raw.arrival, raw.departure)
    }
}

impl StayInterval {
    pub fn new(arrival: NaiveDate, departure: NaiveDate) -> Result<Self, DomainError> {
        if departure <= arrival {
            return Err(DomainError::EmptyInterval { arrival, departure });
        }
        Ok(Self { arrival, departure })
    }

    pub fn arrival(&self) -> NaiveDate {
        self.arrival
    }

    pub fn departure(&self) -> NaiveDate {
        self.departure
    }

    pub fn nights(&self) -> u32 {
        // Bounded by the NaiveDate range, far below u32::MAX.
        (self.departure - self.arrival).num_days() as u32
    }

    /// Every room-night in order.
    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> {
        let departure = self.departure;
        self.arrival.iter_days().take_while(move |d| *d < departure)
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.arrival <= date && date < self.departure
    }

    /// Sub-interval `[arrival, until)`, if non-empty and inside this stay.
    pub fn prefix(&self, until: NaiveDate) -> Result<Self, DomainError> {
        if until > self.departure {
            return Err(DomainError::OutsideInterval(until));
        }
        Self::new(self.arrival, until)
    }

    /// Sub-interval `[from, departure)`.
    pub fn suffix(&self, from: NaiveDate) -> Result<Self, DomainError> {
        if from < self.arrival {
            return Err(DomainError::OutsideInterval(from));
        }
        Self::new(from, self.departure)
    }
}

/// `date + n` days; saturates at the calendar's end.
pub fn add_days(date: NaiveDate, n: u32) -> NaiveDate {
    date.checked_add_days(Days::new(n.into())).unwrap_or(NaiveDate::MAX)
}
