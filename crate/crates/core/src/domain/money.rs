use std::fmt;
use std::iter::Sum;

use serde::{Deserialize, Serialize};

use super::DomainError;

/// Integer amount in minor currency units. All arithmetic is checked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(u64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn new(minor_units: u64) -> Self {
        Self(minor_units)
    }

    pub fn minor_units(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, other: Money) -> Result<Money, DomainError> {
        self.0.checked_add(other.0).map(Money).ok_or(DomainError::Overflow)
    }

    pub fn checked_mul(self, factor: u64) -> Result<Money, DomainError> {
        self.0.checked_mul(factor).map(Money).ok_or(DomainError::Overflow)
    }

    pub fn checked_sum<I: IntoIterator<Item = Money>>(items: I) -> Result<Money, DomainError> {
        items.into_iter().try_fold(Money::ZERO, Money::checked_add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u64> for Money {
    fn from(value: u64) -> Self {
        Money(value)
    }
}

// Panics on overflow; use `checked_sum` where inputs are untrusted.
impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Self {
        Money::checked_sum(iter).expect("money overflow")
    }
}
