//! Reservation brokering for rural guesthouses.
//!
//! Personal, national, zonal and guesthouse agents negotiate over an
//! authenticated, permission-checked message bus to find, rank and book
//! stays. The crate is layered bottom-up:
//!
//! - [`domain`]: request, calendar and proposal types plus matching maths
//! - [`protocol`]: envelopes, the per-role conversation state machines, ranking
//! - [`router`]: registry, authentication, permission matrix, transports
//! - [`store`]: calendars, bookings with hold/confirm/release, user history
//! - [`agents`]: runnable agents binding the above together, text gateway
//! - [`harness`]: deterministic scenario runner and trace checker

pub mod agents;
mod canonical;
pub mod domain;
pub mod harness;
pub mod protocol;
pub mod router;
pub mod store;
