//! Truthful online double auctions.
//!
//! Offers to buy or sell one unit of an identical good arrive and depart over
//! discrete periods. The [`engine`] matches them each period using an
//! agent-independent price schedule from [`schedules`]; every agent pays the
//! highest quote it could have faced over its patience window, which makes
//! truthful reporting of arrival, departure and value a dominant strategy.
//!
//! The crate is `no_std` (with `alloc`). File formats, the command line and
//! the experiment harness live in the `pricerank` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod engine;
pub mod model;
pub mod money;
pub mod oracle;
pub mod schedules;
pub mod verifier;
pub mod workload;

pub use engine::{run, EngineConfig, EngineError, EngineOutcome, Market};
pub use model::{Offer, OfferId, OfferStatus, Period, Side, Trade, TrialTrace};
pub use money::{Fraction, Money};
pub use schedules::{
    BookSnapshot, PriceSchedule, ScheduleKind, ScheduleParams, ScheduleSpec, ScheduleState,
};
