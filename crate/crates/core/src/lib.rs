//! Smart-meter analytics: turns half-hourly HDF exports into complete
//! 12-month consumption records and ranks tariff plans on them.
//!
//! The pipeline runs `ingest` → `features` → `clustering` → `backfill` →
//! `tariff`, with `evaluation` scoring the back-fill on held-out months.

pub mod ingest;
pub mod features;
pub mod clustering;
pub mod backfill;
pub mod evaluation;
pub mod tariff;
pub mod synthetic;
