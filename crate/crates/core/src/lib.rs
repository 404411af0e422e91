//! Desk-scale modeling toolkit for CDNA chiplet GPUs.
//!
//! Models the pieces of kernel design that can be analyzed without hardware:
//! shared-memory bank conflicts under per-instruction phase partitions,
//! swizzled tile layouts and exhaustive swizzle search, empirical phase/bank
//! solvers, chiplet-aware grid scheduling with a two-level cache simulator,
//! and register-budget/occupancy models for wave schedules.

pub mod cachesim;
pub mod config;
pub mod conflict;
pub mod error;
pub mod layout;
pub mod machine;
pub mod phases;
pub mod sched;
pub mod waves;

pub use error::{Error, Result};
