//! Dynamic sensor scheduling and open-world classification for
//! resource-constrained edge sensing.
//!
//! The crate is organised around a discrete-time simulation substrate:
//!
//! - [`trace`]: ground-truth event timelines and synthetic sensor windows.
//! - [`sched`]: sensing-period policies (fixed, minimum class interval,
//!   class-level period assignment and the Q-learning scheduler).
//! - [`sim`]: replays a policy against a trace and aggregates latency and
//!   transmission metrics.
//! - [`openworld`]: feature extraction, the extreme value machine, FINCH
//!   clustering and open-world evaluation.
//! - [`updater`]: idle-time budgeted classifier and scheduler updates.

pub mod config;
pub mod error;
pub mod openworld;
pub mod rng;
pub mod sched;
pub mod sim;
pub mod trace;
pub mod updater;

pub use error::{Error, Result};
pub use trace::ClassId;
