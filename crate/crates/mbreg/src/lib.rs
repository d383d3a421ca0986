//! Deterministic simulation and analysis of SWMR regular-register emulation
//! under unsynchronized mobile Byzantine faults.
//!
//! The crate is organized around a discrete-event engine ([`sim`]) driving
//! server and client state machines ([`proto`], [`clients`]) over adversary
//! schedules ([`mobility`]). Closed-form replica bounds live in [`bounds`],
//! with an independent brute-force cross-check and attack constructor in
//! [`oracle`]. Recorded histories are verified by [`checker`], and [`runner`]
//! ties everything into reproducible, seeded experiments.

pub mod bounds;
pub mod checker;
pub mod clients;
pub mod mobility;
pub mod msg;
pub mod oracle;
pub mod proto;
pub mod runner;
pub mod sim;

pub use bounds::{BoundsInput, Model};
pub use msg::{ClientId, ProcessId, ServerId, Value, ValueEntry};
pub use sim::{Dur, Tick};
