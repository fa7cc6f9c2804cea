//! Time-synchronization attack analysis for PMU-based power-grid applications.
//!
//! The crate models how a GPS timing error at a phasor measurement unit turns
//! into a phase error, and how that phase error distorts transmission-line
//! fault location, voltage-stability monitoring and time-of-arrival event
//! location.

pub mod attack;
pub mod circuit;
pub mod error;
pub mod event_location;
pub mod gps;
pub mod line_fault;
pub mod phasor;
pub mod scenario;
pub mod stability;

pub use error::{Error, Result};
pub use phasor::{Complex, LineParams, Phasor};
