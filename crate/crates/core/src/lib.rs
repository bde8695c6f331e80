//! Grid inertia monitoring from pumped-storage pump switching-off events.
//!
//! The crate is organised bottom-up:
//!
//! - [`stream`] holds the measurement containers ([`TimedSample`], [`SensorStream`], [`Window`]).
//! - [`signal`] has the pure numeric kernels (least-squares RoCoF, voltage step,
//!   frequency deviation, detrending).
//! - [`detector`] is the two-step trigger: fast threshold rules per monitor, an
//!   oscillation filter, multi-monitor fusion and plant attribution.
//! - [`estimator`] turns a confirmed event and a plant's constant MW step into an
//!   inertia estimate using the pre-event corrected RoCoF.
//! - [`sim`] is an aggregate swing-equation simulator used as ground truth.
//! - [`analytics`] computes offline statistics over event ledgers.
//! - [`campaign`] scores simulator campaigns against the known inertia.

pub mod analytics;
pub mod campaign;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod signal;
pub mod sim;
pub mod stream;

pub use error::{Error, Result};
pub use stream::{Closed, SensorStream, TimedSample, Window};
