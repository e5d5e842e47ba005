//! Simulation and analysis toolkit for a centimeter-scale robot that skips with a
//! latch-mediated spring tail and crawls with two encoder-timed side fins.
//!
//! The crate is organized bottom-up:
//!
//! - [`springtail`]: closed-form cantilever mechanics of the rotary spring tail,
//!   the four-phase rotation cycle and stochastic strike generation.
//! - [`gait`]: sync/async fin gait state machines driven by a hall-effect encoder
//!   model, and the planar crawl kinematics built on their cycle events.
//! - [`terrain`]: moisture-dependent substrate response curves.
//! - [`locomotion`]: per-strike hop and per-cycle crawl models composed into trials,
//!   batches and heterogeneous mode-switching scenarios.
//! - [`stats`]: peak detection, percentile bootstrap, trajectory metrics and the
//!   failure rule.
//! - [`calibrate`]: bounded coordinate search fitting free parameters to measured
//!   mean velocities.
//! - [`config`]: the versioned experiment configuration shared by all of the above.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibrate;
pub mod config;
pub mod error;
pub mod gait;
pub mod locomotion;
pub mod rng;
pub mod springtail;
pub mod stats;
pub mod terrain;

pub use error::{Error, Result};
