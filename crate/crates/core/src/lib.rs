//! Simulation of a frequency-multiplexed photonic reservoir computer: two
//! comb bands sharing one fiber loop, used alone, side by side, or in series,
//! with ridge-trained intensity readouts and benchmark tasks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod cmaes;
pub mod comb;
pub mod config;
pub mod error;
pub mod harness;
pub mod interlayer;
pub mod output;
pub mod pipeline;
pub mod plot;
pub mod readout;
pub mod reservoir;
pub mod system;
pub mod tasks;

pub use error::{Error, Result};
