//! `cimsim` simulates compute-in-memory on non-volatile-memory crossbars.
//!
//! - [`device`]: conductance response, noise and drift of NVM cross-points.
//! - [`crossbar`]: one tile; ideal and IR-drop-aware MVM, ADC, snapshots.
//! - [`programming`]: closed-loop write-verify weight transfer.
//! - [`bitslice`]: signed multi-bit weights on differential pairs across bit
//!   slices and tiles, bit-streamed inputs, shift-and-add.
//! - [`update`]: parallel rank-1 updates from coincident stochastic pulse trains.
//! - [`design`]: closed-form speed, voltage, resistance, area and energy bounds.
//! - [`training`]: small networks trained and evaluated on simulated tiles.
//! - [`io`] and [`cli`]: file formats and the `cimsim` command line.

// NaN-rejecting `!(x > 0.0)` checks are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bitslice;
pub mod cli;
pub mod crossbar;
pub mod design;
pub mod device;
pub mod error;
pub mod io;
pub mod programming;
pub mod rng;
pub mod training;
pub mod update;

pub use error::{Error, Result};
