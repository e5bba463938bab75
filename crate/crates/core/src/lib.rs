//! LT codes and multiple-configurations LT (MC-LT) codes.
//!
//! * [`distributions`]: soliton family, starter and closer.
//! * [`codec`]: seeded encoder, wire format and peeling decoder.
//! * [`analysis`]: utility degrees, domination, release probabilities.
//! * [`mc_session`]: sender streams and receiver-side configuration switching.
//! * [`smallk_opt`]: exact decoding-state chains and optimization for k <= 5.
//! * [`harness`]: seeded Monte-Carlo experiments and their outputs.

pub mod analysis;
pub mod codec;
pub mod distributions;
mod error;
pub mod harness;
pub mod mc_session;
pub mod rng;
pub mod smallk_opt;
pub mod stats;

pub use error::{Error, Result};
