//! Simulation and optimization core for downlink NOMA networks assisted by
//! several STAR-RIS panels in an indoor multi-room layout.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs and an explicit [`RandomStream`]; file formats,
//! timing and the command line live in the companion `starnoma` crate.
//!
//! Pipeline, bottom to top:
//!
//! * [`scenario`] builds rooms, walls, APs, panels and UEs and derives the
//!   adjacency indicators.
//! * [`channel`] draws Rician channels with indoor path loss and composes
//!   the combined AP-to-UE channel through the panels.
//! * [`noma`] evaluates interference, SINR, rates and the SIC decoding order.
//! * [`association`] and [`pairing`] assign UE clusters to APs and group UEs
//!   into NOMA clusters.
//! * [`convex`] is a small first-order solver for PSD-constrained convex
//!   programs, used by [`beamforming`] for the SCA active/passive updates.
//! * [`camappo`] trains the two beamforming agents with PPO plus an
//!   imitation term toward the SCA solution.
//! * [`bcd`] alternates all blocks until the sum rate settles.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod association;
pub mod bcd;
pub mod beamforming;
pub mod camappo;
pub mod channel;
pub mod convex;
mod error;
pub mod linalg;
pub mod noma;
pub mod pairing;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use rng::{seeded_rng, RandomStream};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
