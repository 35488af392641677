//! Simulation and analysis of bilocality tests in a three-node quantum
//! network: two independent sources, a Bell-state measurement at the middle
//! node, and binary measurements at the end nodes.
//!
//! The crate is organized bottom-up:
//!
//! - [`qcore`]: dense complex matrices, density matrices, Bell and Werner states.
//! - [`measurements`]: setting catalogs and Bob's joint measurements.
//! - [`network`]: exact Born-rule distributions and entanglement swapping.
//! - [`inequalities`]: correlators, the bilocal parameter `B`, CHSH.
//! - [`lhv`]: explicit local and bilocal hidden-variable models.
//! - [`sampler`]: finite statistics, flip noise, symmetrization, bootstrap.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod inequalities;
pub mod lhv;
pub mod measurements;
pub mod network;
pub mod qcore;
pub mod sampler;

pub use error::{Error, Result};
