//! Hybrid Markov chain Monte Carlo and population Monte Carlo samplers.
//!
//! The library covers random-walk Metropolis-Hastings, Langevin proposals,
//! two-stage delayed rejection, repulsive-proposal particle samplers and
//! population Monte Carlo with kernel importance functions, together with the
//! diagnostics and a seeded, budgeted benchmark harness.

pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod pmc;
pub mod proposals;
pub mod samplers;
pub mod target;

pub use error::{Error, Result};
