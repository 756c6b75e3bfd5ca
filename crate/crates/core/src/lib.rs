//! Finite-element simulator for nanoparticle-mediated magnetic hyperthermia.
//!
//! The crate couples three physics on a structured Q1 mesh:
//!
//! * nanoparticle transport in the interstitial fluid ([`transport`]),
//! * a lumped or discrete 1D model of the vasculature ([`vasculature`]),
//! * a multiphase bioheat balance with effective coefficients ([`bioheat`]).
//!
//! [`sim`] orchestrates time stepping, [`io`] reads configuration and writes
//! results, and [`verify`] hosts the manufactured-solution oracles.

pub mod assembly;
pub mod bioheat;
pub mod cli;
pub mod error;
pub mod fields;
pub mod io;
pub mod linsolve;
pub mod mesh;
pub mod protocol;
pub mod sim;
pub mod transport;
pub mod units;
pub mod vasculature;
pub mod verify;

pub use error::{Error, Result};
