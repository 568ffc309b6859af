//! Unified onboard occupancy for public transport networks.
//!
//! Fare validations (AFC) cover every course but miss fare evaders;
//! passenger counters (APC) see everyone but equip only some vehicles.
//! This crate reconstructs validated occupancy for every course, learns
//! per-station fraud rates where both sources overlap, extends them over
//! the whole territory with ordinary kriging, and scales the validated
//! occupancy of every other course accordingly.

pub mod config;
mod error;
pub mod eval;
pub mod fraud;
pub mod fraudmap;
pub mod geostat;
pub mod ingest;
pub mod model;
pub mod occupancy;
pub mod od;
mod par;
pub mod synth;
pub mod unify;

pub use config::Config;
pub use error::{Error, Result};
pub use ingest::{load_network, NetworkDataset};
pub use model::*;
