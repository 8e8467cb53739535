//! Elementary-effects (Morris) screening with second-order interaction
//! effects, for analytic functions or external simulators.

pub mod classify;
pub mod cli;
pub mod config;
pub mod design;
pub mod effects;
pub mod error;
pub mod ledger;
pub mod model;
pub mod report;
pub mod rng;
pub mod transforms;

pub use error::{Error, Result};
