//! Cross-layer simulator for C-V2X sidelink Mode 4 in an urban grid.
//!
//! The crate is organised bottom-up:
//!
//! - [`scenario`] builds the road geometry, deploys vehicles and trucks and
//!   classifies links as line-of-sight or blocked.
//! - [`channel`] turns a link into path loss, received power and SINR.
//! - [`phy`] holds the resource grid, the MCS table and the decode rule.
//! - [`mac`] implements semi-persistent scheduling and congestion control.
//! - [`engine`] runs the subframe loop and produces an [`engine::EventLog`].
//! - [`metrics`] turns a run into per-vehicle PDR and latency statistics.

pub mod channel;
pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod mac;
pub mod metrics;
pub mod phy;
pub mod scenario;

pub use error::{Error, Result};
