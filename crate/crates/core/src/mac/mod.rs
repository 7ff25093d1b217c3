//! Mode 4 medium access: sensing, semi-persistent scheduling and the
//! CBR/CR congestion control loop.

pub mod congestion;
pub mod sensing;
pub mod sps;

pub use congestion::{
    compute_cbr, enforce_cr, CcAction, CcMode, CongestionParams, CongestionState, CrLimitTable,
    OccupancyLog,
};
pub use sensing::{SensingHistory, SensingSnapshot};
pub use sps::{
    build_shortlist, sps_select, Candidate, Reservation, ScoredCandidate, Selection,
    SelectionWindow, Shortlist, SpsParams, SpsState,
};
