//! Sensing-based semi-persistent scheduling.
//!
//! Selection enumerates every single-message resource in the selection
//! window, drops those reserved by a neighbour whose control message was
//! heard above the RSRP threshold (relaxing the threshold in 3 dB steps until
//! at least 20% remain), ranks the rest by average RSSI and picks uniformly
//! among the best 20% of the total. Ties in RSSI rank the earlier resource
//! first.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sensing::SensingSnapshot;
use crate::error::{Error, Result};
use crate::phy::SubchannelSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpsParams {
    pub rri_ms: u64,
    pub sensing_window_ms: u64,
    pub t1_ms: u64,
    pub t2_ms: u64,
    pub rsrp_threshold_dbm: f64,
    pub threshold_step_db: f64,
    pub shortlist_fraction: f64,
    pub rc_min: u8,
    pub rc_max: u8,
    /// Probability of keeping the resource when the counter expires.
    pub prob_resource_keep: f64,
}

impl Default for SpsParams {
    fn default() -> Self {
        Self {
            rri_ms: 100,
            sensing_window_ms: 1000,
            t1_ms: 4,
            t2_ms: 100,
            rsrp_threshold_dbm: -128.0,
            threshold_step_db: 3.0,
            shortlist_fraction: 0.2,
            rc_min: 5,
            rc_max: 15,
            prob_resource_keep: 0.0,
        }
    }
}

impl SpsParams {
    pub fn validate(&self) -> Result<()> {
        if self.rri_ms == 0 {
            return Err(Error::config("sps.rri_ms", "must be > 0"));
        }
        if self.sensing_window_ms < self.rri_ms
            || !self.sensing_window_ms.is_multiple_of(self.rri_ms)
        {
            return Err(Error::config(
                "sps.sensing_window_ms",
                "must be a positive multiple of rri_ms",
            ));
        }
        if self.t1_ms > self.t2_ms || self.t2_ms - self.t1_ms >= self.rri_ms {
            return Err(Error::config(
                "sps.t2_ms",
                "selection window [t1, t2] must be non-empty and shorter than the RRI",
            ));
        }
        if !(self.shortlist_fraction > 0.0 && self.shortlist_fraction <= 1.0) {
            return Err(Error::config("sps.shortlist_fraction", "must be in (0, 1]"));
        }
        if !(self.threshold_step_db > 0.0) || !self.rsrp_threshold_dbm.is_finite() {
            return Err(Error::config("sps.threshold_step_db", "must be > 0"));
        }
        if self.rc_min == 0 || self.rc_min > self.rc_max {
            return Err(Error::config("sps.rc_min", "need 1 <= rc_min <= rc_max"));
        }
        if !(0.0..=1.0).contains(&self.prob_resource_keep) {
            return Err(Error::config("sps.prob_resource_keep", "must be in [0, 1]"));
        }
        Ok(())
    }

    pub fn draw_rc<R: Rng + ?Sized>(&self, rng: &mut R) -> u8 {
        rng.gen_range(self.rc_min..=self.rc_max)
    }
}

/// Inclusive range of absolute subframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelectionWindow {
    pub first: u64,
    pub last: u64,
}

impl SelectionWindow {
    pub fn after(now: u64, params: &SpsParams) -> Self {
        Self {
            first: now + params.t1_ms,
            last: now + params.t2_ms,
        }
    }

    pub fn len(&self) -> u64 {
        self.last + 1 - self.first
    }

    pub fn is_empty(&self) -> bool {
        self.last < self.first
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub subframe: u64,
    pub start_subchannel: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub avg_rssi_mw: f64,
    pub rsrp_dbm: f64,
    pub unsensed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Shortlist {
    /// Every candidate in the window, in (subframe, subchannel) order.
    pub candidates: Vec<ScoredCandidate>,
    /// Candidates surviving exclusion, same order.
    pub survivors: Vec<Candidate>,
    /// Lowest-RSSI survivors, best first.
    pub best: Vec<Candidate>,
    pub threshold_dbm: f64,
    pub raises: u32,
}

pub fn build_shortlist(
    snapshot: &SensingSnapshot,
    window: SelectionWindow,
    width: usize,
    params: &SpsParams,
) -> Result<Shortlist> {
    let s = snapshot.subchannels;
    if s == 0 || snapshot.rri == 0 {
        return Err(Error::config("grid", "resource grid is empty"));
    }
    if width == 0 || width > s {
        return Err(Error::DoesNotFit {
            start: 0,
            width,
            subchannels: s,
        });
    }
    if window.is_empty() || window.len() > snapshot.rri as u64 {
        return Err(Error::config(
            "selection_window",
            "must be non-empty and no longer than one reservation period",
        ));
    }

    let mut candidates = Vec::with_capacity(window.len() as usize * (s - width + 1));
    for subframe in window.first..=window.last {
        let offset = (subframe % snapshot.rri as u64) as usize;
        for start in 0..=s - width {
            let cells = (start..start + width).map(|sc| snapshot.idx(offset, sc));
            let (mut rssi, mut rsrp) = (0.0, f64::NEG_INFINITY);
            for i in cells {
                rssi += snapshot.rssi_mw[i];
                rsrp = rsrp.max(snapshot.reserved_rsrp_dbm[i]);
            }
            candidates.push(ScoredCandidate {
                candidate: Candidate {
                    subframe,
                    start_subchannel: start,
                },
                avg_rssi_mw: rssi / width as f64,
                rsrp_dbm: rsrp,
                unsensed: snapshot.unsensed[offset],
            });
        }
    }

    let total = candidates.len();
    let needed = ((total as f64) * params.shortlist_fraction).ceil().max(1.0) as usize;
    let max_rsrp = candidates
        .iter()
        .map(|c| c.rsrp_dbm)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut threshold = params.rsrp_threshold_dbm;
    let mut raises = 0;
    let survive = |c: &ScoredCandidate, thr: f64| !c.unsensed && !(c.rsrp_dbm > thr);
    let mut survivors: Vec<&ScoredCandidate> = candidates
        .iter()
        .filter(|c| survive(c, threshold))
        .collect();
    // once the threshold clears every heard reservation, raising it further
    // changes nothing
    while survivors.len() < needed && threshold < max_rsrp {
        threshold += params.threshold_step_db;
        raises += 1;
        survivors = candidates
            .iter()
            .filter(|c| survive(c, threshold))
            .collect();
    }
    if survivors.is_empty() {
        // nothing sensed at all: fall back to the whole window
        survivors = candidates.iter().collect();
    }

    let mut ranked = survivors.clone();
    ranked.sort_by(|a, b| {
        a.avg_rssi_mw
            .total_cmp(&b.avg_rssi_mw)
            .then(a.candidate.cmp(&b.candidate))
    });
    let best = ranked
        .iter()
        .take(needed.min(ranked.len()))
        .map(|c| c.candidate)
        .collect();
    let survivors = survivors.iter().map(|c| c.candidate).collect();

    Ok(Shortlist {
        candidates,
        survivors,
        best,
        threshold_dbm: threshold,
        raises,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub reservation: Reservation,
    pub rc: u8,
    pub raises: u32,
    pub shortlist_len: usize,
}

pub fn sps_select<R: Rng + ?Sized>(
    snapshot: &SensingSnapshot,
    window: SelectionWindow,
    width: usize,
    params: &SpsParams,
    rng: &mut R,
) -> Result<Selection> {
    let list = build_shortlist(snapshot, window, width, params)?;
    let pick = list.best[rng.gen_range(0..list.best.len())];
    Ok(Selection {
        reservation: Reservation {
            next_subframe: pick.subframe,
            subchannels: SubchannelSet {
                start: pick.start_subchannel,
                width,
            },
        },
        rc: params.draw_rc(rng),
        raises: list.raises,
        shortlist_len: list.best.len(),
    })
}

/// A periodic reservation; `next_subframe` advances by one RRI per use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub next_subframe: u64,
    pub subchannels: SubchannelSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SpsState {
    pub rc: u8,
    pub reservation: Option<Reservation>,
    pub reselect_pending: bool,
}

impl SpsState {
    pub fn adopt(&mut self, sel: &Selection) {
        self.rc = sel.rc;
        self.reservation = Some(sel.reservation);
        self.reselect_pending = false;
    }

    /// Counts one transmission. Returns `true` when the counter expired and
    /// the next message must go through reselection.
    pub fn on_transmit(&mut self) -> bool {
        assert!(
            self.rc >= 1,
            "on_transmit called with an expired reselection counter"
        );
        self.rc -= 1;
        if self.rc == 0 {
            self.reselect_pending = true;
        }
        self.reselect_pending
    }

    pub fn needs_selection(&self) -> bool {
        self.reservation.is_none() || self.reselect_pending
    }
}
