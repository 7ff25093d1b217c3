//! Per-node record of what the radio heard over the sensing window.

use std::collections::BTreeMap;

use crate::phy::SubchannelSet;
use crate::scenario::NodeId;

/// Averaged view of the sensing window folded onto one reservation period.
/// Index `[offset * subchannels + sc]` where `offset = subframe % rri`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingSnapshot {
    pub rri: usize,
    pub subchannels: usize,
    /// Mean RSSI (mW) over the sensed instances of each resource.
    pub rssi_mw: Vec<f64>,
    /// Strongest RSRP (dBm) among decoded reservations of each resource,
    /// `-inf` when none.
    pub reserved_rsrp_dbm: Vec<f64>,
    /// Offsets at which the node itself transmitted and so could not sense.
    pub unsensed: Vec<bool>,
}

impl SensingSnapshot {
    /// All-zero history, as seen at cold start.
    pub fn empty(rri: usize, subchannels: usize) -> Self {
        Self {
            rri,
            subchannels,
            rssi_mw: vec![0.0; rri * subchannels],
            reserved_rsrp_dbm: vec![f64::NEG_INFINITY; rri * subchannels],
            unsensed: vec![false; rri],
        }
    }

    pub fn idx(&self, offset: usize, subchannel: usize) -> usize {
        offset * self.subchannels + subchannel
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeardReservation {
    heard_at: u64,
    subchannels: SubchannelSet,
    rsrp_dbm: f64,
}

#[derive(Debug, Clone)]
pub struct SensingHistory {
    window: usize,
    subchannels: usize,
    /// Ring of `window` subframes; `None` until that slot has been lived.
    slot_subframe: Vec<Option<u64>>,
    own_tx: Vec<bool>,
    rssi: Vec<f64>,
    heard: BTreeMap<NodeId, HeardReservation>,
}

impl SensingHistory {
    pub fn new(window_subframes: usize, subchannels: usize) -> Self {
        assert!(window_subframes > 0 && subchannels > 0);
        Self {
            window: window_subframes,
            subchannels,
            slot_subframe: vec![None; window_subframes],
            own_tx: vec![false; window_subframes],
            rssi: vec![0.0; window_subframes * subchannels],
            heard: BTreeMap::new(),
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Opens the ring slot for subframe `t`, discarding what it held.
    pub fn begin_subframe(&mut self, t: u64) {
        let slot = (t % self.window as u64) as usize;
        self.slot_subframe[slot] = Some(t);
        self.own_tx[slot] = false;
        self.rssi[slot * self.subchannels..(slot + 1) * self.subchannels].fill(0.0);
    }

    fn slot_for(&self, t: u64) -> Option<usize> {
        let slot = (t % self.window as u64) as usize;
        (self.slot_subframe[slot] == Some(t)).then_some(slot)
    }

    /// Adds received power to every subchannel of `set` in subframe `t`.
    pub fn add_rssi(&mut self, t: u64, set: SubchannelSet, power_mw: f64) {
        if let Some(slot) = self.slot_for(t) {
            for sc in set.range().filter(|sc| *sc < self.subchannels) {
                self.rssi[slot * self.subchannels + sc] += power_mw;
            }
        }
    }

    pub fn mark_own_tx(&mut self, t: u64) {
        if let Some(slot) = self.slot_for(t) {
            self.own_tx[slot] = true;
        }
    }

    /// Records a decoded control message. `reserving = false` means the
    /// sender announced it is giving its resource up.
    pub fn hear(
        &mut self,
        from: NodeId,
        t: u64,
        set: SubchannelSet,
        rsrp_dbm: f64,
        reserving: bool,
    ) {
        if reserving {
            self.heard.insert(
                from,
                HeardReservation {
                    heard_at: t,
                    subchannels: set,
                    rsrp_dbm,
                },
            );
        } else {
            self.heard.remove(&from);
        }
    }

    /// Completed subframes in `[now - len, now - 1]` that were recorded.
    fn recent_slots(&self, now: u64, len: usize) -> impl Iterator<Item = (u64, usize)> + '_ {
        let len = len.min(self.window) as u64;
        let first = now.saturating_sub(len);
        (first..now).filter_map(move |t| self.slot_for(t).map(|s| (t, s)))
    }

    pub fn snapshot(&self, now: u64, rri: usize) -> SensingSnapshot {
        let mut snap = SensingSnapshot::empty(rri, self.subchannels);
        let mut samples = vec![0u32; rri];
        for (t, slot) in self.recent_slots(now, self.window) {
            let offset = (t % rri as u64) as usize;
            if self.own_tx[slot] {
                snap.unsensed[offset] = true;
                continue;
            }
            samples[offset] += 1;
            for sc in 0..self.subchannels {
                snap.rssi_mw[offset * self.subchannels + sc] +=
                    self.rssi[slot * self.subchannels + sc];
            }
        }
        for (offset, n) in samples.iter().enumerate() {
            if *n > 0 {
                for sc in 0..self.subchannels {
                    snap.rssi_mw[offset * self.subchannels + sc] /= *n as f64;
                }
            }
        }
        let oldest = now.saturating_sub(self.window as u64);
        for r in self
            .heard
            .values()
            .filter(|r| r.heard_at >= oldest && r.heard_at < now)
        {
            let offset = (r.heard_at % rri as u64) as usize;
            for sc in r.subchannels.range().filter(|sc| *sc < self.subchannels) {
                let cell = &mut snap.reserved_rsrp_dbm[offset * self.subchannels + sc];
                *cell = cell.max(r.rsrp_dbm);
            }
        }
        snap
    }

    /// RSSI samples (mW) of every sensed resource over the last `len`
    /// completed subframes.
    pub fn recent_rssi(&self, now: u64, len: usize) -> impl Iterator<Item = f64> + '_ {
        self.recent_slots(now, len)
            .filter(|(_, slot)| !self.own_tx[*slot])
            .flat_map(move |(_, slot)| {
                self.rssi[slot * self.subchannels..(slot + 1) * self.subchannels]
                    .iter()
                    .copied()
            })
    }
}
