//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cv2x_sim::engine::{Event, EventLog, RunConfig};
use cv2x_sim::mac::{Candidate, SensingSnapshot, SpsParams};
use cv2x_sim::phy::RxOutcome;
use cv2x_sim::scenario::{NodeId, NodeKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub received: u64,
    pub transmitted: u64,
    pub dropped: u64,
}

/// Vehicle -> RSU it is measured against: nearest RSU within range, lower id
/// on ties.
pub fn attribution(scenario: &Scenario) -> BTreeMap<NodeId, NodeId> {
    let range = scenario.config().rsu_range_m;
    let mut out = BTreeMap::new();
    for v in scenario
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Vehicle)
    {
        let mut best: Option<(f64, NodeId)> = None;
        for r in scenario.nodes().iter().filter(|n| n.kind == NodeKind::Rsu) {
            let d = ((r.position.x - v.position.x).powi(2) + (r.position.y - v.position.y).powi(2))
                .sqrt();
            if d > range {
                continue;
            }
            if best.is_none_or(|(bd, bid)| d < bd || (d == bd && r.id < bid)) {
                best = Some((d, r.id));
            }
        }
        if let Some((_, r)) = best {
            out.insert(v.id, r);
        }
    }
    out
}

/// Recounts received / transmitted / dropped per vehicle and the latency
/// multiset straight from the event log.
pub fn pdr_from_log(
    scenario: &Scenario,
    cfg: &RunConfig,
    log: &EventLog,
) -> (BTreeMap<NodeId, Counts>, Vec<u64>) {
    let attributed = attribution(scenario);
    let rsus: BTreeSet<NodeId> = scenario
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Rsu)
        .map(|n| n.id)
        .collect();
    let tail = cfg.sps.rri_ms * (1 + cfg.sim.retransmissions as u64) + 1;
    let (from, to) = (cfg.sim.warmup_ms, cfg.sim.duration_ms - tail);

    // payload -> (rsu, generated)
    let mut messages: BTreeMap<u64, (NodeId, u64)> = BTreeMap::new();
    let mut sent: BTreeSet<u64> = BTreeSet::new();
    let mut dropped: BTreeSet<u64> = BTreeSet::new();
    let mut first_ok: BTreeMap<(NodeId, u64), u64> = BTreeMap::new();
    for rec in log.iter() {
        match &rec.event {
            Event::MessageGenerated { node, payload } if rsus.contains(node) => {
                if rec.time_ms >= from && rec.time_ms < to {
                    messages.insert(*payload, (*node, rec.time_ms));
                }
            }
            Event::Tx(t) if !t.is_retransmission => {
                sent.insert(t.payload_id);
            }
            Event::Drop {
                payload,
                is_retransmission: false,
                ..
            } => {
                dropped.insert(*payload);
            }
            Event::Rx {
                rx,
                payload,
                outcome: RxOutcome::Delivered,
                ..
            } => {
                first_ok.entry((*rx, *payload)).or_insert(rec.time_ms);
            }
            _ => {}
        }
    }

    let mut counts: BTreeMap<NodeId, Counts> =
        attributed.keys().map(|v| (*v, Counts::default())).collect();
    let mut latencies = Vec::new();
    for (payload, (rsu, generated)) in &messages {
        for (v, r) in &attributed {
            if r != rsu {
                continue;
            }
            let c = counts.get_mut(v).unwrap();
            if sent.contains(payload) {
                c.transmitted += 1;
                if let Some(t) = first_ok.get(&(*v, *payload)) {
                    c.received += 1;
                    latencies.push(t + 1 - generated);
                }
            } else if dropped.contains(payload) {
                c.dropped += 1;
            }
        }
    }
    (counts, latencies)
}

/// Brute-force shortlist: every (subframe, start) in the window, exclusion
/// by threshold with stepwise relaxation, and membership in the best set
/// decided by counting strictly better survivors.
pub struct OracleShortlist {
    pub candidates: Vec<Candidate>,
    pub best: BTreeSet<Candidate>,
}

pub fn shortlist_oracle(
    snap: &SensingSnapshot,
    first: u64,
    last: u64,
    width: usize,
    p: &SpsParams,
) -> OracleShortlist {
    struct Row {
        c: Candidate,
        rssi: f64,
        rsrp: f64,
        blind: bool,
    }
    let mut rows = Vec::new();
    for sf in first..=last {
        let off = (sf % snap.rri as u64) as usize;
        for start in 0..=(snap.subchannels - width) {
            let mut rssi = 0.0;
            let mut rsrp = f64::NEG_INFINITY;
            for k in 0..width {
                rssi += snap.rssi_mw[off * snap.subchannels + start + k];
                rsrp = rsrp.max(snap.reserved_rsrp_dbm[off * snap.subchannels + start + k]);
            }
            rows.push(Row {
                c: Candidate {
                    subframe: sf,
                    start_subchannel: start,
                },
                rssi: rssi / width as f64,
                rsrp,
                blind: snap.unsensed[off],
            });
        }
    }
    let needed = ((rows.len() as f64 * p.shortlist_fraction).ceil() as usize).max(1);
    let loudest = rows
        .iter()
        .map(|r| r.rsrp)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut k = 0;
    let alive = |r: &Row, thr: f64| !r.blind && r.rsrp <= thr;
    let survivors: Vec<&Row> = loop {
        let thr = p.rsrp_threshold_dbm + k as f64 * p.threshold_step_db;
        let s: Vec<&Row> = rows.iter().filter(|r| alive(r, thr)).collect();
        if s.len() >= needed || thr >= loudest {
            break if s.is_empty() {
                rows.iter().collect()
            } else {
                s
            };
        }
        k += 1;
    };

    let better = |a: &Row, b: &Row| a.rssi < b.rssi || (a.rssi == b.rssi && a.c < b.c);
    let best = survivors
        .iter()
        .filter(|r| survivors.iter().filter(|o| better(o, r)).count() < needed)
        .map(|r| r.c)
        .collect();
    OracleShortlist {
        candidates: rows.iter().map(|r| r.c).collect(),
        best,
    }
}

/// Random sensing history on an `s`-subchannel, 100-offset grid.
pub fn random_snapshot<R: rand::Rng>(rng: &mut R, s: usize) -> SensingSnapshot {
    let mut snap = SensingSnapshot::empty(100, s);
    let quiet = rng.gen_bool(0.3);
    let reserved = [0.1, 0.5, 0.85, 0.97][rng.gen_range(0..4)];
    for i in 0..snap.rssi_mw.len() {
        if !quiet || rng.gen_bool(0.2) {
            // coarse levels so that ties occur
            snap.rssi_mw[i] = f64::from(rng.gen_range(0u32..6)) * 1e-10;
        }
        if rng.gen_bool(reserved) {
            snap.reserved_rsrp_dbm[i] = rng.gen_range(-140.0..-60.0);
        }
    }
    for o in 0..100 {
        snap.unsensed[o] = rng.gen_bool(0.03);
    }
    snap
}
