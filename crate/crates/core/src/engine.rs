//! Subframe-stepped simulation loop.
//!
//! Every radio (RSUs and passenger vehicles) generates one message per
//! period, schedules it with sensing-based SPS and passes each transmission
//! through the congestion-control gate. Trucks only shape the channel.
//!
//! Within a subframe the order is: open the sensing slot, decide and emit
//! transmissions, deliver them to every listener, then generate new
//! messages. A message generated at `t` is therefore first eligible for a
//! reserved subframe after `t`, and a vehicle counts as having received it one
//! subframe after the transmission started.
//!
//! With retransmissions enabled a node sends the previous message again
//! alongside the new one on its next reserved subframe.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    dbm_to_mw, mw_to_dbm, noise_floor_dbm, path_loss_components, ChannelConfig, LinkBudget,
};
use crate::error::{Error, Result};
use crate::mac::{
    compute_cbr, enforce_cr, sps_select, CcAction, CongestionParams, CongestionState, OccupancyLog,
    SelectionWindow, SensingHistory, SpsParams, SpsState,
};
use crate::metrics::{fmt6, MetricsReport, VehicleCounters, VehicleRecord};
use crate::phy::{
    decode_with, DecodeModel, McsEntry, McsTable, PayloadId, RxOutcome, SubchannelSet, Transmission,
};
use crate::scenario::{
    classify_link, deploy_scenario, in_rsu_range, LinkClass, NodeId, NodeKind, Scenario,
    ScenarioConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub duration_ms: u64,
    /// Messages generated before this instant are not measured.
    pub warmup_ms: u64,
    pub message_period_ms: u64,
    pub mcs_index: u8,
    /// Blind retransmissions per message (0 or 1).
    pub retransmissions: u32,
    pub rx_sensitivity_dbm: f64,
    pub decode_model: DecodeModel,
    pub seeds: Vec<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration_ms: 20_000,
            warmup_ms: 1_000,
            message_period_ms: 100,
            mcs_index: 7,
            retransmissions: 1,
            rx_sensitivity_dbm: -97.28,
            decode_model: DecodeModel::Threshold,
            seeds: vec![0],
        }
    }
}

/// Everything a run needs besides the scenario.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub channel: ChannelConfig,
    pub sps: SpsParams,
    pub congestion: CongestionParams,
    pub mcs_table: McsTable,
}

impl RunConfig {
    pub fn mcs(&self) -> Result<McsEntry> {
        self.mcs_table.lookup(self.sim.mcs_index).cloned()
    }

    /// Messages generated in `[start, end)` are measured; later ones might
    /// not finish their transmissions before the run stops.
    pub fn measured_interval(&self) -> (u64, u64) {
        let tail = self.sps.rri_ms * (1 + self.sim.retransmissions as u64) + 1;
        (
            self.sim.warmup_ms,
            self.sim.duration_ms.saturating_sub(tail),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.sps.validate()?;
        self.congestion.validate()?;
        let sim = &self.sim;
        if sim.message_period_ms == 0 {
            return Err(Error::config("sim.message_period_ms", "must be > 0"));
        }
        if sim.message_period_ms != self.sps.rri_ms {
            return Err(Error::config(
                "sim.message_period_ms",
                format!(
                    "must equal the reservation interval ({} ms)",
                    self.sps.rri_ms
                ),
            ));
        }
        if sim.retransmissions > 1 {
            return Err(Error::config(
                "sim.retransmissions",
                "only 0 or 1 is supported",
            ));
        }
        let min = self.sps.sensing_window_ms + 10 * sim.message_period_ms;
        if sim.duration_ms < min {
            return Err(Error::config(
                "sim.duration_ms",
                format!("must cover one sensing window plus 10 message periods ({min} ms)"),
            ));
        }
        let (start, end) = self.measured_interval();
        if start >= end {
            return Err(Error::config(
                "sim.warmup_ms",
                "leaves no measured interval",
            ));
        }
        if !sim.rx_sensitivity_dbm.is_finite() {
            return Err(Error::config("sim.rx_sensitivity_dbm", "must be finite"));
        }
        if let DecodeModel::Logistic { scale_db } = sim.decode_model {
            if !(scale_db > 0.0 && scale_db.is_finite()) {
                return Err(Error::config("sim.decode_model.scale_db", "must be > 0"));
            }
        }
        let mcs = self.mcs()?;
        mcs.grid()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// The CR limit was exceeded in drop mode.
    Congestion,
    /// A newer message arrived before this one was sent.
    Superseded,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Congestion => "congestion",
            DropReason::Superseded => "superseded",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    MessageGenerated {
        node: NodeId,
        payload: PayloadId,
    },
    Tx(Transmission),
    Rx {
        rx: NodeId,
        tx: NodeId,
        payload: PayloadId,
        is_retransmission: bool,
        outcome: RxOutcome,
        sinr_db: f64,
    },
    Reselection {
        node: NodeId,
        first_subframe: u64,
        subchannels: SubchannelSet,
        rc: u8,
        threshold_raises: u32,
    },
    /// Logged at every gate evaluation, including with congestion control off.
    CongestionCheck {
        node: NodeId,
        cbr: f64,
        cr: f64,
        cr_limit: f64,
    },
    CrViolation {
        node: NodeId,
        cr: f64,
        cr_limit: f64,
        power_dbm: f64,
    },
    Drop {
        node: NodeId,
        payload: PayloadId,
        is_retransmission: bool,
        reason: DropReason,
    },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::MessageGenerated { .. } => "generated",
            Event::Tx(_) => "tx",
            Event::Rx { .. } => "rx",
            Event::Reselection { .. } => "reselection",
            Event::CongestionCheck { .. } => "cc_check",
            Event::CrViolation { .. } => "cr_violation",
            Event::Drop { .. } => "drop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time_ms: u64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventLog {
    pub records: Vec<EventRecord>,
}

pub const EVENT_LOG_HEADER: &str =
    "time_ms,event,node,peer,payload,subchannel_start,subchannel_width,retx,power_dbm,sinr_db,cbr,cr,cr_limit,detail";

impl EventLog {
    fn push(&mut self, time_ms: u64, event: Event) {
        self.records.push(EventRecord { time_ms, event });
    }

    pub fn iter(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{EVENT_LOG_HEADER}")?;
        for r in &self.records {
            let mut f: [String; 14] = Default::default();
            f[0] = r.time_ms.to_string();
            f[1] = r.event.name().to_string();
            match &r.event {
                Event::MessageGenerated { node, payload } => {
                    f[2] = node.to_string();
                    f[4] = payload.to_string();
                }
                Event::Tx(t) => {
                    f[2] = t.tx_node_id.to_string();
                    f[4] = t.payload_id.to_string();
                    f[5] = t.subchannels.start.to_string();
                    f[6] = t.subchannels.width.to_string();
                    f[7] = (t.is_retransmission as u8).to_string();
                    f[8] = fmt6(t.tx_power_dbm);
                }
                Event::Rx {
                    rx,
                    tx,
                    payload,
                    is_retransmission,
                    outcome,
                    sinr_db,
                } => {
                    f[2] = rx.to_string();
                    f[3] = tx.to_string();
                    f[4] = payload.to_string();
                    f[7] = (*is_retransmission as u8).to_string();
                    f[9] = fmt6(*sinr_db);
                    f[13] = outcome.as_str().to_string();
                }
                Event::Reselection {
                    node,
                    first_subframe,
                    subchannels,
                    rc,
                    threshold_raises,
                } => {
                    f[2] = node.to_string();
                    f[5] = subchannels.start.to_string();
                    f[6] = subchannels.width.to_string();
                    f[13] = format!("first={first_subframe};rc={rc};raises={threshold_raises}");
                }
                Event::CongestionCheck {
                    node,
                    cbr,
                    cr,
                    cr_limit,
                } => {
                    f[2] = node.to_string();
                    f[10] = fmt6(*cbr);
                    f[11] = fmt6(*cr);
                    f[12] = fmt6(*cr_limit);
                }
                Event::CrViolation {
                    node,
                    cr,
                    cr_limit,
                    power_dbm,
                } => {
                    f[2] = node.to_string();
                    f[8] = fmt6(*power_dbm);
                    f[11] = fmt6(*cr);
                    f[12] = fmt6(*cr_limit);
                }
                Event::Drop {
                    node,
                    payload,
                    is_retransmission,
                    reason,
                } => {
                    f[2] = node.to_string();
                    f[4] = payload.to_string();
                    f[7] = (*is_retransmission as u8).to_string();
                    f[13] = reason.as_str().to_string();
                }
            }
            writeln!(w, "{}", f.join(","))?;
        }
        Ok(())
    }

    /// Gzip-compressed CSV.
    pub fn write_gz(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut gz = GzEncoder::new(std::io::BufWriter::new(file), Compression::default());
        self.write_csv(&mut gz).map_err(|e| Error::io(path, e))?;
        gz.finish()
            .and_then(|mut w| w.flush())
            .map_err(|e| Error::io(path, e))
    }
}

/// Counters that describe how a run went, beyond the metrics.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct RunStats {
    pub radios: usize,
    pub trucks: usize,
    pub clamped_links: usize,
    pub physical_transmissions: u64,
    pub reselections: u64,
    pub threshold_raises: u64,
    pub cr_violations: u64,
    pub congestion_drops: u64,
    pub superseded: u64,
    /// In-range vehicles per RSU id.
    pub attributed: BTreeMap<NodeId, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub seed: u64,
    pub log: EventLog,
    pub report: MetricsReport,
    pub stats: RunStats,
}

/// Latency of a message generated at `generated_ms` whose successful copy
/// started in subframe `tx_subframe`. The subframe must finish before the
/// message counts as received.
pub fn measure_latency(generated_ms: u64, tx_subframe: u64) -> u64 {
    debug_assert!(tx_subframe >= generated_ms);
    tx_subframe + 1 - generated_ms
}

struct Radio {
    id: NodeId,
    kind: NodeKind,
    rng: ChaCha8Rng,
    gen_offset: u64,
    history: SensingHistory,
    sps: SpsState,
    occupancy: OccupancyLog,
    power_dbm: f64,
    last_power_step: Option<u64>,
    pending_new: Option<(PayloadId, u64)>,
    pending_retx: Option<(PayloadId, u64)>,
}

struct PhysTx {
    radio: usize,
    set: SubchannelSet,
    power_mw: f64,
    power_dbm: f64,
    /// Announces a continuing reservation (false on the last use).
    reserving: bool,
    payloads: Vec<(PayloadId, bool)>,
}

#[derive(Default)]
struct RsuMessage {
    rsu: usize,
    generated: u64,
    transmitted: bool,
    dropped: bool,
    delivered: BTreeMap<usize, u64>,
}

const DECODE_STREAM: u64 = u64::MAX;
const SHADOW_STREAM: u64 = u64::MAX - 1;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Links {
    n: usize,
    gain_mw: Vec<f64>,
    shadow_db: Vec<f64>,
    classes: Vec<LinkClass>,
    distance: Vec<f64>,
}

impl Links {
    fn build(
        scenario: &Scenario,
        radios: &[usize],
        ch: &ChannelConfig,
        seed: u64,
        stats: &mut RunStats,
    ) -> Self {
        let n = radios.len();
        let nodes = scenario.nodes();
        let mut links = Links {
            n,
            gain_mw: vec![0.0; n * n],
            shadow_db: vec![0.0; n * n],
            classes: vec![LinkClass::los(); n * n],
            distance: vec![0.0; n * n],
        };
        let mut rng = stream(seed, SHADOW_STREAM);
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&nodes[radios[i]], &nodes[radios[j]]);
                let class = classify_link(a, b, scenario);
                let d = a.position.distance(&b.position);
                let pl = path_loss_components(d, &class, ch);
                stats.clamped_links += pl.clamped as usize;
                let sigma = ch.shadowing.sigma_for(class.kind);
                let shadow = if sigma > 0.0 {
                    Normal::new(0.0, sigma)
                        .expect("sigma validated")
                        .sample(&mut rng)
                } else {
                    0.0
                };
                let gain = dbm_to_mw(2.0 * ch.antenna_gain_dbi - pl.total_db() - shadow);
                for (x, y) in [(i, j), (j, i)] {
                    let k = x * n + y;
                    links.gain_mw[k] = gain;
                    links.shadow_db[k] = shadow;
                    links.classes[k] = class.clone();
                    links.distance[k] = d;
                }
            }
        }
        links
    }

    fn idx(&self, tx: usize, rx: usize) -> usize {
        tx * self.n + rx
    }
}

/// Simulates one scenario. Deterministic in `(scenario, cfg, seed)`.
pub fn run(scenario: &Scenario, cfg: &RunConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let mcs = cfg.mcs()?;
    let grid = mcs.grid()?;
    let subchannels = grid.subchannels_per_subframe;
    let width = mcs.subchannels_for_message;
    let rri = cfg.sps.rri_ms;
    let period = cfg.sim.message_period_ms;
    let retx_enabled = cfg.sim.retransmissions > 0;
    let cc = &cfg.congestion;
    let (measure_from, measure_to) = cfg.measured_interval();
    let noise_dbm = noise_floor_dbm(mcs.message_bandwidth_hz(), cfg.channel.noise_figure_db);

    let nodes = scenario.nodes();
    let radio_nodes: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_radio()).collect();
    let mut stats = RunStats {
        radios: radio_nodes.len(),
        trucks: scenario.trucks().count(),
        ..RunStats::default()
    };
    let links = Links::build(scenario, &radio_nodes, &cfg.channel, seed, &mut stats);

    let mut radios: Vec<Radio> = radio_nodes
        .iter()
        .map(|&ni| {
            let node = &nodes[ni];
            let mut rng = stream(seed, node.id as u64);
            let gen_offset = rng.gen_range(0..period);
            Radio {
                id: node.id,
                kind: node.kind,
                rng,
                gen_offset,
                history: SensingHistory::new(cfg.sps.sensing_window_ms as usize, subchannels),
                sps: SpsState::default(),
                occupancy: OccupancyLog::default(),
                power_dbm: node.tx_power_dbm,
                last_power_step: None,
                pending_new: None,
                pending_retx: None,
            }
        })
        .collect();

    // Each in-range vehicle listens to its nearest RSU (lower id on ties).
    let mut listeners: Vec<Vec<usize>> = vec![Vec::new(); radios.len()];
    let mut attribution: Vec<(usize, usize)> = Vec::new();
    for (v, &vn) in radio_nodes.iter().enumerate() {
        if nodes[vn].kind != NodeKind::Vehicle {
            continue;
        }
        let best = radio_nodes
            .iter()
            .enumerate()
            .filter(|(_, &rn)| nodes[rn].kind == NodeKind::Rsu)
            .filter(|(_, &rn)| in_rsu_range(&nodes[rn], &nodes[vn], scenario.config()))
            .min_by(|(_, &a), (_, &b)| {
                let da = nodes[a].position.distance(&nodes[vn].position);
                let db = nodes[b].position.distance(&nodes[vn].position);
                da.total_cmp(&db).then(nodes[a].id.cmp(&nodes[b].id))
            });
        if let Some((r, _)) = best {
            listeners[r].push(v);
            attribution.push((v, r));
            *stats.attributed.entry(radios[r].id).or_default() += 1;
        }
    }

    let mut log = EventLog::default();
    let mut decode_rng = stream(seed, DECODE_STREAM);
    let mut next_payload: PayloadId = 0;
    let mut rsu_messages: BTreeMap<PayloadId, RsuMessage> = BTreeMap::new();
    let mut transmitting = vec![false; radios.len()];
    let mut txs: Vec<PhysTx> = Vec::new();

    for t in 0..cfg.sim.duration_ms {
        for r in radios.iter_mut() {
            r.history.begin_subframe(t);
        }

        txs.clear();
        transmitting.fill(false);
        for (i, r) in radios.iter_mut().enumerate() {
            let Some(res) = r.sps.reservation.as_mut() else {
                continue;
            };
            if res.next_subframe != t {
                continue;
            }
            let set = res.subchannels;
            res.next_subframe += rri;
            if r.pending_new.is_none() && r.pending_retx.is_none() {
                continue;
            }

            let cbr = compute_cbr(
                r.history.recent_rssi(t, cc.cbr_window_subframes),
                cc.busy_threshold_dbm,
            );
            let cr_limit = cc.cr_limit(cbr, cfg.sim.retransmissions);
            let cr = r
                .occupancy
                .cr(t, cc.cr_window_subframes, subchannels, width);
            log.push(
                t,
                Event::CongestionCheck {
                    node: r.id,
                    cbr,
                    cr,
                    cr_limit,
                },
            );
            let state = CongestionState {
                cbr,
                cr,
                cr_limit,
                mode: cc.mode,
            };
            let may_step = r
                .last_power_step
                .is_none_or(|s| t >= s + cc.cr_window_subframes as u64);
            let action = enforce_cr(&state, r.power_dbm, cc, may_step);
            if cr > cr_limit {
                stats.cr_violations += 1;
                log.push(
                    t,
                    Event::CrViolation {
                        node: r.id,
                        cr,
                        cr_limit,
                        power_dbm: r.power_dbm,
                    },
                );
            }
            match action {
                CcAction::Transmit => {}
                CcAction::Drop => {
                    for (slot, is_retx) in
                        [(r.pending_new.take(), false), (r.pending_retx.take(), true)]
                    {
                        if let Some((payload, _)) = slot {
                            stats.congestion_drops += 1;
                            log.push(
                                t,
                                Event::Drop {
                                    node: r.id,
                                    payload,
                                    is_retransmission: is_retx,
                                    reason: DropReason::Congestion,
                                },
                            );
                            if !is_retx {
                                if let Some(m) = rsu_messages.get_mut(&payload) {
                                    m.dropped = true;
                                }
                            }
                        }
                    }
                    continue;
                }
                CcAction::TransmitAtReducedPower { power_dbm } => {
                    if may_step {
                        r.last_power_step = Some(t);
                    }
                    r.power_dbm = power_dbm;
                }
            }

            let mut payloads = Vec::with_capacity(2);
            let fresh = r.pending_new.take();
            if let Some((p, _)) = fresh {
                payloads.push((p, false));
                if let Some(m) = rsu_messages.get_mut(&p) {
                    m.transmitted = true;
                }
            }
            if let Some((p, _)) = r.pending_retx.take() {
                payloads.push((p, true));
            }
            if retx_enabled {
                r.pending_retx = fresh;
            }
            for &(payload_id, is_retransmission) in &payloads {
                log.push(
                    t,
                    Event::Tx(Transmission {
                        tx_node_id: r.id,
                        subframe_index: t,
                        subchannels: set,
                        mcs_index: mcs.index,
                        payload_id,
                        is_retransmission,
                        tx_power_dbm: r.power_dbm,
                    }),
                );
            }
            stats.physical_transmissions += 1;
            r.occupancy.record(t, width);
            r.history.mark_own_tx(t);
            let mut reserving = true;
            if r.sps.on_transmit() {
                if cfg.sps.prob_resource_keep > 0.0
                    && r.rng.gen::<f64>() < cfg.sps.prob_resource_keep
                {
                    r.sps.rc = cfg.sps.draw_rc(&mut r.rng);
                    r.sps.reselect_pending = false;
                } else {
                    r.sps.reservation = None;
                    reserving = false;
                }
            }
            transmitting[i] = true;
            txs.push(PhysTx {
                radio: i,
                set,
                power_mw: dbm_to_mw(r.power_dbm),
                power_dbm: r.power_dbm,
                reserving,
                payloads,
            });
        }

        for tx in &txs {
            let sender = radios[tx.radio].id;
            for (n, r) in radios.iter_mut().enumerate() {
                if n == tx.radio || transmitting[n] {
                    continue;
                }
                let rx_mw = tx.power_mw * links.gain_mw[links.idx(tx.radio, n)];
                r.history.add_rssi(t, tx.set, rx_mw);
                let rsrp = mw_to_dbm(rx_mw);
                if rsrp >= cfg.sim.rx_sensitivity_dbm {
                    r.history.hear(sender, t, tx.set, rsrp, tx.reserving);
                }
            }
            if radios[tx.radio].kind != NodeKind::Rsu {
                continue;
            }
            for &v in &listeners[tx.radio] {
                let interference_mw: f64 = txs
                    .iter()
                    .filter(|o| o.radio != tx.radio && o.radio != v)
                    .map(|o| {
                        let overlap = o.set.overlap(&tx.set);
                        if overlap == 0 {
                            return 0.0;
                        }
                        o.power_mw * links.gain_mw[links.idx(o.radio, v)] * overlap as f64
                            / tx.set.width as f64
                    })
                    .sum();
                let k = links.idx(tx.radio, v);
                let budget = LinkBudget::with_shadowing(
                    tx.power_dbm,
                    links.distance[k],
                    links.classes[k].clone(),
                    links.shadow_db[k],
                    mw_to_dbm(interference_mw),
                    noise_dbm,
                    &cfg.channel,
                );
                let outcome = decode_with(
                    cfg.sim.decode_model,
                    &budget,
                    &mcs,
                    cfg.sim.rx_sensitivity_dbm,
                    transmitting[v],
                    &mut decode_rng,
                );
                for &(payload, is_retransmission) in &tx.payloads {
                    log.push(
                        t,
                        Event::Rx {
                            rx: radios[v].id,
                            tx: sender,
                            payload,
                            is_retransmission,
                            outcome,
                            sinr_db: budget.sinr_db,
                        },
                    );
                    if outcome == RxOutcome::Delivered {
                        if let Some(m) = rsu_messages.get_mut(&payload) {
                            m.delivered.entry(v).or_insert(t);
                        }
                    }
                }
            }
        }

        for (i, r) in radios.iter_mut().enumerate() {
            if t % period != r.gen_offset {
                continue;
            }
            let payload = next_payload;
            next_payload += 1;
            log.push(
                t,
                Event::MessageGenerated {
                    node: r.id,
                    payload,
                },
            );
            if r.kind == NodeKind::Rsu && (measure_from..measure_to).contains(&t) {
                rsu_messages.insert(
                    payload,
                    RsuMessage {
                        rsu: i,
                        generated: t,
                        ..RsuMessage::default()
                    },
                );
            }
            if let Some((old, _)) = r.pending_new.replace((payload, t)) {
                stats.superseded += 1;
                log.push(
                    t,
                    Event::Drop {
                        node: r.id,
                        payload: old,
                        is_retransmission: false,
                        reason: DropReason::Superseded,
                    },
                );
                if let Some(m) = rsu_messages.get_mut(&old) {
                    m.dropped = true;
                }
            }
            if r.sps.needs_selection() {
                let snapshot = r.history.snapshot(t, rri as usize);
                let window = SelectionWindow::after(t, &cfg.sps);
                let sel = sps_select(&snapshot, window, width, &cfg.sps, &mut r.rng)?;
                r.sps.adopt(&sel);
                stats.reselections += 1;
                stats.threshold_raises += sel.raises as u64;
                log.push(
                    t,
                    Event::Reselection {
                        node: r.id,
                        first_subframe: sel.reservation.next_subframe,
                        subchannels: sel.reservation.subchannels,
                        rc: sel.rc,
                        threshold_raises: sel.raises,
                    },
                );
            }
        }
    }

    let mut counters: BTreeMap<usize, VehicleCounters> = attribution
        .iter()
        .map(|&(v, _)| (v, Default::default()))
        .collect();
    let mut latency_ms = Vec::new();
    for m in rsu_messages.values() {
        for &v in &listeners[m.rsu] {
            let c = counters.get_mut(&v).expect("listener is attributed");
            if m.dropped && !m.transmitted {
                c.dropped += 1;
            } else if m.transmitted {
                c.transmitted += 1;
                if let Some(&tx_t) = m.delivered.get(&v) {
                    c.received += 1;
                    latency_ms.push(measure_latency(m.generated, tx_t));
                }
            }
        }
    }
    let vehicles = attribution
        .iter()
        .map(|&(v, r)| VehicleRecord {
            vehicle: radios[v].id,
            rsu: radios[r].id,
            counters: counters[&v],
        })
        .collect();

    Ok(RunOutput {
        seed,
        log,
        report: MetricsReport {
            seed,
            vehicles,
            latency_ms,
        },
        stats,
    })
}

/// One deployment and one run per seed, in parallel. Each seed drives both
/// the deployment and the run. Results come back in seed order.
pub fn run_many(
    scenario_cfg: &ScenarioConfig,
    cfg: &RunConfig,
    seeds: &[u64],
) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    seeds
        .par_iter()
        .map(|&seed| {
            let sc = ScenarioConfig {
                rng_seed: seed,
                ..scenario_cfg.clone()
            };
            let scenario = deploy_scenario(&sc)?;
            run(&scenario, cfg, seed)
        })
        .collect()
}
