//! Sidelink resource grid, MCS table and the reception decision.

use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::LinkBudget;
use crate::error::{Error, Result};
use crate::scenario::NodeId;

pub const RB_BANDWIDTH_KHZ: f64 = 180.0;
pub const SLOTS_PER_SUBFRAME: u32 = 2;
pub const SLOT_DURATION_MS: f64 = 0.5;
pub const MAX_SUBCHANNELS: usize = 10;

const DEFAULT_MCS_TABLE: &str = include_str!("../data/mcs_table.toml");

/// Time-frequency lattice: 1 ms subframes (two 0.5 ms slots) by
/// `subchannels_per_subframe` groups of `rbs_per_subchannel` RBs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceGrid {
    pub subchannels_per_subframe: usize,
    pub rbs_per_subchannel: usize,
    pub channel_bandwidth_mhz: f64,
}

impl ResourceGrid {
    pub fn new(subchannels_per_subframe: usize, rbs_per_subchannel: usize) -> Result<Self> {
        Self::with_bandwidth(subchannels_per_subframe, rbs_per_subchannel, 20.0)
    }

    pub fn with_bandwidth(
        subchannels_per_subframe: usize,
        rbs_per_subchannel: usize,
        channel_bandwidth_mhz: f64,
    ) -> Result<Self> {
        let grid = Self {
            subchannels_per_subframe,
            rbs_per_subchannel,
            channel_bandwidth_mhz,
        };
        if !(1..=MAX_SUBCHANNELS).contains(&subchannels_per_subframe) {
            return Err(Error::config(
                "subchannels_per_subframe",
                format!("must be in [1, {MAX_SUBCHANNELS}], got {subchannels_per_subframe}"),
            ));
        }
        if rbs_per_subchannel == 0 {
            return Err(Error::config("rbs_per_subchannel", "must be >= 1"));
        }
        if grid.occupied_rbs() > grid.rb_budget() {
            return Err(Error::config(
                "rbs_per_subchannel",
                format!(
                    "{} subchannels x {} RBs exceeds the {}-RB budget",
                    subchannels_per_subframe,
                    rbs_per_subchannel,
                    grid.rb_budget()
                ),
            ));
        }
        Ok(grid)
    }

    pub fn subframe_duration_ms(&self) -> f64 {
        SLOTS_PER_SUBFRAME as f64 * SLOT_DURATION_MS
    }

    /// Usable RBs: 90% of the channel, 100 RBs at 20 MHz.
    pub fn rb_budget(&self) -> usize {
        (self.channel_bandwidth_mhz * 1000.0 * 0.9 / RB_BANDWIDTH_KHZ).floor() as usize
    }

    pub fn occupied_rbs(&self) -> usize {
        self.subchannels_per_subframe * self.rbs_per_subchannel
    }

    pub fn subchannel_bandwidth_hz(&self) -> f64 {
        self.rbs_per_subchannel as f64 * RB_BANDWIDTH_KHZ * 1e3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub index: u8,
    /// Bits per symbol.
    pub modulation_order: u8,
    pub code_rate: f64,
    pub subchannels_per_subframe: usize,
    pub rbs_per_subchannel: usize,
    pub subchannels_for_message: usize,
    pub sinr_threshold_db: f64,
}

impl McsEntry {
    pub fn rbs_for_message(&self) -> usize {
        self.rbs_per_subchannel * self.subchannels_for_message
    }

    pub fn message_bandwidth_hz(&self) -> f64 {
        self.rbs_for_message() as f64 * RB_BANDWIDTH_KHZ * 1e3
    }

    pub fn grid(&self) -> Result<ResourceGrid> {
        ResourceGrid::new(self.subchannels_per_subframe, self.rbs_per_subchannel)
    }

    fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("mcs[{}].{f}", self.index);
        if self.index > 20 {
            return Err(Error::config(field("index"), "must be in [0, 20]"));
        }
        if ![2, 4, 6].contains(&self.modulation_order) {
            return Err(Error::config(
                field("modulation_order"),
                "must be 2, 4 or 6",
            ));
        }
        if !(self.code_rate > 0.0 && self.code_rate < 1.0) {
            return Err(Error::config(field("code_rate"), "must be in (0, 1)"));
        }
        if self.subchannels_for_message == 0
            || self.subchannels_for_message > self.subchannels_per_subframe
        {
            return Err(Error::config(
                field("subchannels_for_message"),
                "must be in [1, subchannels_per_subframe]",
            ));
        }
        if !self.sinr_threshold_db.is_finite() {
            return Err(Error::config(field("sinr_threshold_db"), "must be finite"));
        }
        self.grid().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    #[serde(rename = "entry")]
    entries: Vec<McsEntry>,
}

impl McsTable {
    pub fn from_entries(mut entries: Vec<McsEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.index);
        for w in entries.windows(2) {
            if w[0].index == w[1].index {
                return Err(Error::config(
                    "mcs",
                    format!("duplicate index {}", w[0].index),
                ));
            }
        }
        for e in &entries {
            e.validate()?;
        }
        Ok(Self { entries })
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let raw: McsTable = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_entries(raw.entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn lookup(&self, index: u8) -> Result<&McsEntry> {
        self.entries
            .iter()
            .find(|e| e.index == index)
            .ok_or(Error::UnknownMcs(index))
    }
}

impl Default for McsTable {
    fn default() -> Self {
        Self::parse(DEFAULT_MCS_TABLE, Path::new("data/mcs_table.toml"))
            .expect("shipped MCS table is valid")
    }
}

/// Looks up an entry in the shipped table.
pub fn mcs_lookup(index: u8) -> Result<McsEntry> {
    McsTable::default().lookup(index).cloned()
}

/// Contiguous range of subchannels within one subframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubchannelSet {
    pub start: usize,
    pub width: usize,
}

impl SubchannelSet {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.width
    }

    pub fn end(&self) -> usize {
        self.start + self.width
    }

    pub fn overlap(&self, other: &SubchannelSet) -> usize {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        hi.saturating_sub(lo)
    }
}

pub fn place_message(
    mcs: &McsEntry,
    grid: &ResourceGrid,
    start_subchannel: usize,
) -> Result<SubchannelSet> {
    let width = mcs.subchannels_for_message;
    if start_subchannel + width > grid.subchannels_per_subframe {
        return Err(Error::DoesNotFit {
            start: start_subchannel,
            width,
            subchannels: grid.subchannels_per_subframe,
        });
    }
    Ok(SubchannelSet {
        start: start_subchannel,
        width,
    })
}

pub type PayloadId = u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub tx_node_id: NodeId,
    pub subframe_index: u64,
    pub subchannels: SubchannelSet,
    pub mcs_index: u8,
    pub payload_id: PayloadId,
    pub is_retransmission: bool,
    pub tx_power_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RxOutcome {
    Delivered,
    FailSensitivity,
    FailSinr,
    FailHalfduplex,
}

impl RxOutcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            RxOutcome::Delivered => "delivered",
            RxOutcome::FailSensitivity => "fail_sensitivity",
            RxOutcome::FailSinr => "fail_sinr",
            RxOutcome::FailHalfduplex => "fail_halfduplex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "delivered" => RxOutcome::Delivered,
            "fail_sensitivity" => RxOutcome::FailSensitivity,
            "fail_sinr" => RxOutcome::FailSinr,
            "fail_halfduplex" => RxOutcome::FailHalfduplex,
            _ => return None,
        })
    }
}

/// How SINR maps to success once the sensitivity gate has passed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecodeModel {
    /// Success iff SINR >= threshold.
    #[default]
    Threshold,
    /// Success with probability 1 / (1 + exp(-(sinr - threshold) / scale_db)).
    Logistic { scale_db: f64 },
}

/// Hard-threshold decode of one transmission at one receiver.
pub fn decode(
    budget: &LinkBudget,
    mcs: &McsEntry,
    rx_sensitivity_dbm: f64,
    receiver_transmitting: bool,
) -> RxOutcome {
    gate(budget, rx_sensitivity_dbm, receiver_transmitting).unwrap_or(
        if budget.sinr_db >= mcs.sinr_threshold_db {
            RxOutcome::Delivered
        } else {
            RxOutcome::FailSinr
        },
    )
}

/// Decode under an arbitrary [`DecodeModel`]; `rng` is only drawn from in
/// logistic mode, and only once the sensitivity and half-duplex gates pass.
pub fn decode_with<R: Rng + ?Sized>(
    model: DecodeModel,
    budget: &LinkBudget,
    mcs: &McsEntry,
    rx_sensitivity_dbm: f64,
    receiver_transmitting: bool,
    rng: &mut R,
) -> RxOutcome {
    match model {
        DecodeModel::Threshold => decode(budget, mcs, rx_sensitivity_dbm, receiver_transmitting),
        DecodeModel::Logistic { scale_db } => {
            if let Some(fail) = gate(budget, rx_sensitivity_dbm, receiver_transmitting) {
                return fail;
            }
            let p = 1.0 / (1.0 + (-(budget.sinr_db - mcs.sinr_threshold_db) / scale_db).exp());
            if rng.gen::<f64>() < p {
                RxOutcome::Delivered
            } else {
                RxOutcome::FailSinr
            }
        }
    }
}

fn gate(
    budget: &LinkBudget,
    rx_sensitivity_dbm: f64,
    receiver_transmitting: bool,
) -> Option<RxOutcome> {
    if receiver_transmitting {
        Some(RxOutcome::FailHalfduplex)
    } else if budget.rx_power_dbm < rx_sensitivity_dbm {
        Some(RxOutcome::FailSensitivity)
    } else {
        None
    }
}
