//! Channel busy ratio, channel occupancy ratio and CR-limit enforcement.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::dbm_to_mw;
use crate::error::{Error, Result};

const DEFAULT_CR_LIMITS: &str = include_str!("../../data/cr_limits.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcMode {
    Off,
    /// Skip the transmission (and its retransmission copy).
    #[default]
    Drop,
    /// Keep transmitting at stepped-down power.
    #[serde(alias = "power")]
    PowerAdapt,
}

impl std::str::FromStr for CcMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(CcMode::Off),
            "drop" => Ok(CcMode::Drop),
            "power" | "power_adapt" => Ok(CcMode::PowerAdapt),
            other => Err(Error::config("cc_mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrLimitRow {
    /// Upper bound (exclusive) on CBR; absent on the final catch-all row.
    pub cbr_below: Option<f64>,
    pub cr_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrLimitTable {
    #[serde(rename = "row")]
    rows: Vec<CrLimitRow>,
}

impl CrLimitTable {
    pub fn from_rows(rows: Vec<CrLimitRow>) -> Result<Self> {
        let Some(last) = rows.last() else {
            return Err(Error::config("cr_limits", "table is empty"));
        };
        if last.cbr_below.is_some() {
            return Err(Error::config(
                "cr_limits",
                "last row must have no cbr_below bound",
            ));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, r) in rows.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.cr_limit) {
                return Err(Error::config(
                    format!("cr_limits.row[{i}].cr_limit"),
                    "must be in [0, 1]",
                ));
            }
            if i + 1 < rows.len() {
                match r.cbr_below {
                    Some(b) if b > prev && (0.0..=1.0).contains(&b) => prev = b,
                    _ => {
                        return Err(Error::config(
                            format!("cr_limits.row[{i}].cbr_below"),
                            "bounds must increase within [0, 1]",
                        ))
                    }
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let raw: CrLimitTable = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_rows(raw.rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn limit(&self, cbr: f64) -> f64 {
        self.rows
            .iter()
            .find(|r| r.cbr_below.is_none_or(|b| cbr < b))
            .map(|r| r.cr_limit)
            .expect("catch-all row present")
    }
}

impl Default for CrLimitTable {
    fn default() -> Self {
        Self::parse(DEFAULT_CR_LIMITS, Path::new("data/cr_limits.toml"))
            .expect("shipped CR table is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongestionParams {
    pub mode: CcMode,
    pub busy_threshold_dbm: f64,
    pub cbr_window_subframes: usize,
    pub cr_window_subframes: usize,
    pub power_step_db: f64,
    pub min_power_dbm: f64,
    /// Multiply table limits by (1 + retransmissions).
    pub scale_for_retransmissions: bool,
    #[serde(skip)]
    pub table: CrLimitTable,
}

impl Default for CongestionParams {
    fn default() -> Self {
        Self {
            mode: CcMode::Drop,
            busy_threshold_dbm: -94.0,
            cbr_window_subframes: 100,
            cr_window_subframes: 1000,
            power_step_db: 3.0,
            min_power_dbm: 3.0,
            scale_for_retransmissions: true,
            table: CrLimitTable::default(),
        }
    }
}

impl CongestionParams {
    pub fn validate(&self) -> Result<()> {
        if self.cbr_window_subframes == 0 || self.cr_window_subframes == 0 {
            return Err(Error::config("congestion", "windows must be > 0"));
        }
        if !(self.power_step_db.is_finite() && self.power_step_db >= 0.0) {
            return Err(Error::config("congestion.power_step_db", "must be >= 0"));
        }
        if !(-30.0..=33.0).contains(&self.min_power_dbm) {
            return Err(Error::config(
                "congestion.min_power_dbm",
                "must lie in [-30, 33] dBm",
            ));
        }
        if !self.busy_threshold_dbm.is_finite() {
            return Err(Error::config(
                "congestion.busy_threshold_dbm",
                "must be finite",
            ));
        }
        Ok(())
    }

    pub fn cr_limit(&self, cbr: f64, retransmissions: u32) -> f64 {
        let scale = if self.scale_for_retransmissions {
            1.0 + retransmissions as f64
        } else {
            1.0
        };
        (self.table.limit(cbr) * scale).min(1.0)
    }
}

/// Fraction of RSSI samples (mW) strictly above the busy threshold. An
/// empty window reads as an idle channel.
pub fn compute_cbr<I: IntoIterator<Item = f64>>(rssi_mw: I, busy_threshold_dbm: f64) -> f64 {
    let threshold = dbm_to_mw(busy_threshold_dbm);
    let (mut busy, mut total) = (0usize, 0usize);
    for s in rssi_mw {
        total += 1;
        if s > threshold {
            busy += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        busy as f64 / total as f64
    }
}

/// Sliding record of a node's own occupied subchannel-subframes.
#[derive(Debug, Clone, Default)]
pub struct OccupancyLog {
    entries: VecDeque<(u64, usize)>,
}

impl OccupancyLog {
    pub fn record(&mut self, subframe: u64, subchannels: usize) {
        self.entries.push_back((subframe, subchannels));
    }

    /// Occupancy over `(now - window, now]` plus `pending` subchannels at
    /// `now`, as a fraction of `window * grid_subchannels`.
    pub fn cr(&mut self, now: u64, window: usize, grid_subchannels: usize, pending: usize) -> f64 {
        let oldest = (now + 1).saturating_sub(window as u64);
        while self.entries.front().is_some_and(|(t, _)| *t < oldest) {
            self.entries.pop_front();
        }
        let used: usize = self
            .entries
            .iter()
            .filter(|(t, _)| *t <= now)
            .map(|(_, n)| n)
            .sum();
        (used + pending) as f64 / (window * grid_subchannels) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CongestionState {
    pub cbr: f64,
    pub cr: f64,
    pub cr_limit: f64,
    pub mode: CcMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CcAction {
    Transmit,
    Drop,
    TransmitAtReducedPower { power_dbm: f64 },
}

/// Decides what to do with a pending transmission. In power-adapt mode the
/// power is stepped down only when `may_step` is set (once per violation
/// window); otherwise the current power is kept.
pub fn enforce_cr(
    state: &CongestionState,
    current_power_dbm: f64,
    params: &CongestionParams,
    may_step: bool,
) -> CcAction {
    if state.mode == CcMode::Off || state.cr <= state.cr_limit {
        return CcAction::Transmit;
    }
    match state.mode {
        CcMode::Off => CcAction::Transmit,
        CcMode::Drop => CcAction::Drop,
        CcMode::PowerAdapt => {
            let power_dbm = if may_step {
                (current_power_dbm - params.power_step_db).max(params.min_power_dbm)
            } else {
                current_power_dbm
            };
            CcAction::TransmitAtReducedPower { power_dbm }
        }
    }
}
