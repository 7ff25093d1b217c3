//! TOML configuration file covering every tunable of a run.
//!
//! ```toml
//! [scenario]
//! lambda_vehicles = 20.0
//! count_mode = "fixed"
//!
//! [sim]
//! mcs_index = 11
//!
//! [tables]
//! mcs = "mcs_table.toml"   # relative to this file
//! ```
//!
//! Omitted sections and keys take their defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::ChannelConfig;
use crate::engine::{RunConfig, SimConfig};
use crate::error::{Error, Result};
use crate::mac::{CongestionParams, CrLimitTable, SpsParams};
use crate::phy::McsTable;
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TablePaths {
    pub mcs: Option<PathBuf>,
    pub cr_limits: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    scenario: ScenarioConfig,
    channel: ChannelConfig,
    sim: SimConfig,
    sps: SpsParams,
    congestion: CongestionParams,
    tables: TablePaths,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub scenario: ScenarioConfig,
    pub run: RunConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses `text`; table paths are resolved against the directory of
    /// `origin`.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let file: FileConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = origin.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| {
            if p.is_absolute() {
                p.clone()
            } else {
                base.join(p)
            }
        };

        let mcs_table = match &file.tables.mcs {
            Some(p) => McsTable::load(&resolve(p))?,
            None => McsTable::default(),
        };
        let mut congestion = file.congestion;
        if let Some(p) = &file.tables.cr_limits {
            congestion.table = CrLimitTable::load(&resolve(p))?;
        }
        let cfg = Config {
            scenario: file.scenario,
            run: RunConfig {
                sim: file.sim,
                channel: file.channel,
                sps: file.sps,
                congestion,
                mcs_table,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.run.validate()
    }
}
