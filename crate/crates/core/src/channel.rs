//! UMi street-canyon path loss, thermal noise and SINR.
//!
//! Only the pre-breakpoint line-of-sight branch is modelled: with street
//! level antennas at 5.9 GHz the breakpoint lies beyond the RSU range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{LinkClass, LinkKind};

/// Distances below this are clamped before entering the log-distance law.
pub const MIN_DISTANCE_M: f64 = 1.0;

pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub carrier_freq_ghz: f64,
    pub bandwidth_mhz: f64,
    pub noise_figure_db: f64,
    /// Penalty per blocking truck.
    pub truck_blockage_loss_db: f64,
    /// Blocking trucks beyond this count add no further loss.
    pub max_blocking_trucks: usize,
    pub antenna_gain_dbi: f64,
    pub ut_height_m: f64,
    pub shadowing: ShadowingConfig,
}

/// Log-normal shadowing standard deviation per link class; zero disables it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShadowingConfig {
    pub los_sigma_db: f64,
    pub nlos_building_sigma_db: f64,
    pub nlos_truck_sigma_db: f64,
}

impl ShadowingConfig {
    pub fn sigma_for(&self, kind: LinkKind) -> f64 {
        match kind {
            LinkKind::Los => self.los_sigma_db,
            LinkKind::NlosBuilding => self.nlos_building_sigma_db,
            LinkKind::NlosTruck => self.nlos_truck_sigma_db,
        }
    }

    pub fn enabled(&self) -> bool {
        self.los_sigma_db > 0.0
            || self.nlos_building_sigma_db > 0.0
            || self.nlos_truck_sigma_db > 0.0
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            carrier_freq_ghz: 5.9,
            bandwidth_mhz: 20.0,
            noise_figure_db: 9.0,
            truck_blockage_loss_db: 10.0,
            max_blocking_trucks: 2,
            antenna_gain_dbi: 0.0,
            ut_height_m: 1.5,
            shadowing: ShadowingConfig::default(),
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_freq_ghz > 0.5 && self.carrier_freq_ghz < 100.0) {
            return Err(Error::config(
                "carrier_freq_ghz",
                "outside the (0.5, 100) GHz validity range",
            ));
        }
        if !(self.bandwidth_mhz.is_finite() && self.bandwidth_mhz > 0.0) {
            return Err(Error::config("bandwidth_mhz", "must be > 0"));
        }
        if !(self.truck_blockage_loss_db.is_finite() && self.truck_blockage_loss_db >= 0.0) {
            return Err(Error::config("truck_blockage_loss_db", "must be >= 0"));
        }
        if !self.noise_figure_db.is_finite() || !self.antenna_gain_dbi.is_finite() {
            return Err(Error::config("noise_figure_db", "must be finite"));
        }
        let s = &self.shadowing;
        for v in [
            s.los_sigma_db,
            s.nlos_building_sigma_db,
            s.nlos_truck_sigma_db,
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config("shadowing", "sigma must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss {
    /// LOS or building NLOS loss.
    pub base_db: f64,
    /// Truck penalty on top of `base_db`.
    pub blockage_db: f64,
    /// The input distance was below [`MIN_DISTANCE_M`].
    pub clamped: bool,
}

impl PathLoss {
    pub fn total_db(&self) -> f64 {
        self.base_db + self.blockage_db
    }
}

fn los_db(d: f64, f_ghz: f64) -> f64 {
    32.4 + 21.0 * d.log10() + 20.0 * f_ghz.log10()
}

pub fn path_loss_components(distance_m: f64, class: &LinkClass, cfg: &ChannelConfig) -> PathLoss {
    let clamped = distance_m < MIN_DISTANCE_M;
    let d = distance_m.max(MIN_DISTANCE_M);
    let f = cfg.carrier_freq_ghz;
    let los = los_db(d, f);
    match class.kind {
        LinkKind::Los => PathLoss {
            base_db: los,
            blockage_db: 0.0,
            clamped,
        },
        LinkKind::NlosBuilding => {
            let nlos = 35.3 * d.log10() + 22.4 + 21.3 * f.log10() - 0.3 * (cfg.ut_height_m - 1.5);
            PathLoss {
                base_db: los.max(nlos),
                blockage_db: 0.0,
                clamped,
            }
        }
        LinkKind::NlosTruck => {
            let n = class.truck_count().min(cfg.max_blocking_trucks);
            PathLoss {
                base_db: los,
                blockage_db: n as f64 * cfg.truck_blockage_loss_db,
                clamped,
            }
        }
    }
}

/// Total path loss in dB, blockage included.
pub fn path_loss(distance_m: f64, class: &LinkClass, cfg: &ChannelConfig) -> f64 {
    path_loss_components(distance_m, class, cfg).total_db()
}

/// Thermal noise over `bandwidth_hz`.
pub fn noise_floor_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Noise over the whole configured channel.
pub fn noise_floor(cfg: &ChannelConfig) -> f64 {
    noise_floor_dbm(cfg.bandwidth_mhz * 1e6, cfg.noise_figure_db)
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Signal over the linear sum of interference and noise.
pub fn sinr(rx_power_dbm: f64, interferer_powers_dbm: &[f64], noise_dbm: f64) -> f64 {
    let impairment: f64 = interferer_powers_dbm
        .iter()
        .map(|p| dbm_to_mw(*p))
        .sum::<f64>()
        + dbm_to_mw(noise_dbm);
    rx_power_dbm - mw_to_dbm(impairment)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkBudget {
    pub distance_m: f64,
    pub link_class: LinkClass,
    pub path_loss_db: f64,
    pub blockage_loss_db: f64,
    pub shadowing_db: f64,
    pub rx_power_dbm: f64,
    pub interference_dbm: f64,
    pub noise_dbm: f64,
    pub sinr_db: f64,
}

impl LinkBudget {
    /// Budget with an aggregate interference level (dBm, `-inf` for none).
    pub fn compute(
        tx_power_dbm: f64,
        distance_m: f64,
        link_class: LinkClass,
        interference_dbm: f64,
        noise_dbm: f64,
        cfg: &ChannelConfig,
    ) -> Self {
        Self::with_shadowing(
            tx_power_dbm,
            distance_m,
            link_class,
            0.0,
            interference_dbm,
            noise_dbm,
            cfg,
        )
    }

    pub fn with_shadowing(
        tx_power_dbm: f64,
        distance_m: f64,
        link_class: LinkClass,
        shadowing_db: f64,
        interference_dbm: f64,
        noise_dbm: f64,
        cfg: &ChannelConfig,
    ) -> Self {
        let pl = path_loss_components(distance_m, &link_class, cfg);
        let gains = 2.0 * cfg.antenna_gain_dbi;
        let rx_power_dbm = tx_power_dbm + gains - pl.base_db - pl.blockage_db - shadowing_db;
        let sinr_db = rx_power_dbm - mw_to_dbm(dbm_to_mw(interference_dbm) + dbm_to_mw(noise_dbm));
        Self {
            distance_m,
            link_class,
            path_loss_db: pl.base_db,
            blockage_loss_db: pl.blockage_db,
            shadowing_db,
            rx_power_dbm,
            interference_dbm,
            noise_dbm,
            sinr_db,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> ChannelConfig {
        ChannelConfig::default()
    }

    // independent evaluations written out long-hand
    #[test]
    fn los_reference_points() {
        let expect_100 = 32.4 + 21.0 * 2.0 + 20.0 * (5.9f64).ln() / std::f64::consts::LN_10;
        assert!((path_loss(100.0, &LinkClass::los(), &cfg()) - expect_100).abs() < 1e-9);
        assert!((expect_100 - 89.82).abs() < 0.01);
        let at_1m = path_loss(1.0, &LinkClass::los(), &cfg());
        assert!((at_1m - 47.82).abs() < 0.01);
    }

    #[test]
    fn one_truck_adds_penalty() {
        let pl = path_loss(100.0, &LinkClass::trucks(1), &cfg());
        assert!((pl - 99.82).abs() < 0.01);
        // capped at two trucks
        let three = path_loss(100.0, &LinkClass::trucks(3), &cfg());
        let two = path_loss(100.0, &LinkClass::trucks(2), &cfg());
        assert_eq!(three, two);
        assert!((two - 109.82).abs() < 0.01);
    }

    #[test]
    fn clamp_below_one_metre() {
        let p = path_loss_components(0.0, &LinkClass::los(), &cfg());
        assert!(p.clamped);
        assert_eq!(p.total_db(), path_loss(1.0, &LinkClass::los(), &cfg()));
        assert!(!path_loss_components(1.0, &LinkClass::los(), &cfg()).clamped);
    }

    #[test]
    fn nlos_building_exceeds_los() {
        let los = path_loss(100.0, &LinkClass::los(), &cfg());
        let nlos = path_loss(100.0, &LinkClass::building(), &cfg());
        let expect = 35.3 * 2.0 + 22.4 + 21.3 * 5.9f64.log10();
        assert!((nlos - expect).abs() < 1e-9);
        assert!(nlos > los);
    }

    #[test]
    fn noise_reference_points() {
        assert!((noise_floor(&cfg()) - (-91.99)).abs() < 0.01);
        // 10*log10(180e3) = 52.5527; -174 + 52.5527 + 9
        assert!((noise_floor_dbm(180e3, 9.0) - (-112.4473)).abs() < 0.001);
        assert_eq!(noise_floor_dbm(1.0, 0.0), -174.0);
    }

    #[test]
    fn sinr_examples() {
        assert!((sinr(-90.0, &[], -92.0) - 2.0).abs() < 1e-12);
        assert!(sinr(-90.0, &[-90.0], f64::NEG_INFINITY).abs() < 1e-12);
        // 2 * 10^-9.5 + 10^-9.2 mW = 1.263413e-9 mW -> -88.98455 dBm
        let s = sinr(-85.0, &[-95.0, -95.0], -92.0);
        assert!((s - 3.98455).abs() < 1e-4, "{s}");
    }

    #[test]
    fn budget_identities() {
        let c = ChannelConfig {
            antenna_gain_dbi: 2.0,
            ..cfg()
        };
        let b = LinkBudget::compute(23.0, 80.0, LinkClass::trucks(1), -95.0, -100.0, &c);
        assert_eq!(
            b.rx_power_dbm,
            23.0 + 4.0 - b.path_loss_db - b.blockage_loss_db
        );
        let expect =
            b.rx_power_dbm - 10.0 * (10f64.powf(-95.0 / 10.0) + 10f64.powf(-100.0 / 10.0)).log10();
        assert!((b.sinr_db - expect).abs() < 1e-9);
    }

    #[test]
    fn rejects_out_of_range_frequency() {
        let c = ChannelConfig {
            carrier_freq_ghz: 120.0,
            ..cfg()
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn path_loss_monotone_in_distance(d in 0.0f64..2000.0, step in 0.0f64..500.0, trucks in 0usize..4) {
            let classes = [LinkClass::los(), LinkClass::building(), LinkClass::trucks(trucks.max(1))];
            for class in &classes {
                let a = path_loss(d, class, &cfg());
                let b = path_loss(d + step, class, &cfg());
                prop_assert!(b >= a);
            }
            prop_assert!(path_loss(d, &LinkClass::building(), &cfg()) >= path_loss(d, &LinkClass::los(), &cfg()));
        }

        #[test]
        fn adding_interference_never_helps(
            s in -120.0f64..-30.0,
            i in proptest::collection::vec(-130.0f64..-40.0, 0..5),
            extra in -130.0f64..-40.0,
            bump in 0.0f64..20.0,
            n in -120.0f64..-80.0,
        ) {
            let base = sinr(s, &i, n);
            let mut more = i.clone();
            more.push(extra);
            prop_assert!(sinr(s, &more, n) <= base);
            if !i.is_empty() {
                let mut louder = i.clone();
                louder[0] += bump;
                prop_assert!(sinr(s, &louder, n) <= base);
            }
        }
    }
}
