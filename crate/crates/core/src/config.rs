//! Scenario files.
//!
//! A scenario is a small TOML document; every key is optional and falls back
//! to the reference setup (six services on a 1.5 km cell, 5 MHz, 240-bit
//! packets, 1 ms slots, 360 km/h):
//!
//! ```toml
//! [geometry]
//! cell_radius_m = 1500.0
//! rail_offset_m = 50.0
//! speed_kmh = 360.0
//! slot_duration_s = 0.001
//!
//! [radio]
//! bandwidth_hz = 5e6
//! noise_psd_dbm_hz = -174.0
//! pathloss_exponent = 4.0
//! packet_bits = 240
//! max_power_w = 50.0
//!
//! [traffic]
//! services = 6
//! arrival_rate = 20.0          # or one value per service
//! delay_bound_slots = 15.0     # or one value per service
//! avg_power_w = 36.0
//! buffer_cap = 1000000
//!
//! [control]
//! omega = 0.8
//! epsilon = 1e-3
//!
//! [run]
//! horizon = 30000
//! seed = 1
//! policy = "proposed"
//! warmup = 0
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{Geometry, RadioParams};
use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::queues::TrafficParams;

pub const DEFAULT_CELL_RADIUS_M: f64 = 1500.0;
pub const DEFAULT_RAIL_OFFSET_M: f64 = 50.0;
pub const DEFAULT_SPEED_KMH: f64 = 360.0;
pub const DEFAULT_SLOT_S: f64 = 1e-3;
pub const DEFAULT_BANDWIDTH_HZ: f64 = 5e6;
pub const DEFAULT_NOISE_PSD_DBM_HZ: f64 = -174.0;
pub const DEFAULT_PATHLOSS_EXPONENT: f64 = 4.0;
pub const DEFAULT_PACKET_BITS: f64 = 240.0;
pub const DEFAULT_MAX_POWER_W: f64 = 50.0;
pub const DEFAULT_SERVICES: usize = 6;
pub const DEFAULT_ARRIVAL_RATE: f64 = 20.0;
pub const DEFAULT_DELAY_BOUND: f64 = 15.0;
pub const DEFAULT_AVG_POWER_W: f64 = 36.0;
pub const DEFAULT_BUFFER_CAP: u64 = 1_000_000;
pub const DEFAULT_OMEGA: f64 = 0.8;
pub const DEFAULT_EPSILON: f64 = crate::solver::DEFAULT_TOLERANCE;
pub const DEFAULT_HORIZON: u64 = 30_000;
pub const DEFAULT_SEED: u64 = 1;

/// Relative mismatch allowed between a configured `eta` and `L / (Ts * B)`.
const ETA_MATCH_TOLERANCE: f64 = 1e-9;

/// dBm/Hz to W/Hz.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Fully resolved scenario, SI units throughout.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub geometry: Geometry,
    pub radio: RadioParams,
    pub traffic: TrafficParams,
    /// Weight of the power queues in the queue energy.
    pub omega: f64,
    /// Stopping width of the per-slot search.
    pub epsilon: f64,
    pub horizon: u64,
    pub seed: u64,
    pub policy: PolicyKind,
    /// Leading slots dropped from summaries.
    pub warmup: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let bandwidth = DEFAULT_BANDWIDTH_HZ;
        let slot = DEFAULT_SLOT_S;
        ScenarioConfig {
            geometry: Geometry {
                cell_radius: DEFAULT_CELL_RADIUS_M,
                rail_offset: DEFAULT_RAIL_OFFSET_M,
                speed: DEFAULT_SPEED_KMH / 3.6,
                slot_duration: slot,
            },
            radio: RadioParams {
                bandwidth,
                noise_psd: dbm_to_watts(DEFAULT_NOISE_PSD_DBM_HZ),
                pathloss_exponent: DEFAULT_PATHLOSS_EXPONENT,
                packet_bits: DEFAULT_PACKET_BITS,
                eta: DEFAULT_PACKET_BITS / (slot * bandwidth),
                max_power: DEFAULT_MAX_POWER_W,
            },
            traffic: TrafficParams {
                arrival_rates: vec![DEFAULT_ARRIVAL_RATE; DEFAULT_SERVICES],
                delay_bounds: vec![DEFAULT_DELAY_BOUND; DEFAULT_SERVICES],
                avg_power: DEFAULT_AVG_POWER_W,
                buffer_cap: DEFAULT_BUFFER_CAP,
            },
            omega: DEFAULT_OMEGA,
            epsilon: DEFAULT_EPSILON,
            horizon: DEFAULT_HORIZON,
            seed: DEFAULT_SEED,
            policy: PolicyKind::Proposed,
            warmup: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn num_services(&self) -> usize {
        self.traffic.num_services()
    }

    /// Sets every service's arrival rate.
    pub fn set_arrival_rate(&mut self, lambda: f64) {
        self.traffic
            .arrival_rates
            .iter_mut()
            .for_each(|l| *l = lambda);
    }

    /// Sets every service's delay bound.
    pub fn set_delay_bound(&mut self, slots: f64) {
        self.traffic
            .delay_bounds
            .iter_mut()
            .for_each(|w| *w = slots);
    }

    /// Checks every cross-field constraint, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        positive("cell_radius_m", g.cell_radius)?;
        positive("rail_offset_m", g.rail_offset)?;
        positive("speed_kmh", g.speed)?;
        positive("slot_duration_s", g.slot_duration)?;
        let r = &self.radio;
        positive("bandwidth_hz", r.bandwidth)?;
        positive("noise_psd_dbm_hz", r.noise_psd)?;
        positive("packet_bits", r.packet_bits)?;
        positive("max_power_w", r.max_power)?;
        if !(r.pathloss_exponent >= 2.0 && r.pathloss_exponent.is_finite()) {
            return Err(Error::config(
                "pathloss_exponent",
                format!("{} must be >= 2", r.pathloss_exponent),
            ));
        }
        let eta = r.packet_bits / (g.slot_duration * r.bandwidth);
        if ((r.eta - eta) / eta).abs() > ETA_MATCH_TOLERANCE {
            return Err(Error::config(
                "eta",
                format!("{} does not match L/(Ts*B) = {eta}", r.eta),
            ));
        }
        let t = &self.traffic;
        if t.arrival_rates.is_empty() {
            return Err(Error::config(
                "services",
                "at least one service is required",
            ));
        }
        if t.delay_bounds.len() != t.arrival_rates.len() {
            return Err(Error::config(
                "delay_bound_slots",
                format!(
                    "{} bounds for {} services",
                    t.delay_bounds.len(),
                    t.arrival_rates.len()
                ),
            ));
        }
        for &l in &t.arrival_rates {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config(
                    "arrival_rate",
                    format!("{l} must be finite and >= 0"),
                ));
            }
        }
        for &w in &t.delay_bounds {
            positive("delay_bound_slots", w)?;
        }
        positive("avg_power_w", t.avg_power)?;
        if t.avg_power > r.max_power {
            return Err(Error::config(
                "avg_power_w",
                format!(
                    "average power {} W exceeds max power {} W",
                    t.avg_power, r.max_power
                ),
            ));
        }
        if t.buffer_cap == 0 {
            return Err(Error::config("buffer_cap", "must be at least 1"));
        }
        if !(self.omega >= 0.0 && self.omega.is_finite()) {
            return Err(Error::config(
                "omega",
                format!("{} must be finite and >= 0", self.omega),
            ));
        }
        positive("epsilon", self.epsilon)?;
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1 slot"));
        }
        if self.warmup >= self.horizon {
            return Err(Error::config(
                "warmup",
                format!("{} leaves no slots of {}", self.warmup, self.horizon),
            ));
        }
        Ok(())
    }

    /// Parses and validates a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        raw.resolve()
    }

    /// Renders the resolved scenario back into the file format.
    pub fn to_toml_string(&self) -> String {
        let raw = RawConfig::from(self);
        toml::to_string(&raw).expect("scenario serialises")
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::config(
            field,
            format!("{value} must be finite and > 0"),
        ))
    }
}

/// Reads a scenario file; an empty file yields the defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScenarioConfig::from_toml_str(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PerService {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerService {
    fn expand(&self, field: &str, services: usize) -> Result<Vec<f64>> {
        match self {
            PerService::Uniform(v) => Ok(vec![*v; services]),
            PerService::Each(v) if v.len() == services => Ok(v.clone()),
            PerService::Each(v) => Err(Error::config(
                field,
                format!("{} values for {services} services", v.len()),
            )),
        }
    }

    fn compact(values: &[f64]) -> Self {
        match values.first() {
            Some(&first) if values.iter().all(|&v| v == first) => PerService::Uniform(first),
            _ => PerService::Each(values.to_vec()),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    geometry: RawGeometry,
    #[serde(default)]
    radio: RawRadio,
    #[serde(default)]
    traffic: RawTraffic,
    #[serde(default)]
    control: RawControl,
    #[serde(default)]
    run: RawRun,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    cell_radius_m: Option<f64>,
    rail_offset_m: Option<f64>,
    speed_kmh: Option<f64>,
    slot_duration_s: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadio {
    bandwidth_hz: Option<f64>,
    noise_psd_dbm_hz: Option<f64>,
    pathloss_exponent: Option<f64>,
    packet_bits: Option<f64>,
    eta: Option<f64>,
    max_power_w: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    services: Option<usize>,
    arrival_rate: Option<PerService>,
    delay_bound_slots: Option<PerService>,
    avg_power_w: Option<f64>,
    buffer_cap: Option<u64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    omega: Option<f64>,
    epsilon: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: Option<u64>,
    seed: Option<u64>,
    policy: Option<PolicyKind>,
    warmup: Option<u64>,
}

impl RawConfig {
    fn resolve(self) -> Result<ScenarioConfig> {
        let d = ScenarioConfig::default();
        let geometry = Geometry {
            cell_radius: self
                .geometry
                .cell_radius_m
                .unwrap_or(d.geometry.cell_radius),
            rail_offset: self
                .geometry
                .rail_offset_m
                .unwrap_or(d.geometry.rail_offset),
            speed: self
                .geometry
                .speed_kmh
                .map_or(d.geometry.speed, |v| v / 3.6),
            slot_duration: self
                .geometry
                .slot_duration_s
                .unwrap_or(d.geometry.slot_duration),
        };
        let bandwidth = self.radio.bandwidth_hz.unwrap_or(d.radio.bandwidth);
        let packet_bits = self.radio.packet_bits.unwrap_or(d.radio.packet_bits);
        let eta = packet_bits / (geometry.slot_duration * bandwidth);
        if let Some(given) = self.radio.eta {
            if !(((given - eta) / eta).abs() <= ETA_MATCH_TOLERANCE) {
                return Err(Error::config(
                    "eta",
                    format!("{given} does not match L/(Ts*B) = {eta}"),
                ));
            }
        }
        let radio = RadioParams {
            bandwidth,
            noise_psd: self
                .radio
                .noise_psd_dbm_hz
                .map_or(d.radio.noise_psd, dbm_to_watts),
            pathloss_exponent: self
                .radio
                .pathloss_exponent
                .unwrap_or(d.radio.pathloss_exponent),
            packet_bits,
            eta,
            max_power: self.radio.max_power_w.unwrap_or(d.radio.max_power),
        };

        let implied = [&self.traffic.arrival_rate, &self.traffic.delay_bound_slots]
            .into_iter()
            .find_map(|v| match v {
                Some(PerService::Each(list)) => Some(list.len()),
                _ => None,
            });
        let services = self
            .traffic
            .services
            .or(implied)
            .unwrap_or(DEFAULT_SERVICES);
        if services == 0 {
            return Err(Error::config(
                "services",
                "at least one service is required",
            ));
        }
        let arrival_rates = self
            .traffic
            .arrival_rate
            .unwrap_or(PerService::Uniform(DEFAULT_ARRIVAL_RATE))
            .expand("arrival_rate", services)?;
        let delay_bounds = self
            .traffic
            .delay_bound_slots
            .unwrap_or(PerService::Uniform(DEFAULT_DELAY_BOUND))
            .expand("delay_bound_slots", services)?;
        let traffic = TrafficParams {
            arrival_rates,
            delay_bounds,
            avg_power: self.traffic.avg_power_w.unwrap_or(d.traffic.avg_power),
            buffer_cap: self.traffic.buffer_cap.unwrap_or(d.traffic.buffer_cap),
        };

        let cfg = ScenarioConfig {
            geometry,
            radio,
            traffic,
            omega: self.control.omega.unwrap_or(d.omega),
            epsilon: self.control.epsilon.unwrap_or(d.epsilon),
            horizon: self.run.horizon.unwrap_or(d.horizon),
            seed: self.run.seed.unwrap_or(d.seed),
            policy: self.run.policy.unwrap_or(d.policy),
            warmup: self.run.warmup.unwrap_or(d.warmup),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<&ScenarioConfig> for RawConfig {
    fn from(c: &ScenarioConfig) -> Self {
        RawConfig {
            geometry: RawGeometry {
                cell_radius_m: Some(c.geometry.cell_radius),
                rail_offset_m: Some(c.geometry.rail_offset),
                speed_kmh: Some(c.geometry.speed * 3.6),
                slot_duration_s: Some(c.geometry.slot_duration),
            },
            radio: RawRadio {
                bandwidth_hz: Some(c.radio.bandwidth),
                noise_psd_dbm_hz: Some(10.0 * c.radio.noise_psd.log10() + 30.0),
                pathloss_exponent: Some(c.radio.pathloss_exponent),
                packet_bits: Some(c.radio.packet_bits),
                eta: Some(c.radio.eta),
                max_power_w: Some(c.radio.max_power),
            },
            traffic: RawTraffic {
                services: Some(c.num_services()),
                arrival_rate: Some(PerService::compact(&c.traffic.arrival_rates)),
                delay_bound_slots: Some(PerService::compact(&c.traffic.delay_bounds)),
                avg_power_w: Some(c.traffic.avg_power),
                buffer_cap: Some(c.traffic.buffer_cap),
            },
            control: RawControl {
                omega: Some(c.omega),
                epsilon: Some(c.epsilon),
            },
            run: RawRun {
                horizon: Some(c.horizon),
                seed: Some(c.seed),
                policy: Some(c.policy),
                warmup: Some(c.warmup),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.traffic.avg_power, 36.0);
        assert_eq!(cfg.radio.bandwidth, 5e6);
        assert_eq!(cfg.radio.packet_bits, 240.0);
        assert_eq!(cfg.geometry.slot_duration, 1e-3);
        assert_eq!(cfg.radio.pathloss_exponent, 4.0);
        assert!((cfg.radio.noise_psd / 10f64.powf(-20.4) - 1.0).abs() < 1e-12);
        assert!((cfg.geometry.speed - 100.0).abs() < 1e-12);
        assert_eq!(cfg.geometry.cell_radius, 1500.0);
        assert_eq!(cfg.geometry.rail_offset, 50.0);
        assert_eq!(cfg.num_services(), 6);
    }

    #[test]
    fn eta_is_derived() {
        let cfg = ScenarioConfig::default();
        assert!((cfg.radio.eta - 0.048).abs() < 1e-15);
        assert!(ScenarioConfig::from_toml_str("[radio]\neta = 0.048\n").is_ok());
        let err = ScenarioConfig::from_toml_str("[radio]\neta = 0.05\n").unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "eta"),
            "{err}"
        );
    }

    #[test]
    fn single_override() {
        let cfg = ScenarioConfig::from_toml_str("[control]\nomega = 0.8\n").unwrap();
        assert_eq!(cfg.omega, 0.8);
        let cfg = ScenarioConfig::from_toml_str("[control]\nomega = 0.3\n").unwrap();
        assert_eq!(
            cfg,
            ScenarioConfig {
                omega: 0.3,
                ..ScenarioConfig::default()
            }
        );
    }

    #[test]
    fn constraint_violation_names_field() {
        let err = ScenarioConfig::from_toml_str("[traffic]\navg_power_w = 60.0\n").unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "avg_power_w"),
            "{err}"
        );
        let err =
            ScenarioConfig::from_toml_str("[traffic]\nservices = 3\narrival_rate = [1.0, 2.0]\n")
                .unwrap_err();
        assert!(
            matches!(err, Error::Config { ref field, .. } if field == "arrival_rate"),
            "{err}"
        );
    }

    #[test]
    fn parse_errors_are_reported() {
        assert!(matches!(
            ScenarioConfig::from_toml_str("[radio\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            ScenarioConfig::from_toml_str("[radio]\nwat = 1\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            ScenarioConfig::from_toml_str("[run]\npolicy = \"fastest\"\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn per_service_lists() {
        let cfg =
            ScenarioConfig::from_toml_str("[traffic]\narrival_rate = [10.0, 20.0, 5.0]\n").unwrap();
        assert_eq!(cfg.num_services(), 3);
        assert_eq!(cfg.traffic.delay_bounds, vec![15.0; 3]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let mut cfg = ScenarioConfig::default();
        cfg.traffic.arrival_rates = vec![3.0, 4.5];
        cfg.traffic.delay_bounds = vec![10.0, 12.0];
        cfg.policy = PolicyKind::DynamicWfpa;
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back.traffic, cfg.traffic);
        assert_eq!(back.policy, cfg.policy);
        assert!((back.radio.noise_psd / cfg.radio.noise_psd - 1.0).abs() < 1e-12);
    }
}
