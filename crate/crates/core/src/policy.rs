//! Power control policies.
//!
//! `Proposed` solves the per-slot problem with the instantaneous power cap.
//! The two static baselines fix the power of every slot before the run
//! (constant or water-filled over the trip) and never look at the queues. Their
//! dynamic variants run the per-slot solver with the static profile value as
//! that slot's power cap. All five share the same packet allocation rule.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelSample};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::queues::SystemState;
use crate::solver::{self, SlotInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PolicyKind {
    Proposed,
    StaticCpa,
    StaticWfpa,
    DynamicCpa,
    DynamicWfpa,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::Proposed,
        PolicyKind::StaticCpa,
        PolicyKind::StaticWfpa,
        PolicyKind::DynamicCpa,
        PolicyKind::DynamicWfpa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Proposed => "proposed",
            PolicyKind::StaticCpa => "cpa-static",
            PolicyKind::StaticWfpa => "wfpa-static",
            PolicyKind::DynamicCpa => "cpa-dynamic",
            PolicyKind::DynamicWfpa => "wfpa-dynamic",
        }
    }

    pub fn is_static(self) -> bool {
        matches!(self, PolicyKind::StaticCpa | PolicyKind::StaticWfpa)
    }

    pub fn needs_profile(self) -> bool {
        self != PolicyKind::Proposed
    }

    fn uses_water_filling(self) -> bool {
        matches!(self, PolicyKind::StaticWfpa | PolicyKind::DynamicWfpa)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::config(
                    "policy",
                    format!("unknown policy `{s}` (expected proposed, cpa-static, wfpa-static, cpa-dynamic or wfpa-dynamic)"),
                )
            })
    }
}

impl TryFrom<String> for PolicyKind {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PolicyKind> for String {
    fn from(p: PolicyKind) -> String {
        p.name().to_string()
    }
}

/// A policy together with its precomputed power profile, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    profile: Option<Vec<f64>>,
}

impl Policy {
    pub fn proposed() -> Self {
        Policy {
            kind: PolicyKind::Proposed,
            profile: None,
        }
    }

    /// Wraps an explicit profile; it must be non-negative and within `max_power`.
    pub fn with_profile(kind: PolicyKind, profile: Vec<f64>, max_power: f64) -> Result<Self> {
        if !kind.needs_profile() {
            return Err(Error::config(
                "policy",
                "the proposed policy takes no power profile",
            ));
        }
        if let Some((t, p)) = profile
            .iter()
            .enumerate()
            .find(|(_, p)| !(**p >= 0.0 && **p <= max_power))
        {
            return Err(Error::config(
                "max_power_w",
                format!("{kind} profile value {p} W at slot {t} is outside [0, {max_power}]"),
            ));
        }
        Ok(Policy {
            kind,
            profile: Some(profile),
        })
    }

    /// Builds `kind` for a scenario, computing its profile over the whole
    /// horizon up front.
    pub fn build(kind: PolicyKind, cfg: &ScenarioConfig) -> Result<Self> {
        if !kind.needs_profile() {
            return Ok(Policy::proposed());
        }
        let profile = if kind.uses_water_filling() {
            let noise: Vec<f64> = (0..cfg.horizon)
                .map(|t| channel::noise_equiv(channel::distance_at(t, &cfg.geometry), &cfg.radio))
                .collect();
            wfpa_profile(&noise, cfg.traffic.avg_power)?
        } else {
            cpa_profile(cfg.traffic.avg_power, cfg.horizon)
        };
        Policy::with_profile(kind, profile, cfg.radio.max_power)
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn profile(&self) -> Option<&[f64]> {
        self.profile.as_deref()
    }

    fn profile_at(&self, t: u64) -> Result<f64> {
        let profile = self.profile.as_deref().unwrap_or(&[]);
        profile.get(t as usize).copied().ok_or_else(|| {
            Error::Domain(format!(
                "{} profile covers {} slots, slot {t} requested",
                self.kind,
                profile.len()
            ))
        })
    }
}

/// Power and allocation chosen for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAction {
    pub power: f64,
    pub allocation: Vec<u64>,
    /// Link capacity at `power`.
    pub capacity: u64,
    /// Real-valued capacity at the power cap that applied this slot.
    pub capacity_cap: f64,
}

/// `P(t) = Pav` for every slot.
pub fn cpa_profile(avg_power: f64, horizon: u64) -> Vec<f64> {
    vec![avg_power; horizon as usize]
}

/// Water-filling over the trip: `P(t) = max(nu - N(t), 0)` with the water
/// level `nu` set by bisection so the profile averages `avg_power`.
pub fn wfpa_profile(noise: &[f64], avg_power: f64) -> Result<Vec<f64>> {
    if !(avg_power > 0.0) {
        return Err(Error::config(
            "avg_power_w",
            "water filling needs a positive average power",
        ));
    }
    if noise.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(n) = noise.iter().find(|n| !(**n > 0.0 && n.is_finite())) {
        return Err(Error::Domain(format!(
            "noise-equivalent power {n} must be positive"
        )));
    }
    let slots = noise.len() as f64;
    let mean_power = |level: f64| noise.iter().map(|n| (level - n).max(0.0)).sum::<f64>() / slots;

    let mut lo = noise.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = noise.iter().copied().fold(0.0, f64::max) + avg_power;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mean_power(mid) < avg_power {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    let level = if (mean_power(lo) - avg_power).abs() <= (mean_power(hi) - avg_power).abs() {
        lo
    } else {
        hi
    };
    Ok(noise.iter().map(|n| (level - n).max(0.0)).collect())
}

/// Chooses the action for slot `channel.slot` given the observed queues.
pub fn decide(
    policy: &Policy,
    state: &SystemState,
    channel: &ChannelSample,
    cfg: &ScenarioConfig,
) -> Result<ControlAction> {
    let eta = cfg.radio.eta;
    let noise = channel.noise_equiv;
    let beta = cfg.omega * noise * state.power_queue_sum();
    let power_cap = match policy.kind {
        PolicyKind::Proposed => cfg.radio.max_power,
        _ => policy.profile_at(channel.slot)?,
    };
    let inst = SlotInstance::new(
        state.delay_queue.clone(),
        state.backlog.clone(),
        beta,
        eta,
        noise,
        power_cap,
        cfg.epsilon,
    )?;

    if policy.kind.is_static() {
        let capacity = channel::link_capacity(power_cap, noise, eta);
        let allocation = solver::greedy_allocation(capacity.min(inst.total_backlog()), &inst)?;
        return Ok(ControlAction {
            power: power_cap,
            allocation,
            capacity,
            capacity_cap: inst.capacity_cap(),
        });
    }

    let sol = solver::solve_slot(&inst)?;
    Ok(ControlAction {
        power: sol.power,
        allocation: sol.allocation,
        capacity: sol.capacity,
        capacity_cap: inst.capacity_cap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in PolicyKind::ALL {
            assert_eq!(p.name().parse::<PolicyKind>().unwrap(), p);
        }
        assert!("greedy".parse::<PolicyKind>().is_err());
    }

    #[test]
    fn cpa_examples() {
        let p = cpa_profile(36.0, 1000);
        assert!(p.iter().all(|&x| x == 36.0));
        assert_eq!(p.iter().sum::<f64>() / 1000.0, 36.0);
        assert!(cpa_profile(36.0, 0).is_empty());
    }

    #[test]
    fn wfpa_flat_channel() {
        let p = wfpa_profile(&[1.0, 1.0, 1.0], 2.0).unwrap();
        for x in p {
            assert!((x - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wfpa_staircase() {
        // sum max(nu - N, 0) = 6 gives nu = 4.
        let p = wfpa_profile(&[1.0, 2.0, 3.0], 2.0).unwrap();
        for (x, want) in p.iter().zip([3.0, 2.0, 1.0]) {
            assert!((x - want).abs() < 1e-12, "{p:?}");
        }
    }

    #[test]
    fn wfpa_kkt_structure() {
        let noise: Vec<f64> = (0..500)
            .map(|i| 0.01 + ((i * 37) % 101) as f64 * 0.7)
            .collect();
        let p = wfpa_profile(&noise, 5.0).unwrap();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!(((mean - 5.0) / 5.0).abs() <= 1e-8);
        let level = p
            .iter()
            .zip(&noise)
            .find(|(p, _)| **p > 0.0)
            .map(|(p, n)| p + n)
            .unwrap();
        for (x, n) in p.iter().zip(&noise) {
            if *x > 0.0 {
                assert!((x + n - level).abs() < 1e-9);
            } else {
                assert!(*n >= level - 1e-9);
            }
        }
    }

    #[test]
    fn wfpa_rejects_nonpositive_budget() {
        assert!(wfpa_profile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn profile_over_cap_is_rejected() {
        assert!(Policy::with_profile(PolicyKind::StaticCpa, vec![36.0, 51.0], 50.0).is_err());
        assert!(Policy::with_profile(PolicyKind::Proposed, vec![1.0], 50.0).is_err());
    }
}
