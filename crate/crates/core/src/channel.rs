//! Train mobility and the power/capacity relationship of the downlink.
//!
//! Base stations sit at horizontal coordinates `0, 2R, 4R, ...` along the
//! track, each `d0` meters off the rail. The train moves at constant speed and
//! is always served by the nearest station. Per slot, the distance fixes the
//! noise-equivalent power `N = B * N0 * d^alpha`, and the number of packets a
//! transmit power `P` can carry is `floor(log2(1 + P / N) / eta)`.

use serde::{Deserialize, Serialize};

/// Slack added before flooring so that `link_capacity(power_for_capacity(c))`
/// returns exactly `c` despite rounding in `exp2`/`log2`.
pub const FLOOR_TOLERANCE: f64 = 1e-9;

/// `floor(x)` with [`FLOOR_TOLERANCE`] applied.
#[inline]
pub fn tolerant_floor(x: f64) -> f64 {
    (x + FLOOR_TOLERANCE).floor()
}

/// Track layout and timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Cell radius `R` in meters.
    pub cell_radius: f64,
    /// Perpendicular distance between each base station and the rail, meters.
    pub rail_offset: f64,
    /// Train speed in m/s.
    pub speed: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
}

impl Geometry {
    /// Largest possible serving distance, reached midway between two stations.
    pub fn max_distance(&self) -> f64 {
        self.cell_radius.hypot(self.rail_offset)
    }

    /// Meters travelled per slot.
    pub fn step(&self) -> f64 {
        self.speed * self.slot_duration
    }

    /// Number of slots the train needs to go from one station to the next,
    /// rounded up.
    pub fn period_slots(&self) -> u64 {
        (2.0 * self.cell_radius / self.step()).ceil() as u64
    }

    /// Horizontal offset between the train and its nearest base station at
    /// the start of slot `t`.
    pub fn horizontal_offset(&self, t: u64) -> f64 {
        let span = 2.0 * self.cell_radius;
        let s = self.step() * t as f64;
        let x = s.rem_euclid(span);
        x.min(span - x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// System bandwidth in Hz.
    pub bandwidth: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_psd: f64,
    pub pathloss_exponent: f64,
    /// Packet size in bits.
    pub packet_bits: f64,
    /// `L / (Ts * B)`: spectral cost of one packet per slot.
    pub eta: f64,
    /// Instantaneous transmit power cap in watts.
    pub max_power: f64,
}

/// Channel state derived for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub slot: u64,
    pub distance: f64,
    pub noise_equiv: f64,
    /// Real-valued capacity reachable at the power cap.
    pub capacity_cap: f64,
}

impl ChannelSample {
    pub fn at(slot: u64, geom: &Geometry, radio: &RadioParams) -> Self {
        let distance = distance_at(slot, geom);
        let noise_equiv = noise_equiv(distance, radio);
        ChannelSample {
            slot,
            distance,
            noise_equiv,
            capacity_cap: capacity_cap(radio.max_power, noise_equiv, radio.eta),
        }
    }
}

/// Distance from the train to its serving base station at the start of slot `t`.
pub fn distance_at(t: u64, geom: &Geometry) -> f64 {
    geom.horizontal_offset(t).hypot(geom.rail_offset)
}

/// `B * N0 * d^alpha`: the power that yields unit SNR at distance `d`.
pub fn noise_equiv(distance: f64, radio: &RadioParams) -> f64 {
    radio.bandwidth * radio.noise_psd * distance.powf(radio.pathloss_exponent)
}

/// Whole packets per slot carried by transmit power `power`.
pub fn link_capacity(power: f64, noise_equiv: f64, eta: f64) -> u64 {
    debug_assert!(power >= 0.0 && noise_equiv > 0.0 && eta > 0.0);
    let c = (power / noise_equiv).ln_1p() / std::f64::consts::LN_2 / eta;
    tolerant_floor(c).max(0.0) as u64
}

/// Power needed to carry `capacity` packets: `N * (2^(eta*C) - 1)`.
pub fn power_for_capacity(capacity: f64, noise_equiv: f64, eta: f64) -> f64 {
    noise_equiv * (eta * capacity * std::f64::consts::LN_2).exp_m1()
}

/// Real-valued capacity at `max_power`: `log2(1 + Pmax / N) / eta`.
pub fn capacity_cap(max_power: f64, noise_equiv: f64, eta: f64) -> f64 {
    (max_power / noise_equiv).ln_1p() / std::f64::consts::LN_2 / eta
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_geometry() -> Geometry {
        Geometry {
            cell_radius: 1500.0,
            rail_offset: 50.0,
            speed: 100.0,
            slot_duration: 1e-3,
        }
    }

    fn table_radio() -> RadioParams {
        RadioParams {
            bandwidth: 5e6,
            noise_psd: 10f64.powf(-20.4),
            pathloss_exponent: 4.0,
            packet_bits: 240.0,
            eta: 0.048,
            max_power: 50.0,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn distance_examples() {
        let g = table_geometry();
        assert_eq!(distance_at(0, &g), 50.0);
        // s = R after 15000 slots of 0.1 m.
        assert!((distance_at(15_000, &g) - 1500.8331019803634).abs() < 1e-9);
        assert!((distance_at(30_000, &g) - 50.0).abs() < 1e-9);
        assert_eq!(g.period_slots(), 30_000);
    }

    #[test]
    fn noise_equiv_examples() {
        let r = table_radio();
        // Frozen from a 40-digit evaluation.
        assert!(rel(noise_equiv(50.0, &r), 1.244084907979683e-7) < 1e-12);
        assert!(rel(noise_equiv(1500.8331019803634, &r), 0.10099493723828146) < 1e-12);
        let flat = RadioParams {
            pathloss_exponent: 0.0,
            ..r
        };
        assert!(rel(noise_equiv(1234.0, &flat), 5e6 * 10f64.powf(-20.4)) < 1e-15);
    }

    #[test]
    fn link_capacity_examples() {
        assert_eq!(link_capacity(0.0, 1.244e-7, 0.048), 0);
        assert_eq!(link_capacity(36.0, 1.244e-7, 0.048), 585);
        let n = 1.244e-7;
        assert_eq!(link_capacity(n * (0.048f64.exp2() - 1.0), n, 0.048), 1);
    }

    #[test]
    fn power_for_capacity_examples() {
        assert_eq!(power_for_capacity(0.0, 1.244e-7, 0.048), 0.0);
        // 40-digit oracle: 35.29739516855908...
        assert!(
            rel(
                power_for_capacity(585.0, 1.244e-7, 0.048),
                35.29739516855909
            ) < 1e-12
        );
        let p = power_for_capacity(120.0, 1.244e-7, 0.048);
        assert_eq!(link_capacity(p, 1.244e-7, 0.048), 120);
    }

    #[test]
    fn capacity_cap_examples() {
        assert_eq!(capacity_cap(0.0, 1.244e-7, 0.048), 0.0);
        assert!(rel(capacity_cap(50.0, 1.244e-7, 0.048), 595.4659660855661) < 1e-12);
        assert!(rel(capacity_cap(50.0, 0.101, 0.048), 186.5487561716449) < 1e-12);
    }

    #[test]
    fn round_trip_every_integer_capacity() {
        for n in [1.244e-7, 1e-3, 0.101, 3.7] {
            for c in 0..=2000u64 {
                let p = power_for_capacity(c as f64, n, 0.048);
                assert_eq!(link_capacity(p, n, 0.048), c, "N={n} c={c}");
            }
        }
    }

    #[test]
    fn cap_inverts_to_max_power() {
        for n in [1.244e-7, 1e-3, 0.101] {
            let c = capacity_cap(50.0, n, 0.048);
            assert!(rel(power_for_capacity(c, n, 0.048), 50.0) < 1e-9);
        }
    }
}
