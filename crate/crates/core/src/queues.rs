//! Packet arrivals, the real per-service queues, and the two families of
//! virtual queues that turn the average-delay and average-power budgets into
//! queue-stability conditions.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest mean handled by a single sequential-search inversion. Larger
/// means are split into equal parts and summed.
const INVERSION_MAX_MEAN: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficParams {
    /// Mean packet arrivals per slot, one entry per service.
    pub arrival_rates: Vec<f64>,
    /// Average delay bound in slots, one entry per service.
    pub delay_bounds: Vec<f64>,
    /// Average transmit power budget in watts.
    pub avg_power: f64,
    /// Per-service buffer size in packets.
    pub buffer_cap: u64,
}

impl TrafficParams {
    pub fn num_services(&self) -> usize {
        self.arrival_rates.len()
    }

    /// `W_k * lambda_k`: the backlog each service may hold on average.
    pub fn backlog_budget(&self, k: usize) -> f64 {
        self.delay_bounds[k] * self.arrival_rates[k]
    }
}

/// Queue state observed at the start of a slot.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub slot: u64,
    pub backlog: Vec<u64>,
    pub delay_queue: Vec<f64>,
    /// One power queue per service. All entries follow the same recursion
    /// from the same start, so they are always equal.
    pub power_queue: Vec<f64>,
}

impl SystemState {
    pub fn new(num_services: usize) -> Self {
        SystemState {
            slot: 0,
            backlog: vec![0; num_services],
            delay_queue: vec![0.0; num_services],
            power_queue: vec![0.0; num_services],
        }
    }

    pub fn num_services(&self) -> usize {
        self.backlog.len()
    }

    pub fn total_backlog(&self) -> u64 {
        self.backlog.iter().sum()
    }

    /// Common value of the power queues.
    pub fn power_queue_value(&self) -> f64 {
        self.power_queue[0]
    }

    pub fn power_queue_sum(&self) -> f64 {
        self.power_queue.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArrivalBatch {
    pub counts: Vec<u64>,
    /// Filled in by [`update_real_queue`]: packets turned away by a full buffer.
    pub dropped: Vec<u64>,
}

impl ArrivalBatch {
    pub fn new(counts: Vec<u64>) -> Self {
        let dropped = vec![0; counts.len()];
        ArrivalBatch { counts, dropped }
    }
}

/// One Poisson draw by sequential search over the CDF.
pub fn poisson_inversion<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > INVERSION_MAX_MEAN {
        let parts = (mean / INVERSION_MAX_MEAN).ceil() as u64;
        let piece = mean / parts as f64;
        return (0..parts).map(|_| poisson_inversion(rng, piece)).sum();
    }
    let u: f64 = rng.gen();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
        // The tail mass below f64 resolution can leave cdf slightly under 1.
        if p == 0.0 && u > cdf {
            break;
        }
    }
    k
}

/// Seeded arrival generator with one independent ChaCha stream per service,
/// so that policies compared at the same seed see the same sample paths.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    streams: Vec<ChaCha8Rng>,
    rates: Vec<f64>,
}

impl ArrivalSampler {
    pub fn new(seed: u64, rates: &[f64]) -> Self {
        let streams = (0..rates.len())
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64 + 1);
                rng
            })
            .collect();
        ArrivalSampler {
            streams,
            rates: rates.to_vec(),
        }
    }

    pub fn sample(&mut self) -> ArrivalBatch {
        let counts = self
            .streams
            .iter_mut()
            .zip(&self.rates)
            .map(|(rng, &mean)| poisson_inversion(rng, mean))
            .collect();
        ArrivalBatch::new(counts)
    }
}

/// `Q(t+1) = min(Q(t) - mu + A, Qmax)`. Overflow is recorded in
/// `arrivals.dropped`.
pub fn update_real_queue(
    state: &mut SystemState,
    served: &[u64],
    arrivals: &mut ArrivalBatch,
    buffer_cap: u64,
) -> Result<()> {
    let k_count = state.num_services();
    if served.len() != k_count || arrivals.counts.len() != k_count {
        return Err(Error::Domain(format!(
            "expected {k_count} services, got allocation of {} and arrivals of {}",
            served.len(),
            arrivals.counts.len()
        )));
    }
    if let Some(k) = (0..k_count).find(|&k| served[k] > state.backlog[k]) {
        return Err(Error::Domain(format!(
            "service {k}: allocation {} exceeds backlog {}",
            served[k], state.backlog[k]
        )));
    }
    arrivals.dropped.resize(k_count, 0);
    for k in 0..k_count {
        let next = state.backlog[k] - served[k] + arrivals.counts[k];
        let kept = next.min(buffer_cap);
        arrivals.dropped[k] = next - kept;
        state.backlog[k] = kept;
    }
    Ok(())
}

/// `X(t+1) = max(X(t) - W*lambda, 0) + Q(t+1)`; expects `state.backlog` to
/// already hold `Q(t+1)`.
pub fn update_virtual_delay(state: &mut SystemState, params: &TrafficParams) {
    for k in 0..state.num_services() {
        let drained = (state.delay_queue[k] - params.backlog_budget(k)).max(0.0);
        state.delay_queue[k] = drained + state.backlog[k] as f64;
    }
}

/// `Y(t+1) = max(Y(t) - Pav, 0) + P`, identically for every service.
pub fn update_virtual_power(state: &mut SystemState, power: f64, avg_power: f64) {
    for y in &mut state.power_queue {
        *y = (*y - avg_power).max(0.0) + power;
    }
}

/// Quadratic queue energy `(sum X^2 + omega * sum Y^2) / 2`.
pub fn lyapunov_value(state: &SystemState, omega: f64) -> f64 {
    let x: f64 = state.delay_queue.iter().map(|x| x * x).sum();
    let y: f64 = state.power_queue.iter().map(|y| y * y).sum();
    0.5 * (x + omega * y)
}

/// Constant term of the one-slot drift bound.
pub fn drift_constant(params: &TrafficParams, max_power: f64, omega: f64) -> f64 {
    let qmax = params.buffer_cap as f64;
    (0..params.num_services())
        .map(|k| {
            let budget = params.backlog_budget(k);
            qmax * qmax
                + budget * budget
                + omega * (max_power * max_power + params.avg_power * params.avg_power)
        })
        .sum()
}

/// Action-dependent term of the one-slot drift bound for a realised slot.
pub fn drift_penalty(
    state: &SystemState,
    served: &[u64],
    arrivals: &[u64],
    power: f64,
    params: &TrafficParams,
    omega: f64,
) -> f64 {
    (0..state.num_services())
        .map(|k| {
            let x = state.delay_queue[k];
            let net = state.backlog[k] as f64 - served[k] as f64 + arrivals[k] as f64
                - params.backlog_budget(k);
            x * net + omega * state.power_queue[k] * (power - params.avg_power)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(k: usize, lambda: f64, w: f64) -> TrafficParams {
        TrafficParams {
            arrival_rates: vec![lambda; k],
            delay_bounds: vec![w; k],
            avg_power: 36.0,
            buffer_cap: 1_000_000,
        }
    }

    #[test]
    fn zero_rate_never_arrives() {
        let mut s = ArrivalSampler::new(7, &[0.0, 0.0]);
        for _ in 0..1000 {
            assert_eq!(s.sample().counts, vec![0, 0]);
        }
    }

    #[test]
    fn poisson_moments() {
        let mut s = ArrivalSampler::new(12345, &[20.0]);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample().counts[0] as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((19.8..=20.2).contains(&mean), "mean {mean}");
        assert!((19.0..=21.0).contains(&var), "var {var}");
    }

    #[test]
    fn large_mean_is_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mean = (0..n)
            .map(|_| poisson_inversion(&mut rng, 75.0) as f64)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 75.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn sampler_is_deterministic() {
        let mut a = ArrivalSampler::new(42, &[20.0, 5.0, 11.0]);
        let mut b = ArrivalSampler::new(42, &[20.0, 5.0, 11.0]);
        for _ in 0..500 {
            assert_eq!(a.sample(), b.sample());
        }
    }

    #[test]
    fn streams_are_independent_of_service_count() {
        let mut a = ArrivalSampler::new(9, &[20.0]);
        let mut b = ArrivalSampler::new(9, &[20.0, 20.0, 20.0]);
        for _ in 0..100 {
            assert_eq!(a.sample().counts[0], b.sample().counts[0]);
        }
    }

    #[test]
    fn real_queue_examples() {
        let mut s = SystemState::new(2);
        s.backlog = vec![5, 0];
        let mut a = ArrivalBatch::new(vec![3, 7]);
        update_real_queue(&mut s, &[5, 0], &mut a, 1_000_000).unwrap();
        assert_eq!(s.backlog, vec![3, 7]);
        assert_eq!(a.dropped, vec![0, 0]);

        let mut s = SystemState::new(1);
        s.backlog = vec![100];
        let mut a = ArrivalBatch::new(vec![1]);
        update_real_queue(&mut s, &[0], &mut a, 100).unwrap();
        assert_eq!(s.backlog, vec![100]);
        assert_eq!(a.dropped, vec![1]);

        let mut s = SystemState::new(2);
        s.backlog = vec![2, 2];
        let mut a = ArrivalBatch::new(vec![0, 0]);
        assert!(update_real_queue(&mut s, &[3, 0], &mut a, 100).is_err());
        assert_eq!(s.backlog, vec![2, 2]);
    }

    #[test]
    fn virtual_delay_examples() {
        // W * lambda = 300
        let p = params(1, 20.0, 15.0);
        let mut s = SystemState::new(1);
        s.backlog = vec![5];
        update_virtual_delay(&mut s, &p);
        assert_eq!(s.delay_queue[0], 5.0);

        s.delay_queue[0] = 400.0;
        s.backlog[0] = 50;
        update_virtual_delay(&mut s, &p);
        assert_eq!(s.delay_queue[0], 150.0);

        s.delay_queue[0] = 250.0;
        s.backlog[0] = 0;
        update_virtual_delay(&mut s, &p);
        assert_eq!(s.delay_queue[0], 0.0);
    }

    #[test]
    fn virtual_power_examples() {
        let mut s = SystemState::new(3);
        s.power_queue = vec![10.0; 3];
        update_virtual_power(&mut s, 50.0, 36.0);
        assert_eq!(s.power_queue, vec![50.0; 3]);
        s.power_queue = vec![100.0; 3];
        update_virtual_power(&mut s, 0.0, 36.0);
        assert_eq!(s.power_queue, vec![64.0; 3]);
        for p in [3.0, 80.0, 0.0, 12.5, 49.0] {
            update_virtual_power(&mut s, p, 36.0);
            assert!(s.power_queue.iter().all(|&y| y == s.power_queue[0]));
        }
    }

    #[test]
    fn lyapunov_examples() {
        let mut s = SystemState::new(2);
        assert_eq!(lyapunov_value(&s, 0.8), 0.0);
        s.delay_queue = vec![3.0, 4.0];
        assert_eq!(lyapunov_value(&s, 1.0), 12.5);
        s.power_queue = vec![7.0, 7.0];
        assert_eq!(lyapunov_value(&s, 0.0), 12.5);
    }

    #[test]
    fn drift_constant_examples() {
        let zero = TrafficParams {
            arrival_rates: vec![0.0],
            delay_bounds: vec![0.0],
            avg_power: 0.0,
            buffer_cap: 0,
        };
        assert_eq!(drift_constant(&zero, 0.0, 0.0), 0.0);
        let one = TrafficParams {
            arrival_rates: vec![20.0],
            delay_bounds: vec![15.0],
            avg_power: 36.0,
            buffer_cap: 10,
        };
        assert_eq!(drift_constant(&one, 50.0, 1.0), 93_896.0);
        let two = TrafficParams {
            arrival_rates: vec![20.0; 2],
            delay_bounds: vec![15.0; 2],
            ..one.clone()
        };
        assert_eq!(drift_constant(&two, 50.0, 1.0), 2.0 * 93_896.0);
    }

    #[test]
    fn drift_penalty_examples() {
        let p = TrafficParams {
            arrival_rates: vec![3.0],
            delay_bounds: vec![1.0],
            avg_power: 36.0,
            buffer_cap: 100,
        };
        let mut s = SystemState::new(1);
        assert_eq!(drift_penalty(&s, &[0], &[0], 0.0, &p, 0.0), 0.0);
        s.delay_queue = vec![1.0];
        s.backlog = vec![10];
        assert_eq!(drift_penalty(&s, &[2], &[0], 0.0, &p, 0.0), 5.0);
        let g2 = drift_penalty(&s, &[2], &[0], 7.0, &p, 0.4);
        let g3 = drift_penalty(&s, &[3], &[0], 7.0, &p, 0.4);
        assert_eq!(g2 - g3, 1.0);
    }
}
