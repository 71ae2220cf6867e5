//! Slot-by-slot simulation.
//!
//! Every slot runs in a fixed order: observe the channel and queues, decide,
//! transmit, draw arrivals, then update `Q`, `X` (from the new `Q`) and `Y`
//! (from the chosen power). A [`SlotTrace`] captures the state observed at the
//! start of the slot together with everything that happened during it, so
//! consecutive records can be replayed through the update equations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelSample};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::policy::{self, ControlAction, Policy};
use crate::queues::{self, ArrivalSampler, SystemState};

/// Relative slack on the instantaneous power cap check.
const POWER_CAP_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub slot: u64,
    pub distance: f64,
    pub noise_equiv: f64,
    /// Real-valued capacity at this slot's power cap.
    pub capacity_cap: f64,
    pub power: f64,
    pub capacity: u64,
    pub served: Vec<u64>,
    pub arrivals: Vec<u64>,
    /// `Q(t)` at the start of the slot.
    pub backlog: Vec<u64>,
    /// `X(t)` at the start of the slot.
    pub delay_queue: Vec<f64>,
    /// Common value of `Y_k(t)` at the start of the slot.
    pub power_queue: f64,
    /// Arrivals turned away by a full buffer during the slot.
    pub drops: Vec<u64>,
}

impl SlotTrace {
    pub fn num_services(&self) -> usize {
        self.backlog.len()
    }

    pub fn total_served(&self) -> u64 {
        self.served.iter().sum()
    }

    pub fn mean_backlog(&self) -> f64 {
        self.backlog.iter().sum::<u64>() as f64 / self.backlog.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub slots: u64,
    pub avg_power: f64,
    pub avg_backlog: Vec<f64>,
    /// Little's-law delay `avg_backlog / empirical_lambda`, in slots.
    pub avg_delay: Vec<f64>,
    /// Admitted (not dropped) arrivals per slot.
    pub empirical_lambda: Vec<f64>,
    pub delay_ok: Vec<bool>,
    pub power_ok: bool,
    pub total_drops: Vec<u64>,
}

impl SimSummary {
    /// Delay averaged over services.
    pub fn mean_delay(&self) -> f64 {
        self.avg_delay.iter().sum::<f64>() / self.avg_delay.len() as f64
    }

    pub fn max_delay(&self) -> f64 {
        self.avg_delay.iter().copied().fold(0.0, f64::max)
    }

    pub fn all_delay_ok(&self) -> bool {
        self.delay_ok.iter().all(|&ok| ok)
    }

    pub fn feasible(&self) -> bool {
        self.power_ok && self.all_delay_ok()
    }
}

/// Running sums behind [`SimSummary`].
#[derive(Debug, Clone)]
pub struct SummaryAccumulator {
    skip: u64,
    seen: u64,
    slots: u64,
    power: f64,
    backlog: Vec<u64>,
    admitted: Vec<u64>,
    drops: Vec<u64>,
}

impl SummaryAccumulator {
    /// Ignores the first `warmup` records pushed.
    pub fn new(num_services: usize, warmup: u64) -> Self {
        SummaryAccumulator {
            skip: warmup,
            seen: 0,
            slots: 0,
            power: 0.0,
            backlog: vec![0; num_services],
            admitted: vec![0; num_services],
            drops: vec![0; num_services],
        }
    }

    pub fn push(&mut self, rec: &SlotTrace) {
        self.seen += 1;
        if self.seen <= self.skip {
            return;
        }
        self.slots += 1;
        self.power += rec.power;
        for k in 0..self.backlog.len() {
            self.backlog[k] += rec.backlog[k];
            self.admitted[k] += rec.arrivals[k] - rec.drops[k];
            self.drops[k] += rec.drops[k];
        }
    }

    pub fn finish(&self, cfg: &ScenarioConfig) -> Result<SimSummary> {
        if self.slots == 0 {
            return Err(Error::Domain("cannot summarise an empty trace".into()));
        }
        let n = self.slots as f64;
        let avg_backlog: Vec<f64> = self.backlog.iter().map(|&q| q as f64 / n).collect();
        let empirical_lambda: Vec<f64> = self.admitted.iter().map(|&a| a as f64 / n).collect();
        let avg_delay = avg_backlog
            .iter()
            .zip(&empirical_lambda)
            .map(|(&q, &l)| {
                if l > 0.0 {
                    q / l
                } else if q > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .collect();
        let delay_ok = avg_backlog
            .iter()
            .zip(&empirical_lambda)
            .zip(&cfg.traffic.delay_bounds)
            .map(|((&q, &l), &w)| q <= w * l)
            .collect();
        let avg_power = self.power / n;
        Ok(SimSummary {
            slots: self.slots,
            avg_power,
            avg_backlog,
            avg_delay,
            empirical_lambda,
            delay_ok,
            power_ok: avg_power <= cfg.traffic.avg_power,
            total_drops: self.drops.clone(),
        })
    }
}

/// Time averages over a trace, skipping `cfg.warmup` leading slots.
pub fn summarize(trace: &[SlotTrace], cfg: &ScenarioConfig) -> Result<SimSummary> {
    let first = trace
        .first()
        .ok_or_else(|| Error::Domain("cannot summarise an empty trace".into()))?;
    let mut acc = SummaryAccumulator::new(first.num_services(), cfg.warmup);
    trace.iter().for_each(|r| acc.push(r));
    acc.finish(cfg)
}

/// Per-packet sojourn bookkeeping, FIFO within each service.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PacketDelays {
    /// Packets served, per service.
    pub served: Vec<u64>,
    /// Sum over served packets of (service slot - arrival slot).
    pub total_delay: Vec<u64>,
    queues: Vec<VecDeque<(u64, u64)>>,
}

impl PacketDelays {
    fn new(k: usize) -> Self {
        PacketDelays {
            served: vec![0; k],
            total_delay: vec![0; k],
            queues: vec![VecDeque::new(); k],
        }
    }

    fn serve(&mut self, k: usize, slot: u64, mut count: u64) {
        while count > 0 {
            let front = self.queues[k]
                .front_mut()
                .expect("served packets are queued");
            let take = count.min(front.1);
            self.served[k] += take;
            self.total_delay[k] += take * (slot - front.0);
            front.1 -= take;
            count -= take;
            if front.1 == 0 {
                self.queues[k].pop_front();
            }
        }
    }

    fn admit(&mut self, k: usize, slot: u64, count: u64) {
        if count > 0 {
            self.queues[k].push_back((slot, count));
        }
    }

    /// Mean delay of served packets, per service.
    pub fn mean(&self) -> Vec<f64> {
        self.served
            .iter()
            .zip(&self.total_delay)
            .map(|(&n, &d)| if n > 0 { d as f64 / n as f64 } else { 0.0 })
            .collect()
    }

    /// Packets still queued and the summed number of slot starts each has
    /// been present for, as of the start of slot `now`.
    pub fn residual(&self, now: u64) -> Vec<(u64, u64)> {
        self.queues
            .iter()
            .map(|q| {
                q.iter()
                    .fold((0, 0), |(n, age), &(a, c)| (n + c, age + c * (now - 1 - a)))
            })
            .collect()
    }
}

/// One simulation run, advanced a slot at a time.
#[derive(Debug)]
pub struct Simulation<'a> {
    cfg: &'a ScenarioConfig,
    policy: &'a Policy,
    state: SystemState,
    sampler: ArrivalSampler,
    packets: Option<PacketDelays>,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a ScenarioConfig, policy: &'a Policy, seed: u64) -> Self {
        Simulation {
            cfg,
            policy,
            state: SystemState::new(cfg.num_services()),
            sampler: ArrivalSampler::new(seed, &cfg.traffic.arrival_rates),
            packets: None,
        }
    }

    /// Enables per-packet delay tracking.
    pub fn track_packets(mut self) -> Self {
        self.packets = Some(PacketDelays::new(self.cfg.num_services()));
        self
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn packet_delays(&self) -> Option<&PacketDelays> {
        self.packets.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.state.slot >= self.cfg.horizon
    }

    /// Runs one slot and returns its record.
    pub fn step(&mut self) -> Result<SlotTrace> {
        let cfg = self.cfg;
        let t = self.state.slot;
        let ch = ChannelSample::at(t, &cfg.geometry, &cfg.radio);
        let ControlAction {
            power,
            allocation,
            capacity,
            capacity_cap,
        } = policy::decide(self.policy, &self.state, &ch, cfg)?;

        self.check_action(t, &ch, power, &allocation)?;

        let observed = self.state.clone();
        let mut arrivals = self.sampler.sample();
        queues::update_real_queue(
            &mut self.state,
            &allocation,
            &mut arrivals,
            cfg.traffic.buffer_cap,
        )
        .map_err(|e| Error::Invariant {
            slot: t,
            message: e.to_string(),
        })?;
        queues::update_virtual_delay(&mut self.state, &cfg.traffic);
        queues::update_virtual_power(&mut self.state, power, cfg.traffic.avg_power);
        self.state.slot += 1;
        self.check_state(t)?;

        if let Some(packets) = self.packets.as_mut() {
            for k in 0..allocation.len() {
                packets.serve(k, t, allocation[k]);
                packets.admit(k, t, arrivals.counts[k] - arrivals.dropped[k]);
            }
        }

        let power_queue = observed.power_queue_value();
        Ok(SlotTrace {
            slot: t,
            distance: ch.distance,
            noise_equiv: ch.noise_equiv,
            capacity_cap,
            power,
            capacity,
            served: allocation,
            arrivals: arrivals.counts,
            backlog: observed.backlog,
            delay_queue: observed.delay_queue,
            power_queue,
            drops: arrivals.dropped,
        })
    }

    fn check_action(
        &self,
        t: u64,
        ch: &ChannelSample,
        power: f64,
        allocation: &[u64],
    ) -> Result<()> {
        let cfg = self.cfg;
        if !(power >= 0.0 && power <= cfg.radio.max_power * (1.0 + POWER_CAP_SLACK)) {
            return Err(Error::Invariant {
                slot: t,
                message: format!("power {power} outside [0, {}]", cfg.radio.max_power),
            });
        }
        let sent: u64 = allocation.iter().sum();
        let carried = channel::link_capacity(power, ch.noise_equiv, cfg.radio.eta);
        if sent > carried {
            return Err(Error::Invariant {
                slot: t,
                message: format!("{sent} packets sent but power {power} carries {carried}"),
            });
        }
        Ok(())
    }

    fn check_state(&self, t: u64) -> Result<()> {
        let s = &self.state;
        let y = s.power_queue_value();
        if s.power_queue.iter().any(|&v| v != y) || y < 0.0 {
            return Err(Error::Invariant {
                slot: t,
                message: format!("power queues diverged: {:?}", s.power_queue),
            });
        }
        if let Some(k) = (0..s.num_services()).find(|&k| s.delay_queue[k] < s.backlog[k] as f64) {
            return Err(Error::Invariant {
                slot: t,
                message: format!(
                    "delay queue {} below backlog {} for service {k}",
                    s.delay_queue[k], s.backlog[k]
                ),
            });
        }
        Ok(())
    }
}

/// Full run: every slot's record and the summary.
pub fn run(
    cfg: &ScenarioConfig,
    policy: &Policy,
    seed: u64,
) -> Result<(Vec<SlotTrace>, SimSummary)> {
    cfg.validate()?;
    let mut sim = Simulation::new(cfg, policy, seed);
    let mut trace = Vec::with_capacity(cfg.horizon as usize);
    while !sim.is_finished() {
        trace.push(sim.step()?);
    }
    let summary = summarize(&trace, cfg)?;
    Ok((trace, summary))
}

/// Run that keeps only the summary.
pub fn run_summary(cfg: &ScenarioConfig, policy: &Policy, seed: u64) -> Result<SimSummary> {
    cfg.validate()?;
    let mut sim = Simulation::new(cfg, policy, seed);
    let mut acc = SummaryAccumulator::new(cfg.num_services(), cfg.warmup);
    while !sim.is_finished() {
        acc.push(&sim.step()?);
    }
    acc.finish(cfg)
}

/// Re-applies the queue updates to each record and checks that they
/// reproduce the next record exactly.
pub fn replay_check(trace: &[SlotTrace], cfg: &ScenarioConfig) -> Result<()> {
    let t = &cfg.traffic;
    for pair in trace.windows(2) {
        let (cur, next) = (&pair[0], &pair[1]);
        let fail = |message: String| Error::Invariant {
            slot: cur.slot,
            message,
        };
        if next.slot != cur.slot + 1 {
            return Err(fail(format!("next record is slot {}", next.slot)));
        }
        for k in 0..cur.num_services() {
            let raw = cur.backlog[k] - cur.served[k] + cur.arrivals[k];
            let q = raw.min(t.buffer_cap);
            if q != next.backlog[k] || raw - q != cur.drops[k] {
                return Err(fail(format!("backlog of service {k} does not replay")));
            }
            let x = (cur.delay_queue[k] - t.backlog_budget(k)).max(0.0) + q as f64;
            if x.to_bits() != next.delay_queue[k].to_bits() {
                return Err(fail(format!(
                    "delay queue of service {k}: {x} != {}",
                    next.delay_queue[k]
                )));
            }
        }
        let y = (cur.power_queue - t.avg_power).max(0.0) + cur.power;
        if y.to_bits() != next.power_queue.to_bits() {
            return Err(fail(format!("power queue: {y} != {}", next.power_queue)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyKind;

    fn small(horizon: u64) -> ScenarioConfig {
        ScenarioConfig {
            horizon,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn no_traffic_stays_idle() {
        let mut cfg = small(2000);
        cfg.set_arrival_rate(0.0);
        let (trace, summary) = run(&cfg, &Policy::proposed(), 3).unwrap();
        assert_eq!(summary.avg_power, 0.0);
        assert!(trace
            .iter()
            .all(|r| r.backlog.iter().all(|&q| q == 0) && r.power_queue == 0.0));
        assert!(trace
            .iter()
            .all(|r| r.delay_queue.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn same_seed_same_trace() {
        let cfg = small(3000);
        let a = run(&cfg, &Policy::proposed(), 11).unwrap();
        let b = run(&cfg, &Policy::proposed(), 11).unwrap();
        assert_eq!(a, b);
        let c = run(&cfg, &Policy::proposed(), 12).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn summary_examples() {
        let cfg = small(10);
        let rec = |t| SlotTrace {
            slot: t,
            distance: 50.0,
            noise_equiv: 1.0,
            capacity_cap: 1.0,
            power: 36.0,
            capacity: 0,
            served: vec![20],
            arrivals: vec![20],
            backlog: vec![300],
            delay_queue: vec![300.0],
            power_queue: 0.0,
            drops: vec![0],
        };
        let trace: Vec<_> = (0..10).map(rec).collect();
        let mut one = cfg.clone();
        one.traffic.arrival_rates = vec![20.0];
        one.traffic.delay_bounds = vec![15.0];
        let s = summarize(&trace, &one).unwrap();
        assert_eq!(s.avg_power, 36.0);
        assert_eq!(s.avg_delay, vec![15.0]);
        assert_eq!(s.delay_ok, vec![true]);
        assert!(s.power_ok);
        assert!(summarize(&[], &one).is_err());
    }

    #[test]
    fn replay_accepts_runs_and_rejects_tampering() {
        for kind in PolicyKind::ALL {
            let cfg = small(2500);
            let policy = Policy::build(kind, &cfg).unwrap();
            let (mut trace, _) = run(&cfg, &policy, 5).unwrap();
            replay_check(&trace, &cfg).unwrap();
            trace[100].delay_queue[0] += 1.0;
            assert!(replay_check(&trace, &cfg).is_err());
        }
    }

    #[test]
    fn packet_delays_match_backlog_sum() {
        let cfg = small(4000);
        let policy = Policy::proposed();
        let mut sim = Simulation::new(&cfg, &policy, 8).track_packets();
        let mut backlog_sum = vec![0u64; cfg.num_services()];
        while !sim.is_finished() {
            let r = sim.step().unwrap();
            for k in 0..backlog_sum.len() {
                backlog_sum[k] += r.backlog[k];
            }
        }
        let delays = sim.packet_delays().unwrap();
        let residual = delays.residual(cfg.horizon);
        for k in 0..backlog_sum.len() {
            assert_eq!(
                backlog_sum[k],
                delays.total_delay[k] + residual[k].1,
                "service {k}"
            );
        }
    }

    #[test]
    fn warmup_skips_leading_slots() {
        let mut cfg = small(2000);
        let (trace, full) = run(&cfg, &Policy::proposed(), 2).unwrap();
        cfg.warmup = 1000;
        let tail = summarize(&trace, &cfg).unwrap();
        assert_eq!(tail.slots, 1000);
        assert_eq!(
            summarize(
                &trace[1000..],
                &ScenarioConfig {
                    warmup: 0,
                    ..cfg.clone()
                }
            )
            .unwrap(),
            tail
        );
        assert_eq!(full.slots, 2000);
    }
}
