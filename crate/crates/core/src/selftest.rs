//! Quick built-in consistency checks behind the `selftest` CLI verb.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel;
use crate::config::ScenarioConfig;
use crate::policy::{self, Policy, PolicyKind};
use crate::sim;
use crate::solver::{self, SlotInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, failure: Option<String>, ok_detail: String) -> Self {
        CheckResult {
            name,
            passed: failure.is_none(),
            detail: failure.unwrap_or(ok_detail),
        }
    }
}

fn random_instance(rng: &mut ChaCha8Rng) -> SlotInstance {
    let k = rng.gen_range(1..=8);
    let weights = (0..k).map(|_| rng.gen_range(0.0..=100.0)).collect();
    let backlogs = (0..k).map(|_| rng.gen_range(0..=50)).collect();
    let beta = 10f64.powf(rng.gen_range(-6.0..=2.0));
    let cap = rng.gen_range(0.0..=600.0);
    SlotInstance::with_capacity_cap(
        weights,
        backlogs,
        beta,
        0.048,
        1.0,
        cap,
        solver::DEFAULT_TOLERANCE,
    )
    .expect("generated instance is valid")
}

fn solver_matches_enumeration(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let mut failure = None;
    for i in 0..n {
        let inst = random_instance(rng);
        let fast = solver::solve_slot(&inst).expect("solve");
        let slow = solver::brute_force_slot(&inst).expect("enumerate");
        let scale = slow.objective.abs().max(1.0);
        if (fast.objective - slow.objective).abs() > 1e-9 * scale {
            failure = Some(format!(
                "instance {i}: {} vs {}",
                fast.objective, slow.objective
            ));
            break;
        }
    }
    CheckResult::new(
        "solver-vs-enumeration",
        failure,
        format!("{n} random instances"),
    )
}

fn best_allocation(weights: &[f64], backlogs: &[u64], capacity: u64) -> Option<f64> {
    fn go(k: usize, left: u64, w: &[f64], q: &[u64], acc: f64, best: &mut Option<f64>) {
        if k == w.len() {
            if left == 0 {
                *best = Some(best.map_or(acc, |b: f64| b.max(acc)));
            }
            return;
        }
        for m in 0..=q[k].min(left) {
            go(k + 1, left - m, w, q, acc + w[k] * m as f64, best);
        }
    }
    let mut best = None;
    go(0, capacity, weights, backlogs, 0.0, &mut best);
    best
}

fn greedy_is_optimal(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let mut failure = None;
    'outer: for i in 0..n {
        let k = rng.gen_range(1..=4);
        let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0..=5) as f64).collect();
        let backlogs: Vec<u64> = (0..k).map(|_| rng.gen_range(0..=6)).collect();
        let inst = SlotInstance::with_capacity_cap(
            weights.clone(),
            backlogs.clone(),
            0.0,
            0.048,
            1.0,
            100.0,
            1e-3,
        )
        .expect("valid");
        for c in 0..=inst.total_backlog().min(12) {
            let greedy = solver::m1_value(c as f64, &inst).expect("in range");
            let best = best_allocation(&weights, &backlogs, c).expect("feasible");
            if greedy != best {
                failure = Some(format!("instance {i}, C={c}: greedy {greedy} vs {best}"));
                break 'outer;
            }
        }
    }
    CheckResult::new("greedy-optimality", failure, format!("{n} small instances"))
}

fn objective_is_concave(rng: &mut ChaCha8Rng, n: usize) -> CheckResult {
    let mut failure = None;
    'outer: for i in 0..n {
        let inst = random_instance(rng);
        let top = inst.integer_upper_bound();
        let m = |c: u64| solver::objective(c as f64, &inst).expect("in range");
        for c in 1..top {
            let second = m(c + 1) - 2.0 * m(c) + m(c - 1);
            if second > 1e-9 * m(c).abs().max(1.0) {
                failure = Some(format!("instance {i}, C={c}: second difference {second}"));
                break 'outer;
            }
        }
    }
    CheckResult::new(
        "discrete-concavity",
        failure,
        format!("{n} random instances"),
    )
}

fn capacity_round_trip() -> CheckResult {
    let mut failure = None;
    for n in [1.244e-7, 0.101] {
        for c in 0..=2000u64 {
            let p = channel::power_for_capacity(c as f64, n, 0.048);
            if channel::link_capacity(p, n, 0.048) != c {
                failure = Some(format!("N={n}, C={c}"));
            }
        }
    }
    CheckResult::new("capacity-round-trip", failure, "C in 0..=2000".into())
}

fn water_filling_budget(cfg: &ScenarioConfig) -> CheckResult {
    let noise: Vec<f64> = (0..cfg.geometry.period_slots())
        .map(|t| channel::noise_equiv(channel::distance_at(t, &cfg.geometry), &cfg.radio))
        .collect();
    let failure = match policy::wfpa_profile(&noise, cfg.traffic.avg_power) {
        Ok(p) => {
            let mean = p.iter().sum::<f64>() / p.len() as f64;
            let rel = ((mean - cfg.traffic.avg_power) / cfg.traffic.avg_power).abs();
            (rel > 1e-6).then(|| format!("mean {mean} W"))
        }
        Err(e) => Some(e.to_string()),
    };
    CheckResult::new("water-filling-budget", failure, "one cell period".into())
}

fn replay_and_determinism(cfg: &ScenarioConfig) -> CheckResult {
    let cfg = ScenarioConfig {
        horizon: 3000,
        ..cfg.clone()
    };
    let mut failure = None;
    for kind in PolicyKind::ALL {
        let outcome = Policy::build(kind, &cfg).and_then(|p| {
            let a = sim::run(&cfg, &p, cfg.seed)?;
            let b = sim::run(&cfg, &p, cfg.seed)?;
            sim::replay_check(&a.0, &cfg)?;
            Ok(a == b)
        });
        match outcome {
            Ok(true) => {}
            Ok(false) => failure = Some(format!("{kind}: runs differ")),
            Err(e) => failure = Some(format!("{kind}: {e}")),
        }
    }
    CheckResult::new("trace-replay", failure, "3000 slots, all policies".into())
}

/// Runs every check; `seed` drives the random instances.
pub fn run_all(cfg: &ScenarioConfig, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        solver_matches_enumeration(&mut rng, 300),
        greedy_is_optimal(&mut rng, 300),
        objective_is_concave(&mut rng, 300),
        capacity_round_trip(),
        water_filling_budget(cfg),
        replay_and_determinism(cfg),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_on_defaults() {
        for check in run_all(&ScenarioConfig::default(), 1) {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
