//! Per-slot power control and packet allocation.
//!
//! Each slot maximises `sum_k X_k mu_k - omega * sum_k Y_k * P` over integer
//! allocations `0 <= mu_k <= Q_k` whose total fits the link capacity at `P`.
//! At the optimum the capacity is used exactly, so the problem collapses to a
//! single integer variable `C`:
//!
//! ```text
//! M(C) = M1(C) - M2(C)
//! M1(C) = best sum_k X_k mu_k with sum_k mu_k = C   (greedy, descending X)
//! M2(C) = beta * (2^(eta C) - 1),  beta = omega * N * sum_k Y_k
//! ```
//!
//! `M1` is piecewise linear with non-increasing slopes and `M2` is convex, so
//! the real relaxation of `M` is concave. A golden-section search finds the
//! relaxed maximiser and the integer optimum is the better of its floor and
//! ceiling.

use crate::channel::{power_for_capacity, tolerant_floor};
use crate::error::{Error, Result};

/// `(sqrt(5) - 1) / 2`
pub const GOLDEN_RATIO: f64 = 0.618_033_988_749_894_8;

/// Default stopping width of the golden-section search, in packets.
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

/// Largest number of candidate capacities [`brute_force_slot`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u64 = 100_000;

/// Inputs of one per-slot problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotInstance {
    weights: Vec<f64>,
    backlogs: Vec<u64>,
    beta: f64,
    eta: f64,
    noise_equiv: f64,
    power_cap: f64,
    capacity_cap: f64,
    tolerance: f64,
    /// Service indices by descending weight, ties by ascending index.
    order: Vec<usize>,
}

impl SlotInstance {
    /// Builds an instance whose capacity cap is implied by `power_cap`.
    pub fn new(
        weights: Vec<f64>,
        backlogs: Vec<u64>,
        beta: f64,
        eta: f64,
        noise_equiv: f64,
        power_cap: f64,
        tolerance: f64,
    ) -> Result<Self> {
        if !(noise_equiv > 0.0 && noise_equiv.is_finite()) {
            return Err(Error::Domain(format!(
                "noise-equivalent power {noise_equiv} must be positive"
            )));
        }
        if !(eta > 0.0) {
            return Err(Error::Domain(format!("eta {eta} must be positive")));
        }
        if !(power_cap >= 0.0 && power_cap.is_finite()) {
            return Err(Error::Domain(format!(
                "power cap {power_cap} must be finite and >= 0"
            )));
        }
        let capacity_cap = crate::channel::capacity_cap(power_cap, noise_equiv, eta);
        Self::build(
            weights,
            backlogs,
            beta,
            eta,
            noise_equiv,
            power_cap,
            capacity_cap,
            tolerance,
        )
    }

    /// Builds an instance from the capacity cap directly; the power cap is
    /// its inverse image.
    pub fn with_capacity_cap(
        weights: Vec<f64>,
        backlogs: Vec<u64>,
        beta: f64,
        eta: f64,
        noise_equiv: f64,
        capacity_cap: f64,
        tolerance: f64,
    ) -> Result<Self> {
        if !(capacity_cap >= 0.0 && capacity_cap.is_finite()) {
            return Err(Error::Domain(format!(
                "capacity cap {capacity_cap} must be finite and >= 0"
            )));
        }
        let power_cap = power_for_capacity(capacity_cap, noise_equiv, eta);
        Self::build(
            weights,
            backlogs,
            beta,
            eta,
            noise_equiv,
            power_cap,
            capacity_cap,
            tolerance,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        weights: Vec<f64>,
        backlogs: Vec<u64>,
        beta: f64,
        eta: f64,
        noise_equiv: f64,
        power_cap: f64,
        capacity_cap: f64,
        tolerance: f64,
    ) -> Result<Self> {
        if weights.len() != backlogs.len() {
            return Err(Error::Domain(format!(
                "{} weights for {} backlogs",
                weights.len(),
                backlogs.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Domain(format!("weight {w} must be finite and >= 0")));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "beta {beta} must be finite and >= 0"
            )));
        }
        if !(tolerance > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance {tolerance} must be positive"
            )));
        }
        let mut order: Vec<usize> = (0..weights.len()).collect();
        // Stable sort keeps ascending index among equal weights.
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        Ok(SlotInstance {
            weights,
            backlogs,
            beta,
            eta,
            noise_equiv,
            power_cap,
            capacity_cap,
            tolerance,
            order,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn backlogs(&self) -> &[u64] {
        &self.backlogs
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn noise_equiv(&self) -> f64 {
        self.noise_equiv
    }
    pub fn power_cap(&self) -> f64 {
        self.power_cap
    }
    pub fn capacity_cap(&self) -> f64 {
        self.capacity_cap
    }
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
    /// Service indices in greedy fill order.
    pub fn fill_order(&self) -> &[usize] {
        &self.order
    }

    pub fn total_backlog(&self) -> u64 {
        self.backlogs.iter().sum()
    }

    /// Upper end of the relaxed search interval, `min(sum Q, Cmax)`.
    pub fn upper_bound(&self) -> f64 {
        (self.total_backlog() as f64).min(self.capacity_cap)
    }

    /// Largest feasible integer capacity, `min(sum Q, floor(Cmax))`.
    pub fn integer_upper_bound(&self) -> u64 {
        self.total_backlog()
            .min(tolerant_floor(self.capacity_cap).max(0.0) as u64)
    }

    fn check_capacity(&self, capacity: f64) -> Result<()> {
        if !(capacity >= 0.0) || capacity > self.total_backlog() as f64 {
            return Err(Error::Domain(format!(
                "capacity {capacity} outside [0, {}]",
                self.total_backlog()
            )));
        }
        Ok(())
    }

    fn m1(&self, capacity: f64) -> f64 {
        let mut left = capacity;
        let mut value = 0.0;
        for &k in &self.order {
            if left <= 0.0 {
                break;
            }
            let take = left.min(self.backlogs[k] as f64);
            value += self.weights[k] * take;
            left -= take;
        }
        value
    }

    fn m2(&self, capacity: f64) -> f64 {
        let exponent = self.eta * capacity;
        debug_assert!(exponent < 1000.0, "2^{exponent} would overflow");
        self.beta * (exponent * std::f64::consts::LN_2).exp_m1()
    }

    fn objective_unchecked(&self, capacity: f64) -> f64 {
        self.m1(capacity) - self.m2(capacity)
    }
}

/// Outcome of one per-slot problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotSolution {
    pub capacity: u64,
    pub power: f64,
    pub allocation: Vec<u64>,
    pub objective: f64,
}

/// Serves `capacity` packets in descending-weight order.
pub fn greedy_allocation(capacity: u64, inst: &SlotInstance) -> Result<Vec<u64>> {
    let total = inst.total_backlog();
    if capacity > total {
        return Err(Error::Domain(format!(
            "capacity {capacity} exceeds total backlog {total}"
        )));
    }
    let mut mu = vec![0; inst.backlogs.len()];
    let mut left = capacity;
    for &k in &inst.order {
        if left == 0 {
            break;
        }
        let take = left.min(inst.backlogs[k]);
        mu[k] = take;
        left -= take;
    }
    Ok(mu)
}

/// Relaxed greedy value: whole services in fill order, the marginal one
/// fractionally.
pub fn m1_value(capacity: f64, inst: &SlotInstance) -> Result<f64> {
    inst.check_capacity(capacity)?;
    Ok(inst.m1(capacity))
}

/// Weighted power cost `beta * (2^(eta C) - 1)`.
pub fn m2_value(capacity: f64, inst: &SlotInstance) -> Result<f64> {
    if !(capacity >= 0.0) {
        return Err(Error::Domain(format!("capacity {capacity} must be >= 0")));
    }
    Ok(inst.m2(capacity))
}

/// `M1(C) - M2(C)` on `[0, min(sum Q, Cmax)]`.
pub fn objective(capacity: f64, inst: &SlotInstance) -> Result<f64> {
    inst.check_capacity(capacity)?;
    if capacity > inst.capacity_cap * (1.0 + 1e-12) + 1e-9 {
        return Err(Error::Domain(format!(
            "capacity {capacity} exceeds cap {}",
            inst.capacity_cap
        )));
    }
    Ok(inst.objective_unchecked(capacity))
}

/// Number of golden-section iterations needed to shrink `width` to `tol`.
pub fn golden_section_iterations(width: f64, tol: f64) -> u32 {
    if width <= tol {
        return 0;
    }
    ((width / tol).ln() / (1.0 / GOLDEN_RATIO).ln()).ceil() as u32
}

/// Maximises a unimodal `f` over `[lo, hi]`; returns the midpoint of the
/// final bracket and the number of iterations used.
pub fn golden_section_maximize<F>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, u32)
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut c1 = a + (1.0 - GOLDEN_RATIO) * (b - a);
    let mut c2 = a + GOLDEN_RATIO * (b - a);
    let mut f1 = f(c1);
    let mut f2 = f(c2);
    let mut iters = 0;
    while b - a > tol {
        iters += 1;
        if f1 >= f2 {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = a + (1.0 - GOLDEN_RATIO) * (b - a);
            f1 = f(c1);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + GOLDEN_RATIO * (b - a);
            f2 = f(c2);
        }
    }
    (0.5 * (a + b), iters)
}

/// Relaxed maximiser of `M` over `[0, min(sum Q, Cmax)]`.
pub fn golden_section_search(inst: &SlotInstance) -> f64 {
    let hi = inst.upper_bound();
    if !(hi > 0.0) {
        return 0.0;
    }
    golden_section_maximize(|c| inst.objective_unchecked(c), 0.0, hi, inst.tolerance).0
}

/// Better of `floor(c)` and `ceil(c)` within the feasible integer range;
/// ties go to the smaller capacity.
pub fn integer_round(relaxed: f64, inst: &SlotInstance) -> u64 {
    let top = inst.integer_upper_bound();
    let lo = (relaxed.max(0.0).floor() as u64).min(top);
    let hi = (relaxed.max(0.0).ceil() as u64).min(top);
    if hi == lo {
        return lo;
    }
    let m_lo = inst.objective_unchecked(lo as f64);
    let m_hi = inst.objective_unchecked(hi as f64);
    if m_hi > m_lo {
        hi
    } else {
        lo
    }
}

fn solution_at(capacity: u64, inst: &SlotInstance) -> Result<SlotSolution> {
    let allocation = greedy_allocation(capacity, inst)?;
    let power = power_for_capacity(capacity as f64, inst.noise_equiv, inst.eta).min(inst.power_cap);
    Ok(SlotSolution {
        capacity,
        power,
        allocation,
        objective: inst.objective_unchecked(capacity as f64),
    })
}

/// Golden-section search, integer rounding, then power from the capacity and
/// allocation from the greedy rule.
pub fn solve_slot(inst: &SlotInstance) -> Result<SlotSolution> {
    let relaxed = golden_section_search(inst);
    let capacity = integer_round(relaxed, inst);
    solution_at(capacity, inst)
}

/// Exhaustive reference: scores every feasible integer capacity with the
/// greedy allocation and keeps the best (ties to the smaller capacity).
pub fn brute_force_slot(inst: &SlotInstance) -> Result<SlotSolution> {
    let top = inst.integer_upper_bound();
    if top > BRUTE_FORCE_LIMIT {
        return Err(Error::ScaleGuard {
            size: top,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let mut best = (0u64, f64::NEG_INFINITY);
    for c in 0..=top {
        let mu = greedy_allocation(c, inst)?;
        let gain: f64 = inst
            .order
            .iter()
            .map(|&k| inst.weights[k] * mu[k] as f64)
            .sum();
        let value = gain - inst.m2(c as f64);
        if value > best.1 {
            best = (c, value);
        }
    }
    solution_at(best.0, inst)
}
