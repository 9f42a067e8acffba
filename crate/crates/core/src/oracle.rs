//! Brute-force verifiers for small step problems: exhaustive enumeration of
//! schedules with an exact dispatch LP per schedule, the "serve as many as
//! possible" property at a fixed dispatch, and trace monotonicity.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bilevel::IterationTrace;
use crate::dispatch::optimal_dispatch;
use crate::error::{Error, Result};
use crate::ev_cost::CostConstants;
use crate::matching::gamma_bound;
use crate::network::BoolMatrix;
use crate::problem::{
    witness_text, Assignment, DispatchMatrix, Leg, ProducerSlice, Request, Slot, SlotKind, StationSlice, StepProblem,
};

/// Default cap on the number of schedules enumerated per instance.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;
/// Allowed increase between consecutive trace values, CNY.
pub const MONOTONE_TOL: f64 = 1e-6;
/// Differences at or below this are treated as ties, CNY.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmallInstanceLimits {
    pub max_evs: usize,
    pub max_stations: usize,
    pub max_producers: usize,
}

impl Default for SmallInstanceLimits {
    fn default() -> Self {
        Self {
            max_evs: 4,
            max_stations: 3,
            max_producers: 2,
        }
    }
}

/// Random small step problem with the penalty set to its bound.
pub fn random_small_instance(seed: u64, limits: &SmallInstanceLimits) -> StepProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = rng.gen_range(1..=limits.max_stations.max(1));
    let np = rng.gen_range(1..=limits.max_producers.max(1));
    let nr = rng.gen_range(0..=limits.max_evs);
    let stations = (0..ns)
        .map(|_| StationSlice {
            available: rng.gen_range(0..=2),
            departing: rng.gen_range(0..=1),
            base_energy_kwh: rng.gen_range(20.0..150.0),
            demand_kwh: rng.gen_range(0.0..100.0),
            posted_price: 1.0,
        })
        .collect();
    let mut supply = BoolMatrix::new(np, ns);
    let producers = (0..np)
        .map(|k| {
            for i in 0..ns {
                supply.set(k, i, rng.gen_bool(0.7));
            }
            ProducerSlice {
                hydrogen_kw: if rng.gen_bool(0.15) {
                    0.0
                } else {
                    rng.gen_range(0.0..600.0)
                },
                maintenance: rng.gen_range(0.0..5.0),
                delivery: rng.gen_range(0.01..0.3),
                station_km: (0..ns).map(|_| rng.gen_range(1.0..12.0)).collect(),
            }
        })
        .collect();
    let requests = (0..nr)
        .map(|j| {
            let with_passengers = rng.gen_bool(0.4);
            Request {
                ev: j,
                soc: rng.gen_range(0.05..0.6),
                capacity_kwh: rng.gen_range(40.0..90.0),
                with_passengers,
                speed_kmh: rng.gen_range(30.0..60.0),
                origin_km: rng.gen_range(0.0..10.0),
                legs: (0..ns)
                    .map(|_| {
                        rng.gen_bool(0.75).then(|| Leg {
                            to_station_km: rng.gen_range(0.0..15.0),
                            to_destination_km: if with_passengers { rng.gen_range(0.0..15.0) } else { 0.0 },
                        })
                    })
                    .collect(),
            }
        })
        .collect();
    let mut p = StepProblem {
        delta_h: 0.25,
        tou_price: rng.gen_range(0.3..1.4),
        consts: CostConstants::default(),
        requests,
        stations,
        producers,
        supply,
    };
    p.consts.gamma = gamma_bound(&p);
    p
}

/// Number of feasible schedules, or an error once it passes `budget`.
pub fn count_assignments(problem: &StepProblem, budget: u128) -> Result<u128> {
    let mut n = 0u128;
    visit_assignments(problem, &mut |_| {
        n += 1;
        n <= budget
    });
    if n > budget {
        return Err(Error::BudgetExceeded { cases: n, budget });
    }
    Ok(n)
}

/// Calls `f` with every feasible schedule in a fixed order until it
/// returns false.
pub fn visit_assignments(problem: &StepProblem, f: &mut dyn FnMut(&Assignment) -> bool) {
    fn go(
        p: &StepProblem,
        j: usize,
        g: &mut Assignment,
        used: &mut [(usize, usize)],
        f: &mut dyn FnMut(&Assignment) -> bool,
    ) -> bool {
        if j == p.n_requests() {
            return f(g);
        }
        g.slots[j] = None;
        if !go(p, j + 1, g, used, f) {
            return false;
        }
        for i in 0..p.n_stations() {
            if !p.requests[j].reachable(i) {
                continue;
            }
            for kind in [SlotKind::Now, SlotKind::Next] {
                let (cap, slot_used) = match kind {
                    SlotKind::Now => (p.stations[i].available, &mut used[i].0),
                    SlotKind::Next => (p.stations[i].departing, &mut used[i].1),
                };
                if *slot_used >= cap {
                    continue;
                }
                *slot_used += 1;
                g.slots[j] = Some(Slot { station: i, kind });
                let keep_going = go(p, j + 1, g, used, f);
                match kind {
                    SlotKind::Now => used[i].0 -= 1,
                    SlotKind::Next => used[i].1 -= 1,
                }
                if !keep_going {
                    return false;
                }
            }
        }
        g.slots[j] = None;
        true
    }
    let mut g = Assignment::empty(problem.n_requests());
    let mut used = vec![(0, 0); problem.n_stations()];
    go(problem, 0, &mut g, &mut used, f);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointOptimum {
    pub objective: f64,
    pub assignment: Assignment,
    pub dispatch: DispatchMatrix,
    pub cases: u128,
}

/// Exhaustive joint optimum: every feasible schedule, each with its exact
/// optimal dispatch. Ties keep the first schedule in enumeration order.
pub fn enumerate_joint_optimum(problem: &StepProblem, budget: u128) -> Result<JointOptimum> {
    problem.validate()?;
    let cases = count_assignments(problem, budget)?;
    let mut best: Option<JointOptimum> = None;
    let mut failure = None;
    visit_assignments(problem, &mut |g| match optimal_dispatch(problem, g) {
        Ok(d) => {
            if best.as_ref().is_none_or(|b| d.objective < b.objective) {
                best = Some(JointOptimum {
                    objective: d.objective,
                    assignment: g.clone(),
                    dispatch: d.h,
                    cases,
                });
            }
            true
        }
        Err(e) => {
            failure = Some(e);
            false
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    best.ok_or(Error::LpStatus("no feasible schedule enumerated"))
}

/// Fast objective evaluation for many schedules at one dispatch.
struct FixedDispatch {
    /// `edge[j][i]`: cost of request `j` at station `i` (now slot), if reachable.
    edge: Vec<Vec<Option<f64>>>,
    defer: f64,
    gamma: f64,
    constant: f64,
}

impl FixedDispatch {
    fn new(p: &StepProblem, h: &DispatchMatrix) -> Self {
        let prices = p.prices(h);
        let c = &p.consts;
        let edge = (0..p.n_requests())
            .map(|j| {
                (0..p.n_stations())
                    .map(|i| {
                        p.edge_terms(j, i, prices[i])
                            .map(|t| t.ev_cost() + c.c_maint * t.power_kw)
                    })
                    .collect()
            })
            .collect();
        let constant = p
            .producers
            .iter()
            .enumerate()
            .map(|(k, prod)| prod.maintenance + prod.delivery * h.row_sum(k))
            .sum();
        Self {
            edge,
            defer: c.c_wait * p.delta_h,
            gamma: c.gamma,
            constant,
        }
    }

    fn objective(&self, g: &Assignment) -> f64 {
        let mut total = self.constant;
        for (j, slot) in g.slots.iter().enumerate() {
            match slot {
                None => total += self.gamma,
                Some(s) => {
                    total += self.edge[j][s.station].unwrap_or(f64::INFINITY);
                    if s.kind == SlotKind::Next {
                        total += self.defer;
                    }
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityOrderWitness {
    pub dispatch: DispatchMatrix,
    pub smaller: Assignment,
    pub larger: Assignment,
    pub j_smaller: f64,
    pub j_larger: f64,
    /// The two objectives agree to within round-off.
    pub tie: bool,
}

impl CardinalityOrderWitness {
    /// Instance text followed by the larger schedule and the dispatch as
    /// witness lines; the smaller schedule is listed as `smaller` lines.
    pub fn to_text(&self, problem: &StepProblem) -> String {
        let mut s = problem.to_text();
        let _ = writeln!(
            s,
            "# larger schedule J={} smaller schedule J={} tie={}",
            self.j_larger, self.j_smaller, self.tie
        );
        s.push_str(&witness_text(&self.larger, &self.dispatch));
        for (j, slot) in self.smaller.slots.iter().enumerate() {
            if let Some(slot) = slot {
                let _ = writeln!(s, "smaller {j} {} {}", slot.station, slot.kind.as_str());
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CardinalityOrderVerdict {
    Pass { dispatches: usize, schedules: usize },
    Fail(Box<CardinalityOrderWitness>),
}

impl CardinalityOrderVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, CardinalityOrderVerdict::Pass { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardinalityOrderOptions {
    /// Upper limit on fixed dispatches drawn from the grid.
    pub grid_points: usize,
    pub budget: u128,
}

impl Default for CardinalityOrderOptions {
    fn default() -> Self {
        Self {
            grid_points: 64,
            budget: ENUMERATION_BUDGET,
        }
    }
}

/// Feasible dispatches on a uniform per-variable grid from zero to capacity,
/// with as many levels as fit in `max_points`.
pub fn dispatch_grid(problem: &StepProblem, max_points: usize) -> Vec<DispatchMatrix> {
    let vars: Vec<(usize, usize)> = (0..problem.n_producers())
        .flat_map(|k| (0..problem.n_stations()).map(move |i| (k, i)))
        .filter(|&(k, i)| problem.supply.get(k, i) && problem.producers[k].hydrogen_kw > 0.0)
        .collect();
    let zero = DispatchMatrix::zeros(problem.n_producers(), problem.n_stations());
    if vars.is_empty() {
        return vec![zero];
    }
    let mut levels = 2usize;
    while (levels + 1)
        .checked_pow(vars.len() as u32)
        .is_some_and(|n| n <= max_points)
    {
        levels += 1;
    }
    let total = levels.pow(vars.len() as u32);
    let mut out = Vec::new();
    for code in 0..total {
        let mut h = zero.clone();
        let mut c = code;
        for &(k, i) in &vars {
            let l = c % levels;
            c /= levels;
            h.set(k, i, problem.producers[k].hydrogen_kw * l as f64 / (levels - 1) as f64);
        }
        if problem.check_dispatch(&h).is_ok() {
            out.push(h);
        }
    }
    out
}

/// Checks that, at every tested dispatch, each schedule serving more EVs
/// is strictly cheaper than each schedule serving fewer, with the penalty
/// set to `gamma`. Dispatches tested: a grid over the feasible region plus
/// the joint optimum's dispatch.
pub fn check_cardinality_order(
    problem: &StepProblem,
    gamma: f64,
    opts: &CardinalityOrderOptions,
) -> Result<CardinalityOrderVerdict> {
    let mut p = problem.clone();
    p.consts.gamma = gamma;
    count_assignments(&p, opts.budget)?;
    let mut schedules = Vec::new();
    visit_assignments(&p, &mut |g| {
        schedules.push(g.clone());
        true
    });
    let mut dispatches = dispatch_grid(&p, opts.grid_points);
    dispatches.push(enumerate_joint_optimum(&p, opts.budget)?.dispatch);
    let max_n = p.n_requests();
    for h in &dispatches {
        let eval = FixedDispatch::new(&p, h);
        // cheapest and dearest schedule for each served count
        let mut lo: Vec<Option<(f64, usize)>> = vec![None; max_n + 1];
        let mut hi: Vec<Option<(f64, usize)>> = vec![None; max_n + 1];
        for (idx, g) in schedules.iter().enumerate() {
            let n = g.served();
            let j = eval.objective(g);
            if lo[n].is_none_or(|(v, _)| j < v) {
                lo[n] = Some((j, idx));
            }
            if hi[n].is_none_or(|(v, _)| j > v) {
                hi[n] = Some((j, idx));
            }
        }
        for (n1, small) in lo.iter().enumerate() {
            let Some((j_small, small_idx)) = *small else { continue };
            for large in &hi[n1 + 1..] {
                let Some((j_large, large_idx)) = *large else { continue };
                if j_large >= j_small - TIE_TOL {
                    return Ok(CardinalityOrderVerdict::Fail(Box::new(CardinalityOrderWitness {
                        dispatch: h.clone(),
                        smaller: schedules[small_idx].clone(),
                        larger: schedules[large_idx].clone(),
                        j_smaller: j_small,
                        j_larger: j_large,
                        tie: (j_large - j_small).abs() <= TIE_TOL,
                    })));
                }
            }
        }
    }
    Ok(CardinalityOrderVerdict::Pass {
        dispatches: dispatches.len(),
        schedules: schedules.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TraceVerdict {
    Pass,
    /// `sequence[index]` exceeds `sequence[index - 1]` by more than the tolerance.
    Increase {
        index: usize,
        from: f64,
        to: f64,
    },
    /// A recorded value lies below the known optimum.
    BelowOptimum {
        index: usize,
        value: f64,
        optimum: f64,
    },
}

impl TraceVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, TraceVerdict::Pass)
    }
}

/// Nonincreasing within `MONOTONE_TOL`, and never below `optimum` if given.
pub fn check_monotone_trace(trace: &IterationTrace, optimum: Option<f64>) -> TraceVerdict {
    check_monotone_sequence(&trace.sequence(), optimum)
}

pub fn check_monotone_sequence(seq: &[f64], optimum: Option<f64>) -> TraceVerdict {
    for (index, w) in seq.windows(2).enumerate() {
        if w[1] > w[0] + MONOTONE_TOL {
            return TraceVerdict::Increase {
                index: index + 1,
                from: w[0],
                to: w[1],
            };
        }
    }
    if let Some(opt) = optimum {
        for (index, v) in seq.iter().enumerate() {
            if *v < opt - MONOTONE_TOL {
                return TraceVerdict::BelowOptimum {
                    index,
                    value: *v,
                    optimum: opt,
                };
            }
        }
    }
    TraceVerdict::Pass
}
