//! Alternating optimisation of one step: matching with the dispatch fixed,
//! then the dispatch LP with the schedule fixed, until the step objective
//! stops moving.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispatch::optimal_dispatch;
use crate::error::{Error, Result};
use crate::ev_cost::{step_objective, CostBreakdown};
use crate::matching::{gamma_bound, match_at_prices};
use crate::problem::{Assignment, DispatchMatrix, StepProblem};

/// Where the alternation starts.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// No dispatch and no assignments.
    #[default]
    Zero,
    /// A random feasible dispatch drawn from the given seed.
    Random(u64),
    /// A caller-provided feasible pair.
    Given(Assignment, DispatchMatrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilevelOptions {
    /// Convergence threshold on the change of the step objective, CNY.
    pub epsilon: f64,
    pub max_iter: usize,
    pub init: Init,
}

impl Default for BilevelOptions {
    fn default() -> Self {
        Self {
            epsilon: 2.0,
            max_iter: 50,
            init: Init::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// Objective after the matching half-step.
    pub j_matching: f64,
    /// Objective after the dispatch half-step.
    pub j_dispatch: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Objective of the starting point.
    pub j_initial: f64,
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.rows.len()
    }

    /// Every recorded objective value in order, starting point first.
    pub fn sequence(&self) -> Vec<f64> {
        let mut out = vec![self.j_initial];
        for r in &self.rows {
            out.push(r.j_matching);
            out.push(r.j_dispatch);
        }
        out
    }

    pub fn final_objective(&self) -> f64 {
        self.rows.last().map_or(self.j_initial, |r| r.j_dispatch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSolution {
    pub assignment: Assignment,
    pub dispatch: DispatchMatrix,
    pub objective: f64,
    pub breakdown: CostBreakdown,
    pub trace: IterationTrace,
}

/// A feasible dispatch with random shares of each producer's capacity.
pub fn random_dispatch(problem: &StepProblem, seed: u64) -> DispatchMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = DispatchMatrix::zeros(problem.n_producers(), problem.n_stations());
    for (k, prod) in problem.producers.iter().enumerate() {
        let targets: Vec<usize> = (0..problem.n_stations())
            .filter(|&i| problem.supply.get(k, i))
            .collect();
        if targets.is_empty() {
            continue;
        }
        let shares: Vec<f64> = targets.iter().map(|_| rng.gen::<f64>()).collect();
        let used = rng.gen::<f64>();
        let norm: f64 = shares.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        for (i, s) in targets.iter().zip(shares) {
            h.set(k, *i, prod.hydrogen_kw * used * s / norm);
        }
    }
    h
}

// With equal unserved counts the penalty cancels; comparing the remaining
// terms keeps a large penalty from swamping them in floating point.
fn no_worse(a: &CostBreakdown, b: &CostBreakdown) -> bool {
    if a.unserved == b.unserved {
        a.without_penalty() <= b.without_penalty()
    } else {
        a.total <= b.total
    }
}

fn difference(a: &CostBreakdown, b: &CostBreakdown) -> f64 {
    if a.unserved == b.unserved {
        (a.without_penalty() - b.without_penalty()).abs()
    } else {
        (a.total - b.total).abs()
    }
}

/// Optimise one step by alternating the two levels.
///
/// Returns the best pair seen; `trace.converged` is false when `max_iter`
/// rounds pass without the objective settling within `epsilon`.
pub fn optimize_step(problem: &StepProblem, opts: &BilevelOptions) -> Result<StepSolution> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be > 0"));
    }
    if opts.max_iter == 0 {
        return Err(Error::param("max_iter", "must be >= 1"));
    }
    problem.validate()?;
    let bound = gamma_bound(problem);
    if problem.consts.gamma < bound {
        warn!(
            "penalty {} below the bound {bound}; serving the most EVs may not be optimal",
            problem.consts.gamma
        );
    }
    let (mut g, mut h) = match &opts.init {
        Init::Zero => (
            Assignment::empty(problem.n_requests()),
            DispatchMatrix::zeros(problem.n_producers(), problem.n_stations()),
        ),
        Init::Random(seed) => (Assignment::empty(problem.n_requests()), random_dispatch(problem, *seed)),
        Init::Given(g, h) => (g.clone(), h.clone()),
    };
    let mut cur = step_objective(problem, &g, &h)?;
    let mut trace = IterationTrace {
        j_initial: cur.total,
        rows: Vec::new(),
        converged: false,
    };
    for iteration in 1..=opts.max_iter {
        let prev = cur;
        let candidate = match_at_prices(problem, &problem.prices(&h)).assignment;
        let cand = step_objective(problem, &candidate, &h)?;
        // keep the incumbent schedule on round-off level ties
        if no_worse(&cand, &cur) {
            g = candidate;
            cur = cand;
        }
        let j_matching = cur.total;
        let d = optimal_dispatch(problem, &g)?;
        let disp = step_objective(problem, &g, &d.h)?;
        if no_worse(&disp, &cur) {
            h = d.h;
            cur = disp;
        }
        trace.rows.push(TraceRow {
            iteration,
            j_matching,
            j_dispatch: cur.total,
        });
        if difference(&cur, &prev) <= opts.epsilon {
            trace.converged = true;
            break;
        }
    }
    let breakdown = step_objective(problem, &g, &h)?;
    Ok(StepSolution {
        objective: breakdown.total,
        assignment: g,
        dispatch: h,
        breakdown,
        trace,
    })
}
