//! Receding-horizon simulation: at every step collect requests and
//! hydrogen supply, solve the step with a strategy, apply the decision and
//! advance piles, prices and demand history.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bilevel::{BilevelOptions, IterationTrace};
use crate::error::{Error, Result};
use crate::ev_cost::{step_objective, CostBreakdown};
use crate::matching::gamma_bound;
use crate::network::{supply_matrix, BoolMatrix, REACH_SLACK_KM};
use crate::problem::{Leg, ProducerSlice, Request, SlotKind, StationSlice, StepProblem};
use crate::scenario::{generate_scenario, DemandConfig, DemandHistory, RequestEvent, Scenario, ScenarioConfig};
use crate::station::{remaining_time, Occupant};
use crate::strategy::{decide, StepDecision, Strategy};

/// Demand estimate for step `t` from one station's realized per-step
/// charging energy: a normalised EWMA over up to `window` past samples,
/// newest weighted highest. Returns the prior when no sample exists.
pub fn estimate_demand(history: &[f64], t: usize, steps_per_day: usize, cfg: &DemandConfig) -> f64 {
    let lag = match cfg.history {
        DemandHistory::TimeOfDay => steps_per_day.max(1),
        DemandHistory::Recent => 1,
    };
    let (mut num, mut den, mut w) = (0.0, 0.0, 1.0);
    for k in 1..=cfg.window {
        let Some(idx) = t.checked_sub(k * lag) else { break };
        let Some(x) = history.get(idx) else { break };
        num += w * x;
        den += w;
        w *= 1.0 - cfg.alpha;
    }
    if den > 0.0 {
        num / den
    } else {
        cfg.prior_kwh
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Requests considered this step, including retries.
    pub requests: usize,
    pub new_requests: usize,
    pub breakdown: CostBreakdown,
    pub tou_price: f64,
    pub mean_price: f64,
    pub hydrogen_available_kw: f64,
    pub hydrogen_dispatched_kw: f64,
    pub gamma_bound: f64,
    /// Alternation rounds; zero for single-level strategies.
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationStats {
    pub optimized_steps: usize,
    pub mean: f64,
    pub max: usize,
    pub not_converged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: Strategy,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub totals: CostBreakdown,
    /// Distinct requests raised during the run.
    pub requests: usize,
    /// Requests that never received a pile.
    pub never_served: usize,
    pub service_rate: f64,
    pub iterations: IterationStats,
    /// Energy stored into batteries during the run, kWh.
    pub energy_delivered_kwh: f64,
    /// Energy still owed to EVs plugged in at the end, kWh.
    pub energy_outstanding_kwh: f64,
    /// Potential demand of all served requests, kWh.
    pub energy_served_kwh: f64,
    /// New requests from EVs still plugged in, which are ignored.
    pub requests_while_charging: usize,
}

/// A run with the in-memory detail that is not written to report files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    /// `(step, trace)` for every bi-level step.
    pub traces: Vec<(usize, IterationTrace)>,
    pub decisions: Vec<StepDecision>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    /// Overrides the scenario's bi-level settings when set.
    pub bilevel: Option<BilevelOptions>,
    /// Keep every step's decision in the outcome.
    pub keep_decisions: bool,
}

struct Pending {
    id: usize,
    event: RequestEvent,
}

/// Called with each step's problem and the decision about to be applied.
pub type StepProbe<'a> = dyn FnMut(usize, &StepProblem, &StepDecision) -> Result<()> + 'a;

/// Simulate the scenario under one strategy.
pub fn run_horizon(sc: &Scenario, strategy: Strategy, opts: &RunOptions) -> Result<RunOutcome> {
    run_with_probe(sc, strategy, opts, &mut |_, _, _| Ok(()))
}

pub fn run_with_probe(
    sc: &Scenario,
    strategy: Strategy,
    opts: &RunOptions,
    probe: &mut StepProbe<'_>,
) -> Result<RunOutcome> {
    let cfg = &sc.config;
    let dt = sc.delta_h();
    let bilevel = opts.bilevel.clone().unwrap_or_else(|| cfg.bilevel_options());
    let net = &sc.network;
    let ns = net.num_stations();
    let supply: BoolMatrix = supply_matrix(net, cfg.producers.tanker_speed_kmh, dt)?;
    let hps_km = net.producer_station_distances()?;
    let mut evs = sc.fleet.clone();
    let mut fcs = sc.fcs.clone();
    let mut history: Vec<Vec<f64>> = vec![Vec::with_capacity(sc.steps()); ns];
    let mut pool: Vec<Pending> = Vec::new();
    let mut served_flags: Vec<bool> = Vec::new();
    let mut requests_while_charging = 0;
    let mut next_event = 0;
    let mut records = Vec::with_capacity(sc.steps());
    let mut traces = Vec::new();
    let mut decisions = Vec::new();
    let mut totals = CostBreakdown::default();
    let mut energy_delivered = 0.0;
    let mut energy_served = 0.0;

    for t in 0..sc.steps() {
        let at = |e: Error| e.at_step(t);
        // new requests; EVs still plugged in ignore theirs
        let plugged: std::collections::BTreeSet<usize> =
            fcs.iter().flat_map(|s| s.occupants.iter().map(|o| o.ev)).collect();
        let mut new_requests = 0;
        while next_event < sc.requests.len() && sc.requests[next_event].step == t {
            let event = sc.requests[next_event].clone();
            next_event += 1;
            if plugged.contains(&event.ev) {
                requests_while_charging += 1;
                continue;
            }
            // a fresh request from an EV still waiting replaces the old one
            pool.retain(|p| p.event.ev != event.ev);
            let id = served_flags.len();
            served_flags.push(false);
            pool.push(Pending { id, event });
            new_requests += 1;
        }

        let mut requests = Vec::with_capacity(pool.len());
        for p in &pool {
            let e = &p.event;
            let ev = &mut evs[e.ev];
            ev.position = e.node;
            ev.soc = e.soc;
            ev.with_passengers = e.with_passengers;
            ev.destination = e.destination;
            ev.requesting = true;
            let radius = ev.speed_kmh * dt + REACH_SLACK_KM;
            let mut legs = Vec::with_capacity(ns);
            for i in 0..ns {
                let to_station = net.shortest_distance(e.node, net.fcs_node(i)).map_err(at)?;
                legs.push(if to_station <= radius {
                    let to_destination = match e.destination {
                        Some(d) if e.with_passengers => net.shortest_distance(net.fcs_node(i), d).map_err(at)?,
                        _ => 0.0,
                    };
                    Some(Leg {
                        to_station_km: to_station,
                        to_destination_km: to_destination,
                    })
                } else {
                    None
                });
            }
            requests.push(Request {
                ev: e.ev,
                soc: e.soc,
                capacity_kwh: ev.capacity_kwh,
                with_passengers: e.with_passengers,
                speed_kmh: ev.speed_kmh,
                origin_km: net.shortest_distance(ev.origin, e.node).map_err(at)?,
                legs,
            });
        }

        let stations: Vec<StationSlice> = fcs
            .iter_mut()
            .enumerate()
            .map(|(i, s)| {
                s.demand_estimate = estimate_demand(&history[i], t, sc.steps_per_day(), &cfg.demand);
                StationSlice {
                    available: s.available,
                    departing: s.departing(dt),
                    base_energy_kwh: s.base_load_kw * dt,
                    demand_kwh: s.demand_estimate,
                    posted_price: s.price,
                }
            })
            .collect();
        let producers: Vec<ProducerSlice> = sc
            .hps
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let out = h.step_output(sc.wind[k][t], sc.radiation[k][t]);
                ProducerSlice {
                    hydrogen_kw: out.hydrogen_kw,
                    maintenance: h.maint_wind * out.wind_kw + h.maint_pv * out.pv_kw,
                    delivery: h.delivery,
                    station_km: hps_km[k].clone(),
                }
            })
            .collect();
        let problem = StepProblem {
            delta_h: dt,
            tou_price: sc.tou[t],
            consts: cfg.costs,
            requests,
            stations,
            producers,
            supply: supply.clone(),
        };

        let decision = decide(&problem, strategy, &bilevel).map_err(at)?;
        problem.check_assignment(&decision.assignment).map_err(at)?;
        problem.check_dispatch(&decision.dispatch).map_err(at)?;
        probe(t, &problem, &decision).map_err(at)?;
        let breakdown = step_objective(&problem, &decision.assignment, &decision.dispatch).map_err(at)?;
        let prices = problem.prices(&decision.dispatch);

        // apply the schedule
        let mut arrivals: Vec<Vec<Occupant>> = vec![Vec::new(); ns];
        let mut realized = vec![0.0; ns];
        let mut served_now = vec![false; pool.len()];
        for (j, slot) in decision.assignment.slots.iter().enumerate() {
            let Some(slot) = slot else { continue };
            let r = &problem.requests[j];
            let terms = problem
                .edge_terms(j, slot.station, prices[slot.station])
                .ok_or(Error::Unreachable {
                    request: j,
                    station: slot.station,
                })
                .map_err(at)?;
            let soc = (1.0 - terms.energy_kwh / r.capacity_kwh).clamp(0.0, 1.0);
            arrivals[slot.station].push(Occupant {
                ev: r.ev,
                soc,
                capacity_kwh: r.capacity_kwh,
                power_kw: terms.power_kw,
                remaining_h: remaining_time(soc, r.capacity_kwh, terms.power_kw, cfg.costs.eta).map_err(at)?,
                pending: slot.kind == SlotKind::Next,
            });
            realized[slot.station] += terms.energy_kwh;
            energy_served += terms.energy_kwh;
            served_now[j] = true;
            let ev = &mut evs[r.ev];
            ev.origin = net.fcs_node(slot.station);
            ev.position = ev.origin;
            ev.requesting = false;
        }
        for (i, (s, arr)) in fcs.iter_mut().zip(arrivals).enumerate() {
            energy_delivered += s
                .step(arr, dt, cfg.costs.eta)
                .map_err(|e| match e {
                    Error::PileOverflow { arrivals, capacity, .. } => Error::PileOverflow {
                        station: i,
                        arrivals,
                        capacity,
                    },
                    other => other,
                })
                .map_err(at)?;
            s.check_invariants().map_err(at)?;
            s.price = prices[i];
            history[i].push(realized[i]);
        }
        let mut keep = Vec::with_capacity(pool.len());
        for (p, served) in pool.into_iter().zip(served_now) {
            if served {
                served_flags[p.id] = true;
            } else if cfg.requests.retry_unserved {
                keep.push(p);
            } else {
                evs[p.event.ev].requesting = false;
            }
        }
        pool = keep;

        let (iterations, converged) = match &decision.trace {
            Some(tr) => (tr.iterations(), tr.converged),
            None => (0, true),
        };
        if let Some(tr) = &decision.trace {
            traces.push((t, tr.clone()));
        }
        records.push(StepRecord {
            step: t,
            requests: problem.n_requests(),
            new_requests,
            breakdown,
            tou_price: problem.tou_price,
            mean_price: prices.iter().sum::<f64>() / ns.max(1) as f64,
            hydrogen_available_kw: problem.producers.iter().map(|p| p.hydrogen_kw).sum(),
            hydrogen_dispatched_kw: decision.dispatch.total(),
            gamma_bound: gamma_bound(&problem),
            iterations,
            converged,
        });
        totals.accumulate(&breakdown);
        if opts.keep_decisions {
            decisions.push(decision);
        }
    }

    let requests = served_flags.len();
    let never_served = served_flags.iter().filter(|s| !**s).count();
    let optimized: Vec<&StepRecord> = records.iter().filter(|r| r.iterations > 0).collect();
    let iterations = IterationStats {
        optimized_steps: optimized.len(),
        mean: if optimized.is_empty() {
            0.0
        } else {
            optimized.iter().map(|r| r.iterations as f64).sum::<f64>() / optimized.len() as f64
        },
        max: optimized.iter().map(|r| r.iterations).max().unwrap_or(0),
        not_converged: optimized.iter().filter(|r| !r.converged).count(),
    };
    let energy_outstanding = fcs
        .iter()
        .flat_map(|s| s.occupants.iter())
        .map(|o| (1.0 - o.soc) * o.capacity_kwh)
        .sum();
    Ok(RunOutcome {
        report: RunReport {
            strategy,
            seed: sc.seed,
            steps: records,
            totals,
            requests,
            never_served,
            service_rate: if requests == 0 {
                1.0
            } else {
                1.0 - never_served as f64 / requests as f64
            },
            iterations,
            energy_delivered_kwh: energy_delivered,
            energy_outstanding_kwh: energy_outstanding,
            energy_served_kwh: energy_served,
            requests_while_charging,
        },
        traces,
        decisions,
    })
}

/// Step objectives of every strategy evaluated on the same state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenStep {
    pub step: usize,
    /// In `Strategy::ALL` order.
    pub objectives: Vec<(Strategy, f64)>,
}

impl FrozenStep {
    pub fn objective(&self, s: Strategy) -> f64 {
        self.objectives
            .iter()
            .find(|(k, _)| *k == s)
            .map_or(f64::NAN, |(_, v)| *v)
    }
}

/// Follow the bi-level trajectory and, at every step, also solve the frozen
/// step problem with each baseline.
pub fn frozen_comparison(sc: &Scenario, opts: &RunOptions) -> Result<Vec<FrozenStep>> {
    let bilevel = opts.bilevel.clone().unwrap_or_else(|| sc.config.bilevel_options());
    let mut out = Vec::with_capacity(sc.steps());
    run_with_probe(sc, Strategy::BiBbg, opts, &mut |t, problem, decision| {
        let mut objectives = Vec::with_capacity(Strategy::ALL.len());
        for s in Strategy::ALL {
            let d = if s == Strategy::BiBbg {
                decision.clone()
            } else {
                decide(problem, s, &bilevel)?
            };
            objectives.push((s, step_objective(problem, &d.assignment, &d.dispatch)?.total));
        }
        out.push(FrozenStep { step: t, objectives });
        Ok(())
    })?;
    Ok(out)
}

/// Run every `(strategy, seed)` cell; results come back in
/// strategy-major order regardless of scheduling.
pub fn run_batch(
    cfg: &ScenarioConfig,
    strategies: &[Strategy],
    seeds: &[u64],
    opts: &RunOptions,
) -> Result<Vec<RunOutcome>> {
    let scenarios: Vec<Scenario> = seeds
        .par_iter()
        .map(|s| generate_scenario(cfg, *s))
        .collect::<Result<_>>()?;
    let cells: Vec<(Strategy, usize)> = strategies
        .iter()
        .flat_map(|s| (0..seeds.len()).map(move |i| (*s, i)))
        .collect();
    cells
        .par_iter()
        .map(|(s, i)| run_horizon(&scenarios[*i], *s, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.fleet.n_evs = 30;
        cfg.horizon.steps = 24;
        cfg
    }

    #[test]
    fn demand_estimator() {
        let cfg = DemandConfig::default();
        assert_eq!(estimate_demand(&[], 5, 96, &cfg), 100.0);
        let hist = vec![7.0; 300];
        assert_eq!(estimate_demand(&hist, 250, 96, &cfg), 7.0);
        let mut hist = vec![0.0; 100];
        hist[3] = 42.0;
        assert_eq!(estimate_demand(&hist, 99, 96, &cfg), 42.0);
        let recent = DemandConfig {
            history: DemandHistory::Recent,
            ..cfg
        };
        // weights 1, 0.5 for the last two steps
        assert!((estimate_demand(&[10.0, 40.0], 2, 96, &recent) - 30.0).abs() < 1e-12);
    }

    #[test]
    fn zero_requests_cost_only_maintenance() {
        let mut cfg = small_config();
        cfg.requests.per_ev_per_day = 0.0;
        let sc = generate_scenario(&cfg, 1).unwrap();
        let r = run_horizon(&sc, Strategy::BiBbg, &RunOptions::default())
            .unwrap()
            .report;
        assert_eq!(r.service_rate, 1.0);
        assert_eq!(r.requests, 0);
        assert!((r.totals.total - r.totals.hps_maint).abs() < 1e-9);
    }

    #[test]
    fn totals_are_sums_of_steps() {
        let sc = generate_scenario(&small_config(), 2).unwrap();
        for s in Strategy::ALL {
            let r = run_horizon(&sc, s, &RunOptions::default()).unwrap().report;
            let sum: f64 = r.steps.iter().map(|x| x.breakdown.total).sum();
            assert!((sum - r.totals.total).abs() < 1e-6 * sum.max(1.0));
            let unserved: usize = r.steps.iter().map(|x| x.breakdown.unserved).sum();
            assert_eq!(unserved, r.totals.unserved);
            assert!((0.0..=1.0).contains(&r.service_rate));
        }
    }

    #[test]
    fn energy_is_conserved() {
        let sc = generate_scenario(&small_config(), 3).unwrap();
        let r = run_horizon(&sc, Strategy::MinCost, &RunOptions::default())
            .unwrap()
            .report;
        assert!(r.energy_served_kwh > 0.0);
        let accounted = r.energy_delivered_kwh + r.energy_outstanding_kwh;
        assert!((accounted - r.energy_served_kwh).abs() < 1e-6 * r.energy_served_kwh);
    }

    #[test]
    fn batch_order_is_stable() {
        let cfg = small_config();
        let out = run_batch(
            &cfg,
            &[Strategy::MinDistance, Strategy::BiBbg],
            &[4, 5],
            &RunOptions::default(),
        )
        .unwrap();
        let keys: Vec<(Strategy, u64)> = out.iter().map(|o| (o.report.strategy, o.report.seed)).collect();
        assert_eq!(
            keys,
            vec![
                (Strategy::MinDistance, 4),
                (Strategy::MinDistance, 5),
                (Strategy::BiBbg, 4),
                (Strategy::BiBbg, 5)
            ]
        );
    }
}
