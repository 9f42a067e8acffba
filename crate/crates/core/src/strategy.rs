//! Decision rules compared by the simulator: the bi-level optimiser and
//! five single-level baselines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bilevel::{optimize_step, BilevelOptions, IterationTrace};
use crate::dispatch::optimal_dispatch;
use crate::error::{Error, Result};
use crate::matching::match_at_prices;
use crate::problem::{Assignment, DispatchMatrix, Slot, SlotKind, StepProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    /// Alternating matching and dispatch LP.
    BiBbg,
    /// Greedy nearest station, then dispatch LP.
    MinDistance,
    /// Greedy cheapest posted price, then dispatch LP.
    MinPrice,
    /// Greedy smallest EV cost at posted prices, then dispatch LP.
    MinCost,
    /// All hydrogen to each producer's nearest station, then matching.
    NearDis,
    /// Hydrogen split evenly over reachable stations, then matching.
    AveDis,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::BiBbg,
        Strategy::MinDistance,
        Strategy::MinPrice,
        Strategy::MinCost,
        Strategy::NearDis,
        Strategy::AveDis,
    ];

    pub const BASELINES: [Strategy; 5] = [
        Strategy::MinDistance,
        Strategy::MinPrice,
        Strategy::MinCost,
        Strategy::NearDis,
        Strategy::AveDis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::BiBbg => "BI-BBG",
            Strategy::MinDistance => "MinDistance",
            Strategy::MinPrice => "MinPrice",
            Strategy::MinCost => "MinCost",
            Strategy::NearDis => "NearDis",
            Strategy::AveDis => "AveDis",
        }
    }

    /// Lower-case token used in file names.
    pub fn slug(self) -> &'static str {
        match self {
            Strategy::BiBbg => "bi-bbg",
            Strategy::MinDistance => "mindistance",
            Strategy::MinPrice => "minprice",
            Strategy::MinCost => "mincost",
            Strategy::NearDis => "neardis",
            Strategy::AveDis => "avedis",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.slug().replace('-', "") == key)
            .ok_or_else(|| {
                Error::param(
                    "strategy",
                    format!(
                        "unknown `{s}`; expected one of {}",
                        Strategy::ALL.map(Strategy::name).join(", ")
                    ),
                )
            })
    }
}

/// The decision a strategy takes for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub assignment: Assignment,
    pub dispatch: DispatchMatrix,
    /// Present for the bi-level optimiser only.
    pub trace: Option<IterationTrace>,
}

/// Solve one step with `strategy`.
pub fn decide(problem: &StepProblem, strategy: Strategy, opts: &BilevelOptions) -> Result<StepDecision> {
    if strategy == Strategy::BiBbg {
        let s = optimize_step(problem, opts)?;
        return Ok(StepDecision {
            assignment: s.assignment,
            dispatch: s.dispatch,
            trace: Some(s.trace),
        });
    }
    let (assignment, dispatch) = baseline_step(problem, strategy)?;
    Ok(StepDecision {
        assignment,
        dispatch,
        trace: None,
    })
}

/// One of the five baselines.
pub fn baseline_step(problem: &StepProblem, strategy: Strategy) -> Result<(Assignment, DispatchMatrix)> {
    problem.validate()?;
    match strategy {
        Strategy::BiBbg => Err(Error::param("strategy", "BI-BBG is not a baseline")),
        Strategy::MinDistance | Strategy::MinPrice | Strategy::MinCost => {
            let g = greedy_assignment(problem, strategy);
            let h = optimal_dispatch(problem, &g)?.h;
            Ok((g, h))
        }
        Strategy::NearDis | Strategy::AveDis => {
            let h = fixed_dispatch(problem, strategy == Strategy::NearDis);
            let g = match_at_prices(problem, &problem.prices(&h)).assignment;
            Ok((g, h))
        }
    }
}

/// Assign requests one at a time in request order to the best-ranked
/// reachable station with a free pile, using a pile released next step
/// only when no station has one free now. Ties go to the lower index.
pub fn greedy_assignment(problem: &StepProblem, strategy: Strategy) -> Assignment {
    let mut g = Assignment::empty(problem.n_requests());
    let mut used = vec![(0usize, 0usize); problem.n_stations()];
    for (j, r) in problem.requests.iter().enumerate() {
        let mut ranked: Vec<(f64, usize)> = (0..problem.n_stations())
            .filter_map(|i| {
                let leg = r.legs[i]?;
                let price = problem.stations[i].posted_price;
                let key = match strategy {
                    Strategy::MinPrice => price,
                    Strategy::MinCost => problem.edge_terms(j, i, price)?.ev_cost(),
                    _ => leg.to_station_km,
                };
                Some((key, i))
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let pick = ranked
            .iter()
            .find(|(_, i)| used[*i].0 < problem.stations[*i].available)
            .map(|(_, i)| (*i, SlotKind::Now))
            .or_else(|| {
                ranked
                    .iter()
                    .find(|(_, i)| used[*i].1 < problem.stations[*i].departing)
                    .map(|(_, i)| (*i, SlotKind::Next))
            });
        if let Some((station, kind)) = pick {
            match kind {
                SlotKind::Now => used[station].0 += 1,
                SlotKind::Next => used[station].1 += 1,
            }
            g.slots[j] = Some(Slot { station, kind });
        }
    }
    g
}

/// Rule-based dispatch: everything to the nearest reachable station, or an
/// even split across reachable stations.
pub fn fixed_dispatch(problem: &StepProblem, nearest: bool) -> DispatchMatrix {
    let mut h = DispatchMatrix::zeros(problem.n_producers(), problem.n_stations());
    for (k, prod) in problem.producers.iter().enumerate() {
        let targets: Vec<usize> = (0..problem.n_stations())
            .filter(|&i| problem.supply.get(k, i))
            .collect();
        if targets.is_empty() {
            continue;
        }
        if nearest {
            let i = *targets
                .iter()
                .min_by(|a, b| prod.station_km[**a].total_cmp(&prod.station_km[**b]).then(a.cmp(b)))
                .expect("nonempty");
            h.set(k, i, prod.hydrogen_kw);
        } else {
            let share = prod.hydrogen_kw / targets.len() as f64;
            for i in targets {
                h.set(k, i, share);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ev_cost::{step_objective, CostConstants};
    use crate::network::BoolMatrix;
    use crate::problem::{Leg, ProducerSlice, Request, StationSlice};

    fn station(available: usize, departing: usize, posted: f64) -> StationSlice {
        StationSlice {
            available,
            departing,
            base_energy_kwh: 100.0,
            demand_kwh: 20.0,
            posted_price: posted,
        }
    }

    fn request(ev: usize, soc: f64, km: &[Option<f64>]) -> Request {
        Request {
            ev,
            soc,
            capacity_kwh: 60.0,
            with_passengers: false,
            speed_kmh: 40.0,
            origin_km: 0.0,
            legs: km
                .iter()
                .map(|d| {
                    d.map(|d| Leg {
                        to_station_km: d,
                        to_destination_km: 0.0,
                    })
                })
                .collect(),
        }
    }

    fn problem(stations: Vec<StationSlice>, requests: Vec<Request>) -> StepProblem {
        let ns = stations.len();
        let mut supply = BoolMatrix::new(1, ns);
        for i in 0..ns {
            supply.set(0, i, true);
        }
        StepProblem {
            delta_h: 0.25,
            tou_price: 1.0,
            consts: CostConstants::default(),
            requests,
            stations,
            producers: vec![ProducerSlice {
                hydrogen_kw: 200.0,
                maintenance: 1.0,
                delivery: 0.04,
                station_km: (0..ns).map(|i| 5.0 - i as f64).collect(),
            }],
            supply,
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("BI-BBG".parse::<Strategy>().unwrap(), Strategy::BiBbg);
        assert_eq!("bibbg".parse::<Strategy>().unwrap(), Strategy::BiBbg);
        assert_eq!("mindistance".parse::<Strategy>().unwrap(), Strategy::MinDistance);
        assert_eq!("AveDis".parse::<Strategy>().unwrap(), Strategy::AveDis);
        assert!("fastest".parse::<Strategy>().is_err());
    }

    #[test]
    fn single_station_strategies_agree_on_schedule() {
        let p = problem(
            vec![station(3, 0, 1.0)],
            vec![request(0, 0.2, &[Some(2.0)]), request(1, 0.4, &[Some(3.0)])],
        );
        let reference = baseline_step(&p, Strategy::MinDistance).unwrap().0;
        for s in Strategy::BASELINES {
            assert_eq!(baseline_step(&p, s).unwrap().0, reference, "{s}");
        }
        let bi = decide(&p, Strategy::BiBbg, &BilevelOptions::default()).unwrap();
        assert_eq!(bi.assignment, reference);
    }

    #[test]
    fn uniform_prices_fall_back_to_lowest_index() {
        let p = problem(
            vec![station(1, 0, 0.8), station(1, 0, 0.8)],
            vec![request(0, 0.2, &[Some(9.0), Some(1.0)])],
        );
        let g = greedy_assignment(&p, Strategy::MinPrice);
        assert_eq!(g.slots[0].unwrap().station, 0);
    }

    #[test]
    fn min_cost_follows_request_order() {
        // hand-simulated: EV0 takes the cheap station 1, EV1 then only has
        // station 0 free now, EV2 falls back to the pile released at 1
        let p = problem(
            vec![station(1, 0, 1.0), station(1, 1, 0.5)],
            vec![
                request(0, 0.2, &[Some(1.0), Some(2.0)]),
                request(1, 0.3, &[Some(1.0), Some(2.0)]),
                request(2, 0.3, &[None, Some(2.0)]),
            ],
        );
        let g = greedy_assignment(&p, Strategy::MinCost);
        assert_eq!(
            g.slots,
            vec![
                Some(Slot {
                    station: 1,
                    kind: SlotKind::Now
                }),
                Some(Slot {
                    station: 0,
                    kind: SlotKind::Now
                }),
                Some(Slot {
                    station: 1,
                    kind: SlotKind::Next
                }),
            ]
        );
    }

    #[test]
    fn rule_based_dispatch() {
        let p = problem(vec![station(1, 0, 1.0), station(1, 0, 1.0)], vec![]);
        let near = fixed_dispatch(&p, true);
        assert_eq!(near.get(0, 1), 200.0);
        assert_eq!(near.get(0, 0), 0.0);
        let even = fixed_dispatch(&p, false);
        assert_eq!(even.get(0, 0), 100.0);
        assert_eq!(even.get(0, 1), 100.0);
    }

    #[test]
    fn every_strategy_returns_a_feasible_decision() {
        for seed in 0..30 {
            let p = crate::oracle::random_small_instance(seed, &Default::default());
            for s in Strategy::ALL {
                let d = decide(&p, s, &BilevelOptions::default()).unwrap();
                step_objective(&p, &d.assignment, &d.dispatch).unwrap();
            }
        }
    }
}
