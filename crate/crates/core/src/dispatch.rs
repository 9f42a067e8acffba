//! Upper level: hydrogen dispatch for a fixed charging schedule.
//!
//! The charging bill at station `i` is `E_i * tou * max((B_i - E^h_i) / B_i, 0)`
//! where `E_i` is the energy drawn by EVs assigned there. Replacing the
//! clamped ratio by an epigraph variable `b_i >= ratio, b_i >= 0` is exact
//! because `E_i * tou >= 0`, so the dispatch problem is a linear program.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ev_cost::step_objective;
use crate::lp::{Cmp, LinearProgram, LpFailure};
use crate::problem::{Assignment, DispatchMatrix, StepProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

/// The dispatch LP for one schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchLp {
    /// `(producer, station)` of each dispatch variable, in variable order.
    pub dispatch_vars: Vec<(usize, usize)>,
    /// Index of the first price-ratio variable; one per station follows.
    pub ratio_offset: usize,
    pub n_producers: usize,
    pub n_stations: usize,
    /// Objective terms that do not depend on the dispatch, CNY.
    pub constant: f64,
    /// Charging energy `E_i` per station, kWh.
    pub station_energy: Vec<f64>,
    /// Price-ratio denominators `B_i` per station, kWh.
    pub station_load: Vec<f64>,
    pub delta_h: f64,
    pub tou_price: f64,
    pub capacity: Vec<f64>,
    pub program: LinearProgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchResult {
    pub h: DispatchMatrix,
    /// Clamped price ratio per station at `h`.
    pub ratios: Vec<f64>,
    /// Step objective at `h`, CNY.
    pub objective: f64,
    pub status: LpStatus,
}

impl DispatchLp {
    pub fn n_vars(&self) -> usize {
        self.program.n_vars()
    }

    fn var_name(&self, v: usize) -> String {
        if v < self.ratio_offset {
            let (k, i) = self.dispatch_vars[v];
            format!("H_{k}_{i}")
        } else {
            format!("b_{}", v - self.ratio_offset)
        }
    }

    /// Objective value of a dispatch under this LP, with the ratio at its
    /// tight value.
    pub fn evaluate(&self, h: &DispatchMatrix) -> f64 {
        let mut total = self.constant;
        total += self.program.objective[..self.ratio_offset]
            .iter()
            .zip(&self.dispatch_vars)
            .map(|(c, (k, i))| c * h.get(*k, *i))
            .sum::<f64>();
        for i in 0..self.n_stations {
            total += self.station_energy[i] * self.tou_price * self.ratio_at(h, i);
        }
        total
    }

    fn ratio_at(&self, h: &DispatchMatrix, i: usize) -> f64 {
        let b = self.station_load[i];
        ((b - h.column_sum(i) * self.delta_h) / b).max(0.0)
    }

    /// CPLEX LP text form; the objective constant is noted in a comment.
    pub fn to_lp_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "\\ hydrogen dispatch");
        let _ = writeln!(s, "\\ objective constant: {}", self.constant);
        let _ = writeln!(s, "Minimize");
        let mut obj = String::from(" obj:");
        let mut any = false;
        for (v, c) in self.program.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(
                    obj,
                    " {} {} {}",
                    if *c < 0.0 { "-" } else { "+" },
                    c.abs(),
                    self.var_name(v)
                );
                any = true;
            }
        }
        if !any {
            obj.push_str(" 0 b_0");
        }
        let _ = writeln!(s, "{obj}");
        let _ = writeln!(s, "Subject To");
        for c in &self.program.constraints {
            let mut line = format!(" {}:", c.name);
            for (v, a) in &c.coeffs {
                let _ = write!(
                    line,
                    " {} {} {}",
                    if *a < 0.0 { "-" } else { "+" },
                    a.abs(),
                    self.var_name(*v)
                );
            }
            let _ = writeln!(s, "{line} {} {}", c.cmp, c.rhs);
        }
        let _ = writeln!(s, "Bounds");
        for v in 0..self.n_vars() {
            let _ = writeln!(s, " {} >= 0", self.var_name(v));
        }
        let _ = writeln!(s, "End");
        s
    }
}

/// Formulate the dispatch LP for a fixed, feasible schedule `g`.
pub fn build_lp(problem: &StepProblem, g: &Assignment) -> Result<DispatchLp> {
    problem.check_assignment(g)?;
    let ns = problem.n_stations();
    let np = problem.n_producers();
    let zero = DispatchMatrix::zeros(np, ns);
    // everything except the charging bill and delivery is independent of H
    let at_zero = step_objective(problem, g, &zero)?;
    let constant = at_zero.total - at_zero.charge - at_zero.delivery;

    let mut station_energy = vec![0.0; ns];
    for (j, slot) in g.slots.iter().enumerate() {
        if let Some(slot) = slot {
            let t = problem.edge_terms(j, slot.station, 0.0).ok_or(Error::Unreachable {
                request: j,
                station: slot.station,
            })?;
            station_energy[slot.station] += t.energy_kwh;
        }
    }
    let station_load: Vec<f64> = problem.stations.iter().map(|s| s.load_kwh()).collect();

    let mut dispatch_vars = Vec::new();
    for k in 0..np {
        for i in 0..ns {
            if problem.supply.get(k, i) {
                dispatch_vars.push((k, i));
            }
        }
    }
    let ratio_offset = dispatch_vars.len();
    let mut program = LinearProgram::new(ratio_offset + ns);
    for (v, (k, _)) in dispatch_vars.iter().enumerate() {
        program.objective[v] = problem.producers[*k].delivery;
    }
    for (i, e) in station_energy.iter().enumerate() {
        program.objective[ratio_offset + i] = e * problem.tou_price;
    }
    for k in 0..np {
        let coeffs: Vec<(usize, f64)> = dispatch_vars
            .iter()
            .enumerate()
            .filter(|(_, (kk, _))| *kk == k)
            .map(|(v, _)| (v, 1.0))
            .collect();
        if !coeffs.is_empty() {
            program.add(format!("cap_{k}"), coeffs, Cmp::Le, problem.producers[k].hydrogen_kw);
        }
    }
    for (i, load) in station_load.iter().enumerate() {
        // b_i + (delta / B_i) * sum_k H(k, i) >= 1
        let mut coeffs = vec![(ratio_offset + i, 1.0)];
        let scale = problem.delta_h / load;
        coeffs.extend(
            dispatch_vars
                .iter()
                .enumerate()
                .filter(|(_, (_, ii))| *ii == i)
                .map(|(v, _)| (v, scale)),
        );
        program.add(format!("ratio_{i}"), coeffs, Cmp::Ge, 1.0);
    }
    Ok(DispatchLp {
        dispatch_vars,
        ratio_offset,
        n_producers: np,
        n_stations: ns,
        constant,
        station_energy,
        station_load,
        delta_h: problem.delta_h,
        tou_price: problem.tou_price,
        capacity: problem.producers.iter().map(|p| p.hydrogen_kw).collect(),
        program,
    })
}

/// Solve the dispatch LP exactly and return a feasible dispatch whose
/// reported objective is evaluated at the tight price ratios.
pub fn solve_lp(lp: &DispatchLp) -> Result<DispatchResult> {
    let sol = lp.program.solve().map_err(|e| match e {
        LpFailure::Infeasible => Error::LpStatus("dispatch LP infeasible although zero dispatch is feasible"),
        LpFailure::Unbounded => Error::LpStatus("dispatch LP unbounded"),
        LpFailure::PivotLimit => Error::LpStatus("dispatch LP pivot limit reached"),
    })?;
    let mut h = DispatchMatrix::zeros(lp.n_producers, lp.n_stations);
    for (v, (k, i)) in lp.dispatch_vars.iter().enumerate() {
        h.set(*k, *i, sol.x[v].max(0.0));
    }
    // remove round-off excess over producer capacity
    for k in 0..lp.n_producers {
        let sum = h.row_sum(k);
        if sum > lp.capacity[k] && sum > 0.0 {
            let f = lp.capacity[k] / sum;
            for i in 0..lp.n_stations {
                let v = h.get(k, i);
                h.set(k, i, v * f);
            }
        }
    }
    let ratios = (0..lp.n_stations).map(|i| lp.ratio_at(&h, i)).collect();
    Ok(DispatchResult {
        objective: lp.evaluate(&h),
        h,
        ratios,
        status: LpStatus::Optimal,
    })
}

/// Best dispatch for schedule `g`.
pub fn optimal_dispatch(problem: &StepProblem, g: &Assignment) -> Result<DispatchResult> {
    solve_lp(&build_lp(problem, g)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ev_cost::CostConstants;
    use crate::network::BoolMatrix;
    use crate::problem::{Leg, ProducerSlice, Request, Slot, SlotKind, StationSlice};
    use approx::assert_relative_eq;

    fn one_by_one(hydrogen_kw: f64, delivery: f64, soc: f64) -> StepProblem {
        let mut supply = BoolMatrix::new(1, 1);
        supply.set(0, 0, true);
        StepProblem {
            delta_h: 0.25,
            tou_price: 1.0,
            consts: CostConstants::default(),
            requests: vec![Request {
                ev: 0,
                soc,
                capacity_kwh: 75.0,
                with_passengers: false,
                speed_kmh: 60.0,
                origin_km: 0.0,
                legs: vec![Some(Leg {
                    to_station_km: 0.0,
                    to_destination_km: 0.0,
                })],
            }],
            stations: vec![StationSlice {
                available: 1,
                departing: 0,
                base_energy_kwh: 100.0,
                demand_kwh: 0.0,
                posted_price: 1.0,
            }],
            producers: vec![ProducerSlice {
                hydrogen_kw,
                maintenance: 3.0,
                delivery,
                station_km: vec![4.0],
            }],
            supply,
        }
    }

    fn serve_all(p: &StepProblem) -> Assignment {
        Assignment {
            slots: vec![
                Some(Slot {
                    station: 0,
                    kind: SlotKind::Now,
                });
                p.n_requests()
            ],
        }
    }

    #[test]
    fn no_assignments_means_no_dispatch() {
        let p = one_by_one(500.0, 0.04, 0.2);
        let g = Assignment::empty(1);
        let r = optimal_dispatch(&p, &g).unwrap();
        assert_eq!(r.h.total(), 0.0);
        let j = step_objective(&p, &g, &r.h).unwrap().total;
        assert_relative_eq!(r.objective, j, epsilon = 1e-9);
    }

    #[test]
    fn profitable_dispatch_fills_the_load() {
        // E = 60 kWh, B = 100 kWh, marginal saving per kW = 60 * 0.25 / 100 = 0.15 > 0.04
        let p = one_by_one(1000.0, 0.04, 0.2);
        let r = optimal_dispatch(&p, &serve_all(&p)).unwrap();
        assert_relative_eq!(r.h.get(0, 0), 400.0, epsilon = 1e-6);
        assert_relative_eq!(r.ratios[0], 0.0, epsilon = 1e-9);
        // capacity-limited
        let p = one_by_one(150.0, 0.04, 0.2);
        let r = optimal_dispatch(&p, &serve_all(&p)).unwrap();
        assert_relative_eq!(r.h.get(0, 0), 150.0, epsilon = 1e-6);
        assert_relative_eq!(r.ratios[0], 1.0 - 150.0 * 0.25 / 100.0, epsilon = 1e-9);
    }

    #[test]
    fn unprofitable_dispatch_stays_at_zero() {
        // marginal saving 0.15 < delivery 0.2
        let p = one_by_one(1000.0, 0.2, 0.2);
        let r = optimal_dispatch(&p, &serve_all(&p)).unwrap();
        assert_eq!(r.h.total(), 0.0);
    }

    #[test]
    fn objective_matches_step_objective() {
        let p = one_by_one(150.0, 0.04, 0.3);
        let g = serve_all(&p);
        let r = optimal_dispatch(&p, &g).unwrap();
        let j = step_objective(&p, &g, &r.h).unwrap().total;
        assert_relative_eq!(r.objective, j, epsilon = 1e-9);
    }

    #[test]
    fn lp_text_dump_lists_every_row() {
        let p = one_by_one(150.0, 0.04, 0.3);
        let lp = build_lp(&p, &serve_all(&p)).unwrap();
        assert_eq!(lp.n_vars(), 2);
        let text = lp.to_lp_text();
        assert!(text.contains("Minimize"));
        assert!(text.contains("cap_0: + 1 H_0_0 <= 150"));
        assert!(text.contains("ratio_0: + 1 b_0 + 0.0025 H_0_0 >= 1"));
        assert!(text.trim_end().ends_with("End"));
    }
}
