//! Fast-charging station state: pile occupancy, SoC evolution of the EVs
//! plugged in, hydrogen-aware pricing and pile maintenance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Remaining times at or below this are treated as finished.
const TIME_EPS_H: f64 = 1e-9;

/// An EV occupying a pile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupant {
    pub ev: usize,
    pub soc: f64,
    pub capacity_kwh: f64,
    pub power_kw: f64,
    /// Charging time still needed, hours.
    pub remaining_h: f64,
    /// Deferred arrival holding a pile that frees up at the next step.
    pub pending: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcsState {
    pub total_piles: usize,
    pub available: usize,
    pub occupants: Vec<Occupant>,
    /// kW
    pub base_load_kw: f64,
    /// Estimated charging demand for the current step, kWh.
    pub demand_estimate: f64,
    /// Posted charging price, CNY/kWh.
    pub price: f64,
    /// Pile maintenance, CNY/kW.
    pub maint: f64,
}

impl FcsState {
    pub fn new(total_piles: usize, base_load_kw: f64, maint: f64, price: f64) -> Self {
        Self {
            total_piles,
            available: total_piles,
            occupants: Vec::new(),
            base_load_kw,
            demand_estimate: 0.0,
            price,
            maint,
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.available > self.total_piles {
            return Err(Error::violation(
                "pile-capacity",
                format!("{} available of {} piles", self.available, self.total_piles),
            ));
        }
        if self.occupants.len() + self.available != self.total_piles {
            return Err(Error::violation(
                "pile-capacity",
                format!(
                    "{} occupants + {} free != {} piles",
                    self.occupants.len(),
                    self.available,
                    self.total_piles
                ),
            ));
        }
        for o in &self.occupants {
            if !(0.0..=1.0).contains(&o.soc) || o.remaining_h < 0.0 {
                return Err(Error::violation(
                    "occupant-state",
                    format!("EV {} soc {} remaining {}", o.ev, o.soc, o.remaining_h),
                ));
            }
        }
        Ok(())
    }

    /// Positions of occupants that finish within the coming step and leave at
    /// the next step boundary.
    fn departing_positions(&self, delta_h: f64) -> Vec<usize> {
        self.occupants
            .iter()
            .enumerate()
            .filter(|(_, o)| !o.pending && o.remaining_h <= delta_h + TIME_EPS_H)
            .map(|(p, _)| p)
            .collect()
    }

    /// `|Θ|`: piles guaranteed to free up at the next step.
    pub fn departing(&self, delta_h: f64) -> usize {
        self.departing_positions(delta_h).len()
    }

    /// Pile bookkeeping for one step: departures leave, `arrivals` take piles.
    ///
    /// Arrivals may use free piles now or piles released by departures
    /// (deferred arrivals, `pending = true`).
    pub fn pile_update(&self, arrivals: Vec<Occupant>, delta_h: f64) -> Result<FcsState> {
        let mut next = self.clone();
        next.apply_step(arrivals, delta_h, None)?;
        Ok(next)
    }

    /// Pile bookkeeping plus one step of charging for every active occupant
    /// (including arrivals using a free pile now). Returns the energy stored
    /// into batteries, kWh.
    pub fn step(&mut self, arrivals: Vec<Occupant>, delta_h: f64, eta: f64) -> Result<f64> {
        self.apply_step(arrivals, delta_h, Some(eta))
    }

    fn apply_step(&mut self, arrivals: Vec<Occupant>, delta_h: f64, eta: Option<f64>) -> Result<f64> {
        let leaving = self.departing_positions(delta_h);
        let capacity = self.available + leaving.len();
        let deferred = arrivals.iter().filter(|a| a.pending).count();
        if arrivals.len() > capacity || arrivals.len() - deferred > self.available {
            return Err(Error::PileOverflow {
                station: 0,
                arrivals: arrivals.len(),
                capacity,
            });
        }
        let mut stored = 0.0;
        let mut kept = Vec::with_capacity(self.occupants.len() + arrivals.len());
        for (p, mut o) in std::mem::take(&mut self.occupants).into_iter().enumerate() {
            if let Some(eta) = eta {
                stored += charge_occupant(&mut o, delta_h, eta)?;
            }
            if leaving.binary_search(&p).is_err() {
                kept.push(o);
            }
        }
        for mut o in arrivals {
            if !o.pending {
                if let Some(eta) = eta {
                    stored += charge_occupant(&mut o, delta_h, eta)?;
                }
            }
            kept.push(o);
        }
        for o in &mut kept {
            o.pending = false;
        }
        self.occupants = kept;
        self.available = self.total_piles - self.occupants.len();
        Ok(stored)
    }
}

fn charge_occupant(o: &mut Occupant, delta_h: f64, eta: f64) -> Result<f64> {
    if o.pending {
        return Ok(0.0);
    }
    let before = o.soc;
    o.soc = soc_step(o.soc, o.power_kw, eta, delta_h, o.capacity_kwh)?;
    o.remaining_h = if o.soc >= 1.0 {
        0.0
    } else {
        remaining_time(o.soc, o.capacity_kwh, o.power_kw, eta)?
    };
    Ok((o.soc - before) * o.capacity_kwh)
}

/// SoC after charging at `power_kw` for one step, capped at a full battery.
pub fn soc_step(soc: f64, power_kw: f64, eta: f64, delta_h: f64, capacity_kwh: f64) -> Result<f64> {
    if !(capacity_kwh > 0.0) {
        return Err(Error::param("capacity_kwh", "must be > 0"));
    }
    Ok((soc + power_kw * eta * delta_h / capacity_kwh).min(1.0))
}

/// Hours of charging needed to fill the battery.
pub fn remaining_time(soc: f64, capacity_kwh: f64, power_kw: f64, eta: f64) -> Result<f64> {
    if !(power_kw * eta > 0.0) {
        return Err(Error::param("power_kw", "charging power must be > 0"));
    }
    Ok(((1.0 - soc) * capacity_kwh / (power_kw * eta)).max(0.0))
}

/// Rated pile powers by service state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLevels {
    /// Without passengers, kW.
    pub idle_kw: f64,
    /// With passengers, kW.
    pub busy_kw: f64,
}

impl Default for PowerLevels {
    fn default() -> Self {
        Self {
            idle_kw: 44.0,
            busy_kw: 88.0,
        }
    }
}

impl PowerLevels {
    pub fn validate(&self) -> Result<()> {
        if !(self.idle_kw > 0.0 && self.busy_kw > self.idle_kw) {
            return Err(Error::param("power", "requires 0 < idle power < passenger power"));
        }
        Ok(())
    }

    /// EVs carrying passengers take the higher rate.
    pub fn charging_power(&self, with_passengers: bool) -> f64 {
        if with_passengers {
            self.busy_kw
        } else {
            self.idle_kw
        }
    }
}

/// Price after hydrogen offsets part of the station load.
///
/// `base` and `demand` must be in the same unit as `h_total`; the station
/// model passes step energies (kWh).
pub fn charging_price(base: f64, demand: f64, h_total: f64, tou: f64) -> Result<f64> {
    let load = base + demand;
    if !(load > 0.0) {
        return Err(Error::param("base + demand", "must be > 0"));
    }
    Ok(((load - h_total) / load).max(0.0) * tou)
}

pub fn fcs_maintenance(assigned_powers: &[f64], maint: f64) -> f64 {
    maint * assigned_powers.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn occupant(ev: usize, remaining_h: f64) -> Occupant {
        Occupant {
            ev,
            soc: 0.5,
            capacity_kwh: 75.0,
            power_kw: 44.0,
            remaining_h,
            pending: false,
        }
    }

    fn station(total: usize, occupants: Vec<Occupant>) -> FcsState {
        let mut s = FcsState::new(total, 200.0, 0.018, 1.0);
        s.available = total - occupants.len();
        s.occupants = occupants;
        s
    }

    #[test]
    fn soc_step_cases() {
        let s = soc_step(0.5, 44.0, 0.92, 0.25, 75.0).unwrap();
        assert_relative_eq!(s, 0.5 + 44.0 * 0.92 * 0.25 / 75.0, epsilon = 1e-12);
        assert_relative_eq!(s, 0.634933, epsilon = 1e-6);
        assert_eq!(soc_step(1.0, 88.0, 0.92, 0.25, 75.0).unwrap(), 1.0);
        assert_eq!(soc_step(0.99, 88.0, 0.92, 0.25, 75.0).unwrap(), 1.0);
        assert!(soc_step(0.5, 44.0, 0.92, 0.25, 0.0).is_err());
    }

    #[test]
    fn remaining_time_cases() {
        assert_relative_eq!(
            remaining_time(0.5, 75.0, 44.0, 0.92).unwrap(),
            37.5 / 40.48,
            epsilon = 1e-12
        );
        assert_eq!(remaining_time(1.0, 75.0, 44.0, 0.92).unwrap(), 0.0);
        assert_relative_eq!(
            remaining_time(0.0, 75.0, 88.0, 0.92).unwrap(),
            75.0 / 80.96,
            epsilon = 1e-12
        );
        assert!(remaining_time(0.5, 75.0, 0.0, 0.92).is_err());
    }

    #[test]
    fn remaining_time_drops_by_delta_per_step() {
        let (cap, p, eta, dt) = (75.0, 44.0, 0.92, 0.25);
        let mut soc = 0.1;
        let mut left = remaining_time(soc, cap, p, eta).unwrap();
        while left > dt {
            soc = soc_step(soc, p, eta, dt, cap).unwrap();
            let now = remaining_time(soc, cap, p, eta).unwrap();
            assert_relative_eq!(left - now, dt, epsilon = 1e-9);
            left = now;
        }
        assert_eq!(soc_step(soc, p, eta, dt, cap).unwrap(), 1.0);
    }

    #[test]
    fn pile_update_no_change() {
        let s = station(5, vec![]);
        let next = s.pile_update(vec![], 0.25).unwrap();
        assert_eq!(next.available, 5);
    }

    #[test]
    fn pile_update_arrivals_and_departures() {
        // 5 free of 7, two occupants finishing this step, three arrivals
        let s = station(7, vec![occupant(1, 0.1), occupant(2, 0.25)]);
        assert_eq!(s.available, 5);
        assert_eq!(s.departing(0.25), 2);
        let arrivals = (10..13).map(|ev| occupant(ev, 1.0)).collect();
        let next = s.pile_update(arrivals, 0.25).unwrap();
        assert_eq!(next.available, 5 - 3 + 2);
        next.check_invariants().unwrap();
    }

    #[test]
    fn pile_update_deferred_arrival_takes_freed_pile() {
        let s = station(1, vec![occupant(1, 0.2)]);
        assert_eq!(s.available, 0);
        let mut late = occupant(9, 1.0);
        late.pending = true;
        let next = s.pile_update(vec![late], 0.25).unwrap();
        assert_eq!(next.available, 0);
        assert_eq!(next.occupants[0].ev, 9);
        assert!(!next.occupants[0].pending);
    }

    #[test]
    fn pile_update_overflow_is_error() {
        let s = station(1, vec![occupant(1, 2.0)]);
        let err = s.pile_update(vec![occupant(2, 1.0)], 0.25).unwrap_err();
        assert!(matches!(err, Error::PileOverflow { .. }));
        // a deferred arrival cannot use a free pile that does not exist now
        let s = station(1, vec![occupant(1, 0.1)]);
        assert!(s.pile_update(vec![occupant(2, 1.0)], 0.25).is_err());
    }

    #[test]
    fn step_charges_and_reports_energy() {
        let mut s = station(2, vec![occupant(1, remaining_time(0.5, 75.0, 44.0, 0.92).unwrap())]);
        let e = s.step(vec![], 0.25, 0.92).unwrap();
        assert_relative_eq!(e, 44.0 * 0.92 * 0.25, epsilon = 1e-9);
        assert_eq!(s.available, 1);
    }

    #[test]
    fn power_levels() {
        let p = PowerLevels::default();
        assert_eq!(p.charging_power(false), 44.0);
        assert_eq!(p.charging_power(true), 88.0);
        assert!(PowerLevels {
            idle_kw: 88.0,
            busy_kw: 44.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn price_cases() {
        assert_eq!(charging_price(200.0, 100.0, 300.0, 1.0).unwrap(), 0.0);
        assert_eq!(charging_price(200.0, 100.0, 500.0, 1.0).unwrap(), 0.0);
        assert_eq!(charging_price(200.0, 100.0, 0.0, 0.8).unwrap(), 0.8);
        assert_relative_eq!(charging_price(200.0, 100.0, 150.0, 1.0).unwrap(), 0.5);
        assert!(charging_price(0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn maintenance_cases() {
        assert_eq!(fcs_maintenance(&[], 0.018), 0.0);
        assert_relative_eq!(fcs_maintenance(&[44.0, 88.0], 0.018), 2.376, epsilon = 1e-12);
        assert_eq!(fcs_maintenance(&[44.0], 0.0), 0.0);
    }
}
