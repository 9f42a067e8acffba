//! EV assignment cost and the per-step objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{RoadNetwork, REACH_SLACK_KM};
use crate::problem::{Assignment, DispatchMatrix, EdgeTerms, Leg, Request, SlotKind, StepProblem};
use crate::station::PowerLevels;

/// Cost constants shared by every EV and station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConstants {
    /// Waiting cost, CNY/h.
    pub c_wait: f64,
    /// Idle cost, CNY/h.
    pub c_idle: f64,
    /// Depreciation, CNY/km.
    pub c_depr: f64,
    /// Pile maintenance, CNY/kW.
    pub c_maint: f64,
    /// Energy used per km driven, kWh/km.
    pub e_loss: f64,
    /// Charging efficiency.
    pub eta: f64,
    #[serde(flatten)]
    pub power: PowerLevels,
    /// Penalty per EV left without a charging slot, CNY.
    pub gamma: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        Self {
            c_wait: 17.2,
            c_idle: 21.0,
            c_depr: 0.025,
            c_maint: 0.018,
            e_loss: 0.014,
            eta: 0.92,
            power: PowerLevels::default(),
            gamma: 300.0,
        }
    }
}

impl CostConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_wait", self.c_wait),
            ("c_idle", self.c_idle),
            ("c_depr", self.c_depr),
            ("c_maint", self.c_maint),
            ("e_loss", self.e_loss),
            ("gamma", self.gamma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("costs.{name}"), "must be >= 0"));
            }
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::param("costs.eta", "must lie in (0, 1]"));
        }
        self.power.validate()
    }
}

/// An EV of the fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvState {
    pub id: usize,
    pub soc: f64,
    pub capacity_kwh: f64,
    pub with_passengers: bool,
    pub position: u32,
    /// Node where the last recharge finished.
    pub origin: u32,
    /// Passenger destination; present exactly when carrying passengers.
    pub destination: Option<u32>,
    pub requesting: bool,
    pub speed_kmh: f64,
}

impl EvState {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.soc) {
            return Err(Error::param(format!("ev {}.soc", self.id), "must lie in [0, 1]"));
        }
        if self.with_passengers != self.destination.is_some() {
            return Err(Error::param(
                format!("ev {}.destination", self.id),
                "present exactly when carrying passengers",
            ));
        }
        if !(self.capacity_kwh > 0.0 && self.speed_kmh > 0.0) {
            return Err(Error::param(
                format!("ev {}", self.id),
                "capacity and speed must be > 0",
            ));
        }
        Ok(())
    }
}

/// Step cost split by category. `total` is the sum of the money columns.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub charge: f64,
    pub wait: f64,
    pub idle: f64,
    pub depreciation: f64,
    pub fcs_maint: f64,
    pub hps_maint: f64,
    pub delivery: f64,
    pub penalty: f64,
    pub total: f64,
    pub served: usize,
    pub unserved: usize,
    pub deferred: usize,
}

impl CostBreakdown {
    fn finish(mut self) -> Self {
        self.total = self.charge
            + self.wait
            + self.idle
            + self.depreciation
            + self.fcs_maint
            + self.hps_maint
            + self.delivery
            + self.penalty;
        self
    }

    /// Every money column except the penalty.
    pub fn without_penalty(&self) -> f64 {
        self.charge + self.wait + self.idle + self.depreciation + self.fcs_maint + self.hps_maint + self.delivery
    }

    /// Terms that depend only on the dispatch.
    pub fn dispatch_part(&self) -> f64 {
        self.hps_maint + self.delivery
    }

    /// Terms coupling schedule and dispatch (the charging bill).
    pub fn coupled_part(&self) -> f64 {
        self.charge
    }

    /// Terms that depend only on the schedule.
    pub fn schedule_part(&self) -> f64 {
        self.wait + self.idle + self.depreciation + self.fcs_maint + self.penalty
    }

    pub fn accumulate(&mut self, other: &CostBreakdown) {
        self.charge += other.charge;
        self.wait += other.wait;
        self.idle += other.idle;
        self.depreciation += other.depreciation;
        self.fcs_maint += other.fcs_maint;
        self.hps_maint += other.hps_maint;
        self.delivery += other.delivery;
        self.penalty += other.penalty;
        self.total += other.total;
        self.served += other.served;
        self.unserved += other.unserved;
        self.deferred += other.deferred;
    }
}

/// Energy to refill the battery plus the energy spent driving to the station.
pub fn potential_demand(soc: f64, capacity_kwh: f64, dist_to_fcs_km: f64, e_loss: f64) -> f64 {
    (1.0 - soc) * capacity_kwh + e_loss * dist_to_fcs_km
}

/// Cost terms of serving `r` at a station reached through `leg` at `price`.
pub fn assignment_terms(r: &Request, leg: Leg, price: f64, c: &CostConstants) -> EdgeTerms {
    let energy = potential_demand(r.soc, r.capacity_kwh, leg.to_station_km, c.e_loss);
    let power = c.power.charging_power(r.with_passengers);
    let charge_h = energy / (power * c.eta);
    let (wait, idle, driven) = if r.with_passengers {
        let travel_h = (leg.to_station_km + leg.to_destination_km) / r.speed_kmh;
        (
            c.c_wait * (travel_h + charge_h),
            0.0,
            r.origin_km + leg.to_station_km + leg.to_destination_km,
        )
    } else {
        (0.0, c.c_idle * charge_h, r.origin_km + leg.to_station_km)
    };
    EdgeTerms {
        energy_kwh: energy,
        power_kw: power,
        charge: energy * price,
        wait,
        idle,
        depreciation: c.c_depr * driven,
    }
}

/// Cost of sending `ev` to station `fcs` given posted prices, with distances
/// taken from the road network.
pub fn ev_assignment_cost(
    ev: &EvState,
    fcs: usize,
    prices: &[f64],
    net: &RoadNetwork,
    delta_h: f64,
    c: &CostConstants,
) -> Result<EdgeTerms> {
    let station_node = net.fcs_node(fcs);
    let to_station = net.shortest_distance(ev.position, station_node)?;
    if to_station > ev.speed_kmh * delta_h + REACH_SLACK_KM {
        return Err(Error::Unreachable {
            request: ev.id,
            station: fcs,
        });
    }
    let to_destination = match ev.destination {
        Some(d) if ev.with_passengers => net.shortest_distance(station_node, d)?,
        _ => 0.0,
    };
    let request = Request {
        ev: ev.id,
        soc: ev.soc,
        capacity_kwh: ev.capacity_kwh,
        with_passengers: ev.with_passengers,
        speed_kmh: ev.speed_kmh,
        origin_km: net.shortest_distance(ev.origin, ev.position)?,
        legs: Vec::new(),
    };
    Ok(assignment_terms(
        &request,
        Leg {
            to_station_km: to_station,
            to_destination_km: to_destination,
        },
        prices[fcs],
        c,
    ))
}

/// Step objective for a schedule and dispatch, with its category split.
/// Fails when either decision violates a model constraint.
pub fn step_objective(p: &StepProblem, g: &Assignment, h: &DispatchMatrix) -> Result<CostBreakdown> {
    p.check_assignment(g)?;
    p.check_dispatch(h)?;
    let prices = p.prices(h);
    let c = &p.consts;
    let mut out = CostBreakdown::default();
    for (j, slot) in g.slots.iter().enumerate() {
        let Some(slot) = slot else {
            out.unserved += 1;
            out.penalty += c.gamma;
            continue;
        };
        let t = p
            .edge_terms(j, slot.station, prices[slot.station])
            .ok_or(Error::Unreachable {
                request: j,
                station: slot.station,
            })?;
        out.served += 1;
        out.charge += t.charge;
        out.wait += t.wait;
        out.idle += t.idle;
        out.depreciation += t.depreciation;
        out.fcs_maint += c.c_maint * t.power_kw;
        if slot.kind == SlotKind::Next {
            out.deferred += 1;
            out.wait += c.c_wait * p.delta_h;
        }
    }
    for (k, prod) in p.producers.iter().enumerate() {
        out.hps_maint += prod.maintenance;
        out.delivery += prod.delivery * h.row_sum(k);
    }
    Ok(out.finish())
}
