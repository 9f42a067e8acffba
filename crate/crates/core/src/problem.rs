//! The per-step decision problem ("world snapshot") shared by the matcher,
//! the dispatch LP, the bi-level loop and the brute-force oracle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ev_cost::CostConstants;
use crate::network::BoolMatrix;
use crate::station::{charging_price, PowerLevels};
use crate::textfmt::{self, Record};

/// Feasibility tolerance on dispatch quantities, kW.
pub const DISPATCH_TOL_KW: f64 = 1e-9;

/// Distances relevant to one (request, station) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    /// EV position to station, km.
    pub to_station_km: f64,
    /// Station to passenger destination, km (0 without passengers).
    pub to_destination_km: f64,
}

/// A requesting EV as seen by the step problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub ev: usize,
    pub soc: f64,
    pub capacity_kwh: f64,
    pub with_passengers: bool,
    pub speed_kmh: f64,
    /// Distance already driven from the origin to the request node, km.
    pub origin_km: f64,
    /// One entry per station; `None` when the station is out of reach.
    pub legs: Vec<Option<Leg>>,
}

impl Request {
    pub fn reachable(&self, station: usize) -> bool {
        self.legs.get(station).is_some_and(Option::is_some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSlice {
    /// Free piles now.
    pub available: usize,
    /// Piles released at the next step.
    pub departing: usize,
    /// Base load over the step, kWh.
    pub base_energy_kwh: f64,
    /// Estimated charging demand over the step, kWh.
    pub demand_kwh: f64,
    /// Price currently posted to drivers, CNY/kWh.
    pub posted_price: f64,
}

impl StationSlice {
    /// Denominator of the price ratio.
    pub fn load_kwh(&self) -> f64 {
        self.base_energy_kwh + self.demand_kwh
    }

    pub fn slots(&self) -> usize {
        self.available + self.departing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducerSlice {
    /// Hydrogen power available for dispatch, kW.
    pub hydrogen_kw: f64,
    /// Generation maintenance this step, CNY (independent of dispatch).
    pub maintenance: f64,
    /// Tanker delivery cost, CNY/kW.
    pub delivery: f64,
    /// Road distance to each station, km.
    pub station_km: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepProblem {
    pub delta_h: f64,
    /// Grid time-of-use price this step, CNY/kWh.
    pub tou_price: f64,
    pub consts: CostConstants,
    pub requests: Vec<Request>,
    pub stations: Vec<StationSlice>,
    pub producers: Vec<ProducerSlice>,
    /// `supply.get(k, i)`: producer `k` may deliver to station `i`.
    pub supply: BoolMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SlotKind {
    /// A pile free now.
    Now,
    /// A pile released by a departing EV, used one step later.
    Next,
}

impl SlotKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SlotKind::Now => "now",
            SlotKind::Next => "next",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "now" => Some(SlotKind::Now),
            "next" => Some(SlotKind::Next),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Slot {
    pub station: usize,
    pub kind: SlotKind,
}

/// Charging schedule: per request, the assigned slot if any.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub slots: Vec<Option<Slot>>,
}

impl Assignment {
    pub fn empty(n_requests: usize) -> Self {
        Self {
            slots: vec![None; n_requests],
        }
    }

    pub fn served(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    pub fn unserved(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(j, _)| j)
            .collect()
    }

    /// Binary `N^s x N^req` schedule matrix.
    pub fn matrix(&self, n_stations: usize) -> BoolMatrix {
        let mut g = BoolMatrix::new(n_stations, self.slots.len());
        for (j, s) in self.slots.iter().enumerate() {
            if let Some(s) = s {
                g.set(s.station, j, true);
            }
        }
        g
    }

    pub fn count(&self, station: usize, kind: SlotKind) -> usize {
        self.slots
            .iter()
            .flatten()
            .filter(|s| s.station == station && s.kind == kind)
            .count()
    }
}

/// Hydrogen dispatch `H(k, i)` in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchMatrix {
    producers: usize,
    stations: usize,
    data: Vec<f64>,
}

impl DispatchMatrix {
    pub fn zeros(producers: usize, stations: usize) -> Self {
        Self {
            producers,
            stations,
            data: vec![0.0; producers * stations],
        }
    }

    pub fn producers(&self) -> usize {
        self.producers
    }

    pub fn stations(&self) -> usize {
        self.stations
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.data[k * self.stations + i]
    }

    pub fn set(&mut self, k: usize, i: usize, v: f64) {
        self.data[k * self.stations + i] = v;
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.stations..(k + 1) * self.stations]
    }

    pub fn row_sum(&self, k: usize) -> f64 {
        self.row(k).iter().sum()
    }

    pub fn column_sum(&self, i: usize) -> f64 {
        (0..self.producers).map(|k| self.get(k, i)).sum()
    }

    pub fn total(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Per-edge cost terms of serving request `j` at a station.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgeTerms {
    pub energy_kwh: f64,
    pub power_kw: f64,
    pub charge: f64,
    pub wait: f64,
    pub idle: f64,
    pub depreciation: f64,
}

impl EdgeTerms {
    /// Assignment cost excluding pile maintenance and deferral.
    pub fn ev_cost(&self) -> f64 {
        self.charge + self.wait + self.idle + self.depreciation
    }
}

impl StepProblem {
    pub fn n_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn n_producers(&self) -> usize {
        self.producers.len()
    }

    /// Total supply slots `A_t`.
    pub fn total_slots(&self) -> usize {
        self.stations.iter().map(StationSlice::slots).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_h > 0.0) {
            return Err(Error::param("delta", "must be > 0"));
        }
        if !(self.tou_price >= 0.0) {
            return Err(Error::param("tou_price", "must be >= 0"));
        }
        self.consts.validate()?;
        let ns = self.n_stations();
        if self.supply.rows() != self.n_producers() || self.supply.cols() != ns {
            return Err(Error::param("supply", "matrix shape must be producers x stations"));
        }
        for (i, s) in self.stations.iter().enumerate() {
            if !(s.load_kwh() > 0.0) {
                return Err(Error::param(format!("station {i}"), "base + demand must be > 0"));
            }
        }
        for (k, p) in self.producers.iter().enumerate() {
            if !(p.hydrogen_kw >= 0.0 && p.delivery >= 0.0 && p.maintenance >= 0.0) {
                return Err(Error::param(format!("producer {k}"), "negative quantity"));
            }
            if p.station_km.len() != ns {
                return Err(Error::param(format!("producer {k}"), "one distance per station"));
            }
        }
        for (j, r) in self.requests.iter().enumerate() {
            if r.legs.len() != ns {
                return Err(Error::param(format!("request {j}"), "one leg entry per station"));
            }
            if !(0.0..=1.0).contains(&r.soc) || !(r.capacity_kwh > 0.0) || !(r.speed_kmh > 0.0) {
                return Err(Error::param(format!("request {j}"), "bad soc, capacity or speed"));
            }
        }
        Ok(())
    }

    /// Price ratio `max((B - E_h) / B, 0)` at each station for dispatch `h`,
    /// where `B` is the step load and `E_h = sum_k H(k, i) * delta`.
    pub fn price_ratios(&self, h: &DispatchMatrix) -> Vec<f64> {
        self.stations
            .iter()
            .enumerate()
            .map(|(i, s)| {
                charging_price(s.base_energy_kwh, s.demand_kwh, h.column_sum(i) * self.delta_h, 1.0).unwrap_or(1.0)
            })
            .collect()
    }

    /// Charging prices (CNY/kWh) under dispatch `h`.
    pub fn prices(&self, h: &DispatchMatrix) -> Vec<f64> {
        self.price_ratios(h).into_iter().map(|r| r * self.tou_price).collect()
    }

    pub fn power(&self) -> PowerLevels {
        self.consts.power
    }

    /// Cost terms for request `j` at station `i` under price `price`.
    /// Returns `None` when the station is unreachable.
    pub fn edge_terms(&self, j: usize, i: usize, price: f64) -> Option<EdgeTerms> {
        let r = &self.requests[j];
        let leg = r.legs[i]?;
        Some(crate::ev_cost::assignment_terms(r, leg, price, &self.consts))
    }

    /// Potential total cost `M` of an edge: EV cost, pile maintenance and
    /// the extra step of waiting for a deferred slot.
    pub fn edge_cost(&self, j: usize, slot: Slot, price: f64) -> Option<f64> {
        let t = self.edge_terms(j, slot.station, price)?;
        let defer = match slot.kind {
            SlotKind::Now => 0.0,
            SlotKind::Next => self.consts.c_wait * self.delta_h,
        };
        Some(t.ev_cost() + self.consts.c_maint * t.power_kw + defer)
    }

    /// Structural feasibility of a schedule: single assignment per request,
    /// only reachable stations, per-station slot capacity.
    pub fn check_assignment(&self, g: &Assignment) -> Result<()> {
        if g.slots.len() != self.n_requests() {
            return Err(Error::violation(
                "single-assignment",
                format!("{} entries for {} requests", g.slots.len(), self.n_requests()),
            ));
        }
        for (j, s) in g.slots.iter().enumerate() {
            if let Some(s) = s {
                if s.station >= self.n_stations() || !self.requests[j].reachable(s.station) {
                    return Err(Error::violation(
                        "reachability",
                        format!("request {j} assigned to unreachable station {}", s.station),
                    ));
                }
            }
        }
        for (i, st) in self.stations.iter().enumerate() {
            let now = g.count(i, SlotKind::Now);
            let next = g.count(i, SlotKind::Next);
            if now > st.available || next > st.departing {
                return Err(Error::violation(
                    "pile-capacity",
                    format!(
                        "station {i}: {now} now / {next} deferred for {} free / {} departing",
                        st.available, st.departing
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Dispatch feasibility: nonnegative, supply-restricted, within capacity.
    pub fn check_dispatch(&self, h: &DispatchMatrix) -> Result<()> {
        if h.producers() != self.n_producers() || h.stations() != self.n_stations() {
            return Err(Error::violation("supply-restriction", "dispatch matrix shape"));
        }
        for k in 0..self.n_producers() {
            for i in 0..self.n_stations() {
                let v = h.get(k, i);
                if v < -DISPATCH_TOL_KW || !v.is_finite() {
                    return Err(Error::violation(
                        "supply-restriction",
                        format!("H({k},{i}) = {v} is negative"),
                    ));
                }
                if !self.supply.get(k, i) && v.abs() > DISPATCH_TOL_KW {
                    return Err(Error::violation(
                        "supply-restriction",
                        format!("H({k},{i}) = {v} outside tanker range"),
                    ));
                }
            }
            let sum = h.row_sum(k);
            if sum > self.producers[k].hydrogen_kw + DISPATCH_TOL_KW {
                return Err(Error::violation(
                    "hydrogen-capacity",
                    format!(
                        "producer {k} dispatches {sum} kW of {} kW",
                        self.producers[k].hydrogen_kw
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Serialize to the line-oriented instance format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let c = &self.consts;
        let _ = writeln!(s, "instance v1");
        let _ = writeln!(s, "step delta={} tou={}", self.delta_h, self.tou_price);
        let _ = writeln!(
            s,
            "consts c_wait={} c_idle={} c_depr={} c_maint={} e_loss={} eta={} p_idle={} p_busy={} gamma={}",
            c.c_wait, c.c_idle, c.c_depr, c.c_maint, c.e_loss, c.eta, c.power.idle_kw, c.power.busy_kw, c.gamma
        );
        for (i, st) in self.stations.iter().enumerate() {
            let _ = writeln!(
                s,
                "station {i} available={} departing={} base={} demand={} posted={}",
                st.available, st.departing, st.base_energy_kwh, st.demand_kwh, st.posted_price
            );
        }
        for (k, p) in self.producers.iter().enumerate() {
            let _ = writeln!(
                s,
                "producer {k} hydrogen={} maint={} delivery={}",
                p.hydrogen_kw, p.maintenance, p.delivery
            );
            for (i, km) in p.station_km.iter().enumerate() {
                let _ = writeln!(s, "link {k} {i} km={km} supply={}", u8::from(self.supply.get(k, i)));
            }
        }
        for (j, r) in self.requests.iter().enumerate() {
            let _ = writeln!(
                s,
                "request {j} ev={} soc={} cap={} passengers={} speed={} l0={}",
                r.ev,
                r.soc,
                r.capacity_kwh,
                u8::from(r.with_passengers),
                r.speed_kmh,
                r.origin_km
            );
            for (i, leg) in r.legs.iter().enumerate() {
                if let Some(leg) = leg {
                    let _ = writeln!(
                        s,
                        "leg {j} {i} to_station={} to_dest={}",
                        leg.to_station_km, leg.to_destination_km
                    );
                }
            }
        }
        s
    }

    /// Parse the instance format. Unknown keywords (e.g. witness lines) are
    /// ignored so that dumps with appended annotations still load.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_records(&textfmt::parse(text)?)
    }

    pub fn from_records(records: &[Record]) -> Result<Self> {
        let mut delta_h = None;
        let mut tou_price = 0.0;
        let mut consts = CostConstants::default();
        let mut stations = Vec::new();
        let mut producers: Vec<ProducerSlice> = Vec::new();
        let mut links: Vec<(usize, usize, f64, bool)> = Vec::new();
        let mut requests: Vec<Request> = Vec::new();
        let mut legs: Vec<(usize, usize, Leg)> = Vec::new();
        for r in records {
            match r.keyword.as_str() {
                "step" => {
                    delta_h = Some(r.get("delta")?);
                    tou_price = r.get("tou")?;
                }
                "consts" => {
                    consts = CostConstants {
                        c_wait: r.get("c_wait")?,
                        c_idle: r.get("c_idle")?,
                        c_depr: r.get("c_depr")?,
                        c_maint: r.get("c_maint")?,
                        e_loss: r.get("e_loss")?,
                        eta: r.get("eta")?,
                        power: PowerLevels {
                            idle_kw: r.get("p_idle")?,
                            busy_kw: r.get("p_busy")?,
                        },
                        gamma: r.get("gamma")?,
                    }
                }
                "station" => {
                    expect_index(r, stations.len())?;
                    stations.push(StationSlice {
                        available: r.get("available")?,
                        departing: r.get("departing")?,
                        base_energy_kwh: r.get("base")?,
                        demand_kwh: r.get("demand")?,
                        posted_price: r.get_or("posted", tou_price)?,
                    });
                }
                "producer" => {
                    expect_index(r, producers.len())?;
                    producers.push(ProducerSlice {
                        hydrogen_kw: r.get("hydrogen")?,
                        maintenance: r.get("maint")?,
                        delivery: r.get("delivery")?,
                        station_km: Vec::new(),
                    });
                }
                "link" => links.push((r.pos(0)?, r.pos(1)?, r.get("km")?, r.get::<u8>("supply")? != 0)),
                "request" => {
                    expect_index(r, requests.len())?;
                    requests.push(Request {
                        ev: r.get("ev")?,
                        soc: r.get("soc")?,
                        capacity_kwh: r.get("cap")?,
                        with_passengers: r.get::<u8>("passengers")? != 0,
                        speed_kmh: r.get("speed")?,
                        origin_km: r.get("l0")?,
                        legs: Vec::new(),
                    });
                }
                "leg" => legs.push((
                    r.pos(0)?,
                    r.pos(1)?,
                    Leg {
                        to_station_km: r.get("to_station")?,
                        to_destination_km: r.get("to_dest")?,
                    },
                )),
                _ => {}
            }
        }
        let delta_h = delta_h.ok_or(Error::Parse {
            line: 0,
            reason: "missing `step` line".into(),
        })?;
        let ns = stations.len();
        let mut supply = BoolMatrix::new(producers.len(), ns);
        for p in &mut producers {
            p.station_km = vec![f64::INFINITY; ns];
        }
        for (k, i, km, ok) in links {
            if k >= producers.len() || i >= ns {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("link {k} {i} out of range"),
                });
            }
            producers[k].station_km[i] = km;
            supply.set(k, i, ok);
        }
        for r in &mut requests {
            r.legs = vec![None; ns];
        }
        for (j, i, leg) in legs {
            if j >= requests.len() || i >= ns {
                return Err(Error::Parse {
                    line: 0,
                    reason: format!("leg {j} {i} out of range"),
                });
            }
            requests[j].legs[i] = Some(leg);
        }
        let p = StepProblem {
            delta_h,
            tou_price,
            consts,
            requests,
            stations,
            producers,
            supply,
        };
        p.validate()?;
        Ok(p)
    }
}

fn expect_index(r: &Record, expected: usize) -> Result<()> {
    let got: usize = r.pos(0)?;
    if got != expected {
        return Err(Error::Parse {
            line: r.line,
            reason: format!("`{}` index {got} out of order (expected {expected})", r.keyword),
        });
    }
    Ok(())
}

/// Append an assignment and dispatch as witness lines.
pub fn witness_text(g: &Assignment, h: &DispatchMatrix) -> String {
    let mut s = String::new();
    for (j, slot) in g.slots.iter().enumerate() {
        if let Some(slot) = slot {
            let _ = writeln!(s, "assign {j} {} {}", slot.station, slot.kind.as_str());
        }
    }
    for k in 0..h.producers() {
        for i in 0..h.stations() {
            if h.get(k, i) != 0.0 {
                let _ = writeln!(s, "dispatch {k} {i} {}", h.get(k, i));
            }
        }
    }
    s
}

/// Read witness lines back into an assignment and dispatch for `problem`.
pub fn parse_witness(problem: &StepProblem, text: &str) -> Result<(Assignment, DispatchMatrix)> {
    let mut g = Assignment::empty(problem.n_requests());
    let mut h = DispatchMatrix::zeros(problem.n_producers(), problem.n_stations());
    for r in textfmt::parse(text)? {
        match r.keyword.as_str() {
            "assign" => {
                let j: usize = r.pos(0)?;
                let station: usize = r.pos(1)?;
                let kind_raw: String = r.pos(2)?;
                let kind = SlotKind::parse(&kind_raw).ok_or_else(|| Error::Parse {
                    line: r.line,
                    reason: format!("bad slot kind `{kind_raw}`"),
                })?;
                if j >= g.slots.len() {
                    return Err(Error::Parse {
                        line: r.line,
                        reason: format!("request {j} out of range"),
                    });
                }
                g.slots[j] = Some(Slot { station, kind });
            }
            "dispatch" => {
                let k: usize = r.pos(0)?;
                let i: usize = r.pos(1)?;
                if k >= h.producers() || i >= h.stations() {
                    return Err(Error::Parse {
                        line: r.line,
                        reason: format!("dispatch {k} {i} out of range"),
                    });
                }
                h.set(k, i, r.pos(2)?);
            }
            _ => {}
        }
    }
    Ok((g, h))
}
