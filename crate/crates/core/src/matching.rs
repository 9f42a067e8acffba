//! Lower level: EV-to-pile assignment as a maximum-weight matching on the
//! extended bipartite graph.
//!
//! Every station contributes one supply node per free pile ("now" slots) and
//! one per pile released by a departing EV ("next" slots, usable one step
//! later at an extra waiting cost). Edge costs `M` are turned into weights
//! `O = max M - M + 1`; the solver returns a matching of maximum cardinality
//! and, among those, maximum total weight.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hungarian::min_cost_assignment;
use crate::problem::{Assignment, Slot, SlotKind, StepProblem};
use crate::textfmt;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupplyNode {
    pub station: usize,
    pub kind: SlotKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandNode {
    /// Index into the step's request list.
    pub request: usize,
    pub ev: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub supply: usize,
    pub demand: usize,
    /// Potential total cost `M`, CNY.
    pub cost: f64,
    /// Matching weight `O`.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExtendedBipartiteGraph {
    pub supply: Vec<SupplyNode>,
    pub demand: Vec<DemandNode>,
    pub edges: Vec<GraphEdge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub assignment: Assignment,
    /// EV ids left without a pile.
    pub unmatched: Vec<usize>,
    /// Sum of `M` over matched edges.
    pub matched_cost: f64,
}

impl ExtendedBipartiteGraph {
    /// Build the graph for `problem` with station prices held fixed.
    pub fn build(problem: &StepProblem, prices: &[f64]) -> Self {
        let mut supply = Vec::with_capacity(problem.total_slots());
        for (i, st) in problem.stations.iter().enumerate() {
            supply.extend((0..st.available).map(|_| SupplyNode {
                station: i,
                kind: SlotKind::Now,
            }));
            supply.extend((0..st.departing).map(|_| SupplyNode {
                station: i,
                kind: SlotKind::Next,
            }));
        }
        let demand: Vec<DemandNode> = problem
            .requests
            .iter()
            .enumerate()
            .map(|(j, r)| DemandNode { request: j, ev: r.ev })
            .collect();
        let mut edges = Vec::new();
        for (s, node) in supply.iter().enumerate() {
            for d in &demand {
                let slot = Slot {
                    station: node.station,
                    kind: node.kind,
                };
                if let Some(cost) = edge_cost(problem, d.request, slot, prices[node.station]) {
                    edges.push(GraphEdge {
                        supply: s,
                        demand: d.request,
                        cost,
                        weight: 0.0,
                    });
                }
            }
        }
        let costs: Vec<f64> = edges.iter().map(|e| e.cost).collect();
        for (e, w) in edges.iter_mut().zip(transform_weights(&costs)) {
            e.weight = w;
        }
        Self { supply, demand, edges }
    }

    /// Number of supply nodes `A_t`.
    pub fn supply_count(&self) -> usize {
        self.supply.len()
    }

    pub fn check_invariants(&self, problem: &StepProblem) -> Result<()> {
        for (i, st) in problem.stations.iter().enumerate() {
            let now = self
                .supply
                .iter()
                .filter(|s| s.station == i && s.kind == SlotKind::Now)
                .count();
            let next = self
                .supply
                .iter()
                .filter(|s| s.station == i && s.kind == SlotKind::Next)
                .count();
            if now != st.available || next != st.departing {
                return Err(Error::violation(
                    "slot-duplication",
                    format!("station {i} has {now}/{next} slots"),
                ));
            }
        }
        for e in &self.edges {
            let st = self.supply[e.supply].station;
            if !problem.requests[e.demand].reachable(st) {
                return Err(Error::violation(
                    "reachability",
                    format!("edge to unreachable station {st}"),
                ));
            }
            if e.weight < 1.0 {
                return Err(Error::violation("edge-weight", format!("weight {} < 1", e.weight)));
            }
        }
        Ok(())
    }

    /// Line-oriented dump for debugging and replay.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "graph v1 supply={} demand={} edges={}",
            self.supply.len(),
            self.demand.len(),
            self.edges.len()
        );
        for (idx, n) in self.supply.iter().enumerate() {
            let _ = writeln!(s, "slot {idx} station={} kind={}", n.station, n.kind.as_str());
        }
        for (idx, d) in self.demand.iter().enumerate() {
            let _ = writeln!(s, "demand {idx} request={} ev={}", d.request, d.ev);
        }
        for e in &self.edges {
            let _ = writeln!(s, "edge {} {} cost={} weight={}", e.supply, e.demand, e.cost, e.weight);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut g = Self::default();
        for r in textfmt::parse(text)? {
            match r.keyword.as_str() {
                "slot" => {
                    let kind_raw: String = r.get("kind")?;
                    g.supply.push(SupplyNode {
                        station: r.get("station")?,
                        kind: SlotKind::parse(&kind_raw).ok_or_else(|| Error::Parse {
                            line: r.line,
                            reason: format!("bad slot kind `{kind_raw}`"),
                        })?,
                    });
                }
                "demand" => g.demand.push(DemandNode {
                    request: r.get("request")?,
                    ev: r.get("ev")?,
                }),
                "edge" => {
                    let e = GraphEdge {
                        supply: r.pos(0)?,
                        demand: r.pos(1)?,
                        cost: r.get("cost")?,
                        weight: r.get("weight")?,
                    };
                    if e.supply >= g.supply.len() || e.demand >= g.demand.len() {
                        return Err(Error::Parse {
                            line: r.line,
                            reason: "edge references an undeclared node".into(),
                        });
                    }
                    g.edges.push(e);
                }
                _ => {}
            }
        }
        Ok(g)
    }
}

/// `M` for one edge, or `None` if the station is out of reach.
pub fn edge_cost(problem: &StepProblem, request: usize, slot: Slot, price: f64) -> Option<f64> {
    problem.edge_cost(request, slot, price)
}

/// `O = max M - M + 1`; reverses the cost order and keeps all weights >= 1.
pub fn transform_weights(costs: &[f64]) -> Vec<f64> {
    let Some(max) = costs.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    costs.iter().map(|m| max - m + 1.0).collect()
}

/// Smallest penalty for which serving as many EVs as possible is optimal:
/// the largest per-edge cost at the full grid price (plus one step of
/// waiting) times the most EVs that could be served.
pub fn gamma_bound(problem: &StepProblem) -> f64 {
    let c = &problem.consts;
    let mut worst: Option<f64> = None;
    for j in 0..problem.n_requests() {
        for i in 0..problem.n_stations() {
            if let Some(t) = problem.edge_terms(j, i, problem.tou_price) {
                let bracket = t.ev_cost() + c.c_maint * t.power_kw + c.c_wait * problem.delta_h;
                worst = Some(worst.map_or(bracket, |w: f64| w.max(bracket)));
            }
        }
    }
    let cap = problem.total_slots().min(problem.n_requests());
    worst.map_or(0.0, |w| w * cap as f64)
}

/// Maximum-cardinality, maximum-weight matching of the extended graph.
///
/// Each real edge gets weight `O + K` with `K > A_t * max O`, so any larger
/// matching outweighs any smaller one; the padded assignment problem is then
/// solved exactly with Kuhn-Munkres.
pub fn solve_matching(g: &ExtendedBipartiteGraph) -> AssignmentResult {
    let n_supply = g.supply.len();
    let n_demand = g.demand.len();
    let n_requests = g.demand.iter().map(|d| d.request + 1).max().unwrap_or(0);
    let mut assignment = Assignment::empty(n_requests);
    let mut matched_cost = 0.0;
    if g.edges.is_empty() {
        return AssignmentResult {
            unmatched: g.demand.iter().map(|d| d.ev).collect(),
            assignment,
            matched_cost,
        };
    }
    let max_weight = g.edges.iter().map(|e| e.weight).fold(0.0, f64::max);
    let shift = (n_supply.max(1) as f64) * max_weight + 1.0;

    // rows: the smaller side
    let demand_rows = n_demand <= n_supply;
    let (rows, cols) = if demand_rows {
        (n_demand, n_supply)
    } else {
        (n_supply, n_demand)
    };
    let mut cost = vec![0.0; rows * cols];
    let mut edge_at = vec![usize::MAX; rows * cols];
    for (idx, e) in g.edges.iter().enumerate() {
        let (r, c) = if demand_rows {
            (e.demand, e.supply)
        } else {
            (e.supply, e.demand)
        };
        cost[r * cols + c] = -(e.weight + shift);
        edge_at[r * cols + c] = idx;
    }
    let picked = min_cost_assignment(&cost, rows, cols);
    for (r, c) in picked.into_iter().enumerate() {
        let idx = edge_at[r * cols + c];
        if idx == usize::MAX {
            continue;
        }
        let e = &g.edges[idx];
        let node = g.supply[e.supply];
        let request = g.demand[e.demand].request;
        assignment.slots[request] = Some(Slot {
            station: node.station,
            kind: node.kind,
        });
        matched_cost += e.cost;
    }
    let unmatched = g
        .demand
        .iter()
        .filter(|d| assignment.slots[d.request].is_none())
        .map(|d| d.ev)
        .collect();
    AssignmentResult {
        assignment,
        unmatched,
        matched_cost,
    }
}

/// Convenience: best schedule for `problem` at fixed prices.
pub fn match_at_prices(problem: &StepProblem, prices: &[f64]) -> AssignmentResult {
    solve_matching(&ExtendedBipartiteGraph::build(problem, prices))
}
