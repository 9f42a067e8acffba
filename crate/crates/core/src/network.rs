//! Road graph, shortest distances and the two reachability matrices.
//!
//! Distances are computed once for every node pair when the network is built;
//! the graph is static over a run so the table doubles as the per-step cache.

use std::collections::HashMap;

use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack applied to the inclusive `distance <= radius` comparisons so that
/// path lengths summed in floating point do not fall off an exact boundary.
pub const REACH_SLACK_KM: f64 = 1e-9;

/// Serializable description of a road network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub nodes: Vec<u32>,
    /// `(from, to, km)`; arcs are undirected.
    pub arcs: Vec<(u32, u32, f64)>,
    /// Node hosting each fast-charging station, by station index.
    pub fcs_nodes: Vec<u32>,
    /// Node hosting each hydrogen production station, by producer index.
    pub hps_nodes: Vec<u32>,
}

/// Dense boolean matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolMatrix {
    rows: usize,
    cols: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![false; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.cols + c] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }
}

/// Weighted undirected road graph with station placements.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    spec: NetworkSpec,
    index: HashMap<u32, usize>,
    /// All-pairs shortest distances, `dist[a * n + b]`.
    dist: Vec<f64>,
}

impl RoadNetwork {
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        if spec.nodes.is_empty() {
            return Err(Error::InvalidNetwork("no nodes".into()));
        }
        let mut index = HashMap::with_capacity(spec.nodes.len());
        for (i, id) in spec.nodes.iter().enumerate() {
            if index.insert(*id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate node {id}")));
            }
        }
        let n = spec.nodes.len();
        let mut graph: UnGraph<u32, f64> = UnGraph::with_capacity(n, spec.arcs.len());
        for id in &spec.nodes {
            graph.add_node(*id);
        }
        for &(a, b, km) in &spec.arcs {
            let ia = *index.get(&a).ok_or(Error::UnknownNode(a))?;
            let ib = *index.get(&b).ok_or(Error::UnknownNode(b))?;
            if !(km > 0.0 && km.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "arc {a}-{b} has non-positive length {km}"
                )));
            }
            graph.add_edge(NodeIndex::new(ia), NodeIndex::new(ib), km);
        }
        for id in spec.fcs_nodes.iter().chain(&spec.hps_nodes) {
            if !index.contains_key(id) {
                return Err(Error::UnknownNode(*id));
            }
        }

        let mut dist = vec![f64::INFINITY; n * n];
        for src in 0..n {
            let reached = dijkstra(&graph, NodeIndex::new(src), None, |e| *e.weight());
            if reached.len() != n {
                let missing = (0..n).find(|t| !reached.contains_key(&NodeIndex::new(*t))).unwrap_or(0);
                return Err(Error::Disconnected(spec.nodes[src], spec.nodes[missing]));
            }
            for (node, d) in reached {
                dist[src * n + node.index()] = d;
            }
        }
        Ok(Self { spec, index, dist })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn node_ids(&self) -> &[u32] {
        &self.spec.nodes
    }

    pub fn num_stations(&self) -> usize {
        self.spec.fcs_nodes.len()
    }

    pub fn num_producers(&self) -> usize {
        self.spec.hps_nodes.len()
    }

    pub fn fcs_node(&self, station: usize) -> u32 {
        self.spec.fcs_nodes[station]
    }

    pub fn hps_node(&self, producer: usize) -> u32 {
        self.spec.hps_nodes[producer]
    }

    pub fn contains(&self, node: u32) -> bool {
        self.index.contains_key(&node)
    }

    /// Length of a shortest path between two nodes, in km.
    pub fn shortest_distance(&self, a: u32, b: u32) -> Result<f64> {
        let ia = *self.index.get(&a).ok_or(Error::UnknownNode(a))?;
        let ib = *self.index.get(&b).ok_or(Error::UnknownNode(b))?;
        let d = self.dist[ia * self.spec.nodes.len() + ib];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Disconnected(a, b))
        }
    }

    /// Distance from every producer to every station (`D(k, i)`).
    pub fn producer_station_distances(&self) -> Result<Vec<Vec<f64>>> {
        self.spec
            .hps_nodes
            .iter()
            .map(|h| {
                self.spec
                    .fcs_nodes
                    .iter()
                    .map(|f| self.shortest_distance(*h, *f))
                    .collect()
            })
            .collect()
    }
}

/// `R(i, j) = 1` when station `i` lies within `speed_j * delta` of EV `j`.
///
/// Returns an `N^s x N^ev` matrix; the boundary is inclusive.
pub fn ev_reachability(
    net: &RoadNetwork,
    ev_positions: &[u32],
    speeds_kmh: &[f64],
    delta_h: f64,
) -> Result<BoolMatrix> {
    if ev_positions.len() != speeds_kmh.len() {
        return Err(Error::param("speeds_kmh", "one speed per EV position is required"));
    }
    if !(delta_h > 0.0) {
        return Err(Error::param("delta", "must be > 0"));
    }
    let mut r = BoolMatrix::new(net.num_stations(), ev_positions.len());
    for (j, (&pos, &v)) in ev_positions.iter().zip(speeds_kmh).enumerate() {
        if !(v > 0.0) {
            return Err(Error::param("speed", format!("EV {j} speed must be > 0")));
        }
        let radius = v * delta_h;
        for i in 0..net.num_stations() {
            let d = net.shortest_distance(pos, net.fcs_node(i))?;
            r.set(i, j, d <= radius + REACH_SLACK_KM);
        }
    }
    Ok(r)
}

/// `L(k, i) = 1` when producer `k` can deliver to station `i` within one step.
pub fn supply_matrix(net: &RoadNetwork, tanker_speed_kmh: f64, delta_h: f64) -> Result<BoolMatrix> {
    if !(tanker_speed_kmh > 0.0) {
        return Err(Error::param("tanker_speed_kmh", "must be > 0"));
    }
    if !(delta_h > 0.0) {
        return Err(Error::param("delta", "must be > 0"));
    }
    let radius = tanker_speed_kmh * delta_h;
    let d = net.producer_station_distances()?;
    let mut l = BoolMatrix::new(net.num_producers(), net.num_stations());
    for (k, row) in d.iter().enumerate() {
        for (i, dist) in row.iter().enumerate() {
            l.set(k, i, *dist <= radius + REACH_SLACK_KM);
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(len: f64) -> RoadNetwork {
        RoadNetwork::new(NetworkSpec {
            nodes: vec![1, 2],
            arcs: vec![(1, 2, len)],
            fcs_nodes: vec![2],
            hps_nodes: vec![1],
        })
        .unwrap()
    }

    fn triangle() -> RoadNetwork {
        RoadNetwork::new(NetworkSpec {
            nodes: vec![0, 1, 2],
            arcs: vec![(0, 1, 3.0), (1, 2, 4.0), (0, 2, 10.0)],
            fcs_nodes: vec![2],
            hps_nodes: vec![0],
        })
        .unwrap()
    }

    #[test]
    fn distance_identity_and_single_arc() {
        let net = line(5.0);
        assert_eq!(net.shortest_distance(1, 1).unwrap(), 0.0);
        assert_eq!(net.shortest_distance(1, 2).unwrap(), 5.0);
        assert_eq!(net.shortest_distance(2, 1).unwrap(), 5.0);
    }

    #[test]
    fn triangle_takes_two_short_arcs() {
        // simple paths 0-2: direct (10) and 0-1-2 (3 + 4 = 7)
        assert_eq!(triangle().shortest_distance(0, 2).unwrap(), 7.0);
    }

    #[test]
    fn unknown_and_disconnected() {
        let net = line(5.0);
        assert!(matches!(net.shortest_distance(1, 9), Err(Error::UnknownNode(9))));
        let err = RoadNetwork::new(NetworkSpec {
            nodes: vec![1, 2, 3],
            arcs: vec![(1, 2, 1.0)],
            fcs_nodes: vec![],
            hps_nodes: vec![],
        })
        .unwrap_err();
        assert!(matches!(err, Error::Disconnected(..)));
    }

    #[test]
    fn rejects_bad_arcs_and_placements() {
        let bad_len = NetworkSpec {
            nodes: vec![1, 2],
            arcs: vec![(1, 2, 0.0)],
            fcs_nodes: vec![],
            hps_nodes: vec![],
        };
        assert!(RoadNetwork::new(bad_len).is_err());
        let bad_fcs = NetworkSpec {
            nodes: vec![1, 2],
            arcs: vec![(1, 2, 1.0)],
            fcs_nodes: vec![7],
            hps_nodes: vec![],
        };
        assert!(matches!(RoadNetwork::new(bad_fcs), Err(Error::UnknownNode(7))));
    }

    #[test]
    fn ev_reach_boundary_is_inclusive() {
        let at = line(15.0);
        let r = ev_reachability(&at, &[1], &[60.0], 0.25).unwrap();
        assert!(r.get(0, 0));
        let beyond = line(15.01);
        let r = ev_reachability(&beyond, &[1], &[60.0], 0.25).unwrap();
        assert!(!r.get(0, 0));
        let colocated = ev_reachability(&at, &[2], &[60.0], 0.25).unwrap();
        assert!(colocated.get(0, 0));
    }

    #[test]
    fn supply_boundary_is_inclusive() {
        assert!(supply_matrix(&line(12.0), 48.0, 0.25).unwrap().get(0, 0));
        assert!(!supply_matrix(&line(20.0), 48.0, 0.25).unwrap().get(0, 0));
        let same = RoadNetwork::new(NetworkSpec {
            nodes: vec![4],
            arcs: vec![],
            fcs_nodes: vec![4],
            hps_nodes: vec![4],
        })
        .unwrap();
        assert!(supply_matrix(&same, 48.0, 0.25).unwrap().get(0, 0));
    }

    #[test]
    fn reach_rejects_nonpositive_inputs() {
        let net = line(1.0);
        assert!(ev_reachability(&net, &[1], &[0.0], 0.25).is_err());
        assert!(ev_reachability(&net, &[1], &[60.0], 0.0).is_err());
        assert!(supply_matrix(&net, 0.0, 0.25).is_err());
    }
}
