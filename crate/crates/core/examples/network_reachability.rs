//! Road distances, EV reachability and tanker supply on the built-in network.

use hydrocharge::network::{ev_reachability, supply_matrix, RoadNetwork};
use hydrocharge::scenario::builtin_network;

fn main() -> hydrocharge::Result<()> {
    let net = RoadNetwork::new(builtin_network())?;
    println!(
        "{} nodes, {} stations, {} producers",
        net.node_ids().len(),
        net.num_stations(),
        net.num_producers()
    );

    for i in 0..net.num_stations() {
        let d: Vec<String> = net
            .node_ids()
            .iter()
            .take(10)
            .map(|n| net.shortest_distance(*n, net.fcs_node(i)).map(|d| format!("{d:5.1}")))
            .collect::<hydrocharge::Result<_>>()?;
        println!(
            "station {i} @ node {:2}: km from nodes 0..9 = {}",
            net.fcs_node(i),
            d.join(" ")
        );
    }

    // an EV at node 0 at three speeds, one 15-minute step
    let positions = [0, 0, 0];
    let speeds = [20.0, 40.0, 60.0];
    let r = ev_reachability(&net, &positions, &speeds, 0.25)?;
    for (j, v) in speeds.iter().enumerate() {
        let reach: Vec<usize> = (0..net.num_stations()).filter(|i| r.get(*i, j)).collect();
        println!("speed {v:4} km/h reaches stations {reach:?}");
    }

    let l = supply_matrix(&net, 48.0, 0.25)?;
    for k in 0..net.num_producers() {
        let to: Vec<usize> = (0..net.num_stations()).filter(|i| l.get(k, *i)).collect();
        println!("producer {k} @ node {} supplies {to:?}", net.hps_node(k));
    }
    Ok(())
}
