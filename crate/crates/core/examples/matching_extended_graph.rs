//! The extended bipartite graph of one step and its min-cost matching.

use hydrocharge::matching::{gamma_bound, solve_matching, ExtendedBipartiteGraph};
use hydrocharge::oracle::{random_small_instance, SmallInstanceLimits};
use hydrocharge::problem::DispatchMatrix;

fn main() -> hydrocharge::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let p = random_small_instance(seed, &SmallInstanceLimits::default());
    let h = DispatchMatrix::zeros(p.n_producers(), p.n_stations());
    let prices = p.prices(&h);
    println!(
        "{} requests, {} stations, prices {prices:?}",
        p.n_requests(),
        p.n_stations()
    );
    println!("penalty bound: {:.2}", gamma_bound(&p));

    let g = ExtendedBipartiteGraph::build(&p, &prices);
    g.check_invariants(&p)?;
    print!("{}", g.to_text());

    let res = solve_matching(&g);
    for (j, slot) in res.assignment.slots.iter().enumerate() {
        match slot {
            Some(s) => println!("request {j} -> station {} ({})", s.station, s.kind.as_str()),
            None => println!("request {j} -> unserved"),
        }
    }
    println!("matched cost {:.3}", res.matched_cost);
    Ok(())
}
