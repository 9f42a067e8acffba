//! The hydrogen dispatch linear program for a fixed assignment: print it in
//! LP format, solve it, and show how the optimum shifts prices.

use hydrocharge::dispatch::{build_lp, solve_lp};
use hydrocharge::matching::match_at_prices;
use hydrocharge::oracle::{random_small_instance, SmallInstanceLimits};
use hydrocharge::problem::DispatchMatrix;

fn main() -> hydrocharge::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let p = random_small_instance(seed, &SmallInstanceLimits::default());
    let zero = DispatchMatrix::zeros(p.n_producers(), p.n_stations());
    let g = match_at_prices(&p, &p.prices(&zero)).assignment;

    let lp = build_lp(&p, &g)?;
    print!("{}", lp.to_lp_text());
    let res = solve_lp(&lp)?;
    println!("\nstatus {:?}, objective {:.4}", res.status, res.objective);
    for k in 0..p.n_producers() {
        println!(
            "producer {k} ({:.1} kW available): {:?}",
            p.producers[k].hydrogen_kw,
            res.h.row(k)
        );
    }
    println!("prices before {:?}", p.prices(&zero));
    println!("prices after  {:?}", p.prices(&res.h));
    Ok(())
}
