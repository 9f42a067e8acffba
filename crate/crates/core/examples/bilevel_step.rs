//! Alternate matching and dispatch on one step until the objective settles,
//! then compare with exhaustive search.

use hydrocharge::bilevel::{optimize_step, BilevelOptions, Init};
use hydrocharge::oracle::{enumerate_joint_optimum, random_small_instance, SmallInstanceLimits, ENUMERATION_BUDGET};

fn main() -> hydrocharge::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(63);
    let p = random_small_instance(seed, &SmallInstanceLimits::default());
    for init in [Init::Zero, Init::Random(1), Init::Random(2)] {
        let opts = BilevelOptions {
            epsilon: 1e-9,
            init: init.clone(),
            ..Default::default()
        };
        let sol = optimize_step(&p, &opts)?;
        println!("start {init:?}: J0 = {:.3}", sol.trace.j_initial);
        for r in &sol.trace.rows {
            println!(
                "  iter {}: after matching {:.3}, after dispatch {:.3}",
                r.iteration, r.j_matching, r.j_dispatch
            );
        }
    }
    let opt = enumerate_joint_optimum(&p, ENUMERATION_BUDGET)?;
    println!("exhaustive optimum over {} schedules: {:.3}", opt.cases, opt.objective);
    Ok(())
}
