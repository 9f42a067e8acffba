//! Brute-force checks on small instances: joint optimum, the penalty
//! cardinality property and monotone traces.

use hydrocharge::bilevel::{optimize_step, BilevelOptions};
use hydrocharge::oracle::{
    check_cardinality_order, check_monotone_trace, enumerate_joint_optimum, random_small_instance,
    CardinalityOrderOptions, CardinalityOrderVerdict, SmallInstanceLimits, ENUMERATION_BUDGET,
};

fn main() -> hydrocharge::Result<()> {
    let limits = SmallInstanceLimits::default();
    let opts = BilevelOptions {
        epsilon: 1e-9,
        ..Default::default()
    };
    let (mut hit, mut ties, mut strict, mut mono) = (0, 0, 0, 0);
    let n = 100;
    for seed in 0..n {
        let p = random_small_instance(seed, &limits);
        let opt = enumerate_joint_optimum(&p, ENUMERATION_BUDGET)?;
        let sol = optimize_step(&p, &opts)?;
        if (sol.objective - opt.objective).abs() <= 1e-6 {
            hit += 1;
        } else {
            println!(
                "seed {seed}: alternation stops at {:.3}, optimum {:.3}",
                sol.objective, opt.objective
            );
        }
        mono += check_monotone_trace(&sol.trace, Some(opt.objective)).passed() as usize;
        match check_cardinality_order(&p, p.consts.gamma, &CardinalityOrderOptions::default())? {
            CardinalityOrderVerdict::Pass { .. } => {}
            CardinalityOrderVerdict::Fail(w) if w.tie => ties += 1,
            CardinalityOrderVerdict::Fail(w) => {
                strict += 1;
                print!("{}", w.to_text(&p));
            }
        }
    }
    println!("optimum reached {hit}/{n}, monotone {mono}/{n}");
    println!("more-served-is-cheaper: {ties} exact ties, {strict} violations");
    Ok(())
}
