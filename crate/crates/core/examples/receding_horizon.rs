//! Simulate one day step by step with the bi-level strategy.

use hydrocharge::horizon::{run_horizon, RunOptions};
use hydrocharge::scenario::{generate_scenario, ScenarioConfig};
use hydrocharge::strategy::Strategy;

fn main() -> hydrocharge::Result<()> {
    let cfg = ScenarioConfig::from_toml_str(include_str!("../scenarios/desk.toml"))?;
    let sc = generate_scenario(&cfg, 0)?;
    let out = run_horizon(&sc, Strategy::BiBbg, &RunOptions::default())?;
    let r = &out.report;
    println!(" step  reqs served defer   H2 avail  H2 sent   price   cost  iters");
    for s in r.steps.iter().step_by(4) {
        println!(
            "{:5} {:5} {:6} {:5} {:10.1} {:8.1} {:7.3} {:6.1} {:5}",
            s.step,
            s.requests,
            s.breakdown.served,
            s.breakdown.deferred,
            s.hydrogen_available_kw,
            s.hydrogen_dispatched_kw,
            s.mean_price,
            s.breakdown.total,
            s.iterations
        );
    }
    println!(
        "\ntotal {:.1} CNY, service rate {:.3}, mean iterations {:.2}",
        r.totals.total, r.service_rate, r.iterations.mean
    );
    println!(
        "energy: served {:.1} = delivered {:.1} + outstanding {:.1} kWh",
        r.energy_served_kwh, r.energy_delivered_kwh, r.energy_outstanding_kwh
    );
    Ok(())
}
