//! Service rate against pile count and cost against EV speed.

use hydrocharge::cli::SweepAxis;
use hydrocharge::horizon::{run_batch, RunOptions, RunReport};
use hydrocharge::report::summarize;
use hydrocharge::scenario::ScenarioConfig;
use hydrocharge::strategy::Strategy;

fn sweep(base: &ScenarioConfig, axis: SweepAxis, values: &[f64]) -> hydrocharge::Result<()> {
    println!("{:>8} {:>12} {:>8}", axis.name(), "total", "served");
    for &v in values {
        let cfg = axis.apply(base, v)?;
        let runs = run_batch(&cfg, &[Strategy::BiBbg], &[0, 1, 2], &RunOptions::default())?;
        let reports: Vec<&RunReport> = runs.iter().map(|o| &o.report).collect();
        let row = &summarize(&reports)[0];
        println!("{v:>8} {:>12.1} {:>8.3}", row.total, row.service_rate);
    }
    Ok(())
}

fn main() -> hydrocharge::Result<()> {
    let base = ScenarioConfig::from_toml_str(include_str!("../scenarios/desk.toml"))?;
    sweep(&base, SweepAxis::Piles, &[3.0, 5.0, 7.0, 9.0])?;
    sweep(&base, SweepAxis::Speed, &[30.0, 45.0, 60.0, 90.0])
}
