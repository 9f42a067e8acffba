//! All six strategies on the same sample paths.

use hydrocharge::horizon::{run_batch, RunOptions, RunReport};
use hydrocharge::report::{summarize, summary_table};
use hydrocharge::scenario::ScenarioConfig;
use hydrocharge::strategy::Strategy;

fn main() -> hydrocharge::Result<()> {
    let cfg = ScenarioConfig::from_toml_str(include_str!("../scenarios/desk.toml"))?;
    let seeds: Vec<u64> = (0..5).collect();
    let runs = run_batch(&cfg, &Strategy::ALL, &seeds, &RunOptions::default())?;
    let reports: Vec<&RunReport> = runs.iter().map(|o| &o.report).collect();
    let rows = summarize(&reports);
    print!("{}", summary_table(&rows));
    let bi = rows[0].total;
    for r in &rows[1..] {
        println!(
            "{:>12}: BI-BBG is {:.1}% cheaper",
            r.strategy,
            100.0 * (r.total - bi) / r.total
        );
    }
    Ok(())
}
