//! Command-line verbs. The binary only parses arguments and calls
//! [`execute`]; everything else lives here so it can be tested.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::bilevel::{optimize_step, BilevelOptions, Init};
use crate::error::{Error, Result};
use crate::horizon::{run_batch, run_with_probe, RunOptions, RunOutcome, RunReport};
use crate::oracle::{
    check_cardinality_order, check_monotone_trace, enumerate_joint_optimum, random_small_instance,
    CardinalityOrderOptions, CardinalityOrderVerdict, SmallInstanceLimits, ENUMERATION_BUDGET,
};
use crate::report::{self, summarize, summary_csv, summary_table, SummaryRow};
use crate::scenario::{generate_scenario, ScenarioConfig};
use crate::strategy::Strategy;

#[derive(Debug, Parser)]
#[command(
    name = "hydrocharge",
    version,
    about = "Joint EV charging and hydrogen dispatch simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate each strategy on each seed and print the cost table.
    Run(CommonArgs),
    /// Repeat the comparison for each value of one parameter.
    Sweep(CommonArgs),
    /// Record the bi-level iteration traces of every step.
    Convergence(CommonArgs),
    /// Check the optimizer against brute force on small random instances.
    Verify(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seeds: `7`, `0,3,9`, `0..20` or `0..=19`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Comma-separated strategy names, or `all`.
    #[arg(long, default_value = "all")]
    pub strategies: String,
    #[arg(long, value_enum)]
    pub axis: Option<SweepAxis>,
    /// Comma-separated values or an integer range like `17..=24`.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Start each step's alternation from a random dispatch.
    #[arg(long)]
    pub random_init: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Piles,
    Capacity,
    Speed,
    Penalty,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Piles => "piles",
            SweepAxis::Capacity => "capacity",
            SweepAxis::Speed => "speed",
            SweepAxis::Penalty => "penalty",
        }
    }

    /// Copy of `cfg` with this parameter set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        if !(value > 0.0) {
            return Err(Error::param("values", "sweep values must be positive"));
        }
        let mut c = cfg.clone();
        match self {
            SweepAxis::Piles => {
                if value.fract() != 0.0 {
                    return Err(Error::param("values", "pile counts must be whole numbers"));
                }
                c.stations.piles = value as usize;
                c.stations.piles_per_station = None;
            }
            SweepAxis::Capacity => c.fleet.capacity_kwh = value,
            SweepAxis::Speed => c.fleet.speed_kmh = value,
            SweepAxis::Penalty => c.costs.gamma = value,
        }
        c.validate()?;
        Ok(c)
    }
}

/// Everything a verb needs, resolved from the flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub axis: Option<SweepAxis>,
    pub values: Vec<f64>,
    pub out: PathBuf,
    pub random_init: bool,
}

impl RunConfig {
    pub fn from_args(args: &CommonArgs, default_seeds: &[u64]) -> Result<Self> {
        let scenario = match &args.config {
            Some(p) => ScenarioConfig::from_file(p)?,
            None => ScenarioConfig::default(),
        };
        let seeds = match &args.seeds {
            Some(s) => parse_seeds(s)?,
            None => default_seeds.to_vec(),
        };
        let values = match &args.values {
            Some(v) => parse_values(v)?,
            None => Vec::new(),
        };
        if values.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::param("values", "sweep values must be positive"));
        }
        Ok(Self {
            scenario,
            strategies: parse_strategies(&args.strategies)?,
            seeds,
            axis: args.axis,
            values,
            out: args.out.clone(),
            random_init: args.random_init,
        })
    }

    fn run_options(&self, seed: u64) -> RunOptions {
        let mut bilevel = self.scenario.bilevel_options();
        if self.random_init {
            bilevel.init = Init::Random(seed);
        }
        RunOptions {
            bilevel: Some(bilevel),
            keep_decisions: false,
        }
    }
}

pub fn parse_strategies(s: &str) -> Result<Vec<Strategy>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(Strategy::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let st = Strategy::from_str(part)?;
        if !out.contains(&st) {
            out.push(st);
        }
    }
    if out.is_empty() {
        return Err(Error::param("strategies", "no strategy given"));
    }
    Ok(out)
}

fn parse_range(s: &str) -> Option<Result<(u64, u64)>> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else {
        let (a, b) = s.split_once("..")?;
        (a, b, false)
    };
    let bad = || Error::param("range", format!("cannot parse `{s}`"));
    Some((|| {
        let lo: u64 = a.trim().parse().map_err(|_| bad())?;
        let hi: u64 = b.trim().parse().map_err(|_| bad())?;
        let hi = if inclusive {
            hi.checked_add(1).ok_or_else(bad)?
        } else {
            hi
        };
        if hi <= lo {
            return Err(Error::param("range", format!("`{s}` is empty")));
        }
        Ok((lo, hi))
    })())
}

pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    if let Some(r) = parse_range(s) {
        let (lo, hi) = r?;
        return Ok((lo..hi).collect());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::param("seeds", format!("`{p}` is not a seed")))
        })
        .collect()
}

pub fn parse_values(s: &str) -> Result<Vec<f64>> {
    if let Some(r) = parse_range(s) {
        let (lo, hi) = r?;
        return Ok((lo..hi).map(|v| v as f64).collect());
    }
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::param("values", format!("`{p}` is not a number")))
        })
        .collect()
}

fn batch(cfg: &RunConfig, scenario: &ScenarioConfig) -> Result<Vec<RunOutcome>> {
    if cfg.random_init {
        // init seed differs per scenario seed, so cells run one seed at a time
        let per_seed: Vec<Vec<RunOutcome>> = cfg
            .seeds
            .par_iter()
            .map(|s| run_batch(scenario, &cfg.strategies, &[*s], &cfg.run_options(*s)))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for st in &cfg.strategies {
            for runs in &per_seed {
                out.extend(runs.iter().filter(|o| o.report.strategy == *st).cloned());
            }
        }
        Ok(out)
    } else {
        run_batch(scenario, &cfg.strategies, &cfg.seeds, &cfg.run_options(0))
    }
}

fn write_runs(dir: &Path, outcomes: &[RunOutcome]) -> Result<Vec<SummaryRow>> {
    for o in outcomes {
        report::write_run(dir, o)?;
    }
    let reports: Vec<&RunReport> = outcomes.iter().map(|o| &o.report).collect();
    let rows = summarize(&reports);
    fs::write(dir.join("summary.csv"), summary_csv(&rows)?)?;
    Ok(rows)
}

fn reductions(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let Some(bi) = rows.iter().find(|r| r.strategy == Strategy::BiBbg.name()) else {
        return s;
    };
    for r in rows.iter().filter(|r| r.strategy != bi.strategy) {
        if r.total > 0.0 {
            let pct = 100.0 * (r.total - bi.total) / r.total;
            let _ = writeln!(s, "BI-BBG vs {}: {pct:.1}% lower total cost", r.strategy);
        }
    }
    s
}

/// Simulate every (strategy, seed) cell and write per-run files plus
/// `summary.csv`. Returns the text printed to the terminal.
pub fn cmd_run(cfg: &RunConfig) -> Result<String> {
    let outcomes = batch(cfg, &cfg.scenario)?;
    let rows = write_runs(&cfg.out, &outcomes)?;
    Ok(format!(
        "{} runs, seeds {:?}\n{}{}",
        outcomes.len(),
        cfg.seeds,
        summary_table(&rows),
        reductions(&rows)
    ))
}

/// Re-run the comparison for each value on the chosen axis. Each value gets
/// its own report directory; `<axis>_sweep.csv` collects the summaries.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<String> {
    let axis = cfg.axis.ok_or_else(|| Error::param("axis", "sweep needs --axis"))?;
    if cfg.values.is_empty() {
        return Err(Error::param("values", "sweep needs --values"));
    }
    let mut all: Vec<(f64, Vec<SummaryRow>)> = Vec::new();
    for &v in &cfg.values {
        let scenario = axis.apply(&cfg.scenario, v)?;
        let outcomes = batch(cfg, &scenario)?;
        let dir = cfg.out.join(axis.name()).join(format!("{v}"));
        all.push((v, write_runs(&dir, &outcomes)?));
    }
    // the summary table's columns, prefixed by the axis value
    let mut table = String::from("value,");
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<10} {:<12} {:>12} {:>10} {:>8}",
        axis.name(),
        "strategy",
        "total",
        "std",
        "served"
    );
    let mut header = true;
    for (v, rows) in &all {
        let body = summary_csv(rows)?;
        let mut lines = body.lines();
        if let Some(h) = lines.next() {
            if header {
                table.push_str(h);
                table.push('\n');
                header = false;
            }
        }
        for line in lines {
            let _ = writeln!(table, "{v},{line}");
        }
        for r in rows {
            let _ = writeln!(
                text,
                "{:<10} {:<12} {:>12.1} {:>10.1} {:>8.3}",
                v, r.strategy, r.total, r.total_std, r.service_rate
            );
        }
    }
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join(format!("{}_sweep.csv", axis.name())), table)?;
    Ok(text)
}

#[derive(Debug, Clone, Serialize)]
struct ConvergenceRow {
    seed: u64,
    optimized_steps: usize,
    mean_iterations: f64,
    max_iterations: usize,
    not_converged: usize,
    nonmonotone_traces: usize,
}

/// Bi-level runs only. Writes `<run>_trace.csv` per seed and
/// `convergence.csv`; per-step solve times go to the terminal only.
pub fn cmd_convergence(cfg: &RunConfig) -> Result<String> {
    fs::create_dir_all(&cfg.out)?;
    let mut rows = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    for &seed in &cfg.seeds {
        let sc = generate_scenario(&cfg.scenario, seed)?;
        let opts = cfg.run_options(seed);
        let bilevel = opts.bilevel.clone().unwrap_or_default();
        let mut step_times = Vec::new();
        let outcome = run_with_probe(&sc, Strategy::BiBbg, &opts, &mut |_, problem, _| {
            if !problem.requests.is_empty() {
                let t0 = Instant::now();
                optimize_step(problem, &bilevel)?;
                step_times.push(t0.elapsed().as_secs_f64());
            }
            Ok(())
        })?;
        times.extend(step_times);
        let stem = report::run_stem(Strategy::BiBbg, seed);
        fs::write(
            cfg.out.join(format!("{stem}_trace.csv")),
            report::traces_csv(&outcome.traces)?,
        )?;
        let it = &outcome.report.iterations;
        rows.push(ConvergenceRow {
            seed,
            optimized_steps: it.optimized_steps,
            mean_iterations: it.mean,
            max_iterations: it.max,
            not_converged: it.not_converged,
            nonmonotone_traces: outcome
                .traces
                .iter()
                .filter(|(_, t)| !check_monotone_trace(t, None).passed())
                .count(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    fs::write(
        cfg.out.join("convergence.csv"),
        w.into_inner().map_err(|e| e.into_error())?,
    )?;

    let steps: usize = rows.iter().map(|r| r.optimized_steps).sum();
    let mean_it = if steps == 0 {
        0.0
    } else {
        rows.iter()
            .map(|r| r.mean_iterations * r.optimized_steps as f64)
            .sum::<f64>()
            / steps as f64
    };
    let bad: usize = rows.iter().map(|r| r.nonmonotone_traces).sum();
    let max_t = times.iter().copied().fold(0.0, f64::max);
    let mean_t = if times.is_empty() {
        0.0
    } else {
        times.iter().sum::<f64>() / times.len() as f64
    };
    Ok(format!(
        "steps solved: {steps}\nmean iterations: {mean_it:.3}\nmax iterations: {}\nnonmonotone traces: {bad}\nstep solve time: mean {:.2} ms, max {:.2} ms\n",
        rows.iter().map(|r| r.max_iterations).max().unwrap_or(0),
        mean_t * 1e3,
        max_t * 1e3
    ))
}

#[derive(Debug, Clone, Serialize)]
struct VerifyRow {
    seed: u64,
    requests: usize,
    stations: usize,
    producers: usize,
    cases: u128,
    j_bilevel: f64,
    j_optimum: f64,
    gap: f64,
    iterations: usize,
    cardinality_order: &'static str,
    monotone: bool,
}

/// Tolerance for matching the brute-force optimum, CNY.
pub const ORACLE_TOL: f64 = 1e-6;

/// Brute-force cross-check on small random instances, one per seed.
/// Writes `verify.csv`.
pub fn cmd_verify(cfg: &RunConfig) -> Result<String> {
    let limits = SmallInstanceLimits::default();
    let opts = BilevelOptions {
        epsilon: 1e-9,
        ..Default::default()
    };
    let rows: Vec<VerifyRow> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let p = random_small_instance(seed, &limits);
            let opt = enumerate_joint_optimum(&p, ENUMERATION_BUDGET)?;
            let o = if cfg.random_init {
                BilevelOptions {
                    init: Init::Random(seed),
                    ..opts.clone()
                }
            } else {
                opts.clone()
            };
            let sol = optimize_step(&p, &o)?;
            let t1 = check_cardinality_order(&p, p.consts.gamma, &CardinalityOrderOptions::default())?;
            Ok(VerifyRow {
                seed,
                requests: p.requests.len(),
                stations: p.stations.len(),
                producers: p.producers.len(),
                cases: opt.cases,
                j_bilevel: sol.objective,
                j_optimum: opt.objective,
                gap: sol.objective - opt.objective,
                iterations: sol.trace.iterations(),
                cardinality_order: match &t1 {
                    CardinalityOrderVerdict::Pass { .. } => "pass",
                    CardinalityOrderVerdict::Fail(w) if w.tie => "tie",
                    CardinalityOrderVerdict::Fail(_) => "fail",
                },
                monotone: check_monotone_trace(&sol.trace, Some(opt.objective)).passed(),
            })
        })
        .collect::<Result<_>>()?;
    fs::create_dir_all(&cfg.out)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    fs::write(cfg.out.join("verify.csv"), w.into_inner().map_err(|e| e.into_error())?)?;

    let n = rows.len();
    let matched = rows.iter().filter(|r| r.gap.abs() <= ORACLE_TOL).count();
    let worst = rows.iter().max_by(|a, b| a.gap.total_cmp(&b.gap));
    let count = |s: &str| rows.iter().filter(|r| r.cardinality_order == s).count();
    let mut text = format!(
        "instances: {n}\noptimum reached: {matched}/{n}\ncardinality order: {} pass, {} ties, {} strict violations\nmonotone traces: {}/{n}\n",
        count("pass"),
        count("tie"),
        count("fail"),
        rows.iter().filter(|r| r.monotone).count(),
    );
    if let Some(w) = worst.filter(|w| w.gap > ORACLE_TOL) {
        let _ = writeln!(
            text,
            "largest gap: seed {} ({:.4} vs {:.4})",
            w.seed, w.j_bilevel, w.j_optimum
        );
    }
    Ok(text)
}

/// Dispatch a parsed command line.
pub fn execute(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Run(a) => cmd_run(&RunConfig::from_args(a, &[0])?),
        Command::Sweep(a) => cmd_sweep(&RunConfig::from_args(a, &[0])?),
        Command::Convergence(a) => cmd_convergence(&RunConfig::from_args(a, &[0])?),
        Command::Verify(a) => cmd_verify(&RunConfig::from_args(a, &(0..500).collect::<Vec<_>>())?),
    }
}
