//! Report files: per-step tables, run summaries, strategy comparison tables
//! and iteration traces. Nothing written depends on wall-clock time, so the
//! same run always produces the same bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bilevel::IterationTrace;
use crate::error::Result;
use crate::horizon::{RunOutcome, RunReport, StepRecord};
use crate::strategy::Strategy;

#[derive(Debug, Serialize)]
struct StepRow {
    step: String,
    requests: usize,
    new_requests: usize,
    served: usize,
    deferred: usize,
    unserved: usize,
    charge: f64,
    wait: f64,
    idle: f64,
    depreciation: f64,
    penalty: f64,
    fcs_maint: f64,
    hps_maint: f64,
    delivery: f64,
    total: f64,
    tou_price: f64,
    mean_price: f64,
    hydrogen_available_kw: f64,
    hydrogen_dispatched_kw: f64,
    gamma_bound: f64,
    iterations: usize,
    converged: bool,
}

impl StepRow {
    fn from_record(r: &StepRecord) -> Self {
        let b = &r.breakdown;
        Self {
            step: r.step.to_string(),
            requests: r.requests,
            new_requests: r.new_requests,
            served: b.served,
            deferred: b.deferred,
            unserved: b.unserved,
            charge: b.charge,
            wait: b.wait,
            idle: b.idle,
            depreciation: b.depreciation,
            penalty: b.penalty,
            fcs_maint: b.fcs_maint,
            hps_maint: b.hps_maint,
            delivery: b.delivery,
            total: b.total,
            tou_price: r.tou_price,
            mean_price: r.mean_price,
            hydrogen_available_kw: r.hydrogen_available_kw,
            hydrogen_dispatched_kw: r.hydrogen_dispatched_kw,
            gamma_bound: r.gamma_bound,
            iterations: r.iterations,
            converged: r.converged,
        }
    }

    fn summary(report: &RunReport) -> Self {
        let b = &report.totals;
        let n = report.steps.len().max(1) as f64;
        Self {
            step: "total".into(),
            requests: report.steps.iter().map(|s| s.requests).sum(),
            new_requests: report.requests,
            served: b.served,
            deferred: b.deferred,
            unserved: b.unserved,
            charge: b.charge,
            wait: b.wait,
            idle: b.idle,
            depreciation: b.depreciation,
            penalty: b.penalty,
            fcs_maint: b.fcs_maint,
            hps_maint: b.hps_maint,
            delivery: b.delivery,
            total: b.total,
            tou_price: report.steps.iter().map(|s| s.tou_price).sum::<f64>() / n,
            mean_price: report.steps.iter().map(|s| s.mean_price).sum::<f64>() / n,
            hydrogen_available_kw: report.steps.iter().map(|s| s.hydrogen_available_kw).sum(),
            hydrogen_dispatched_kw: report.steps.iter().map(|s| s.hydrogen_dispatched_kw).sum(),
            gamma_bound: report.steps.iter().map(|s| s.gamma_bound).fold(0.0, f64::max),
            iterations: report.steps.iter().map(|s| s.iterations).sum(),
            converged: report.iterations.not_converged == 0,
        }
    }
}

/// `<strategy>_seed<seed>` file stem.
pub fn run_stem(strategy: Strategy, seed: u64) -> String {
    format!("{}_seed{seed}", strategy.slug())
}

/// Per-step table with a final `total` row.
pub fn steps_csv(report: &RunReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.steps {
        w.serialize(StepRow::from_record(r))?;
    }
    w.serialize(StepRow::summary(report))?;
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

pub fn report_json(report: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

#[derive(Debug, Serialize)]
struct TraceRowOut {
    step: usize,
    iteration: usize,
    j_matching: f64,
    j_dispatch: f64,
}

/// One row per alternation round; round 0 holds the starting objective.
pub fn traces_csv(traces: &[(usize, IterationTrace)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (step, t) in traces {
        w.serialize(TraceRowOut {
            step: *step,
            iteration: 0,
            j_matching: t.j_initial,
            j_dispatch: t.j_initial,
        })?;
        for r in &t.rows {
            w.serialize(TraceRowOut {
                step: *step,
                iteration: r.iteration,
                j_matching: r.j_matching,
                j_dispatch: r.j_dispatch,
            })?;
        }
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

/// Write the per-step table and the JSON report of one run; returns the
/// paths written.
pub fn write_run(dir: &Path, outcome: &RunOutcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = run_stem(outcome.report.strategy, outcome.report.seed);
    let csv_path = dir.join(format!("{stem}_steps.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    fs::write(&csv_path, steps_csv(&outcome.report)?)?;
    fs::write(&json_path, report_json(&outcome.report)?)?;
    Ok(vec![csv_path, json_path])
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// One strategy's costs averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub runs: usize,
    pub charge: f64,
    pub wait: f64,
    pub idle: f64,
    pub depreciation: f64,
    pub penalty: f64,
    pub uncharged: f64,
    pub fcs_maint: f64,
    pub hps_maint: f64,
    pub delivery: f64,
    pub total: f64,
    pub total_std: f64,
    pub service_rate: f64,
    pub mean_iterations: f64,
}

/// Rows in `Strategy::ALL` order for the strategies present.
pub fn summarize(reports: &[&RunReport]) -> Vec<SummaryRow> {
    Strategy::ALL
        .iter()
        .filter_map(|s| {
            let rs: Vec<&&RunReport> = reports.iter().filter(|r| r.strategy == *s).collect();
            if rs.is_empty() {
                return None;
            }
            let avg = |f: &dyn Fn(&RunReport) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / rs.len() as f64;
            let totals: Vec<f64> = rs.iter().map(|r| r.totals.total).collect();
            let (total, total_std) = mean_std(&totals);
            Some(SummaryRow {
                strategy: s.name().to_string(),
                runs: rs.len(),
                charge: avg(&|r| r.totals.charge),
                wait: avg(&|r| r.totals.wait),
                idle: avg(&|r| r.totals.idle),
                depreciation: avg(&|r| r.totals.depreciation),
                penalty: avg(&|r| r.totals.penalty),
                uncharged: avg(&|r| r.never_served as f64),
                fcs_maint: avg(&|r| r.totals.fcs_maint),
                hps_maint: avg(&|r| r.totals.hps_maint),
                delivery: avg(&|r| r.totals.delivery),
                total,
                total_std,
                service_rate: avg(&|r| r.service_rate),
                mean_iterations: avg(&|r| r.iterations.mean),
            })
        })
        .collect()
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?).expect("csv is utf-8"))
}

/// Fixed-width table for the terminal.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut s = format!(
        "{:<12} {:>10} {:>10} {:>10} {:>8} {:>10} {:>9} {:>9} {:>9} {:>9} {:>11} {:>9} {:>7}\n",
        "strategy",
        "charge",
        "wait",
        "idle",
        "depr",
        "penalty",
        "uncharged",
        "fcs-mnt",
        "hps-mnt",
        "delivery",
        "total",
        "std",
        "served"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<12} {:>10.1} {:>10.1} {:>10.1} {:>8.1} {:>10.1} {:>9.1} {:>9.1} {:>9.1} {:>9.1} {:>11.1} {:>9.1} {:>7.3}\n",
            r.strategy, r.charge, r.wait, r.idle, r.depreciation, r.penalty, r.uncharged,
            r.fcs_maint, r.hps_maint, r.delivery, r.total, r.total_std, r.service_rate
        ));
    }
    s
}
