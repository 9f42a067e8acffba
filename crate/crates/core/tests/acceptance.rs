//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL ...`
//! line straight to stdout (visible without `--nocapture`) and then asserts.

use std::io::Write;
use std::time::Instant;

use hydrocharge::bilevel::{optimize_step, BilevelOptions, Init};
use hydrocharge::cli::{cmd_run, RunConfig, SweepAxis};
use hydrocharge::ev_cost::CostConstants;
use hydrocharge::horizon::{frozen_comparison, run_batch, run_horizon, run_with_probe, RunOptions, RunReport};
use hydrocharge::matching::gamma_bound;
use hydrocharge::network::BoolMatrix;
use hydrocharge::oracle::{
    check_cardinality_order, check_monotone_trace, enumerate_joint_optimum, random_small_instance,
    CardinalityOrderOptions, CardinalityOrderVerdict, SmallInstanceLimits, ENUMERATION_BUDGET, MONOTONE_TOL,
};
use hydrocharge::problem::{Leg, ProducerSlice, Request, StationSlice, StepProblem};
use hydrocharge::renewables::{hydrogen_power, pv_power, wind_power, HpsState};
use hydrocharge::scenario::{generate_scenario, ScenarioConfig};
use hydrocharge::strategy::Strategy;

const SMALL_INSTANCES: u64 = 500;
const PATHS: u64 = 20;

fn report(n: u32, ok: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn desk() -> ScenarioConfig {
    ScenarioConfig::from_toml_str(include_str!("../scenarios/desk.toml")).unwrap()
}

fn seeds() -> Vec<u64> {
    (0..PATHS).collect()
}

fn oracle_opts() -> BilevelOptions {
    BilevelOptions {
        epsilon: 1e-9,
        ..Default::default()
    }
}

#[test]
fn criterion_1_joint_optimum_matches_enumeration() {
    let t0 = Instant::now();
    let limits = SmallInstanceLimits::default();
    let mut misses = Vec::new();
    for seed in 0..SMALL_INSTANCES {
        let p = random_small_instance(seed, &limits);
        let opt = enumerate_joint_optimum(&p, ENUMERATION_BUDGET).unwrap();
        let sol = optimize_step(&p, &oracle_opts()).unwrap();
        if (sol.objective - opt.objective).abs() > 1e-6 {
            misses.push((seed, sol.objective, opt.objective));
        }
    }
    let ok = misses.is_empty();
    let worst = misses.iter().max_by(|a, b| (a.1 - a.2).total_cmp(&(b.1 - b.2)));
    report(
        1,
        ok,
        &format!(
            "{}/{SMALL_INSTANCES} instances reach J* within 1e-6 ({:.1}s){}",
            SMALL_INSTANCES as usize - misses.len(),
            t0.elapsed().as_secs_f64(),
            worst.map_or(String::new(), |w| format!(
                "; worst seed {} J={:.3} J*={:.3}",
                w.0, w.1, w.2
            ))
        ),
    );
    assert!(
        ok,
        "alternation stops above the joint optimum on {} instances: {misses:?}",
        misses.len()
    );
}

/// One station with a single free pile, two identical requests and no
/// hydrogen: serving one request costs `m`, serving none costs `gamma`.
fn crafted_pair() -> StepProblem {
    let leg = Leg {
        to_station_km: 5.0,
        to_destination_km: 0.0,
    };
    let req = |ev| Request {
        ev,
        soc: 0.3,
        capacity_kwh: 75.0,
        with_passengers: false,
        speed_kmh: 60.0,
        origin_km: 3.0,
        legs: vec![Some(leg)],
    };
    StepProblem {
        delta_h: 0.25,
        tou_price: 0.7,
        consts: CostConstants::default(),
        requests: vec![req(0), req(1)],
        stations: vec![StationSlice {
            available: 1,
            departing: 0,
            base_energy_kwh: 50.0,
            demand_kwh: 100.0,
            posted_price: 0.7,
        }],
        producers: vec![ProducerSlice {
            hydrogen_kw: 0.0,
            maintenance: 0.018,
            delivery: 0.04,
            station_km: vec![3.0],
        }],
        supply: {
            let mut m = BoolMatrix::new(1, 1);
            m.set(0, 0, true);
            m
        },
    }
}

#[test]
fn criterion_2_more_served_is_strictly_cheaper() {
    let t0 = Instant::now();
    // negative control: a penalty far below the bound must break the property
    let crafted = crafted_pair();
    let control = check_cardinality_order(&crafted, 1.0, &CardinalityOrderOptions::default()).unwrap();
    let control_ok = matches!(&control, CardinalityOrderVerdict::Fail(w) if !w.tie);

    let limits = SmallInstanceLimits::default();
    let (mut ties, mut strict, mut first) = (0, 0, None);
    for seed in 0..SMALL_INSTANCES {
        let p = random_small_instance(seed, &limits);
        assert_eq!(p.consts.gamma, gamma_bound(&p));
        if let CardinalityOrderVerdict::Fail(w) =
            check_cardinality_order(&p, p.consts.gamma, &CardinalityOrderOptions::default()).unwrap()
        {
            if w.tie {
                ties += 1;
            } else {
                strict += 1;
            }
            first.get_or_insert((seed, w.j_smaller, w.j_larger));
        }
    }
    let ok = control_ok && ties == 0 && strict == 0;
    report(
        2,
        ok,
        &format!(
            "{}/{SMALL_INSTANCES} instances strictly ordered by cardinality ({ties} exact ties, {strict} reversals); negative control {} ({:.1}s){}",
            SMALL_INSTANCES as usize - ties - strict,
            if control_ok { "broken as expected" } else { "NOT broken" },
            t0.elapsed().as_secs_f64(),
            first.map_or(String::new(), |f| format!("; first seed {} J(smaller)={:.4} J(larger)={:.4}", f.0, f.1, f.2))
        ),
    );
    assert!(control_ok, "undersized penalty did not break the property: {control:?}");
    assert!(
        ties == 0 && strict == 0,
        "{ties} ties and {strict} reversals at the penalty bound"
    );
}

#[test]
fn criterion_3_iteration_traces_are_monotone() {
    let t0 = Instant::now();
    let cfg = desk();
    let runs = run_batch(&cfg, &[Strategy::BiBbg], &seeds(), &RunOptions::default()).unwrap();
    let mut traces = 0;
    let mut bad = Vec::new();
    for o in &runs {
        for (step, t) in &o.traces {
            traces += 1;
            let v = check_monotone_trace(t, None);
            if !v.passed() {
                bad.push((o.report.seed, *step, v));
            }
        }
    }

    // random starting points on small instances
    let limits = SmallInstanceLimits::default();
    let mut disagree = Vec::new();
    let mut random_bad = 0;
    for seed in 0..SMALL_INSTANCES {
        let p = random_small_instance(seed, &limits);
        let base = optimize_step(&p, &oracle_opts()).unwrap().objective;
        for r in 0..3 {
            let sol = optimize_step(
                &p,
                &BilevelOptions {
                    init: Init::Random(1000 * seed + r),
                    ..oracle_opts()
                },
            )
            .unwrap();
            random_bad += !check_monotone_trace(&sol.trace, None).passed() as usize;
            if (sol.objective - base).abs() > 1e-6 {
                disagree.push((seed, base, sol.objective));
                break;
            }
        }
    }
    let ok = bad.is_empty() && random_bad == 0 && disagree.is_empty();
    report(
        3,
        ok,
        &format!(
            "{}/{traces} desk-day traces nonincreasing within {MONOTONE_TOL:e}; random-start traces nonincreasing: {}; random starts agree with zero start on {}/{SMALL_INSTANCES} small instances ({:.1}s)",
            traces - bad.len(),
            random_bad == 0,
            SMALL_INSTANCES as usize - disagree.len(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(bad.is_empty(), "nonmonotone traces: {bad:?}");
    assert_eq!(random_bad, 0);
    assert!(disagree.is_empty(), "random starts settle elsewhere: {disagree:?}");
}

#[test]
fn criterion_4_bilevel_dominates_baselines() {
    let t0 = Instant::now();
    let cfg = desk();
    let mut steps = 0;
    let mut worse = Vec::new();
    for seed in seeds() {
        let sc = generate_scenario(&cfg, seed).unwrap();
        for fs in frozen_comparison(&sc, &RunOptions::default()).unwrap() {
            steps += 1;
            let bi = fs.objective(Strategy::BiBbg);
            for s in Strategy::BASELINES {
                if bi > fs.objective(s) + 1e-6 {
                    worse.push((seed, fs.step, s, bi - fs.objective(s)));
                }
            }
        }
    }

    let runs = run_batch(&cfg, &Strategy::ALL, &seeds(), &RunOptions::default()).unwrap();
    let mean = |s: Strategy| {
        let v: Vec<f64> = runs
            .iter()
            .filter(|o| o.report.strategy == s)
            .map(|o| o.report.totals.total)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let bi = mean(Strategy::BiBbg);
    let mut pct = Vec::new();
    let mut means_ok = true;
    for s in Strategy::BASELINES {
        let m = mean(s);
        means_ok &= bi < m;
        pct.push(format!("{} {:.1}%", s.name(), 100.0 * (m - bi) / m));
    }
    let ok = worse.is_empty() && means_ok;
    let worst = worse.iter().max_by(|a, b| a.3.total_cmp(&b.3));
    report(
        4,
        ok,
        &format!(
            "frozen steps with BI-BBG <= every baseline: {}/{steps}; mean total {bi:.1}, reduction vs {} ({:.1}s){}",
            steps
                - worse
                    .iter()
                    .map(|w| (w.0, w.1))
                    .collect::<std::collections::BTreeSet<_>>()
                    .len(),
            pct.join(", "),
            t0.elapsed().as_secs_f64(),
            worst.map_or(String::new(), |w| format!(
                "; worst: seed {} step {} vs {} by {:.3}",
                w.0,
                w.1,
                w.2.name(),
                w.3
            ))
        ),
    );
    assert!(means_ok, "mean totals: {pct:?}");
    assert!(
        worse.is_empty(),
        "{} step comparisons where a baseline is cheaper",
        worse.len()
    );
}

#[test]
fn criterion_5_physics_formulas() {
    let hps = HpsState::default();
    let w = &hps.wind;
    let rated = wind_power(12.0, w);
    let cut_out = (0..50).all(|i| wind_power(22.0 + 0.01 + i as f64, w) == 0.0);
    let pv = &hps.pv;
    let pv_linear = [0.0, 100.0, 250.0, 640.0, 1000.0]
        .iter()
        .all(|g| (pv_power(*g, pv) - pv_power(1.0, pv) * g).abs() <= 1e-9 * (1.0 + pv_power(*g, pv)));
    let c = hps.chain.coefficient();
    let h_zero = hydrogen_power(0.0, 0.0, &hps) == 0.0 && hps.chain.coefficient() * 0.0 == 0.0;
    let h_linear = [(8.0, 0.0), (0.0, 500.0), (10.0, 300.0), (12.0, 900.0)]
        .iter()
        .all(|(v, g)| {
            let avail = (wind_power(*v, w) + pv_power(*g, pv) - hps.chain.base_load_kw).max(0.0);
            (hydrogen_power(*v, *g, &hps) - c * avail).abs() <= 1e-9 * (1.0 + avail)
        });
    let ok = (rated - 2200.0).abs() < 1e-9 && cut_out && pv_linear && h_zero && h_linear;
    report(
        5,
        ok,
        &format!(
            "wind(12 m/s) = {rated} kW, zero beyond 22 m/s: {cut_out}, pv linear: {pv_linear}, hydrogen linear: {h_linear}, zero at zero: {h_zero}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_constraints_hold_every_step() {
    let t0 = Instant::now();
    let cfg = desk();
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for seed in seeds() {
        let sc = generate_scenario(&cfg, seed).unwrap();
        for s in Strategy::ALL {
            let res = run_with_probe(&sc, s, &RunOptions::default(), &mut |_, p, d| {
                p.check_assignment(&d.assignment)?;
                p.check_dispatch(&d.dispatch)?;
                checked += 1;
                Ok(())
            });
            if let Err(e) = res {
                failures.push(format!("seed {seed} {}: {e}", s.name()));
            }
        }
    }
    let ok = failures.is_empty();
    report(
        6,
        ok,
        &format!(
            "{checked} step decisions checked across {PATHS} seeds and 6 strategies, {} violations ({:.1}s)",
            failures.len(),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(ok, "{failures:?}");
}

fn sweep_means(cfg: &ScenarioConfig, axis: SweepAxis, values: &[f64], f: impl Fn(&RunReport) -> f64) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let c = axis.apply(cfg, *v).unwrap();
            let runs = run_batch(&c, &[Strategy::BiBbg], &seeds(), &RunOptions::default()).unwrap();
            runs.iter().map(|o| f(&o.report)).sum::<f64>() / runs.len() as f64
        })
        .collect()
}

#[test]
fn criterion_7_sensitivity_directions() {
    let t0 = Instant::now();
    let cfg = desk();
    let piles: Vec<f64> = (2..=9).map(f64::from).collect();
    let service = sweep_means(&cfg, SweepAxis::Piles, &piles, |r| r.service_rate);
    let piles_ok = service.windows(2).all(|w| w[1] >= w[0]);

    let speeds = [30.0, 45.0, 60.0, 75.0, 90.0];
    let totals = sweep_means(&cfg, SweepAxis::Speed, &speeds, |r| r.totals.total);
    let speed_ok = totals.windows(2).all(|w| w[1] <= w[0]);

    let caps = [50.0, 60.0, 75.0, 90.0, 100.0];
    let charge = sweep_means(&cfg, SweepAxis::Capacity, &caps, |r| r.totals.charge);
    let cap_ok = charge.windows(2).all(|w| w[1] > w[0]);

    // scarce piles so that some requests go unserved and the penalty bites
    let scarce = SweepAxis::Piles.apply(&cfg, 4.0).unwrap();
    let keep = RunOptions {
        keep_decisions: true,
        ..Default::default()
    };
    let mut penalty_ok = true;
    let mut penalty_lines = Vec::new();
    for seed in seeds().into_iter().take(5) {
        let sc = generate_scenario(&scarce, seed).unwrap();
        let base = run_horizon(&sc, Strategy::BiBbg, &keep).unwrap();
        let bound = base.report.steps.iter().map(|s| s.gamma_bound).fold(0.0, f64::max);
        for factor in [1.0, 2.0, 10.0] {
            let gamma = bound * factor + 1.0;
            let sc2 = generate_scenario(&SweepAxis::Penalty.apply(&scarce, gamma).unwrap(), seed).unwrap();
            let run = run_horizon(&sc2, Strategy::BiBbg, &keep).unwrap();
            let same_decisions = run
                .decisions
                .iter()
                .zip(&base.decisions)
                .all(|(a, b)| a.assignment == b.assignment && a.dispatch == b.dispatch);
            let (a, b) = (&run.report.totals, &base.report.totals);
            let same_other = (a.without_penalty() - b.without_penalty()).abs() <= 1e-6 && a.unserved == b.unserved;
            penalty_ok &= same_decisions && same_other && a.penalty > b.penalty;
            if factor == 10.0 && seed == 0 {
                penalty_lines.push(format!("penalty line {:.0} -> {:.0}", b.penalty, a.penalty));
            }
        }
    }

    let ok = piles_ok && speed_ok && cap_ok && penalty_ok;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    report(
        7,
        ok,
        &format!(
            "service vs piles 2..9 nondecreasing: {piles_ok} [{}]; total vs speed nonincreasing: {speed_ok}; charge vs capacity increasing: {cap_ok}; penalty above bound leaves decisions unchanged: {penalty_ok} ({}) ({:.1}s)",
            fmt(&service),
            penalty_lines.join(""),
            t0.elapsed().as_secs_f64()
        ),
    );
    assert!(piles_ok, "service rates {service:?}");
    assert!(speed_ok, "totals {totals:?}");
    assert!(cap_ok, "charging costs {charge:?}");
    assert!(penalty_ok);
}

#[test]
fn criterion_8_step_time_and_iterations() {
    let cfg = desk();
    let opts = cfg.bilevel_options();
    let mut max_s: f64 = 0.0;
    let mut total_s = 0.0;
    let mut n = 0usize;
    let mut iters = 0usize;
    for seed in seeds() {
        let sc = generate_scenario(&cfg, seed).unwrap();
        run_with_probe(&sc, Strategy::BiBbg, &RunOptions::default(), &mut |_, p, _| {
            if p.requests.is_empty() {
                return Ok(());
            }
            let t0 = Instant::now();
            let sol = optimize_step(p, &opts)?;
            let dt = t0.elapsed().as_secs_f64();
            max_s = max_s.max(dt);
            total_s += dt;
            n += 1;
            iters += sol.trace.iterations();
            Ok(())
        })
        .unwrap();
    }
    let mean_it = iters as f64 / n.max(1) as f64;
    let ok = max_s < 1.0 && mean_it < 10.0;
    report(
        8,
        ok,
        &format!(
            "{n} steps: max {:.2} ms, mean {:.3} ms per step; mean iterations {mean_it:.2}",
            max_s * 1e3,
            total_s * 1e3 / n.max(1) as f64
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_9_reports_are_byte_identical() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let rc = RunConfig {
            scenario: desk(),
            strategies: Strategy::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            axis: None,
            values: Vec::new(),
            out: d.path().to_path_buf(),
            random_init: false,
        };
        cmd_run(&rc).unwrap();
    }
    let list = |p: &std::path::Path| {
        let mut v: Vec<_> = std::fs::read_dir(p).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    let names = list(dirs[0].path());
    let same_names = names == list(dirs[1].path());
    let differing: Vec<_> = names
        .iter()
        .filter(|n| std::fs::read(dirs[0].path().join(n)).ok() != std::fs::read(dirs[1].path().join(n)).ok())
        .collect();
    let ok = same_names && differing.is_empty() && names.len() == 6 * 3 * 2 + 1;
    report(
        9,
        ok,
        &format!("{} report files compared, {} differ", names.len(), differing.len()),
    );
    assert!(ok, "{differing:?}");
}
