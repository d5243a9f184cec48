//! Acceptance criteria. Each test prints one `[PASS]` or `[FAIL]` line and
//! then asserts the criterion at its stated tolerance.
//!
//! Run with `cargo test -p crmvip --test acceptance -- --nocapture`.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crmvip::geometry::{
    circumcenter_oracle, circumcenter_step, reflect_halfspace, Halfspace, Separator,
};
use crmvip::harness::{
    median_table, run_scenario, speedup_table, write_report, Instance, ResultRow, Scenario,
    ScenarioName,
};
use crmvip::operators::FnOperator;
use crmvip::sets::{generate_feasible_set, project_intersection, FeasibleSet};
use crmvip::solvers::{
    initial_point, solve_observed, Algorithm, IterationEvent, SolverConfig, Status,
    StepsizeSchedule,
};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BASE_SEED: u64 = 20_240_601;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {id}: {name}: {detail}");
}

fn median_iterations(rows: &[ResultRow], n: usize, m: usize, solver: Algorithm) -> Option<usize> {
    median_table(rows)
        .into_iter()
        .find(|r| r.n == n && r.m == m && r.solver == solver)
        .and_then(|r| r.iterations_lower_median)
}

fn stack(blocks: &[DVector<f64>]) -> DVector<f64> {
    let n = blocks[0].len();
    DVector::from_fn(n * blocks.len(), |i, _| blocks[i / n][i % n])
}

/// Circumcenter of `z, R_S z, R_D R_S z` in the product space, where
/// `R_D` reflects through the diagonal (block mean).
fn product_space_circumcenter(y: &DVector<f64>, hs: &[Halfspace]) -> DVector<f64> {
    let m = hs.len();
    let z = stack(&vec![y.clone(); m]);
    let reflected: Vec<DVector<f64>> = hs
        .iter()
        .map(|h| reflect_halfspace(y, h).unwrap())
        .collect();
    let rs = stack(&reflected);
    let mean = reflected
        .iter()
        .fold(DVector::zeros(y.len()), |acc, r| acc + r)
        / m as f64;
    let rd = stack(&vec![mean * 2.0; m]) - &rs;
    circumcenter_oracle(&z, &rs, &rd)
}

#[test]
fn criterion_1_circumcenter_matches_product_space_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED);
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=4);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let hs: Vec<Halfspace> = (0..m)
            .map(|_| {
                let a = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
                let c = a.dot(&y) - rng.random_range(0.1..3.0);
                Halfspace::new(a, c).unwrap()
            })
            .collect();
        let seps: Vec<Separator> = hs.iter().cloned().map(Separator::Cut).collect();
        let closed = circumcenter_step(&y, &seps).unwrap().output;
        let oracle = product_space_circumcenter(&y, &hs);
        let scale = closed.norm().max(1.0);
        for b in 0..m {
            let block = oracle.rows(b * n, n).into_owned();
            worst = worst.max((block - &closed).norm() / scale);
        }
    }
    let elapsed = started.elapsed();
    let pass = worst <= 1e-9 && elapsed < Duration::from_secs(5);
    report(
        1,
        "closed-form circumcenter vs product-space oracle",
        pass,
        format!(
            "500 cases, max relative error {worst:.2e} (limit 1e-9), {:.3} s (limit 5 s)",
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

struct SmallRun {
    rows: Vec<ResultRow>,
    elapsed: Duration,
}

/// Example 1, n = 5, m = 2, all six solvers, 10 instances.
fn example1_small() -> &'static SmallRun {
    static RUN: OnceLock<SmallRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut sc = Scenario::standard(ScenarioName::A);
        sc.dims = vec![(5, 2)];
        let started = Instant::now();
        let rows = run_scenario(&sc, 1, BASE_SEED).unwrap();
        SmallRun {
            rows,
            elapsed: started.elapsed(),
        }
    })
}

#[test]
fn criterion_2_example1_iteration_counts() {
    let run = example1_small();
    let crm = median_iterations(&run.rows, 5, 2, Algorithm::CrmVip1);
    let bi = median_iterations(&run.rows, 5, 2, Algorithm::Bi1);
    let ratio = match (crm, bi) {
        (Some(c), Some(b)) => b as f64 / c.max(1) as f64,
        _ => f64::NAN,
    };
    let crm_ok = crm.is_some_and(|c| c <= 200);
    let bi_ok = bi.is_some_and(|b| b >= 500);
    let ratio_ok = ratio >= 10.0;
    let time_ok = run.elapsed < Duration::from_secs(120);
    let pass = crm_ok && bi_ok && ratio_ok && time_ok;
    report(
        2,
        "Example 1 (n=5, m=2) iteration medians",
        pass,
        format!(
            "CRM-VIP1 median {crm:?} (need <= 200), BI1 median {bi:?} (need >= 500), ratio {ratio:.1} (need >= 10), \
             run time {:.1} s (limit 120 s)",
            run.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_exact_projection_methods_are_slower() {
    let run = example1_small();
    let speedups = speedup_table(&run.rows, Algorithm::CrmVip1);
    let ratio = |s: Algorithm| {
        speedups
            .iter()
            .find(|r| r.n == 5 && r.m == 2 && r.solver == s)
            .and_then(|r| r.ratio)
    };
    let egm = ratio(Algorithm::Egm);
    let mal = ratio(Algorithm::MalAdap);
    let pass = egm.is_some_and(|r| r >= 50.0) && mal.is_some_and(|r| r >= 50.0);
    report(
        3,
        "median wall time of exact-projection methods vs CRM-VIP1",
        pass,
        format!("EGM {egm:.1?}x, Mal-Adap {mal:.1?}x (need >= 50x each)"),
    );
    assert!(pass);
}

/// Example 3, n = 50, m = 5, CRM-VIP2 and BI1, 10 instances.
fn example3_medium() -> &'static Vec<ResultRow> {
    static RUN: OnceLock<Vec<ResultRow>> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut sc = Scenario::standard(ScenarioName::B);
        sc.dims = vec![(50, 5)];
        sc.solvers = vec![Algorithm::CrmVip2, Algorithm::Bi1];
        sc.timing_repetitions = 1;
        run_scenario(&sc, 3, BASE_SEED).unwrap()
    })
}

#[test]
fn criterion_4_monotone_example_robustness() {
    let rows = example3_medium();
    let crm: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.solver == Algorithm::CrmVip2)
        .collect();
    let converged = crm.iter().filter(|r| r.status == Status::Converged).count();
    let median = median_iterations(rows, 50, 5, Algorithm::CrmVip2);
    let bi_failures = rows
        .iter()
        .filter(|r| r.solver == Algorithm::Bi1 && r.status != Status::Converged)
        .count();
    let pass = converged == crm.len() && median.is_some_and(|m| m <= 100);
    report(
        4,
        "Example 3 (n=50, m=5) CRM-VIP2 robustness",
        pass,
        format!(
            "CRM-VIP2 converged {converged}/{} (need all), median outer iterations {median:?} (need <= 100); \
             BI1 non-converged runs: {bi_failures}",
            crm.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_inner_loop_feasibility_certificate() {
    let mut samples: Vec<(f64, DVector<f64>, FeasibleSet)> = Vec::new();
    for example in 1..=3u8 {
        for &(n, m) in &[(5, 2), (10, 5)] {
            for index in 0..3 {
                let inst =
                    Instance::generate(ScenarioName::A, example, n, m, index, BASE_SEED).unwrap();
                let cfg = SolverConfig::new(Algorithm::CrmVip2).with_max_iterations(200);
                let mut obs = |ev: &IterationEvent<'_>| {
                    if let IterationEvent::Explicit {
                        beta,
                        y_tilde,
                        inner_iterations,
                        ..
                    } = ev
                    {
                        if *inner_iterations > 0 {
                            samples.push((*beta, (*y_tilde).clone(), inst.feasible_set.clone()));
                        }
                    }
                };
                solve_observed(
                    &inst.x0,
                    &inst.operator,
                    &inst.feasible_set,
                    &cfg,
                    Some(&mut obs),
                )
                .unwrap();
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(BASE_SEED ^ 5);
    let available = samples.len();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut checked = 0;
    for _ in 0..50.min(available) {
        let (beta, y, fs) = samples.swap_remove(rng.random_range(0..samples.len()));
        let dist = (&y - project_intersection(&fs, &y, 1e-12, 100_000).unwrap()).norm();
        worst_excess = worst_excess.max(dist - (beta + 1e-8));
        checked += 1;
    }
    let pass = checked == 50 && worst_excess <= 0.0;
    report(
        5,
        "inner loop certifies dist(y~, C) <= theta beta_k",
        pass,
        format!("{checked} outer iterations checked (of {available} with an active inner loop), worst dist - (theta beta_k + 1e-8) = {worst_excess:.2e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_quasi_fejer_steps() {
    let slack = |a: f64| 1e-12 * (1.0 + a);
    let mut ecm_checks = 0usize;
    let mut ecm_violations = 0usize;
    let mut direct_checks = 0usize;
    let mut direct_violations = 0usize;
    let schedule = StepsizeSchedule::default();
    for (case, &(n, m)) in [(2, 1), (3, 2), (5, 2), (5, 5), (10, 3), (10, 5)]
        .iter()
        .enumerate()
    {
        let fs = generate_feasible_set(n, m, BASE_SEED + case as u64).unwrap();
        let xbar = fs.slater_point().clone();
        let xb = xbar.clone();
        let op = FnOperator::new(n, move |x: &DVector<f64>| x - &xb);
        let x0 = initial_point(n, case as u64) * 3.0;
        let d2 = |p: &DVector<f64>| (p - &xbar).norm_squared();

        let cfg = SolverConfig::new(Algorithm::CrmVip2);
        let mut prev_y: Option<(f64, f64)> = None;
        let mut obs = |ev: &IterationEvent<'_>| {
            if let IterationEvent::Explicit {
                k,
                z,
                y_tilde,
                z_next,
                ..
            } = ev
            {
                let beta = schedule.beta(*k);
                let (dz, dy, dzn) = (d2(z), d2(y_tilde), d2(z_next));
                let mut ok = dy <= dz + slack(dz) && dzn <= dy + beta * beta + slack(dy);
                if let Some((prev, prev_beta)) = prev_y {
                    ok &= dy <= prev + prev_beta * prev_beta + slack(prev);
                }
                prev_y = Some((dy, beta));
                ecm_checks += 1;
                ecm_violations += usize::from(!ok);
            }
        };
        let r = solve_observed(&x0, &op, &fs, &cfg, Some(&mut obs)).unwrap();
        assert_eq!(r.status, Status::Converged);

        let cfg = SolverConfig::new(Algorithm::CrmVip1);
        let mut obs = |ev: &IterationEvent<'_>| {
            if let IterationEvent::Direct {
                k, previous, next, ..
            } = ev
            {
                let beta = schedule.beta(*k);
                let (dp, dn) = (d2(previous), d2(next));
                direct_checks += 1;
                direct_violations += usize::from(dn > dp + beta * beta + slack(dp));
            }
        };
        let r = solve_observed(&x0, &op, &fs, &cfg, Some(&mut obs)).unwrap();
        assert_eq!(r.status, Status::Converged);
    }
    let pass = ecm_violations == 0 && direct_violations == 0 && ecm_checks > 0 && direct_checks > 0;
    report(
        6,
        "quasi-Fejer inequalities toward the zero of F",
        pass,
        format!(
            "CRM-VIP2: {ecm_violations} violations in {ecm_checks} outer iterations; \
             CRM-VIP1: {direct_violations} violations in {direct_checks} iterations"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_solution_quality_of_converged_runs() {
    let mut rows: Vec<ResultRow> = example1_small().rows.clone();
    for example in 1..=3u8 {
        let mut sc = Scenario::standard(ScenarioName::A);
        sc.timing_repetitions = 1;
        rows.extend(run_scenario(&sc, example, BASE_SEED + 7).unwrap());
    }
    rows.extend(example3_medium().iter().cloned());
    let converged: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.status == Status::Converged)
        .collect();
    let bad_residual: Vec<&&ResultRow> = converged
        .iter()
        .filter(|r| r.natural_residual.is_none_or(|v| v > 1e-3))
        .collect();
    let bad_feasibility: Vec<&&ResultRow> = converged
        .iter()
        .filter(|r| r.feasibility.is_none_or(|v| v > 1e-6))
        .collect();
    let worst = |f: fn(&ResultRow) -> Option<f64>| {
        converged.iter().filter_map(|r| f(r)).fold(0.0f64, f64::max)
    };
    let mut per_solver = String::new();
    for s in Algorithm::ALL {
        let n = converged.iter().filter(|r| r.solver == s).count();
        let r = bad_residual.iter().filter(|r| r.solver == s).count();
        let f = bad_feasibility.iter().filter(|r| r.solver == s).count();
        per_solver.push_str(&format!(" {s}: {r}+{f} of {n};"));
    }
    let pass = bad_residual.is_empty() && bad_feasibility.is_empty();
    report(
        7,
        "natural residual <= 1e-3 and feasibility <= 1e-6 on converged runs",
        pass,
        format!(
            "{} converged runs; {} exceed the residual bound (worst {:.2e}), {} exceed the feasibility bound (worst {:.2e}); \
             residual+feasibility failures per solver:{per_solver}",
            converged.len(),
            bad_residual.len(),
            worst(|r| r.natural_residual),
            bad_feasibility.len(),
            worst(|r| r.feasibility),
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_stepsize_schedule_partial_sums() {
    let s = StepsizeSchedule::new(0.9).unwrap();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut reached = None;
    for k in 1..=1_000_000usize {
        let b = s.beta(k);
        sum += b;
        sum_sq += b * b;
        if reached.is_none() && sum >= 10.0 {
            reached = Some(k);
        }
    }
    let bound = 1.0 + 1.0 / 0.8;
    let pass = sum_sq <= bound && reached.is_some();
    report(
        8,
        "beta_k = 1/k^0.9 partial sums",
        pass,
        format!("sum of squares to 1e6 = {sum_sq:.6} (limit {bound}), sum reaches 10 at K = {reached:?}"),
    );
    assert!(pass);
}

fn rows_without_time(path: &std::path::Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "wall_time_ns").unwrap();
    std::iter::once(header.join(","))
        .chain(lines.map(|l| {
            let mut fields: Vec<&str> = l.split(',').collect();
            fields.remove(col);
            fields.join(",")
        }))
        .collect()
}

#[test]
fn criterion_9_bench_output_is_deterministic() {
    let mut sc = Scenario::standard(ScenarioName::A);
    sc.instances_per_config = 2;
    sc.timing_repetitions = 1;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let rows = run_scenario(&sc, 2, BASE_SEED).unwrap();
        write_report(d.path(), &sc, 2, BASE_SEED, &rows).unwrap();
    }
    let a = rows_without_time(&dirs[0].path().join("rows.csv"));
    let b = rows_without_time(&dirs[1].path().join("rows.csv"));
    let pass = a == b && a.len() == sc.row_count() + 1;
    report(
        9,
        "bench rows.csv identical across runs apart from wall_time_ns",
        pass,
        format!("{} data rows each, identical: {}", a.len() - 1, a == b),
    );
    assert!(pass);
}
