//! Scenario runner: seeded instances, the solver matrix, median and speedup
//! tables, and Dolan–Moré performance profiles.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{generate_operator, OperatorFamily, OperatorSpec};
use crate::serde_util;
use crate::sets::{generate_feasible_set, FeasibleSet, DEFAULT_PROJECTION_TOL};
use crate::solvers::{
    check_solution, initial_point, solve, Algorithm, SolveResult, SolverConfig, Status,
};

pub const TIMING_REPETITIONS: usize = 3;
/// Marker written for table cells without a converged run.
pub const MISSING: &str = "--";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioName {
    A,
    B,
    C,
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioName::A => "A",
            ScenarioName::B => "B",
            ScenarioName::C => "C",
        })
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(ScenarioName::A),
            "B" => Ok(ScenarioName::B),
            "C" => Ok(ScenarioName::C),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scenario {s:?} (expected A, B or C)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    /// `(n, m)` pairs.
    pub dims: Vec<(usize, usize)>,
    pub solvers: Vec<Algorithm>,
    pub instances_per_config: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Wall time of a run is the minimum over this many identical solves.
    pub timing_repetitions: usize,
}

impl Scenario {
    pub fn standard(name: ScenarioName) -> Self {
        let grid = |ns: &[usize], ms: &[usize]| {
            ns.iter()
                .flat_map(|&n| ms.iter().map(move |&m| (n, m)))
                .collect()
        };
        match name {
            ScenarioName::A => Scenario {
                name,
                dims: grid(&[5, 10], &[2, 5]),
                solvers: Algorithm::ALL.to_vec(),
                instances_per_config: 10,
                tolerance: 1e-6,
                max_iterations: 100_000,
                timing_repetitions: TIMING_REPETITIONS,
            },
            ScenarioName::B => Scenario {
                name,
                dims: grid(&[50, 100], &[5, 8]),
                solvers: Algorithm::APPROXIMATE.to_vec(),
                instances_per_config: 10,
                tolerance: 1e-6,
                max_iterations: 300_000,
                timing_repetitions: TIMING_REPETITIONS,
            },
            ScenarioName::C => Scenario {
                name,
                dims: grid(&[100, 200, 500], &[20, 30, 50]),
                solvers: Algorithm::APPROXIMATE.to_vec(),
                instances_per_config: 5,
                tolerance: 1e-5,
                max_iterations: 300_000,
                timing_repetitions: TIMING_REPETITIONS,
            },
        }
    }

    pub fn row_count(&self) -> usize {
        self.dims.len() * self.instances_per_config * self.solvers.len()
    }

    pub fn solver_config(&self, algorithm: Algorithm, seed: u64) -> SolverConfig {
        let mut cfg = SolverConfig::new(algorithm)
            .with_tolerance(self.tolerance)
            .with_max_iterations(self.max_iterations);
        cfg.seed = seed;
        cfg
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.solvers.is_empty() || self.instances_per_config == 0 {
            return Err(Error::InvalidArgument(
                "scenario has no cells to run".into(),
            ));
        }
        if self.timing_repetitions == 0 {
            return Err(Error::InvalidArgument(
                "timing_repetitions must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one benchmark instance, mixed from all of its coordinates.
pub fn instance_seed(base_seed: u64, example: u8, n: usize, m: usize, index: usize) -> u64 {
    [example as u64, n as u64, m as u64, index as u64]
        .into_iter()
        .fold(splitmix64(base_seed), |acc, v| splitmix64(acc ^ v))
}

/// A seeded benchmark problem together with its starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub example: u8,
    pub scenario: ScenarioName,
    pub n: usize,
    pub m: usize,
    pub index: usize,
    pub seed: u64,
    pub feasible_set: FeasibleSet,
    pub operator: OperatorSpec,
    #[serde(with = "serde_util::vector")]
    pub x0: DVector<f64>,
}

impl Instance {
    pub fn generate(
        scenario: ScenarioName,
        example: u8,
        n: usize,
        m: usize,
        index: usize,
        base_seed: u64,
    ) -> Result<Self> {
        let family = OperatorFamily::from_example(example).ok_or_else(|| {
            Error::InvalidArgument(format!("unknown example {example} (expected 1, 2 or 3)"))
        })?;
        let seed = instance_seed(base_seed, example, n, m, index);
        Ok(Instance {
            example,
            scenario,
            n,
            m,
            index,
            seed,
            feasible_set: generate_feasible_set(n, m, splitmix64(seed ^ 1))?,
            operator: generate_operator(family, n, splitmix64(seed ^ 2))?,
            x0: initial_point(n, splitmix64(seed ^ 3)),
        })
    }

    pub fn solve(&self, cfg: &SolverConfig) -> Result<SolveResult> {
        solve(&self.x0, &self.operator, &self.feasible_set, cfg)
    }

    pub fn file_name(&self) -> String {
        format!(
            "ex{}_{}_n{}_m{}_i{}.json",
            self.example, self.scenario, self.n, self.m, self.index
        )
    }
}

/// All instances of a scenario in `(n, m, index)` order.
pub fn scenario_instances(
    scenario: &Scenario,
    example: u8,
    base_seed: u64,
) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(scenario.dims.len() * scenario.instances_per_config);
    for &(n, m) in &scenario.dims {
        for i in 0..scenario.instances_per_config {
            out.push(Instance::generate(
                scenario.name,
                example,
                n,
                m,
                i,
                base_seed,
            )?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: ScenarioName,
    pub example: u8,
    pub n: usize,
    pub m: usize,
    pub instance_index: usize,
    pub seed: u64,
    pub solver: Algorithm,
    pub status: Status,
    pub iterations: usize,
    pub inner_iterations: usize,
    pub wall_time_ns: u64,
    pub natural_residual: Option<f64>,
    pub feasibility: Option<f64>,
}

impl ResultRow {
    fn instance_key(&self) -> (u8, usize, usize, usize) {
        (self.example, self.n, self.m, self.instance_index)
    }
}

/// Solves `instance` with `cfg` `repetitions` times and keeps the fastest time.
pub fn run_cell(instance: &Instance, cfg: &SolverConfig, repetitions: usize) -> ResultRow {
    let mut best: Option<SolveResult> = None;
    let mut error = None;
    for _ in 0..repetitions.max(1) {
        match instance.solve(cfg) {
            Ok(r) => match &mut best {
                Some(b) if r.wall_time < b.wall_time => b.wall_time = r.wall_time,
                Some(_) => {}
                None => best = Some(r),
            },
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    let mut row = ResultRow {
        scenario: instance.scenario,
        example: instance.example,
        n: instance.n,
        m: instance.m,
        instance_index: instance.index,
        seed: instance.seed,
        solver: cfg.algorithm,
        status: Status::Stalled,
        iterations: 0,
        inner_iterations: 0,
        wall_time_ns: 0,
        natural_residual: None,
        feasibility: None,
    };
    match (best, error) {
        (Some(r), None) => {
            row.status = r.status;
            row.iterations = r.iterations;
            row.inner_iterations = r.inner_iterations_total;
            row.wall_time_ns = u64::try_from(r.wall_time.as_nanos()).unwrap_or(u64::MAX);
            if let Ok(chk) = check_solution(
                &r.final_point,
                &instance.operator,
                &instance.feasible_set,
                DEFAULT_PROJECTION_TOL,
            ) {
                row.natural_residual = Some(chk.natural_residual);
                row.feasibility = Some(chk.feasibility);
            }
        }
        (_, Some(Error::ProjectionFailure { .. })) => row.status = Status::ProjectionFailure,
        _ => {}
    }
    row
}

/// Runs every scenario solver on every instance. Cells run in parallel; the
/// rows come back sorted by `(n, m, instance, solver position)`.
pub fn run_scenario(scenario: &Scenario, example: u8, base_seed: u64) -> Result<Vec<ResultRow>> {
    scenario.validate()?;
    let instances = scenario_instances(scenario, example, base_seed)?;
    let cells: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..scenario.solvers.len()).map(move |s| (i, s)))
        .collect();
    let mut rows: Vec<(usize, usize, ResultRow)> = cells
        .par_iter()
        .map(|&(i, s)| {
            let inst = &instances[i];
            let cfg = scenario.solver_config(scenario.solvers[s], inst.seed);
            (i, s, run_cell(inst, &cfg, scenario.timing_repetitions))
        })
        .collect();
    rows.sort_by_key(|(i, s, _)| (*i, *s));
    Ok(rows.into_iter().map(|(_, _, r)| r).collect())
}

/// Lower-middle median (`{1, 2, 3, 4} -> 2`).
pub fn lower_median<T: Copy + Ord>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    Some(v[(v.len() - 1) / 2])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub n: usize,
    pub m: usize,
    pub solver: Algorithm,
    pub converged: usize,
    pub runs: usize,
    pub iterations_lower_median: Option<usize>,
    pub time_ns_lower_median: Option<u64>,
}

fn solver_order(rows: &[ResultRow]) -> Vec<Algorithm> {
    let mut order = Vec::new();
    for r in rows {
        if !order.contains(&r.solver) {
            order.push(r.solver);
        }
    }
    order
}

fn dims_order(rows: &[ResultRow]) -> Vec<(usize, usize)> {
    let mut order = Vec::new();
    for r in rows {
        if !order.contains(&(r.n, r.m)) {
            order.push((r.n, r.m));
        }
    }
    order
}

/// Medians over converged runs per `(n, m, solver)`; failed runs only count
/// toward `runs`.
pub fn median_table(rows: &[ResultRow]) -> Vec<MedianRow> {
    let solvers = solver_order(rows);
    let mut out = Vec::new();
    for (n, m) in dims_order(rows) {
        for &solver in &solvers {
            let cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.n == n && r.m == m && r.solver == solver)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let ok: Vec<&ResultRow> = cell
                .iter()
                .copied()
                .filter(|r| r.status == Status::Converged)
                .collect();
            let iters: Vec<usize> = ok.iter().map(|r| r.iterations).collect();
            let times: Vec<u64> = ok.iter().map(|r| r.wall_time_ns).collect();
            out.push(MedianRow {
                n,
                m,
                solver,
                converged: ok.len(),
                runs: cell.len(),
                iterations_lower_median: lower_median(&iters),
                time_ns_lower_median: lower_median(&times),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub n: usize,
    pub m: usize,
    pub solver: Algorithm,
    /// Median time of `solver` over median time of the reference.
    pub ratio: Option<f64>,
}

pub fn speedup_table(rows: &[ResultRow], reference: Algorithm) -> Vec<SpeedupRow> {
    let medians = median_table(rows);
    let time_of = |n: usize, m: usize, s: Algorithm| {
        medians
            .iter()
            .find(|r| r.n == n && r.m == m && r.solver == s)
            .and_then(|r| r.time_ns_lower_median)
    };
    medians
        .iter()
        .map(|r| {
            let ratio = match (r.time_ns_lower_median, time_of(r.n, r.m, reference)) {
                (Some(t), Some(t_ref)) => Some(t as f64 / t_ref.max(1) as f64),
                _ => None,
            };
            SpeedupRow {
                n: r.n,
                m: r.m,
                solver: r.solver,
                ratio,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProfileMetric {
    Iterations,
    Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub metric: ProfileMetric,
    /// Per solver, the breakpoints `(tau, rho)` of its step function,
    /// starting at `tau = 1`.
    pub points: Vec<(Algorithm, Vec<(f64, f64)>)>,
}

impl ProfileTable {
    /// `rho_s(tau)` read off the step function.
    pub fn rho(&self, solver: Algorithm, tau: f64) -> Option<f64> {
        let (_, pts) = self.points.iter().find(|(s, _)| *s == solver)?;
        Some(
            pts.iter()
                .take_while(|(t, _)| *t <= tau)
                .last()
                .map_or(0.0, |&(_, r)| r),
        )
    }
}

/// Dolan–Moré profile over the instances present in `rows`. Failed runs
/// get an infinite ratio; iteration costs are floored at 1.
pub fn performance_profile(rows: &[ResultRow], metric: ProfileMetric) -> ProfileTable {
    let solvers = solver_order(rows);
    let mut costs: BTreeMap<(u8, usize, usize, usize), BTreeMap<Algorithm, f64>> = BTreeMap::new();
    for r in rows {
        let cost = if r.status == Status::Converged {
            match metric {
                ProfileMetric::Iterations => r.iterations.max(1) as f64,
                ProfileMetric::Time => r.wall_time_ns.max(1) as f64,
            }
        } else {
            f64::INFINITY
        };
        costs
            .entry(r.instance_key())
            .or_default()
            .insert(r.solver, cost);
    }
    let problems = costs.len() as f64;
    let mut ratios: BTreeMap<Algorithm, Vec<f64>> = BTreeMap::new();
    for per_solver in costs.values() {
        let best = per_solver.values().copied().fold(f64::INFINITY, f64::min);
        for &s in &solvers {
            let c = per_solver.get(&s).copied().unwrap_or(f64::INFINITY);
            let r = if c.is_finite() && best.is_finite() {
                c / best
            } else {
                f64::INFINITY
            };
            ratios.entry(s).or_default().push(r);
        }
    }
    let points = solvers
        .iter()
        .map(|&s| {
            let mut rs: Vec<f64> = ratios
                .remove(&s)
                .unwrap_or_default()
                .into_iter()
                .filter(|r| r.is_finite())
                .collect();
            rs.sort_by(f64::total_cmp);
            let mut pts = vec![(1.0, 0.0)];
            for (i, &tau) in rs.iter().enumerate() {
                let rho = (i + 1) as f64 / problems;
                match pts.last_mut() {
                    Some(last) if last.0 == tau => last.1 = rho,
                    _ => pts.push((tau, rho)),
                }
            }
            (s, pts)
        })
        .collect();
    ProfileTable { metric, points }
}

pub fn write_rows<W: std::io::Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: std::io::Read>(r: R) -> Result<Vec<ResultRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(Error::from)
}

fn cell<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| MISSING.to_string(), |v| v.to_string())
}

pub fn write_medians<W: std::io::Write>(medians: &[MedianRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "n",
        "m",
        "solver",
        "converged",
        "runs",
        "iterations_lower_median",
        "time_ns_lower_median",
    ])?;
    for r in medians {
        out.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.solver.to_string(),
            r.converged.to_string(),
            r.runs.to_string(),
            cell(r.iterations_lower_median),
            cell(r.time_ns_lower_median),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_speedups<W: std::io::Write>(speedups: &[SpeedupRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["n", "m", "solver", "time_ratio"])?;
    for r in speedups {
        out.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.solver.to_string(),
            cell(r.ratio),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_profile<W: std::io::Write>(profile: &ProfileTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["solver", "tau", "rho"])?;
    for (s, pts) in &profile.points {
        for (tau, rho) in pts {
            out.write_record([s.to_string(), tau.to_string(), rho.to_string()])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetadata {
    pub scenario: Scenario,
    pub example: u8,
    pub base_seed: u64,
    pub rows: usize,
    pub speedup_reference: Algorithm,
    pub notes: Vec<String>,
}

/// Writes rows.csv, medians.csv, speedups.csv, profile_iter.csv,
/// profile_time.csv and metadata.json into `dir`.
pub fn write_report(
    dir: &Path,
    scenario: &Scenario,
    example: u8,
    base_seed: u64,
    rows: &[ResultRow],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let reference = Algorithm::CrmVip1;
    write_rows(rows, fs::File::create(dir.join("rows.csv"))?)?;
    write_medians(
        &median_table(rows),
        fs::File::create(dir.join("medians.csv"))?,
    )?;
    write_speedups(
        &speedup_table(rows, reference),
        fs::File::create(dir.join("speedups.csv"))?,
    )?;
    write_profile(
        &performance_profile(rows, ProfileMetric::Iterations),
        fs::File::create(dir.join("profile_iter.csv"))?,
    )?;
    write_profile(
        &performance_profile(rows, ProfileMetric::Time),
        fs::File::create(dir.join("profile_time.csv"))?,
    )?;
    let meta = RunMetadata {
        scenario: scenario.clone(),
        example,
        base_seed,
        rows: rows.len(),
        speedup_reference: reference,
        notes: vec![
            "medians use converged runs only; even counts take the lower-middle element".into(),
            format!("cells without a converged run are written as {MISSING}"),
            "performance profiles score non-converged runs as an infinite ratio".into(),
            format!(
                "wall_time_ns is the minimum over {} identical solves",
                scenario.timing_repetitions
            ),
        ],
    };
    fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&meta)?,
    )?;
    Ok(())
}
