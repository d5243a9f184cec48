use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use crmvip::harness::{
    run_scenario, scenario_instances, write_report, Instance, Scenario, ScenarioName,
};
use crmvip::sets::DEFAULT_PROJECTION_TOL;
use crmvip::solvers::{check_solution, Algorithm, Status};
use nalgebra::DVector;
use serde::Deserialize;

const EXIT_PROJECTION: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "crmvip",
    version,
    about = "Approximate-projection VI solvers over intersections of ellipsoids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the seeded instances of a scenario as JSON files.
    Generate {
        #[arg(long)]
        example: u8,
        #[arg(long)]
        scenario: ScenarioName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Override the number of instances per (n, m).
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Run one solver on an instance file and print the result as JSON.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        solver: Algorithm,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// Write the (iteration, residual) history as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run a whole scenario and write rows, medians, speedups and profiles.
    Bench {
        #[arg(long)]
        example: u8,
        #[arg(long)]
        scenario: ScenarioName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        instances: Option<usize>,
        /// Timed repetitions per run (the minimum is reported).
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Natural residual and constraint violation of a point.
    Check {
        #[arg(long)]
        instance: PathBuf,
        /// JSON array, or a solve result with a `final_point` field.
        #[arg(long)]
        point: PathBuf,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PointFile {
    Plain(Vec<f64>),
    Result { final_point: Vec<f64> },
}

fn scenario_for(
    name: ScenarioName,
    instances: Option<usize>,
    repetitions: Option<usize>,
) -> Scenario {
    let mut sc = Scenario::standard(name);
    if let Some(i) = instances {
        sc.instances_per_config = i;
    }
    if let Some(r) = repetitions {
        sc.timing_repetitions = r;
    }
    sc
}

fn read_instance(path: &Path) -> anyhow::Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing instance {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Generate {
            example,
            scenario,
            seed,
            out,
            instances,
        } => {
            let sc = scenario_for(scenario, instances, None);
            fs::create_dir_all(&out)?;
            let all = scenario_instances(&sc, example, seed)?;
            for inst in &all {
                fs::write(
                    out.join(inst.file_name()),
                    serde_json::to_string_pretty(inst)?,
                )?;
            }
            println!("wrote {} instances to {}", all.len(), out.display());
            Ok(0)
        }
        Command::Solve {
            instance,
            solver,
            eps,
            max_iter,
            trace,
        } => {
            let inst = read_instance(&instance)?;
            let mut sc = Scenario::standard(inst.scenario);
            sc.tolerance = eps;
            sc.max_iterations = max_iter;
            let cfg = sc.solver_config(solver, inst.seed);
            let mut result = inst.solve(&cfg)?;
            if let Ok(chk) = check_solution(
                &result.final_point,
                &inst.operator,
                &inst.feasible_set,
                DEFAULT_PROJECTION_TOL,
            ) {
                result.natural_residual = Some(chk.natural_residual);
            }
            if let Some(path) = trace {
                result.write_trace_csv(fs::File::create(&path)?)?;
            }
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(if result.status == Status::ProjectionFailure {
                EXIT_PROJECTION
            } else {
                0
            })
        }
        Command::Bench {
            example,
            scenario,
            seed,
            out,
            instances,
            repetitions,
        } => {
            let sc = scenario_for(scenario, instances, repetitions);
            let rows = run_scenario(&sc, example, seed)?;
            write_report(&out, &sc, example, seed, &rows)?;
            let converged = rows
                .iter()
                .filter(|r| r.status == Status::Converged)
                .count();
            println!(
                "{} rows ({converged} converged) written to {}",
                rows.len(),
                out.display()
            );
            let failed = rows.iter().any(|r| r.status == Status::ProjectionFailure);
            Ok(if failed { EXIT_PROJECTION } else { 0 })
        }
        Command::Check { instance, point } => {
            let inst = read_instance(&instance)?;
            let text = fs::read_to_string(&point)
                .with_context(|| format!("reading {}", point.display()))?;
            let coords = match serde_json::from_str(&text)
                .with_context(|| format!("parsing point {}", point.display()))?
            {
                PointFile::Plain(v) => v,
                PointFile::Result { final_point } => final_point,
            };
            if coords.len() != inst.n {
                bail!(crmvip::Error::DimensionMismatch {
                    expected: inst.n,
                    found: coords.len()
                });
            }
            let chk = check_solution(
                &DVector::from_vec(coords),
                &inst.operator,
                &inst.feasible_set,
                DEFAULT_PROJECTION_TOL,
            )?;
            println!("{}", serde_json::to_string_pretty(&chk)?);
            Ok(0)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<crmvip::Error>() {
        Some(crmvip::Error::ProjectionFailure { .. }) => EXIT_PROJECTION,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
