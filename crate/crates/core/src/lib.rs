//! Approximate-projection solvers for monotone variational inequalities over
//! intersections of ellipsoids, with a circumcenter acceleration step, exact
//! projection baselines and a benchmark harness.

pub mod error;
pub mod geometry;
pub mod harness;
pub mod operators;
mod serde_util;
pub mod sets;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{
    circumcenter_step, separating_halfspace, CircumcenterStep, Halfspace, Separator,
};
pub use harness::{run_scenario, Instance, ResultRow, Scenario, ScenarioName};
pub use operators::{generate_operator, FnOperator, Operator, OperatorFamily, OperatorSpec};
pub use sets::{generate_feasible_set, project_intersection, Ellipsoid, FeasibleSet};
pub use solvers::{solve, Algorithm, SolveResult, SolverConfig, Status, StepsizeSchedule};
