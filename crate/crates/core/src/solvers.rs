//! Iterative methods for `VIP(F, C)` over an intersection of ellipsoids.
//!
//! Two skeletons use approximate projections onto separating halfspaces:
//!
//! * the direct method (`CrmVip1`, `Bi1`): `x+ = T(x - (beta_k / eta_k) F(x))`
//!   with `eta_k = max(1, |F(x)|)`;
//! * the explicit method (`CrmVip2`, `Bi2`): an inner loop drives `z` close
//!   enough to `C` (certified through the Slater point), followed by an
//!   operator step and an ergodic average.
//!
//! `T` is the circumcenter step for the `Crm*` variants and the projection
//! onto the single most violated linearization for the `Bi*` baselines.
//! `Egm` and `MalAdap` use exact projections computed by Dykstra's scheme.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{
    circumcenter_step, project_halfspace, project_most_violated, separating_halfspace, Halfspace,
    Separator,
};
use crate::operators::Operator;
use crate::serde_util;
use crate::sets::{project_intersection, FeasibleSet, DEFAULT_MAX_SWEEPS, DEFAULT_PROJECTION_TOL};

pub const DEFAULT_EXPONENT: f64 = 0.9;
pub const DEFAULT_INNER_CAP: usize = 10_000;
/// Below this the adaptive reflected-gradient step is considered collapsed.
pub const MIN_ADAPTIVE_STEP: f64 = 1e-14;

// adaptive reflected-gradient step control
const MAL_CONTRACTION: f64 = 0.4;
const MAL_GROWTH: f64 = 1.5;
const MAL_SHRINK: f64 = 0.5;

/// `beta_k = 1 / k^p` for `k >= 1`, with `p` in (0.5, 1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepsizeSchedule {
    exponent: f64,
}

impl StepsizeSchedule {
    pub fn new(exponent: f64) -> Result<Self> {
        if exponent > 0.5 && exponent <= 1.0 {
            Ok(Self { exponent })
        } else {
            Err(Error::InvalidArgument(format!(
                "stepsize exponent must lie in (0.5, 1], got {exponent}"
            )))
        }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn beta(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        (k as f64).powf(-self.exponent)
    }
}

impl Default for StepsizeSchedule {
    fn default() -> Self {
        Self {
            exponent: DEFAULT_EXPONENT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "CRM-VIP1")]
    CrmVip1,
    #[serde(rename = "CRM-VIP2")]
    CrmVip2,
    #[serde(rename = "BI1")]
    Bi1,
    #[serde(rename = "BI2")]
    Bi2,
    #[serde(rename = "EGM")]
    Egm,
    #[serde(rename = "Mal-Adap")]
    MalAdap,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Egm,
        Algorithm::MalAdap,
        Algorithm::Bi1,
        Algorithm::CrmVip1,
        Algorithm::Bi2,
        Algorithm::CrmVip2,
    ];

    pub const APPROXIMATE: [Algorithm; 4] = [
        Algorithm::Bi1,
        Algorithm::CrmVip1,
        Algorithm::Bi2,
        Algorithm::CrmVip2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CrmVip1 => "CRM-VIP1",
            Algorithm::CrmVip2 => "CRM-VIP2",
            Algorithm::Bi1 => "BI1",
            Algorithm::Bi2 => "BI2",
            Algorithm::Egm => "EGM",
            Algorithm::MalAdap => "Mal-Adap",
        }
    }

    pub fn uses_exact_projection(self) -> bool {
        matches!(self, Algorithm::Egm | Algorithm::MalAdap)
    }

    fn approximate_projection(self) -> ApproxProjection {
        match self {
            Algorithm::Bi1 | Algorithm::Bi2 => ApproxProjection::MostViolated,
            _ => ApproxProjection::Circumcenter,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "crmvip1" => Ok(Algorithm::CrmVip1),
            "crmvip2" | "ecm" => Ok(Algorithm::CrmVip2),
            "bi1" => Ok(Algorithm::Bi1),
            "bi2" => Ok(Algorithm::Bi2),
            "egm" => Ok(Algorithm::Egm),
            "maladap" => Ok(Algorithm::MalAdap),
            _ => Err(Error::InvalidArgument(format!("unknown solver {s:?}"))),
        }
    }
}

/// How the approximate methods move toward the separating halfspaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApproxProjection {
    /// Circumcenter step over all `m` separators.
    Circumcenter,
    /// Projection onto the linearization of the most violated constraint.
    MostViolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Feasibility slack factor of the explicit method's inner loop.
    pub theta: f64,
    pub schedule: StepsizeSchedule,
    /// Extragradient step; `None` means `0.5 / L` from the operator's estimate.
    pub egm_beta: Option<f64>,
    /// Initial adaptive step; `None` means `0.5 / L`.
    pub mal_lambda0: Option<f64>,
    /// Seed for [`initial_point`].
    pub seed: u64,
    pub inner_cap: usize,
    pub projection_tol: f64,
    pub projection_max_sweeps: usize,
}

impl SolverConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            tolerance: 1e-6,
            max_iterations: 100_000,
            theta: 1.0,
            schedule: StepsizeSchedule::default(),
            egm_beta: None,
            mal_lambda0: None,
            seed: 0,
            inner_cap: DEFAULT_INNER_CAP,
            projection_tol: DEFAULT_PROJECTION_TOL,
            projection_max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("tolerance", self.tolerance)?;
        positive("theta", self.theta)?;
        positive("projection tolerance", self.projection_tol)?;
        if let Some(b) = self.egm_beta {
            positive("extragradient step", b)?;
        }
        if let Some(l) = self.mal_lambda0 {
            positive("initial adaptive step", l)?;
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.inner_cap == 0 || self.projection_max_sweeps == 0 {
            return Err(Error::InvalidArgument(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Converged,
    MaxIterations,
    Stalled,
    ProjectionFailure,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "Converged",
            Status::MaxIterations => "MaxIterations",
            Status::Stalled => "Stalled",
            Status::ProjectionFailure => "ProjectionFailure",
        })
    }
}

impl FromStr for Status {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Converged" => Ok(Status::Converged),
            "MaxIterations" => Ok(Status::MaxIterations),
            "Stalled" => Ok(Status::Stalled),
            "ProjectionFailure" => Ok(Status::ProjectionFailure),
            _ => Err(Error::InvalidArgument(format!("unknown status {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub algorithm: Algorithm,
    pub status: Status,
    /// `x^k` for the direct and exact methods, `y~^k` for the explicit one.
    #[serde(with = "serde_util::vector")]
    pub final_point: DVector<f64>,
    /// Weighted average of the `y~^k` (explicit method only).
    #[serde(with = "serde_util::opt_vector")]
    pub ergodic_point: Option<DVector<f64>>,
    pub iterations: usize,
    pub inner_iterations_total: usize,
    pub operator_evals: usize,
    #[serde(rename = "wall_time_ns", with = "serde_util::duration_ns")]
    pub wall_time: Duration,
    /// `(iteration, stopping residual)` pairs.
    pub residual_history: Vec<(usize, f64)>,
    pub natural_residual: Option<f64>,
    /// Set when the run ended early because of an error.
    pub message: Option<String>,
}

impl SolveResult {
    /// Equality ignoring the wall-clock time.
    pub fn same_outcome(&self, other: &SolveResult) -> bool {
        let mut a = self.clone();
        a.wall_time = other.wall_time;
        a == *other
    }

    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "residual"])?;
        for (k, r) in &self.residual_history {
            out.write_record([k.to_string(), format!("{r:e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Per-iteration state handed to observers.
#[derive(Debug)]
pub enum IterationEvent<'a> {
    /// Direct method: `next = T(previous - (beta / eta) F(previous))`.
    Direct {
        k: usize,
        beta: f64,
        eta: f64,
        previous: &'a DVector<f64>,
        next: &'a DVector<f64>,
    },
    /// Explicit method, outer iteration `k`.
    Explicit {
        k: usize,
        beta: f64,
        eta: f64,
        z: &'a DVector<f64>,
        y_tilde: &'a DVector<f64>,
        inner_iterations: usize,
        z_next: &'a DVector<f64>,
        ergodic: &'a DVector<f64>,
    },
    /// Exact-projection methods: current point, auxiliary point, step.
    Exact {
        k: usize,
        x: &'a DVector<f64>,
        y: &'a DVector<f64>,
        step: f64,
    },
}

/// Uniform random starting point in `[-2, 2]^n`.
pub fn initial_point(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(n, |_, _| rng.random_range(-2.0..=2.0))
}

fn separators_at(fs: &FeasibleSet, y: &DVector<f64>) -> Result<Vec<Separator>> {
    fs.ellipsoids()
        .iter()
        .map(|e| {
            let (value, grad) = e.eval(y)?;
            separating_halfspace(y, value, &grad)
        })
        .collect()
}

/// Linearization of the most violated constraint at `y`, if any is violated.
fn max_violation_halfspace(fs: &FeasibleSet, y: &DVector<f64>) -> Result<Option<Halfspace>> {
    let (value, index) = fs.max_violation(y);
    if value <= 0.0 {
        return Ok(None);
    }
    let (value, grad) = fs.ellipsoids()[index].eval(y)?;
    match separating_halfspace(y, value, &grad)? {
        Separator::Cut(h) => Ok(Some(h)),
        Separator::Feasible => Ok(None),
    }
}

/// One approximate projection of `y` toward `C`.
pub fn approximate_projection(
    fs: &FeasibleSet,
    y: &DVector<f64>,
    mode: ApproxProjection,
) -> Result<DVector<f64>> {
    check_dim(fs.dim(), y.len())?;
    let map_degenerate = |e: Error| match e {
        Error::DegenerateSeparator { value } => Error::Stalled(format!(
            "zero gradient at a violated constraint (g = {value:e})"
        )),
        other => other,
    };
    match mode {
        ApproxProjection::Circumcenter => {
            let seps = separators_at(fs, y).map_err(map_degenerate)?;
            let step = circumcenter_step(y, &seps)?;
            if step.stalled {
                Ok(project_most_violated(y, &seps))
            } else {
                Ok(step.output)
            }
        }
        ApproxProjection::MostViolated => {
            match max_violation_halfspace(fs, y).map_err(map_degenerate)? {
                Some(h) => project_halfspace(y, &h),
                None => Ok(y.clone()),
            }
        }
    }
}

fn operator_step(x: &DVector<f64>, fx: &DVector<f64>, beta: f64) -> (DVector<f64>, f64) {
    let eta = fx.norm().max(1.0);
    (x - fx * (beta / eta), eta)
}

/// One iteration of the circumcenter direct method from `x` at index `k`.
pub fn crm_vip1_step<O: Operator + ?Sized>(
    x: &DVector<f64>,
    k: usize,
    op: &O,
    fs: &FeasibleSet,
    schedule: &StepsizeSchedule,
) -> Result<DVector<f64>> {
    direct_step(x, k, op, fs, schedule, ApproxProjection::Circumcenter)
}

/// One iteration of the single-halfspace baseline of the direct method.
pub fn bi1_step<O: Operator + ?Sized>(
    x: &DVector<f64>,
    k: usize,
    op: &O,
    fs: &FeasibleSet,
    schedule: &StepsizeSchedule,
) -> Result<DVector<f64>> {
    direct_step(x, k, op, fs, schedule, ApproxProjection::MostViolated)
}

fn direct_step<O: Operator + ?Sized>(
    x: &DVector<f64>,
    k: usize,
    op: &O,
    fs: &FeasibleSet,
    schedule: &StepsizeSchedule,
    mode: ApproxProjection,
) -> Result<DVector<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("iteration index starts at 1".into()));
    }
    check_dim(op.dim(), x.len())?;
    let fx = op.apply(x);
    let (y, _) = operator_step(x, &fx, schedule.beta(k));
    approximate_projection(fs, &y, mode)
}

/// Inner loop of the explicit method.
///
/// Starting from `z`, applies approximate projections until
/// `g(y) |y - w| / (g(y) - g(w)) <= theta * beta_k`, where `g` is the max of
/// the constraints and `w` the Slater point. That bound dominates
/// `dist(y, C)`. Returns the accepted point and the number of steps taken.
pub fn ecm_inner_loop(
    z: &DVector<f64>,
    fs: &FeasibleSet,
    theta: f64,
    beta_k: f64,
    inner_cap: usize,
    mode: ApproxProjection,
) -> Result<(DVector<f64>, usize)> {
    check_dim(fs.dim(), z.len())?;
    let w = fs.slater_point();
    let gw = -fs.slater_margin();
    let threshold = theta * beta_k;
    let mut y = z.clone();
    let mut j = 0;
    loop {
        let (gy, _) = fs.max_violation(&y);
        if gy <= 0.0 || gy * (&y - w).norm() / (gy - gw) <= threshold {
            return Ok((y, j));
        }
        if j >= inner_cap {
            return Err(Error::Stalled(format!(
                "inner loop did not reach the feasibility bound within {inner_cap} steps"
            )));
        }
        y = approximate_projection(fs, &y, mode)?;
        j += 1;
    }
}

fn failure_status(e: &Error) -> Status {
    match e {
        Error::ProjectionFailure { .. } => Status::ProjectionFailure,
        _ => Status::Stalled,
    }
}

struct Outcome {
    status: Status,
    point: DVector<f64>,
    ergodic: Option<DVector<f64>>,
    iterations: usize,
    inner: usize,
    evals: usize,
    history: Vec<(usize, f64)>,
    message: Option<String>,
}

impl Outcome {
    fn new(point: DVector<f64>) -> Self {
        Self {
            status: Status::MaxIterations,
            point,
            ergodic: None,
            iterations: 0,
            inner: 0,
            evals: 0,
            history: Vec::new(),
            message: None,
        }
    }

    fn fail(&mut self, e: Error) {
        self.status = failure_status(&e);
        self.message = Some(e.to_string());
    }

    fn finish(self, algorithm: Algorithm, started: Instant) -> SolveResult {
        SolveResult {
            algorithm,
            status: self.status,
            final_point: self.point,
            ergodic_point: self.ergodic,
            iterations: self.iterations,
            inner_iterations_total: self.inner,
            operator_evals: self.evals,
            wall_time: started.elapsed(),
            residual_history: self.history,
            natural_residual: None,
            message: self.message,
        }
    }
}

type Observer<'a> = Option<&'a mut dyn FnMut(&IterationEvent<'_>)>;

fn notify(observer: &mut Observer<'_>, event: IterationEvent<'_>) {
    if let Some(f) = observer.as_mut() {
        f(&event);
    }
}

fn expect_algorithm(cfg: &SolverConfig, allowed: &[Algorithm]) -> Result<()> {
    if allowed.contains(&cfg.algorithm) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{} cannot be run by this solver (expected one of {allowed:?})",
            cfg.algorithm
        )))
    }
}

fn check_problem<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
) -> Result<()> {
    cfg.validate()?;
    check_dim(fs.dim(), op.dim())?;
    check_dim(fs.dim(), x0.len())
}

/// Direct method (`CrmVip1` or its `Bi1` baseline, per `cfg.algorithm`).
///
/// Stops when `|x^{k+1} - x^k| / max(|x^k|, 1) <= tolerance` or when
/// `F(x^k) = 0` exactly.
pub fn crm_vip1_solve<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    direct_solve(x0, op, fs, cfg, None)
}

fn direct_solve<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
    mut observer: Observer<'_>,
) -> Result<SolveResult> {
    expect_algorithm(cfg, &[Algorithm::CrmVip1, Algorithm::Bi1])?;
    check_problem(x0, op, fs, cfg)?;
    let started = Instant::now();
    let mode = cfg.algorithm.approximate_projection();
    let mut out = Outcome::new(x0.clone());

    for k in 1..=cfg.max_iterations {
        let x = &out.point;
        let fx = op.apply(x);
        out.evals += 1;
        if fx.iter().all(|&v| v == 0.0) {
            out.status = Status::Converged;
            break;
        }
        let beta = cfg.schedule.beta(k);
        let (y, eta) = operator_step(x, &fx, beta);
        let next = match approximate_projection(fs, &y, mode) {
            Ok(p) => p,
            Err(e) => {
                out.fail(e);
                break;
            }
        };
        let change = (&next - x).norm() / x.norm().max(1.0);
        out.history.push((k, change));
        notify(
            &mut observer,
            IterationEvent::Direct {
                k,
                beta,
                eta,
                previous: x,
                next: &next,
            },
        );
        out.point = next;
        out.iterations = k;
        if change <= cfg.tolerance {
            out.status = Status::Converged;
            break;
        }
    }
    Ok(out.finish(cfg.algorithm, started))
}

/// Explicit method (`CrmVip2` or its `Bi2` baseline, per `cfg.algorithm`).
///
/// Stops when `|z^{k+1} - y~^k| <= tolerance`, or when consecutive ergodic
/// iterates satisfy the relative-change rule of the direct method (checked
/// from the second outer iteration on, since `x^0 = 0` is arbitrary).
pub fn ecm_solve<O: Operator + ?Sized>(
    z0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    explicit_solve(z0, op, fs, cfg, None)
}

fn explicit_solve<O: Operator + ?Sized>(
    z0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
    mut observer: Observer<'_>,
) -> Result<SolveResult> {
    expect_algorithm(cfg, &[Algorithm::CrmVip2, Algorithm::Bi2])?;
    check_problem(z0, op, fs, cfg)?;
    let started = Instant::now();
    let mode = cfg.algorithm.approximate_projection();
    let mut out = Outcome::new(z0.clone());
    let mut z = z0.clone();
    let mut ergodic = DVector::zeros(z0.len());
    let mut sigma = 0.0;

    for k in 1..=cfg.max_iterations {
        let beta = cfg.schedule.beta(k);
        let (y_tilde, inner) = match ecm_inner_loop(&z, fs, cfg.theta, beta, cfg.inner_cap, mode) {
            Ok(r) => r,
            Err(e) => {
                out.fail(e);
                break;
            }
        };
        out.inner += inner;
        let fy = op.apply(&y_tilde);
        out.evals += 1;
        let (shifted, eta) = operator_step(&y_tilde, &fy, beta);
        let z_next = match approximate_projection(fs, &shifted, mode) {
            Ok(p) => p,
            Err(e) => {
                out.point = y_tilde;
                out.fail(e);
                break;
            }
        };

        sigma += beta / eta;
        let weight = beta / (eta * sigma);
        let ergodic_next = &ergodic * (1.0 - weight) + &y_tilde * weight;

        let gap = (&z_next - &y_tilde).norm();
        let ergodic_change = (&ergodic_next - &ergodic).norm() / ergodic.norm().max(1.0);
        let ergodic_fires = k > 1 && ergodic_change <= cfg.tolerance;
        out.history
            .push((k, if k > 1 { gap.min(ergodic_change) } else { gap }));
        notify(
            &mut observer,
            IterationEvent::Explicit {
                k,
                beta,
                eta,
                z: &z,
                y_tilde: &y_tilde,
                inner_iterations: inner,
                z_next: &z_next,
                ergodic: &ergodic_next,
            },
        );

        out.iterations = k;
        out.point = y_tilde;
        z = z_next;
        ergodic = ergodic_next;
        if gap <= cfg.tolerance || ergodic_fires {
            out.status = Status::Converged;
            break;
        }
    }
    out.ergodic = Some(ergodic);
    Ok(out.finish(cfg.algorithm, started))
}

fn lipschitz_step<O: Operator + ?Sized>(op: &O, fs: &FeasibleSet) -> f64 {
    match op.lipschitz_estimate(fs.bounding_radius()) {
        Some(l) if l > 0.0 && l.is_finite() => 0.5 / l,
        _ => 0.5,
    }
}

/// Extragradient method with exact projections onto `C`.
///
/// `y = P(x - beta F(x))`, `x+ = P(x - beta F(y))`; stops on `|x - y| <= tolerance`.
pub fn egm_solve<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    egm_solve_observed(x0, op, fs, cfg, None)
}

fn egm_solve_observed<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
    mut observer: Observer<'_>,
) -> Result<SolveResult> {
    expect_algorithm(cfg, &[Algorithm::Egm])?;
    check_problem(x0, op, fs, cfg)?;
    let started = Instant::now();
    let project = |p: &DVector<f64>| {
        project_intersection(fs, p, cfg.projection_tol, cfg.projection_max_sweeps)
    };
    let beta = cfg.egm_beta.unwrap_or_else(|| lipschitz_step(op, fs));
    let mut out = Outcome::new(x0.clone());

    let mut x = match project(x0) {
        Ok(p) => p,
        Err(e) => {
            out.fail(e);
            return Ok(out.finish(cfg.algorithm, started));
        }
    };
    out.point = x.clone();

    for k in 1..=cfg.max_iterations {
        let fx = op.apply(&x);
        out.evals += 1;
        let y = match project(&(&x - fx * beta)) {
            Ok(p) => p,
            Err(e) => {
                out.fail(e);
                break;
            }
        };
        let gap = (&x - &y).norm();
        out.history.push((k, gap));
        out.iterations = k;
        notify(
            &mut observer,
            IterationEvent::Exact {
                k,
                x: &x,
                y: &y,
                step: beta,
            },
        );
        if gap <= cfg.tolerance {
            out.status = Status::Converged;
            break;
        }
        let fy = op.apply(&y);
        out.evals += 1;
        match project(&(&x - fy * beta)) {
            Ok(p) => x = p,
            Err(e) => {
                out.fail(e);
                break;
            }
        }
        out.point = x.clone();
    }
    Ok(out.finish(cfg.algorithm, started))
}

/// Projected reflected-gradient method with an adaptive step.
///
/// With `y^k = x^k + (lambda_k / lambda_{k-1}) (x^k - x^{k-1})`, the step
/// `lambda_k` starts from `1.5 lambda_{k-1}` and is halved until
/// `lambda_k |F(y^k) - F(y^{k-1})| <= 0.4 |y^k - y^{k-1}|`; then
/// `x^{k+1} = P(x^k - lambda_k F(y^k))`. The run stops when
/// `|y - P(y - lambda F(y))| + |x - y| <= tolerance`.
pub fn mal_adap_solve<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    mal_adap_solve_observed(x0, op, fs, cfg, None)
}

fn mal_adap_solve_observed<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
    mut observer: Observer<'_>,
) -> Result<SolveResult> {
    expect_algorithm(cfg, &[Algorithm::MalAdap])?;
    check_problem(x0, op, fs, cfg)?;
    let started = Instant::now();
    let project = |p: &DVector<f64>| {
        project_intersection(fs, p, cfg.projection_tol, cfg.projection_max_sweeps)
    };
    let mut out = Outcome::new(x0.clone());

    let mut x = match project(x0) {
        Ok(p) => p,
        Err(e) => {
            out.fail(e);
            return Ok(out.finish(cfg.algorithm, started));
        }
    };
    out.point = x.clone();
    let mut x_prev = x.clone();
    let mut y_prev = x.clone();
    let mut fy_prev = op.apply(&x);
    out.evals += 1;
    let mut lambda_prev = cfg.mal_lambda0.unwrap_or_else(|| lipschitz_step(op, fs));

    'outer: for k in 1..=cfg.max_iterations {
        let mut lambda = if k == 1 {
            lambda_prev
        } else {
            lambda_prev * MAL_GROWTH
        };
        let (y, fy) = loop {
            let y = &x + (&x - &x_prev) * (lambda / lambda_prev);
            let fy = op.apply(&y);
            out.evals += 1;
            let lhs = lambda * (&fy - &fy_prev).norm();
            if lhs <= MAL_CONTRACTION * (&y - &y_prev).norm() || k == 1 {
                break (y, fy);
            }
            lambda *= MAL_SHRINK;
            if lambda < MIN_ADAPTIVE_STEP {
                out.fail(Error::Stalled(format!(
                    "adaptive step collapsed below {MIN_ADAPTIVE_STEP:e}"
                )));
                break 'outer;
            }
        };

        let natural = match project(&(&y - &fy * lambda)) {
            Ok(p) => (&y - p).norm(),
            Err(e) => {
                out.fail(e);
                break;
            }
        };
        let residual = natural + (&x - &y).norm();
        out.history.push((k, residual));
        out.iterations = k;
        notify(
            &mut observer,
            IterationEvent::Exact {
                k,
                x: &x,
                y: &y,
                step: lambda,
            },
        );
        if residual <= cfg.tolerance {
            out.status = Status::Converged;
            break;
        }

        let next = match project(&(&x - &fy * lambda)) {
            Ok(p) => p,
            Err(e) => {
                out.fail(e);
                break;
            }
        };
        x_prev = std::mem::replace(&mut x, next);
        y_prev = y;
        fy_prev = fy;
        lambda_prev = lambda;
        out.point = x.clone();
    }
    Ok(out.finish(cfg.algorithm, started))
}

/// Runs `cfg.algorithm` from `x0`.
pub fn solve<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    solve_observed(x0, op, fs, cfg, None)
}

/// Like [`solve`], calling `observer` after every iteration.
pub fn solve_observed<O: Operator + ?Sized>(
    x0: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    cfg: &SolverConfig,
    observer: Observer<'_>,
) -> Result<SolveResult> {
    match cfg.algorithm {
        Algorithm::CrmVip1 | Algorithm::Bi1 => direct_solve(x0, op, fs, cfg, observer),
        Algorithm::CrmVip2 | Algorithm::Bi2 => explicit_solve(x0, op, fs, cfg, observer),
        Algorithm::Egm => egm_solve_observed(x0, op, fs, cfg, observer),
        Algorithm::MalAdap => mal_adap_solve_observed(x0, op, fs, cfg, observer),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionCheck {
    /// `|x - P_C(x - F(x))|`.
    pub natural_residual: f64,
    /// `max(0, max_i g_i(x))`.
    pub feasibility: f64,
}

pub fn check_solution<O: Operator + ?Sized>(
    x: &DVector<f64>,
    op: &O,
    fs: &FeasibleSet,
    tol: f64,
) -> Result<SolutionCheck> {
    check_dim(fs.dim(), x.len())?;
    check_dim(fs.dim(), op.dim())?;
    let feasibility = fs.max_violation(x).0.max(0.0);
    let target = x - op.apply(x);
    let projected = project_intersection(fs, &target, tol, DEFAULT_MAX_SWEEPS)?;
    Ok(SolutionCheck {
        natural_residual: (x - projected).norm(),
        feasibility,
    })
}
