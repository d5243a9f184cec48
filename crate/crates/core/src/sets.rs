//! Ellipsoidal constraint sets `g(x) = <x, A x> + 2 <b, x> - alpha <= 0`,
//! their intersections, and exact projections onto both.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Regularization added to `M M^T` when generating ellipsoids.
pub const GENERATOR_RIDGE: f64 = 1e-3;
/// `g_i(0)` for every generated ellipsoid.
pub const GENERATOR_MARGIN: f64 = 1.0;

pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;

const ELLIPSOID_MAX_ITER: usize = 200;

#[derive(Clone, Debug)]
struct Spectral {
    basis: DMatrix<f64>,
    values: DVector<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "EllipsoidDoc", into = "EllipsoidDoc")]
pub struct Ellipsoid {
    quad: DMatrix<f64>,
    lin: DVector<f64>,
    level: f64,
    // filled on first exact projection
    spectral: OnceLock<Spectral>,
}

impl PartialEq for Ellipsoid {
    fn eq(&self, other: &Self) -> bool {
        self.quad == other.quad && self.lin == other.lin && self.level == other.level
    }
}

impl Ellipsoid {
    /// Validates symmetry, positive definiteness and nonemptiness.
    pub fn new(quad: DMatrix<f64>, lin: DVector<f64>, level: f64) -> Result<Self> {
        let n = lin.len();
        if quad.nrows() != n || quad.ncols() != n {
            return Err(Error::InvalidEllipsoid(format!(
                "matrix is {}x{} but the linear term has length {n}",
                quad.nrows(),
                quad.ncols()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidEllipsoid("dimension must be positive".into()));
        }
        for i in 0..n {
            for j in 0..i {
                if (quad[(i, j)] - quad[(j, i)]).abs() > 1e-12 {
                    return Err(Error::InvalidEllipsoid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let chol = quad
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidEllipsoid("matrix is not positive definite".into()))?;
        // min g = -<b, A^{-1} b> - alpha
        let min_value = -lin.dot(&chol.solve(&lin)) - level;
        if min_value.is_nan() || min_value >= 0.0 {
            return Err(Error::InvalidEllipsoid(
                "sublevel set has empty interior".into(),
            ));
        }
        Ok(Self {
            quad,
            lin,
            level,
            spectral: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lin.len()
    }

    pub fn quad(&self) -> &DMatrix<f64> {
        &self.quad
    }

    pub fn lin(&self) -> &DVector<f64> {
        &self.lin
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// `g(x)` and `grad g(x) = 2 A x + 2 b`.
    pub fn eval(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        check_dim(self.dim(), x.len())?;
        let ax = &self.quad * x;
        let value = x.dot(&ax) + 2.0 * self.lin.dot(x) - self.level;
        Ok((value, (ax + &self.lin) * 2.0))
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let ax = &self.quad * x;
        x.dot(&ax) + 2.0 * self.lin.dot(x) - self.level
    }

    /// Unconstrained minimizer `-A^{-1} b`.
    pub fn center(&self) -> DVector<f64> {
        let chol = self
            .quad
            .clone()
            .cholesky()
            .expect("validated positive definite");
        -chol.solve(&self.lin)
    }

    /// Bound on `|x_j|` over the ellipsoid, per coordinate.
    pub fn coordinate_bounds(&self) -> DVector<f64> {
        let chol = self
            .quad
            .clone()
            .cholesky()
            .expect("validated positive definite");
        let center = -chol.solve(&self.lin);
        let inv = chol.inverse();
        // {(x - c)^T A (x - c) <= alpha + b^T A^{-1} b}
        let rho = self.level - self.lin.dot(&center);
        DVector::from_fn(self.dim(), |j, _| {
            center[j].abs() + (rho * inv[(j, j)]).sqrt()
        })
    }

    fn spectral(&self) -> &Spectral {
        self.spectral.get_or_init(|| {
            let eig = SymmetricEigen::new(self.quad.clone());
            Spectral {
                basis: eig.eigenvectors,
                values: eig.eigenvalues,
            }
        })
    }
}

#[derive(Serialize, Deserialize)]
struct EllipsoidDoc {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    alpha: f64,
}

impl TryFrom<EllipsoidDoc> for Ellipsoid {
    type Error = Error;

    fn try_from(doc: EllipsoidDoc) -> Result<Self> {
        let n = doc.b.len();
        if doc.a.len() != n || doc.a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidEllipsoid(format!(
                "matrix rows must all have length {n}"
            )));
        }
        let quad = DMatrix::from_fn(n, n, |i, j| doc.a[i][j]);
        Ellipsoid::new(quad, DVector::from_vec(doc.b), doc.alpha)
    }
}

impl From<Ellipsoid> for EllipsoidDoc {
    fn from(e: Ellipsoid) -> Self {
        let n = e.dim();
        Self {
            a: (0..n)
                .map(|i| (0..n).map(|j| e.quad[(i, j)]).collect())
                .collect(),
            b: e.lin.iter().copied().collect(),
            alpha: e.level,
        }
    }
}

/// Intersection of ellipsoids together with a strictly feasible point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FeasibleSetDoc", into = "FeasibleSetDoc")]
pub struct FeasibleSet {
    ellipsoids: Vec<Ellipsoid>,
    slater_point: DVector<f64>,
    slater_margin: f64,
}

impl FeasibleSet {
    pub fn new(ellipsoids: Vec<Ellipsoid>, slater_point: DVector<f64>) -> Result<Self> {
        let Some(first) = ellipsoids.first() else {
            return Err(Error::InvalidArgument(
                "feasible set needs at least one ellipsoid".into(),
            ));
        };
        let n = first.dim();
        for e in &ellipsoids {
            check_dim(n, e.dim())?;
        }
        check_dim(n, slater_point.len())?;
        let worst = ellipsoids
            .iter()
            .map(|e| e.value(&slater_point))
            .fold(f64::NEG_INFINITY, f64::max);
        if worst.is_nan() || worst >= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "slater point is not strictly feasible (max g = {worst:e})"
            )));
        }
        Ok(Self {
            ellipsoids,
            slater_point,
            slater_margin: -worst,
        })
    }

    pub fn dim(&self) -> usize {
        self.slater_point.len()
    }

    pub fn len(&self) -> usize {
        self.ellipsoids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ellipsoids.is_empty()
    }

    pub fn ellipsoids(&self) -> &[Ellipsoid] {
        &self.ellipsoids
    }

    pub fn slater_point(&self) -> &DVector<f64> {
        &self.slater_point
    }

    /// `-max_i g_i(w)` at the Slater point `w`.
    pub fn slater_margin(&self) -> f64 {
        self.slater_margin
    }

    /// `max_i g_i(x)` and the smallest index attaining it.
    pub fn max_violation(&self, x: &DVector<f64>) -> (f64, usize) {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, e) in self.ellipsoids.iter().enumerate() {
            let v = e.value(x);
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.max_violation(x).0 <= 0.0
    }

    /// Per-coordinate bound on `|x_j|` over the set: the tightest of the
    /// individual ellipsoid bounds.
    pub fn coordinate_bounds(&self) -> DVector<f64> {
        let mut bounds = DVector::from_element(self.dim(), f64::INFINITY);
        for e in &self.ellipsoids {
            bounds = bounds.zip_map(&e.coordinate_bounds(), f64::min);
        }
        bounds
    }

    /// Radius of an origin-centered sup-norm ball containing the set.
    pub fn bounding_radius(&self) -> f64 {
        self.coordinate_bounds().max()
    }
}

#[derive(Serialize, Deserialize)]
struct FeasibleSetDoc {
    n: usize,
    m: usize,
    ellipsoids: Vec<Ellipsoid>,
    slater: Vec<f64>,
}

impl TryFrom<FeasibleSetDoc> for FeasibleSet {
    type Error = Error;

    fn try_from(doc: FeasibleSetDoc) -> Result<Self> {
        if doc.ellipsoids.len() != doc.m {
            return Err(Error::InvalidArgument(format!(
                "declared m = {} but found {} ellipsoids",
                doc.m,
                doc.ellipsoids.len()
            )));
        }
        check_dim(doc.n, doc.slater.len())?;
        FeasibleSet::new(doc.ellipsoids, DVector::from_vec(doc.slater))
    }
}

impl From<FeasibleSet> for FeasibleSetDoc {
    fn from(fs: FeasibleSet) -> Self {
        Self {
            n: fs.dim(),
            m: fs.len(),
            slater: fs.slater_point.iter().copied().collect(),
            ellipsoids: fs.ellipsoids,
        }
    }
}

pub fn eval_constraint(e: &Ellipsoid, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    e.eval(x)
}

pub fn max_violation(fs: &FeasibleSet, x: &DVector<f64>) -> (f64, usize) {
    fs.max_violation(x)
}

/// Exact Euclidean projection onto one ellipsoid.
///
/// Outside points solve the scalar dual equation
/// `phi(mu) = g((I + mu A)^{-1} (x - mu b)) = 0` for `mu > 0` in the
/// eigenbasis of `A`, with Newton steps safeguarded by a bisection bracket.
/// Stops once `|g(y)| / |grad g(y)| <= tol / 100`.
pub fn project_ellipsoid(e: &Ellipsoid, x: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    check_dim(e.dim(), x.len())?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    if e.value(x) <= 0.0 {
        return Ok(x.clone());
    }
    let sp = e.spectral();
    let xt = sp.basis.tr_mul(x);
    let bt = sp.basis.tr_mul(&e.lin);
    let lam = &sp.values;
    let n = e.dim();

    let point = |mu: f64| DVector::from_fn(n, |j, _| (xt[j] - mu * bt[j]) / (1.0 + mu * lam[j]));
    let phi = |y: &DVector<f64>| -> f64 {
        (0..n)
            .map(|j| lam[j] * y[j] * y[j] + 2.0 * bt[j] * y[j])
            .sum::<f64>()
            - e.level
    };
    // relative distance to the boundary at the point for mu
    let residual = |y: &DVector<f64>, val: f64| -> f64 {
        let grad = DVector::from_fn(n, |j, _| 2.0 * (lam[j] * y[j] + bt[j]));
        val.abs() / grad.norm().max(f64::MIN_POSITIVE)
    };
    let target = tol * 1e-2;

    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut iterations = 0;
    while phi(&point(hi)) > 0.0 {
        hi *= 2.0;
        iterations += 1;
        if iterations > ELLIPSOID_MAX_ITER || !hi.is_finite() {
            let y = point(hi);
            let r = residual(&y, phi(&y));
            return Err(Error::ProjectionFailure {
                best: &sp.basis * y,
                residual: r,
                iterations,
            });
        }
    }

    let mut mu = hi;
    loop {
        iterations += 1;
        let y = point(mu);
        let val = phi(&y);
        let r = residual(&y, val);
        if r <= target || hi - lo <= 4.0 * f64::EPSILON * hi {
            if r <= tol {
                return Ok(&sp.basis * y);
            }
            return Err(Error::ProjectionFailure {
                best: &sp.basis * y,
                residual: r,
                iterations,
            });
        }
        if iterations >= ELLIPSOID_MAX_ITER {
            return Err(Error::ProjectionFailure {
                best: &sp.basis * y,
                residual: r,
                iterations,
            });
        }
        if val > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let dphi: f64 = (0..n)
            .map(|j| {
                let denom = 1.0 + mu * lam[j];
                -2.0 * (lam[j] * y[j] + bt[j]) * (bt[j] + lam[j] * xt[j]) / (denom * denom)
            })
            .sum();
        let newton = mu - val / dphi;
        mu = if dphi < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
}

/// Exact projection onto the intersection by Dykstra's cyclic scheme.
///
/// Each sweep projects onto every ellipsoid in turn with the usual
/// correction vectors. Stops when no single projection in a sweep moved the
/// iterate by more than `tol`.
pub fn project_intersection(
    fs: &FeasibleSet,
    x: &DVector<f64>,
    tol: f64,
    max_sweeps: usize,
) -> Result<DVector<f64>> {
    check_dim(fs.dim(), x.len())?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let m = fs.len();
    let mut current = x.clone();
    let mut corrections = vec![DVector::zeros(x.len()); m];
    let mut last_move = f64::INFINITY;
    for _ in 0..max_sweeps {
        let mut sweep_move: f64 = 0.0;
        for (e, corr) in fs.ellipsoids.iter().zip(corrections.iter_mut()) {
            let shifted = &current + &*corr;
            let projected = project_ellipsoid(e, &shifted, tol)?;
            sweep_move = sweep_move.max((&projected - &current).norm());
            *corr = shifted - &projected;
            current = projected;
        }
        last_move = sweep_move;
        if sweep_move <= tol {
            return Ok(current);
        }
    }
    Err(Error::ProjectionFailure {
        best: current,
        residual: last_move,
        iterations: max_sweeps,
    })
}

/// Random intersection of `m` ellipsoids in dimension `n` with the origin as
/// Slater point.
///
/// `A_i = M_i M_i^T + 1e-3 I` with `M_i` uniform in (-1, 1), `b_i` uniform
/// in (-1, 1), and `alpha = 1`, so that `g_i(0) = -1` for every `i`.
pub fn generate_feasible_set(n: usize, m: usize, seed: u64) -> Result<FeasibleSet> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "need n >= 1 and m >= 1, got n = {n}, m = {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor = DVector::zeros(n);
    let mut ellipsoids = Vec::with_capacity(m);
    for _ in 0..m {
        let factor = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut quad = &factor * factor.transpose();
        quad.fill_lower_triangle_with_upper_triangle();
        for k in 0..n {
            quad[(k, k)] += GENERATOR_RIDGE;
        }
        let lin = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let level = anchor.dot(&(&quad * &anchor)) + 2.0 * lin.dot(&anchor) + GENERATOR_MARGIN;
        ellipsoids.push(Ellipsoid::new(quad, lin, level)?);
    }
    FeasibleSet::new(ellipsoids, anchor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn ball(center: DVector<f64>, radius: f64) -> Ellipsoid {
        // |x - c|^2 - r^2 = <x, x> - 2 <c, x> + |c|^2 - r^2
        let n = center.len();
        let level = radius * radius - center.norm_squared();
        Ellipsoid::new(DMatrix::identity(n, n), -center, level).unwrap()
    }

    #[test]
    fn eval_unit_ball() {
        let e = ball(dvector![0.0, 0.0], 1.0);
        let (v, g) = eval_constraint(&e, &dvector![2.0, 0.0]).unwrap();
        assert_eq!(v, 3.0);
        assert_eq!(g, dvector![4.0, 0.0]);
        assert!(matches!(
            eval_constraint(&e, &dvector![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn eval_at_unconstrained_minimizer() {
        let quad = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lin = dvector![0.3, -0.7];
        let e = Ellipsoid::new(quad.clone(), lin.clone(), 2.0).unwrap();
        let xhat = e.center();
        let (v, g) = e.eval(&xhat).unwrap();
        let expected = -lin.dot(&(quad.try_inverse().unwrap() * &lin)) - 2.0;
        assert_relative_eq!(v, expected, epsilon = 1e-12);
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let fs = generate_feasible_set(4, 3, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = 1e-6;
        for e in fs.ellipsoids() {
            for _ in 0..10 {
                let x = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
                let (_, grad) = e.eval(&x).unwrap();
                let fd = DVector::from_fn(4, |j, _| {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    (e.value(&xp) - e.value(&xm)) / (2.0 * h)
                });
                assert!((&fd - &grad).norm() <= 1e-6 * grad.norm().max(1.0));
            }
        }
    }

    #[test]
    fn invalid_ellipsoids_are_rejected() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(Ellipsoid::new(asym, dvector![0.0, 0.0], 1.0).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Ellipsoid::new(indef, dvector![0.0, 0.0], 1.0).is_err());
        assert!(Ellipsoid::new(DMatrix::identity(2, 2), dvector![0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn max_violation_examples() {
        let fs = FeasibleSet::new(
            vec![ball(dvector![0.0, 0.0], 2.0), ball(dvector![0.0, 0.0], 1.0)],
            dvector![0.0, 0.0],
        )
        .unwrap();
        // x = (sqrt 3, 0): g1 = 3 - 4 = -1, g2 = 3 - 1 = 2
        let (v, i) = fs.max_violation(&dvector![3f64.sqrt(), 0.0]);
        assert_relative_eq!(v, 2.0, epsilon = 1e-12);
        assert_eq!(i, 1);
        assert!(fs.max_violation(fs.slater_point()).0 < 0.0);

        let twins = FeasibleSet::new(
            vec![ball(dvector![0.0, 0.0], 1.0), ball(dvector![0.0, 0.0], 1.0)],
            dvector![0.0, 0.0],
        )
        .unwrap();
        assert_eq!(twins.max_violation(&dvector![0.0, 2f64.sqrt()]).1, 0);
    }

    #[test]
    fn project_ellipsoid_examples() {
        let e = ball(dvector![0.0, 0.0], 1.0);
        let p = project_ellipsoid(&e, &dvector![2.0, 0.0], 1e-12).unwrap();
        assert_relative_eq!(p, dvector![1.0, 0.0], epsilon = 1e-12);
        let inside = dvector![0.1, -0.2];
        assert_eq!(project_ellipsoid(&e, &inside, 1e-12).unwrap(), inside);
        assert!(project_ellipsoid(&e, &inside, 0.0).is_err());
    }

    #[test]
    fn project_ellipsoid_satisfies_kkt() {
        let e = Ellipsoid::new(
            DMatrix::from_diagonal(&dvector![1.0, 4.0]),
            dvector![0.0, 0.0],
            1.0,
        )
        .unwrap();
        let x = dvector![2.0, 2.0];
        let y = project_ellipsoid(&e, &x, 1e-12).unwrap();
        let (g, grad) = e.eval(&y).unwrap();
        assert!(g.abs() <= 1e-8);
        // x - y parallel to grad g(y), pointing outward
        let d = &x - &y;
        let cross = d[0] * grad[1] - d[1] * grad[0];
        assert!(cross.abs() <= 1e-8 * d.norm() * grad.norm());
        assert!(d.dot(&grad) > 0.0);
    }

    #[test]
    fn dykstra_single_set_matches_direct_projection() {
        let fs = generate_feasible_set(5, 1, 3).unwrap();
        let x = DVector::from_element(5, 30.0);
        let direct = project_ellipsoid(&fs.ellipsoids()[0], &x, 1e-10).unwrap();
        let dyk = project_intersection(&fs, &x, 1e-10, 100).unwrap();
        assert_relative_eq!(direct, dyk, epsilon = 1e-12);
        let inside = DVector::zeros(5);
        assert_eq!(
            project_intersection(&fs, &inside, 1e-10, 100).unwrap(),
            inside
        );
    }

    #[test]
    fn dykstra_on_lens_matches_boundary_sampling() {
        let fs = FeasibleSet::new(
            vec![
                ball(dvector![0.5, 0.0], 1.0),
                ball(dvector![-0.5, 0.0], 1.0),
            ],
            dvector![0.0, 0.0],
        )
        .unwrap();
        let x = dvector![0.0, 5.0];
        let p = project_intersection(&fs, &x, 1e-12, 10_000).unwrap();
        // dense sampling of the lens boundary: arcs of both circles inside the other
        let mut best = f64::INFINITY;
        let mut best_pt = dvector![0.0, 0.0];
        for i in 0..200_000 {
            let t = i as f64 * std::f64::consts::TAU / 200_000.0;
            for c in [0.5, -0.5] {
                let z = dvector![c + t.cos(), t.sin()];
                if fs.max_violation(&z).0 <= 1e-12 {
                    let d = (&z - &x).norm();
                    if d < best {
                        best = d;
                        best_pt = z;
                    }
                }
            }
        }
        assert!(((&p - &x).norm() - best).abs() <= 1e-4);
        assert!((&p - &best_pt).norm() <= 1e-4);
        assert_relative_eq!(p, dvector![0.0, 0.75f64.sqrt()], epsilon = 1e-6);
    }

    #[test]
    fn generated_sets_have_slater_origin() {
        let fs = generate_feasible_set(6, 4, 17).unwrap();
        for e in fs.ellipsoids() {
            assert_eq!(e.value(&DVector::zeros(6)), -1.0);
        }
        assert!(fs.slater_margin() >= GENERATOR_MARGIN);
        assert_eq!(fs, generate_feasible_set(6, 4, 17).unwrap());
        assert_ne!(fs, generate_feasible_set(6, 4, 18).unwrap());
    }

    #[test]
    fn generated_matrices_are_positive_definite() {
        let fs = generate_feasible_set(5, 2, 42).unwrap();
        for e in fs.ellipsoids() {
            let eig = SymmetricEigen::new(e.quad().clone());
            assert!(eig.eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn json_layout_is_row_major() {
        let quad = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let e = Ellipsoid::new(quad, dvector![0.1, 0.2], 1.0).unwrap();
        let fs = FeasibleSet::new(vec![e], dvector![0.0, 0.0]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&fs).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["m"], 1);
        assert_eq!(v["ellipsoids"][0]["A"][0][1], 0.5);
        assert_eq!(v["ellipsoids"][0]["alpha"], 1.0);
        let back: FeasibleSet = serde_json::from_value(v).unwrap();
        assert_eq!(back, fs);
    }

    #[test]
    fn coordinate_bounds_contain_the_set() {
        let fs = generate_feasible_set(3, 2, 5).unwrap();
        let bounds = fs.coordinate_bounds();
        for j in 0..3 {
            let mut dir = DVector::zeros(3);
            for sign in [1.0, -1.0] {
                dir[j] = 10.0 * sign;
                let p = project_intersection(&fs, &dir, 1e-9, 100_000).unwrap();
                assert!(p[j].abs() <= bounds[j] + 1e-6);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20_000 {
            let x = DVector::from_fn(3, |j, _| {
                rng.random_range(-bounds[j] * 1.5..=bounds[j] * 1.5)
            });
            if fs.contains(&x) {
                assert!((0..3).all(|j| x[j].abs() <= bounds[j]));
            }
        }
    }
}
