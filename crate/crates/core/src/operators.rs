//! Test operators `F(x) = A x + G(x) + c` for the three experiment
//! families, and the rank test that separates paramonotone from merely
//! monotone affine maps.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Relative singular-value cutoff for numerical rank.
pub const RANK_THRESHOLD: f64 = 1e-8;
const POWER_ITERATIONS: usize = 50;

/// A continuous map `F: R^n -> R^n` the solvers can query.
pub trait Operator {
    fn dim(&self) -> usize;

    /// `F(x)`; `x` must have length [`Operator::dim`].
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Upper estimate of the Lipschitz constant of `F` on the sup-norm ball
    /// of the given radius, when one is cheaply available.
    fn lipschitz_estimate(&self, _radius: f64) -> Option<f64> {
        None
    }
}

/// Wraps a closure as an [`Operator`].
pub struct FnOperator<F> {
    dim: usize,
    map: F,
    lipschitz: Option<f64>,
}

impl<F> FnOperator<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    pub fn new(dim: usize, map: F) -> Self {
        Self {
            dim,
            map,
            lipschitz: None,
        }
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = Some(lipschitz);
        self
    }
}

impl<F> Operator for FnOperator<F>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.map)(x)
    }

    fn lipschitz_estimate(&self, _radius: f64) -> Option<f64> {
        self.lipschitz
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorFamily {
    /// `F = grad f` with `f(x) = 1/2 <x, A x> + <c, x> + 1/4 sum b_i x_i^4`.
    Gradient,
    /// Block-diagonal `A` with a nonsymmetric positive definite block.
    ParamonotoneNonGradient,
    /// Block-diagonal `A` with a skew-symmetric block.
    MonotoneNonParamonotone,
}

impl OperatorFamily {
    /// Experiment number 1, 2 or 3.
    pub fn from_example(example: u8) -> Option<Self> {
        match example {
            1 => Some(Self::Gradient),
            2 => Some(Self::ParamonotoneNonGradient),
            3 => Some(Self::MonotoneNonParamonotone),
            _ => None,
        }
    }

    pub fn example(self) -> u8 {
        match self {
            Self::Gradient => 1,
            Self::ParamonotoneNonGradient => 2,
            Self::MonotoneNonParamonotone => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Monotonicity {
    Paramonotone,
    MonotoneOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorDoc", into = "OperatorDoc")]
pub struct OperatorSpec {
    family: OperatorFamily,
    linear: DMatrix<f64>,
    cubic_coeffs: DVector<f64>,
    shift: DVector<f64>,
    block_split: Option<(usize, usize)>,
}

impl OperatorSpec {
    /// Builds an operator and checks the invariants of its family.
    /// `block_split` is required for the two block families and ignored
    /// for [`OperatorFamily::Gradient`].
    pub fn new(
        family: OperatorFamily,
        linear: DMatrix<f64>,
        cubic_coeffs: DVector<f64>,
        shift: DVector<f64>,
        block_split: Option<(usize, usize)>,
    ) -> Result<Self> {
        let n = shift.len();
        if n == 0 {
            return Err(Error::InvalidOperator("dimension must be positive".into()));
        }
        if linear.nrows() != n || linear.ncols() != n {
            return Err(Error::InvalidOperator(format!(
                "matrix is {}x{}, expected {n}x{n}",
                linear.nrows(),
                linear.ncols()
            )));
        }
        check_dim(n, cubic_coeffs.len())?;
        let bad = |msg: &str| Err(Error::InvalidOperator(msg.to_string()));

        let block_split = match family {
            OperatorFamily::Gradient => {
                if linear != linear.transpose() {
                    return bad("gradient family needs a symmetric matrix");
                }
                let min_eig = SymmetricEigen::new(linear.clone()).eigenvalues.min();
                let scale = linear.amax().max(1.0);
                if min_eig < -1e-10 * scale {
                    return bad("gradient family needs a positive semidefinite matrix");
                }
                if cubic_coeffs.iter().any(|&b| b < 0.0) {
                    return bad("cubic coefficients must be nonnegative");
                }
                if shift.iter().all(|&c| c == 0.0) {
                    return bad("gradient family needs a nonzero shift");
                }
                None
            }
            OperatorFamily::ParamonotoneNonGradient | OperatorFamily::MonotoneNonParamonotone => {
                let Some((n1, n2)) = block_split else {
                    return bad("block families need a block split");
                };
                if n1 + n2 != n {
                    return bad("block split must add up to the dimension");
                }
                if cubic_coeffs.iter().any(|&b| b != 0.0) {
                    return bad("block families have no cubic term");
                }
                for i in 0..n {
                    for j in 0..n {
                        if (i < n1) != (j < n1) && linear[(i, j)] != 0.0 {
                            return bad("off-diagonal blocks must be zero");
                        }
                    }
                }
                let upper = linear.view((0, 0), (n1, n1));
                if upper != upper.transpose() {
                    return bad("leading block must be symmetric");
                }
                if family == OperatorFamily::MonotoneNonParamonotone {
                    let lower = linear.view((n1, n1), (n2, n2));
                    if lower.transpose() != -lower {
                        return bad("trailing block must be skew-symmetric");
                    }
                } else if numerical_rank(&(&linear + linear.transpose())) != numerical_rank(&linear)
                {
                    return bad("rank(A + A^T) must equal rank(A)");
                }
                Some((n1, n2))
            }
        };
        Ok(Self {
            family,
            linear,
            cubic_coeffs,
            shift,
            block_split,
        })
    }

    pub fn family(&self) -> OperatorFamily {
        self.family
    }

    pub fn linear(&self) -> &DMatrix<f64> {
        &self.linear
    }

    pub fn cubic_coeffs(&self) -> &DVector<f64> {
        &self.cubic_coeffs
    }

    pub fn shift(&self) -> &DVector<f64> {
        &self.shift
    }

    pub fn block_split(&self) -> Option<(usize, usize)> {
        self.block_split
    }

    /// Spectral norm of the linear part by power iteration on `A^T A`.
    pub fn linear_norm_estimate(&self) -> f64 {
        let n = self.shift.len();
        let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        let mut estimate = 0.0;
        for _ in 0..POWER_ITERATIONS {
            let w = self.linear.tr_mul(&(&self.linear * &v));
            let norm = w.norm();
            if norm == 0.0 {
                return 0.0;
            }
            estimate = norm;
            v = w / norm;
        }
        estimate.sqrt()
    }
}

impl Operator for OperatorSpec {
    fn dim(&self) -> usize {
        self.shift.len()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.linear * x + &self.shift;
        if self.family == OperatorFamily::Gradient {
            for (o, (&b, &xi)) in out.iter_mut().zip(self.cubic_coeffs.iter().zip(x.iter())) {
                *o += b * xi * xi * xi;
            }
        }
        out
    }

    /// `|A|_2` plus, for the cubic term, `3 max_i b_i R^2`.
    fn lipschitz_estimate(&self, radius: f64) -> Option<f64> {
        let cubic = 3.0 * self.cubic_coeffs.iter().copied().fold(0.0, f64::max) * radius * radius;
        Some(self.linear_norm_estimate() + cubic)
    }
}

#[derive(Serialize, Deserialize)]
struct OperatorDoc {
    family: OperatorFamily,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    cubic: Vec<f64>,
    c: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    block_split: Option<[usize; 2]>,
}

impl TryFrom<OperatorDoc> for OperatorSpec {
    type Error = Error;

    fn try_from(doc: OperatorDoc) -> Result<Self> {
        let n = doc.c.len();
        if doc.a.len() != n || doc.a.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidOperator(format!(
                "matrix rows must all have length {n}"
            )));
        }
        OperatorSpec::new(
            doc.family,
            DMatrix::from_fn(n, n, |i, j| doc.a[i][j]),
            DVector::from_vec(doc.cubic),
            DVector::from_vec(doc.c),
            doc.block_split.map(|[a, b]| (a, b)),
        )
    }
}

impl From<OperatorSpec> for OperatorDoc {
    fn from(op: OperatorSpec) -> Self {
        let n = op.shift.len();
        Self {
            family: op.family,
            a: (0..n)
                .map(|i| (0..n).map(|j| op.linear[(i, j)]).collect())
                .collect(),
            cubic: op.cubic_coeffs.iter().copied().collect(),
            c: op.shift.iter().copied().collect(),
            block_split: op.block_split.map(|(a, b)| [a, b]),
        }
    }
}

pub fn eval_operator(op: &OperatorSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(op.dim(), x.len())?;
    Ok(op.apply(x))
}

/// Number of singular values above `RANK_THRESHOLD * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_THRESHOLD * max).count()
}

/// Paramonotone iff `rank(A + A^T) = rank(A)`. The cubic part is the
/// gradient of a separable convex function and does not change the class.
pub fn classify_monotonicity(op: &OperatorSpec) -> Monotonicity {
    let a = op.linear();
    if numerical_rank(&(a + a.transpose())) == numerical_rank(a) {
        Monotonicity::Paramonotone
    } else {
        Monotonicity::MonotoneOnly
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn gram(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = uniform_matrix(rng, n, n);
    let mut g = &m * m.transpose();
    g.fill_lower_triangle_with_upper_triangle();
    g
}

fn skew(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let u = uniform_matrix(rng, n, n);
    (&u - u.transpose()) * 0.5
}

fn nonzero_shift(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    loop {
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        if c.iter().any(|&v| v != 0.0) {
            return c;
        }
    }
}

/// Seeded random operator of the given family.
///
/// Block families use `n1 = ceil(n / 2)`; the leading block is `M M^T` and
/// the trailing block is `M M^T + B + D` (paramonotone) or a skew-symmetric
/// `B` (monotone only), with `B` an antisymmetrized uniform matrix and `D`
/// diagonal uniform in (0.1, 1.1).
pub fn generate_operator(family: OperatorFamily, n: usize, seed: u64) -> Result<OperatorSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match family {
        OperatorFamily::Gradient => {
            if n == 0 {
                return Err(Error::InvalidArgument("need n >= 1".into()));
            }
            let linear = gram(&mut rng, n);
            let cubic = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
            let shift = nonzero_shift(&mut rng, n);
            OperatorSpec::new(family, linear, cubic, shift, None)
        }
        OperatorFamily::ParamonotoneNonGradient | OperatorFamily::MonotoneNonParamonotone => {
            if n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "block families need n >= 2, got {n}"
                )));
            }
            let n1 = n.div_ceil(2);
            let n2 = n - n1;
            let upper = gram(&mut rng, n1);
            let lower = if family == OperatorFamily::ParamonotoneNonGradient {
                let sym = gram(&mut rng, n2);
                let b = skew(&mut rng, n2);
                let d = DVector::from_fn(n2, |_, _| rng.random_range(0.1..1.1));
                sym + b + DMatrix::from_diagonal(&d)
            } else {
                skew(&mut rng, n2)
            };
            let mut linear = DMatrix::zeros(n, n);
            linear.view_mut((0, 0), (n1, n1)).copy_from(&upper);
            linear.view_mut((n1, n1), (n2, n2)).copy_from(&lower);
            let shift = nonzero_shift(&mut rng, n);
            OperatorSpec::new(family, linear, DVector::zeros(n), shift, Some((n1, n2)))
        }
    }
}
