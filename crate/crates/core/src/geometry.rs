//! Halfspace primitives and the circumcenter step over a product of
//! separating halfspaces.
//!
//! The circumcenter step works on `m` copies of a point `y`. Every copy is
//! projected onto its own separator, giving displacements `v_i`; the step
//! then moves along their mean `w` by the scale
//!
//! ```text
//! alpha = (sum_i |v_i|^2) / (m |w|^2)
//! ```
//!
//! which is the closed form of the circumcenter of `z`, `R_S(z)` and
//! `R_D(R_S(z))` in the product space when `z = (y, ..., y)` lies on the
//! diagonal. Geometrically the output is the projection of `y` onto the
//! aggregated halfspace `{x : <w, x - y> >= alpha |w|^2}`, which contains
//! every point lying in all separators.
//!
//! The displacement of a violated separator `<u, z> <= <u, y> - g` is
//! `-(g / |u|^2) u`, the exact halfspace projection. With a single set the
//! step therefore reduces to the plain projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// The closed halfspace `{z : <normal, z> <= offset}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    normal: DVector<f64>,
    offset: f64,
}

impl Halfspace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self> {
        if normal.iter().all(|&a| a == 0.0) || !offset.is_finite() {
            return Err(Error::InvalidHalfspace);
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed violation `<normal, x> - offset`; positive outside.
    pub fn excess(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.excess(x) <= 0.0
    }

    /// Euclidean distance from `x` to the halfspace (zero inside).
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        self.excess(x).max(0.0) / self.normal.norm()
    }

    /// Displacement `P(x) - x` of the orthogonal projection onto `self`.
    pub fn projection_displacement(&self, x: &DVector<f64>) -> DVector<f64> {
        let excess = self.excess(x);
        if excess <= 0.0 {
            DVector::zeros(x.len())
        } else {
            &self.normal * (-excess / self.normal.norm_squared())
        }
    }
}

/// Output of the separator construction at a point.
#[derive(Clone, Debug, PartialEq)]
pub enum Separator {
    /// The point already satisfies the constraint; the set itself serves as
    /// separator and the projection is the identity.
    Feasible,
    Cut(Halfspace),
}

impl Separator {
    pub fn displacement(&self, y: &DVector<f64>) -> DVector<f64> {
        match self {
            Separator::Feasible => DVector::zeros(y.len()),
            Separator::Cut(h) => h.projection_displacement(y),
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Separator::Feasible)
    }
}

pub fn project_halfspace(x: &DVector<f64>, h: &Halfspace) -> Result<DVector<f64>> {
    check_dim(h.dim(), x.len())?;
    Ok(x + h.projection_displacement(x))
}

/// `2 P_H(x) - x`.
pub fn reflect_halfspace(x: &DVector<f64>, h: &Halfspace) -> Result<DVector<f64>> {
    check_dim(h.dim(), x.len())?;
    Ok(x + h.projection_displacement(x) * 2.0)
}

/// Linearization cut of a convex constraint `g <= 0` at `y`:
/// `{z : g(y) + <u, z - y> <= 0}` where `u` is a subgradient at `y`.
pub fn separating_halfspace(
    y: &DVector<f64>,
    g_value: f64,
    g_gradient: &DVector<f64>,
) -> Result<Separator> {
    check_dim(y.len(), g_gradient.len())?;
    if g_value <= 0.0 {
        return Ok(Separator::Feasible);
    }
    let offset = g_gradient.dot(y) - g_value;
    Halfspace::new(g_gradient.clone(), offset)
        .map(Separator::Cut)
        .map_err(|_| Error::DegenerateSeparator { value: g_value })
}

#[derive(Clone, Debug)]
pub struct CircumcenterStep {
    pub displacements: Vec<DVector<f64>>,
    pub mean_displacement: DVector<f64>,
    pub step_scale: f64,
    pub output: DVector<f64>,
    /// Some displacement is nonzero but they cancel in the mean, so the
    /// step is undefined and `output` was left at the input point.
    pub stalled: bool,
}

pub fn circumcenter_step(y: &DVector<f64>, separators: &[Separator]) -> Result<CircumcenterStep> {
    if separators.is_empty() {
        return Err(Error::InvalidArgument(
            "circumcenter step needs at least one separator".into(),
        ));
    }
    for s in separators {
        if let Separator::Cut(h) = s {
            check_dim(y.len(), h.dim())?;
        }
    }
    let m = separators.len() as f64;
    let displacements: Vec<DVector<f64>> = separators.iter().map(|s| s.displacement(y)).collect();

    // sequential reductions: results must not depend on caller threading
    let mut mean = DVector::zeros(y.len());
    let mut sum_sq = 0.0;
    for v in &displacements {
        mean += v;
        sum_sq += v.norm_squared();
    }
    mean /= m;
    let mean_sq = mean.norm_squared();

    if mean_sq == 0.0 {
        return Ok(CircumcenterStep {
            displacements,
            mean_displacement: mean,
            step_scale: 0.0,
            output: y.clone(),
            stalled: sum_sq > 0.0,
        });
    }
    let step_scale = sum_sq / (m * mean_sq);
    let output = y + &mean * step_scale;
    Ok(CircumcenterStep {
        displacements,
        mean_displacement: mean,
        step_scale,
        output,
        stalled: false,
    })
}

/// Circumcenter of three points: the point of their affine hull that is
/// equidistant from all of them.
///
/// Coincident points return that point. Collinear (but not coincident)
/// configurations have no circumcenter; the midpoint of the two farthest
/// apart points is returned instead.
pub fn circumcenter_oracle(
    p0: &DVector<f64>,
    p1: &DVector<f64>,
    p2: &DVector<f64>,
) -> DVector<f64> {
    let a = p1 - p0;
    let b = p2 - p0;
    let aa = a.dot(&a);
    let bb = b.dot(&b);
    let ab = a.dot(&b);
    let det = aa * bb - ab * ab;

    if aa == 0.0 && bb == 0.0 {
        return p0.clone();
    }
    if det <= 1e-13 * aa * bb {
        let pts = [p0, p1, p2];
        let mut best = (0, 1, -1.0);
        for i in 0..3 {
            for j in (i + 1)..3 {
                let d = (pts[i] - pts[j]).norm_squared();
                if d > best.2 {
                    best = (i, j, d);
                }
            }
        }
        return (pts[best.0] + pts[best.1]) * 0.5;
    }

    // c = p0 + s a + t b with <c - p0, a> = |a|^2 / 2 and <c - p0, b> = |b|^2 / 2
    let gram = DMatrix::from_row_slice(2, 2, &[aa, ab, ab, bb]);
    let rhs = DVector::from_vec(vec![0.5 * aa, 0.5 * bb]);
    let coeffs = gram
        .lu()
        .solve(&rhs)
        .expect("nonsingular Gram matrix after degeneracy check");
    p0 + a * coeffs[0] + b * coeffs[1]
}

/// Projects `y` onto the single halfspace in `separators` with the largest
/// excess (first one on ties). Returns `y` unchanged if all are feasible.
pub(crate) fn project_most_violated(y: &DVector<f64>, separators: &[Separator]) -> DVector<f64> {
    let mut best: Option<(&Halfspace, f64)> = None;
    for s in separators {
        if let Separator::Cut(h) = s {
            let e = h.excess(y);
            if best.is_none_or(|(_, b)| e > b) {
                best = Some((h, e));
            }
        }
    }
    match best {
        Some((h, _)) => y + h.projection_displacement(y),
        None => y.clone(),
    }
}
