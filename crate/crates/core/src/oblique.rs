//! The oblique manifold: matrices whose columns all have unit Euclidean norm.
//!
//! A point with `g` columns in `R^n` is a product of `g` unit spheres. The
//! attention kernel uses the single-column case, treating every embedded
//! feature vector as its own point, so pairwise distances reduce to the
//! arc-cosine of a clipped cosine.

use crate::error::{GeoError, Result};
use crate::linalg::{col_norms, dot, matmul_nt, Matrix};
use crate::scalar::Scalar;

/// Columns with norm below this are treated as degenerate by [`project`].
pub const DEFAULT_EPS_ZERO: f64 = 1e-12;
/// Cosine clip used by the geodesic distance.
pub const DEFAULT_EPS_CLIP: f64 = 1e-4;
/// Allowed deviation of a column norm from one.
pub const UNIT_TOLERANCE: f64 = 1e-12;
/// Allowed `|w_i . delta_i|` for a tangent vector.
pub const TANGENCY_TOLERANCE: f64 = 1e-10;

/// A matrix with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueMatrix<T> {
    inner: Matrix<T>,
}

impl<T: Scalar> ObliqueMatrix<T> {
    /// Accepts `m` only if every column norm is within [`UNIT_TOLERANCE`] of one.
    pub fn try_new(m: Matrix<T>) -> Result<Self> {
        for (j, n) in col_norms(&m).into_iter().enumerate() {
            if (n - T::one()).abs() > T::of(UNIT_TOLERANCE) {
                return Err(GeoError::InvalidConfig(format!(
                    "column {j} has norm {n}, not 1"
                )));
            }
        }
        Ok(Self { inner: m })
    }

    pub fn inner(&self) -> &Matrix<T> {
        &self.inner
    }

    pub fn into_inner(self) -> Matrix<T> {
        self.inner
    }

    pub fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    /// Number of columns, i.e. the number of sphere factors.
    pub fn num_points(&self) -> usize {
        self.inner.cols()
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        self.inner.column(j)
    }
}

/// Result of [`project`]: the manifold point plus which columns were degenerate.
#[derive(Debug, Clone)]
pub struct Projection<T> {
    pub point: ObliqueMatrix<T>,
    pub degenerate: Vec<bool>,
}

impl<T> Projection<T> {
    pub fn any_degenerate(&self) -> bool {
        self.degenerate.iter().any(|&d| d)
    }
}

/// Normalizes every column to unit length.
///
/// A column whose norm is below `eps_zero` has no direction; it is replaced
/// by `e_1` and flagged rather than aborting the whole projection.
pub fn project<T: Scalar>(m: &Matrix<T>, eps_zero: T) -> Projection<T> {
    let norms = col_norms(m);
    let degenerate: Vec<bool> = norms.iter().map(|&n| n < eps_zero).collect();
    let out = Matrix::from_fn(m.rows(), m.cols(), |i, j| {
        if degenerate[j] {
            if i == 0 {
                T::one()
            } else {
                T::zero()
            }
        } else {
            m.get(i, j) / norms[j]
        }
    });
    Projection {
        point: ObliqueMatrix { inner: out },
        degenerate,
    }
}

/// Projects each *row* of `m` to the unit sphere, returning a `d x n`
/// oblique point whose columns are the normalized rows.
pub fn project_rows<T: Scalar>(m: &Matrix<T>, eps_zero: T) -> Projection<T> {
    project(&m.transpose(), eps_zero)
}

#[inline]
fn clip_cosine<T: Scalar>(c: T, eps_clip: T) -> T {
    let hi = T::one() - eps_clip;
    c.max(-hi).min(hi)
}

fn check_eps_clip<T: Scalar>(eps_clip: T) -> Result<()> {
    if !(eps_clip >= T::zero() && eps_clip < T::one()) {
        return Err(GeoError::InvalidConfig(format!(
            "oblique clip epsilon must lie in [0, 1), got {eps_clip}"
        )));
    }
    Ok(())
}

/// Geodesic distance between two oblique points of equal shape:
/// `sqrt(sum_i arccos^2(clip(q_i . k_i)))` over column pairs.
///
/// With `eps_clip > 0` the distance of a point to itself is
/// `sqrt(g) * arccos(1 - eps_clip)`, not zero.
pub fn geodesic_distance<T: Scalar>(
    q: &ObliqueMatrix<T>,
    k: &ObliqueMatrix<T>,
    eps_clip: T,
) -> Result<T> {
    if q.shape() != k.shape() {
        return Err(GeoError::ShapeMismatch {
            op: "oblique::geodesic_distance",
            left: q.shape(),
            right: k.shape(),
        });
    }
    check_eps_clip(eps_clip)?;
    let (rows, cols) = q.shape();
    let mut sum = T::zero();
    for j in 0..cols {
        let mut c = T::zero();
        for i in 0..rows {
            c += q.inner.get(i, j) * k.inner.get(i, j);
        }
        let angle = clip_cosine(c, eps_clip).acos();
        sum += angle * angle;
    }
    Ok(sum.sqrt())
}

/// All point-to-point distances between the columns of `q` and of `k`:
/// `D[i][j] = arccos(clip(q_i . k_j))`.
pub fn pairwise_distances<T: Scalar>(
    q: &ObliqueMatrix<T>,
    k: &ObliqueMatrix<T>,
    eps_clip: T,
) -> Result<Matrix<T>> {
    if q.inner.rows() != k.inner.rows() {
        return Err(GeoError::DimensionMismatch {
            op: "oblique::pairwise_distances",
            left: q.inner.rows(),
            right: k.inner.rows(),
        });
    }
    check_eps_clip(eps_clip)?;
    let cos = matmul_nt(&q.inner.transpose(), &k.inner.transpose())?;
    Ok(cos.map(|c| clip_cosine(c, eps_clip).acos()))
}

/// A tangent vector at an oblique point: every column of `delta` is
/// orthogonal to the matching column of `base`.
#[derive(Debug, Clone)]
pub struct ObliqueTangent<T> {
    base: ObliqueMatrix<T>,
    delta: Matrix<T>,
}

impl<T: Scalar> ObliqueTangent<T> {
    pub fn try_new(base: ObliqueMatrix<T>, delta: Matrix<T>) -> Result<Self> {
        if base.shape() != delta.shape() {
            return Err(GeoError::ShapeMismatch {
                op: "ObliqueTangent::try_new",
                left: base.shape(),
                right: delta.shape(),
            });
        }
        let dn = col_norms(&delta);
        for j in 0..delta.cols() {
            let c = dot(&base.column(j), &delta.column(j));
            if c.abs() > T::of(TANGENCY_TOLERANCE) * dn[j].max(T::one()) {
                return Err(GeoError::InvalidConfig(format!(
                    "column {j} is not tangent: w.delta = {c}"
                )));
            }
        }
        Ok(Self { base, delta })
    }

    pub fn base(&self) -> &ObliqueMatrix<T> {
        &self.base
    }

    pub fn delta(&self) -> &Matrix<T> {
        &self.delta
    }
}

/// Orthogonal projection of an ambient gradient onto the tangent space at `w`:
/// column-wise `g_i - (w_i . g_i) w_i`.
///
/// The removed part is the normal component, so the Frobenius norm can only
/// shrink.
pub fn tangent_project<T: Scalar>(w: &ObliqueMatrix<T>, grad: &Matrix<T>) -> Result<ObliqueTangent<T>> {
    if w.shape() != grad.shape() {
        return Err(GeoError::ShapeMismatch {
            op: "oblique::tangent_project",
            left: w.shape(),
            right: grad.shape(),
        });
    }
    let (rows, cols) = grad.shape();
    let mut radial = vec![T::zero(); cols];
    for i in 0..rows {
        for (j, r) in radial.iter_mut().enumerate() {
            *r += w.inner.get(i, j) * grad.get(i, j);
        }
    }
    let delta = Matrix::from_fn(rows, cols, |i, j| grad.get(i, j) - radial[j] * w.inner.get(i, j));
    Ok(ObliqueTangent {
        base: w.clone(),
        delta,
    })
}

/// Metric-projection retraction: `project(base + step * delta)`.
pub fn retract<T: Scalar>(t: &ObliqueTangent<T>, step: T) -> ObliqueMatrix<T> {
    let moved = t
        .base
        .inner
        .add(&t.delta.scale(step))
        .expect("tangent shares the base shape");
    project(&moved, T::of(DEFAULT_EPS_ZERO)).point
}

/// Gradient of `arccos(clip(q . k))` with respect to `q`:
/// `-k / sqrt(1 - c^2)` where `c` is the clipped cosine.
///
/// Clipping keeps the result finite when `q = +-k`.
pub fn distance_gradient<T: Scalar>(q: &[T], k: &[T], eps_clip: T) -> Result<Vec<T>> {
    if q.len() != k.len() {
        return Err(GeoError::DimensionMismatch {
            op: "oblique::distance_gradient",
            left: q.len(),
            right: k.len(),
        });
    }
    check_eps_clip(eps_clip)?;
    let c = clip_cosine(dot(q, k), eps_clip);
    let s = (T::one() - c * c).sqrt();
    Ok(k.iter().map(|&kv| -kv / s).collect())
}
