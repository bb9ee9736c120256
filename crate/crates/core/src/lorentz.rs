//! The Lorentz (hyperboloid) model of hyperbolic space with curvature `-c`.
//!
//! Points are `x = [x_space, x_time]` on the upper sheet of
//! `<x, x>_L = -1/c`, where `<x, y>_L = x_space . y_space - x_time * y_time`.
//! All maps go through the origin `O = [0, 1/sqrt(c)]`.

use std::fmt::Write as _;

use crate::error::{GeoError, Result};
use crate::linalg::{dot, matmul_nt, norm, Matrix};
use crate::scalar::{sinhc, sinhc_slope, Scalar};

/// Lower bound on the curvature magnitude.
pub const MIN_CURVATURE: f64 = 1e-3;
/// Lower clip on the `arcosh` argument is `1 + DEFAULT_EPS_CLIP`.
pub const DEFAULT_EPS_CLIP: f64 = 1e-15;
/// Tolerance on the hyperboloid residual when validating input points,
/// scaled by `max(1, x_time^2)`.
pub const MANIFOLD_TOLERANCE: f64 = 1e-6;

/// Curvature magnitude `c`; the manifold has sectional curvature `-c`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Curvature<T>(T);

impl<T: Scalar> Curvature<T> {
    pub fn new(c: T) -> Result<Self> {
        if !(c.is_finite() && c >= T::of(MIN_CURVATURE)) {
            return Err(GeoError::InvalidCurvature {
                got: c.as_f64(),
                min: MIN_CURVATURE,
            });
        }
        Ok(Self(c))
    }

    #[inline]
    pub fn value(self) -> T {
        self.0
    }

    #[inline]
    pub fn sqrt(self) -> T {
        self.0.sqrt()
    }
}

/// A point on the upper sheet of the hyperboloid.
///
/// The time component is always derived from the space components, so a
/// value built through [`LorentzPoint::from_space`] sits on the sheet up to
/// the rounding of one square root.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzPoint<T> {
    space: Vec<T>,
    time: T,
}

impl<T: Scalar> LorentzPoint<T> {
    /// Lifts space coordinates onto the sheet: `time = sqrt(1/c + |space|^2)`.
    pub fn from_space(space: Vec<T>, c: Curvature<T>) -> Self {
        let time = (T::one() / c.value() + dot(&space, &space)).sqrt();
        Self { space, time }
    }

    /// Checks that `(space, time)` lies on the sheet for curvature `c`.
    pub fn try_new(space: Vec<T>, time: T, c: Curvature<T>) -> Result<Self> {
        if let Some(i) = space.iter().position(|v| !v.is_finite()) {
            return Err(GeoError::NonFinite(format!("space component {i}")));
        }
        if !time.is_finite() {
            return Err(GeoError::NonFinite("time component".into()));
        }
        let p = Self { space, time };
        p.check(c)?;
        Ok(p)
    }

    /// The origin `[0, 1/sqrt(c)]` in `dim` spatial dimensions.
    pub fn origin(dim: usize, c: Curvature<T>) -> Self {
        Self {
            space: vec![T::zero(); dim],
            time: T::one() / c.sqrt(),
        }
    }

    pub fn space(&self) -> &[T] {
        &self.space
    }

    pub fn time(&self) -> T {
        self.time
    }

    /// Number of spatial components.
    pub fn dim(&self) -> usize {
        self.space.len()
    }

    /// `<x, x>_L + 1/c`, zero for an exact on-sheet point.
    pub fn residual(&self, c: Curvature<T>) -> T {
        dot(&self.space, &self.space) - self.time * self.time + T::one() / c.value()
    }

    /// Fails with [`GeoError::OffManifold`] if the point is not on the upper sheet.
    pub fn check(&self, c: Curvature<T>) -> Result<()> {
        let tol = T::of(MANIFOLD_TOLERANCE) * (self.time * self.time).max(T::one());
        let r = self.residual(c);
        if !(r.abs() <= tol) || self.time <= T::zero() {
            return Err(GeoError::OffManifold {
                residual: r.as_f64(),
                tolerance: tol.as_f64(),
            });
        }
        Ok(())
    }

    /// Serializes as `c,time,space_1,...,space_n`.
    pub fn to_csv_row(&self, c: Curvature<T>) -> String {
        let mut s = String::new();
        write!(s, "{},{}", c.value(), self.time).expect("writing to a String");
        for v in &self.space {
            write!(s, ",{v}").expect("writing to a String");
        }
        s
    }

    /// Parses a `c,time,space...` row and re-verifies the hyperboloid constraint.
    pub fn from_csv_row(line: &str) -> Result<(Curvature<T>, Self)> {
        let fields: Vec<T> = line
            .split(',')
            .map(|f| {
                f.trim().parse::<T>().map_err(|_| GeoError::Parse {
                    line: 1,
                    msg: format!("cannot parse `{f}` as a number"),
                })
            })
            .collect::<Result<_>>()?;
        if fields.len() < 2 {
            return Err(GeoError::Parse {
                line: 1,
                msg: "a point row needs at least `c,time`".into(),
            });
        }
        let c = Curvature::new(fields[0])?;
        let p = Self::try_new(fields[2..].to_vec(), fields[1], c)?;
        Ok((c, p))
    }
}

/// A tangent vector `u = [scale * enc, 0]` at the origin.
///
/// `scale` is the embedding scale applied before lifting.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentAtOrigin<T> {
    enc: Vec<T>,
    scale: T,
}

impl<T: Scalar> TangentAtOrigin<T> {
    pub fn new(enc: Vec<T>, scale: T) -> Result<Self> {
        if !(scale.is_finite() && scale > T::zero()) {
            return Err(GeoError::InvalidConfig(format!(
                "tangent scale must be positive, got {scale}"
            )));
        }
        Ok(Self { enc, scale })
    }

    /// Unit scale.
    pub fn unscaled(enc: Vec<T>) -> Self {
        Self {
            enc,
            scale: T::one(),
        }
    }

    /// Scale `1/sqrt(n)` for an `n`-dimensional embedding.
    pub fn with_default_scale(enc: Vec<T>) -> Self {
        let n = T::from_usize(enc.len().max(1)).unwrap();
        Self {
            enc,
            scale: T::one() / n.sqrt(),
        }
    }

    /// Scale given in log space, i.e. `scale = exp(log_scale)`.
    pub fn with_log_scale(enc: Vec<T>, log_scale: T) -> Result<Self> {
        Self::new(enc, log_scale.exp())
    }

    pub fn enc(&self) -> &[T] {
        &self.enc
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn dim(&self) -> usize {
        self.enc.len()
    }

    /// `scale * enc`.
    pub fn effective(&self) -> Vec<T> {
        self.enc.iter().map(|&v| v * self.scale).collect()
    }
}

/// Lorentzian inner product `x_space . y_space - x_time * y_time`.
pub fn lorentz_inner<T: Scalar>(x: &LorentzPoint<T>, y: &LorentzPoint<T>) -> Result<T> {
    if x.dim() != y.dim() {
        return Err(GeoError::DimensionMismatch {
            op: "lorentz_inner",
            left: x.dim(),
            right: y.dim(),
        });
    }
    Ok(inner_unchecked(x, y))
}

#[inline]
fn inner_unchecked<T: Scalar>(x: &LorentzPoint<T>, y: &LorentzPoint<T>) -> T {
    dot(&x.space, &y.space) - x.time * y.time
}

/// Exponential map at the origin:
/// `x_space = sinh(sqrt(c) r) / (sqrt(c) r) * a` with `a = scale * enc`, `r = |a|`.
pub fn exp_origin<T: Scalar>(u: &TangentAtOrigin<T>, c: Curvature<T>) -> LorentzPoint<T> {
    exp_origin_raw(&u.effective(), c)
}

/// [`exp_origin`] for an already-scaled tangent vector.
pub(crate) fn exp_origin_raw<T: Scalar>(a: &[T], c: Curvature<T>) -> LorentzPoint<T> {
    let f = sinhc(c.sqrt() * norm(a));
    LorentzPoint::from_space(a.iter().map(|&v| f * v).collect(), c)
}

/// Logarithmic map at the origin, the inverse of [`exp_origin`].
///
/// Returns the scaled tangent (scale one): `rho / sqrt((c <x,O>_L)^2 - 1) * x_space`
/// with `rho = arcosh(-c <x,O>_L)`. On the sheet the denominator equals
/// `sqrt(c) |x_space|` and `rho = asinh(sqrt(c) |x_space|)`; near the origin
/// those forms are used instead because `arcosh` loses all precision close to one.
pub fn log_origin<T: Scalar>(x: &LorentzPoint<T>, c: Curvature<T>) -> Result<TangentAtOrigin<T>> {
    x.check(c)?;
    let k = c.sqrt();
    // -c <x, O>_L = sqrt(c) * time
    let arg = k * x.time;
    let factor = if arg > T::of(2.0) {
        arg.acosh() / ((arg - T::one()) * (arg + T::one())).sqrt()
    } else {
        let z = k * norm(&x.space);
        if z < T::of(1e-4) {
            // asinh(z)/z series
            T::one() - z * z / T::of(6.0) + T::of(3.0) * z * z * z * z / T::of(40.0)
        } else {
            z.asinh() / z
        }
    };
    Ok(TangentAtOrigin::unscaled(
        x.space.iter().map(|&v| factor * v).collect(),
    ))
}

#[inline]
fn clipped_distance<T: Scalar>(inner: T, c: Curvature<T>, eps_clip: T) -> T {
    let arg = (-c.value() * inner).max(T::one() + eps_clip);
    arg.acosh() / c.sqrt()
}

fn check_eps_clip<T: Scalar>(eps_clip: T) -> Result<()> {
    if !(eps_clip >= T::zero() && eps_clip.is_finite()) {
        return Err(GeoError::InvalidConfig(format!(
            "lorentz clip epsilon must be finite and non-negative, got {eps_clip}"
        )));
    }
    Ok(())
}

/// Geodesic distance `arcosh(max(-c <x,y>_L, 1 + eps_clip)) / sqrt(c)`.
///
/// The clip puts a floor of `arcosh(1 + eps_clip) / sqrt(c)` under every
/// distance, including a point's distance to itself.
pub fn geodesic_distance<T: Scalar>(
    x: &LorentzPoint<T>,
    y: &LorentzPoint<T>,
    c: Curvature<T>,
    eps_clip: T,
) -> Result<T> {
    let inner = lorentz_inner(x, y)?;
    check_eps_clip(eps_clip)?;
    x.check(c)?;
    y.check(c)?;
    Ok(clipped_distance(inner, c, eps_clip))
}

/// `D[i][j] = geodesic_distance(xs[i], ys[j])`.
pub fn pairwise_distances<T: Scalar>(
    xs: &[LorentzPoint<T>],
    ys: &[LorentzPoint<T>],
    c: Curvature<T>,
    eps_clip: T,
) -> Result<Matrix<T>> {
    check_eps_clip(eps_clip)?;
    let dim = xs.first().or(ys.first()).map_or(0, LorentzPoint::dim);
    for p in xs.iter().chain(ys) {
        if p.dim() != dim {
            return Err(GeoError::DimensionMismatch {
                op: "lorentz::pairwise_distances",
                left: dim,
                right: p.dim(),
            });
        }
        p.check(c)?;
    }
    let stack = |ps: &[LorentzPoint<T>]| {
        let mut data = Vec::with_capacity(ps.len() * dim);
        for p in ps {
            data.extend_from_slice(&p.space);
        }
        Matrix::from_parts(ps.len(), dim, data)
    };
    let space_dots = matmul_nt(&stack(xs), &stack(ys))?;
    Ok(Matrix::from_fn(xs.len(), ys.len(), |i, j| {
        clipped_distance(space_dots.get(i, j) - xs[i].time * ys[j].time, c, eps_clip)
    }))
}

/// Unnormalized volume growth of a geodesic ball: `sinh(sqrt(c) r)^(n-1)`.
pub fn volume_growth<T: Scalar>(r: T, n: usize, c: Curvature<T>) -> T {
    if n <= 1 {
        return T::one();
    }
    (c.sqrt() * r).sinh().powi((n - 1) as i32)
}

/// Gradient of `d(exp_O(u), exp_O(w))` with respect to `u.enc`.
///
/// Fails with [`GeoError::CoincidentPoints`] when the clip is active, where
/// the distance is flat and the gradient undefined.
pub fn distance_gradient<T: Scalar>(
    u: &TangentAtOrigin<T>,
    w: &TangentAtOrigin<T>,
    c: Curvature<T>,
    eps_clip: T,
) -> Result<Vec<T>> {
    if u.dim() != w.dim() {
        return Err(GeoError::DimensionMismatch {
            op: "lorentz::distance_gradient",
            left: u.dim(),
            right: w.dim(),
        });
    }
    check_eps_clip(eps_clip)?;
    let a = u.effective();
    let y = exp_origin(w, c);
    let grad_a = distance_gradient_raw(&a, &y, c, eps_clip).ok_or(GeoError::CoincidentPoints)?;
    Ok(grad_a.into_iter().map(|g| g * u.scale).collect())
}

/// Gradient with respect to the scaled tangent `a` of `d(exp_O(a), y)`;
/// `None` when the clip is active.
pub(crate) fn distance_gradient_raw<T: Scalar>(
    a: &[T],
    y: &LorentzPoint<T>,
    c: Curvature<T>,
    eps_clip: T,
) -> Option<Vec<T>> {
    let k = c.sqrt();
    let xk = k * norm(a);
    let f = sinhc(xk);
    let slope = c.value() * sinhc_slope(xk);
    let x = exp_origin_raw(a, c);
    let z = -c.value() * inner_unchecked(&x, y);
    if z <= T::one() + eps_clip {
        return None;
    }
    let a_dot_s = dot(a, &y.space);
    let denom = k * ((z - T::one()) * (z + T::one())).sqrt();
    Some(
        a.iter()
            .zip(&y.space)
            .map(|(&ai, &si)| {
                // dz/da = c (t_y k f a - f s_y - slope (a . s_y) a)
                let dz = c.value() * (y.time * k * f * ai - f * si - slope * a_dot_s * ai);
                dz / denom
            })
            .collect(),
    )
}
