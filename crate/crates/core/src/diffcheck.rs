//! Independent oracles: central finite differences and scalar-loop
//! transliterations of the attention kernels.
//!
//! Nothing here calls into the optimized kernels in `linalg`, `oblique`,
//! `lorentz` or `attention`; the references only borrow the `Matrix`
//! container for their inputs and outputs.

use crate::attention::AttentionConfig;
use crate::error::{GeoError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Largest row count accepted by [`naive_attention_reference`].
pub const REFERENCE_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FDConfig<T> {
    pub step: T,
    /// Relative tolerance used by [`check_gradient`].
    pub tolerance: T,
}

impl<T: Scalar> Default for FDConfig<T> {
    fn default() -> Self {
        Self {
            step: T::of(1e-6),
            tolerance: T::of(1e-5),
        }
    }
}

impl<T: Scalar> FDConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > T::zero() && self.tolerance > T::zero()) {
            return Err(GeoError::InvalidConfig(format!(
                "finite-difference step and tolerance must be positive (step={}, tolerance={})",
                self.step, self.tolerance
            )));
        }
        Ok(())
    }
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_gradient<T: Scalar>(
    f: impl Fn(&[T]) -> T,
    x: &[T],
    cfg: &FDConfig<T>,
) -> Result<Vec<T>> {
    cfg.validate()?;
    let h = cfg.step;
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        if !(up.is_finite() && down.is_finite()) {
            return Err(GeoError::NonFiniteEvaluation { coordinate: i });
        }
        grad.push((up - down) / (h + h));
    }
    Ok(grad)
}

/// `|a - b|_2 / max(|b|_2, floor)`.
pub fn relative_error<T: Scalar>(a: &[T], b: &[T], floor: T) -> T {
    let diff = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt();
    let scale = b.iter().map(|&y| y * y).sum::<T>().sqrt().max(floor);
    diff / scale
}

/// Outcome of comparing an analytic gradient against finite differences.
#[derive(Debug, Clone)]
pub struct GradientCheck<T> {
    pub analytic: Vec<T>,
    pub numeric: Vec<T>,
    pub relative_error: T,
    pub passed: bool,
}

pub fn check_gradient<T: Scalar>(
    f: impl Fn(&[T]) -> T,
    analytic: Vec<T>,
    x: &[T],
    cfg: &FDConfig<T>,
) -> Result<GradientCheck<T>> {
    if analytic.len() != x.len() {
        return Err(GeoError::DimensionMismatch {
            op: "check_gradient",
            left: analytic.len(),
            right: x.len(),
        });
    }
    let numeric = finite_diff_gradient(f, x, cfg)?;
    let relative_error = relative_error(&analytic, &numeric, T::of(1e-12));
    Ok(GradientCheck {
        passed: relative_error <= cfg.tolerance,
        analytic,
        numeric,
        relative_error,
    })
}

/// Which geometry the reference kernel transliterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Oblique,
    Lorentz,
}

/// Scalar-loop reference for the oblique and Lorentz attention kernels.
///
/// Every distance, weight and output entry is computed from scratch in
/// nested loops, with no intermediate matrices shared between heads.
pub fn naive_attention_reference<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    space: Space,
    cfg: &AttentionConfig<T>,
) -> Result<Matrix<T>> {
    let (n, m) = (q.rows(), k.rows());
    if n > REFERENCE_CAP || m > REFERENCE_CAP {
        return Err(GeoError::SizeCap {
            n,
            m,
            cap: REFERENCE_CAP,
        });
    }
    cfg.validate()?;
    let heads = cfg.heads;
    let d = q.cols();
    if k.cols() != d || v.rows() != m || !d.is_multiple_of(heads) || !v.cols().is_multiple_of(heads) {
        return Err(GeoError::InvalidConfig(
            "reference attention: inconsistent shapes or head split".into(),
        ));
    }
    let hw = d / heads;
    let vw = v.cols() / heads;
    let mut out = Matrix::zeros(n, v.cols());

    for h in 0..heads {
        let lo = h * hw;
        for i in 0..n {
            let mut logits = vec![T::zero(); m];
            for (j, logit) in logits.iter_mut().enumerate() {
                let dist = match space {
                    Space::Oblique => oblique_pair(q, k, i, j, lo, hw, cfg.eps_oblique),
                    Space::Lorentz => {
                        let alpha = cfg
                            .alpha
                            .unwrap_or_else(|| T::one() / T::from_usize(d).unwrap().sqrt());
                        lorentz_pair(q, k, i, j, lo, hw, alpha, cfg)
                    }
                };
                *logit = match space {
                    Space::Oblique => -dist / cfg.tau_obl,
                    Space::Lorentz => (-dist / cfg.tau_lor).exp(),
                };
            }
            let mut max = logits[0];
            for &l in &logits {
                if l > max {
                    max = l;
                }
            }
            let mut total = T::zero();
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                total += *l;
            }
            for c in 0..vw {
                let col = h * vw + c;
                let mut acc = T::zero();
                for (j, &w) in logits.iter().enumerate() {
                    acc += w / total * v.get(j, col);
                }
                out.set(i, col, acc);
            }
        }
    }
    Ok(out)
}

fn unit_slice<T: Scalar>(m: &Matrix<T>, row: usize, lo: usize, width: usize) -> Vec<T> {
    let mut sq = T::zero();
    for c in lo..lo + width {
        sq += m.get(row, c) * m.get(row, c);
    }
    let nrm = sq.sqrt();
    (lo..lo + width)
        .map(|c| {
            if nrm < T::of(1e-12) {
                if c == lo {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                m.get(row, c) / nrm
            }
        })
        .collect()
}

fn oblique_pair<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    i: usize,
    j: usize,
    lo: usize,
    width: usize,
    eps: T,
) -> T {
    let a = unit_slice(q, i, lo, width);
    let b = unit_slice(k, j, lo, width);
    let mut cos = T::zero();
    for t in 0..width {
        cos += a[t] * b[t];
    }
    let hi = T::one() - eps;
    if cos > hi {
        cos = hi;
    }
    if cos < -hi {
        cos = -hi;
    }
    cos.acos()
}

fn lift<T: Scalar>(m: &Matrix<T>, row: usize, lo: usize, width: usize, alpha: T, c: T) -> (Vec<T>, T) {
    let a: Vec<T> = (lo..lo + width).map(|col| alpha * m.get(row, col)).collect();
    let mut sq = T::zero();
    for &x in &a {
        sq += x * x;
    }
    let z = c.sqrt() * sq.sqrt();
    let factor = if z < T::of(1e-4) {
        T::one() + z * z / T::of(6.0) + z * z * z * z / T::of(120.0)
    } else {
        z.sinh() / z
    };
    let space: Vec<T> = a.iter().map(|&x| factor * x).collect();
    let mut s2 = T::zero();
    for &x in &space {
        s2 += x * x;
    }
    let time = (T::one() / c + s2).sqrt();
    (space, time)
}

#[allow(clippy::too_many_arguments)]
fn lorentz_pair<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    i: usize,
    j: usize,
    lo: usize,
    width: usize,
    alpha: T,
    cfg: &AttentionConfig<T>,
) -> T {
    let c = cfg.curvature.value();
    let (xs, xt) = lift(q, i, lo, width, alpha, c);
    let (ys, yt) = lift(k, j, lo, width, alpha, c);
    let mut inner = T::zero();
    for t in 0..width {
        inner += xs[t] * ys[t];
    }
    inner -= xt * yt;
    let mut arg = -c * inner;
    let floor = T::one() + cfg.eps_lorentz;
    if arg < floor {
        arg = floor;
    }
    arg.acosh() / c.sqrt()
}
