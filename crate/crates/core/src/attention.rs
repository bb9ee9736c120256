//! Geodesic attention kernels.
//!
//! Two kernels replace dot-product similarity with manifold distances:
//!
//! * [`oblique_attention`]: rows of `q` and `k` are projected onto the unit
//!   sphere, `D[i][j] = arccos(clip(q_i . k_j))`, weights are
//!   `softmax(-D / tau_obl)`. With `tau_obl = 1` this is the unscaled
//!   `softmax(-D)` form.
//! * [`lorentz_cross_attention`]: rows of `q` and `k` are lifted to the
//!   hyperboloid by the exponential map at the origin, `D` holds clipped
//!   hyperbolic distances, and weights are `softmax(exp(-D / tau_lor))`.
//!
//! The Lorentz weights apply the exponential *inside* the softmax, i.e. the
//! logits are `exp(-D/tau)`, which lie in `(0, 1]`. This is not the same as
//! `softmax(-D/tau)`: the double exponential compresses the logit range, so
//! weights stay much closer to uniform. Both are monotone decreasing in
//! `D[i][j]`.
//!
//! Values are never projected or lifted; the output is a convex combination
//! of the Euclidean rows of `v`. Multi-head attention slices the feature axis
//! of `q`, `k` and `v` into equal blocks and computes a separate distance
//! matrix per head.

use crate::error::{GeoError, Result};
use crate::linalg::{matmul, softmax_rows, softmax_rows_masked, Matrix};
use crate::lorentz::{self, exp_origin_raw, Curvature};
use crate::oblique::{self, project_rows};
use crate::scalar::Scalar;

/// Hyper-parameters shared by both kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionConfig<T> {
    pub heads: usize,
    /// Temperature of the oblique kernel.
    pub tau_obl: T,
    /// Temperature of the Lorentz kernel.
    pub tau_lor: T,
    pub curvature: Curvature<T>,
    /// Cosine clip for oblique distances.
    pub eps_oblique: T,
    /// `arcosh` argument clip for Lorentz distances.
    pub eps_lorentz: T,
    /// Scale applied to `q`/`k` rows before the exponential map; `None`
    /// means `1/sqrt(d)` for `d` input features.
    pub alpha: Option<T>,
}

impl<T: Scalar> Default for AttentionConfig<T> {
    fn default() -> Self {
        Self {
            heads: 4,
            tau_obl: T::one(),
            tau_lor: T::of(0.1),
            curvature: Curvature::new(T::one()).expect("unit curvature"),
            eps_oblique: T::of(oblique::DEFAULT_EPS_CLIP),
            eps_lorentz: T::of(lorentz::DEFAULT_EPS_CLIP),
            alpha: None,
        }
    }
}

impl<T: Scalar> AttentionConfig<T> {
    /// Sets the Lorentz scale from its logarithm.
    pub fn with_log_alpha(mut self, log_alpha: T) -> Self {
        self.alpha = Some(log_alpha.exp());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 {
            return Err(GeoError::InvalidConfig("heads must be at least 1".into()));
        }
        for (name, t) in [("tau_obl", self.tau_obl), ("tau_lor", self.tau_lor)] {
            if !(t.is_finite() && t > T::zero()) {
                return Err(GeoError::InvalidConfig(format!(
                    "{name} must be positive, got {t}"
                )));
            }
        }
        if let Some(a) = self.alpha {
            if !(a.is_finite() && a > T::zero()) {
                return Err(GeoError::InvalidConfig(format!(
                    "alpha must be positive, got {a}"
                )));
            }
        }
        Ok(())
    }

    fn head_width(&self, dim: usize, what: &str) -> Result<usize> {
        if !dim.is_multiple_of(self.heads) {
            return Err(GeoError::InvalidConfig(format!(
                "{what} width {dim} is not divisible by {} heads",
                self.heads
            )));
        }
        Ok(dim / self.heads)
    }

    fn alpha_for(&self, dim: usize) -> T {
        self.alpha
            .unwrap_or_else(|| T::one() / T::from_usize(dim.max(1)).unwrap().sqrt())
    }
}

/// Fourier features of 3D positions.
///
/// For each coordinate `x` (coordinate-major) and frequency `2^j`,
/// `j = 0..num_freqs`, emits `sin(2^j x), cos(2^j x)`. The natural width is
/// `6 * num_freqs`; a larger `out_dim` is zero padded and a smaller one
/// truncated.
pub fn fourier_pe<T: Scalar>(pos: &Matrix<T>, num_freqs: usize, out_dim: usize) -> Result<Matrix<T>> {
    if pos.cols() != 3 {
        return Err(GeoError::DimensionMismatch {
            op: "fourier_pe",
            left: pos.cols(),
            right: 3,
        });
    }
    let mut out = Matrix::zeros(pos.rows(), out_dim);
    for i in 0..pos.rows() {
        let row = out.row_mut(i);
        let mut col = 0;
        'coords: for a in 0..3 {
            let x = pos.get(i, a);
            let mut f = T::one();
            for _ in 0..num_freqs {
                let (s, c) = (f * x).sin_cos();
                for v in [s, c] {
                    if col == out_dim {
                        break 'coords;
                    }
                    row[col] = v;
                    col += 1;
                }
                f = f + f;
            }
        }
    }
    Ok(out)
}

/// The feature transform applied to `(X, Pos)` before projection.
pub trait Embed<T: Scalar> {
    /// Output width for an input with `in_dim` features.
    fn out_dim(&self, in_dim: usize) -> usize;

    fn embed(&self, x: &Matrix<T>, pos: &Matrix<T>) -> Result<Matrix<T>>;
}

/// Passes features through and ignores positions.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityEmbed;

impl<T: Scalar> Embed<T> for IdentityEmbed {
    fn out_dim(&self, in_dim: usize) -> usize {
        in_dim
    }

    fn embed(&self, x: &Matrix<T>, _pos: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(x.clone())
    }
}

/// `[X | fourier_pe(Pos)]`.
#[derive(Debug, Clone, Copy)]
pub struct ConcatPe {
    pub num_freqs: usize,
}

impl<T: Scalar> Embed<T> for ConcatPe {
    fn out_dim(&self, in_dim: usize) -> usize {
        in_dim + 6 * self.num_freqs
    }

    fn embed(&self, x: &Matrix<T>, pos: &Matrix<T>) -> Result<Matrix<T>> {
        if x.rows() != pos.rows() {
            return Err(GeoError::ShapeMismatch {
                op: "ConcatPe::embed",
                left: x.shape(),
                right: pos.shape(),
            });
        }
        let pe = fourier_pe(pos, self.num_freqs, 6 * self.num_freqs)?;
        Matrix::hstack(&[x.clone(), pe])
    }
}

/// Wraps a closure with a fixed, declared output width.
pub struct FnEmbed<F> {
    pub out_dim: usize,
    pub f: F,
}

impl<T: Scalar, F> Embed<T> for FnEmbed<F>
where
    F: Fn(&Matrix<T>, &Matrix<T>) -> Result<Matrix<T>>,
{
    fn out_dim(&self, _in_dim: usize) -> usize {
        self.out_dim
    }

    fn embed(&self, x: &Matrix<T>, pos: &Matrix<T>) -> Result<Matrix<T>> {
        let e = (self.f)(x, pos)?;
        if e.cols() != self.out_dim || e.rows() != x.rows() {
            return Err(GeoError::ShapeMismatch {
                op: "FnEmbed::embed",
                left: e.shape(),
                right: (x.rows(), self.out_dim),
            });
        }
        Ok(e)
    }
}

struct HeadLayout {
    qk: usize,
    v: usize,
}

fn check_qkv<T: Scalar>(
    op: &'static str,
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    cfg: &AttentionConfig<T>,
) -> Result<HeadLayout> {
    cfg.validate()?;
    if q.cols() != k.cols() {
        return Err(GeoError::DimensionMismatch {
            op,
            left: q.cols(),
            right: k.cols(),
        });
    }
    if k.rows() != v.rows() {
        return Err(GeoError::ShapeMismatch {
            op,
            left: k.shape(),
            right: v.shape(),
        });
    }
    Ok(HeadLayout {
        qk: cfg.head_width(q.cols(), "query/key")?,
        v: cfg.head_width(v.cols(), "value")?,
    })
}

fn check_mask<T: Scalar>(mask: Option<&Matrix<T>>, n: usize, m: usize) -> Result<()> {
    match mask {
        Some(mk) if mk.shape() != (n, m) => Err(GeoError::ShapeMismatch {
            op: "attention mask",
            left: mk.shape(),
            right: (n, m),
        }),
        _ => Ok(()),
    }
}

fn weights_from_logits<T: Scalar>(logits: Matrix<T>, mask: Option<&Matrix<T>>) -> Result<Matrix<T>> {
    match mask {
        Some(mk) => softmax_rows_masked(&logits, mk),
        None => Ok(softmax_rows(&logits)),
    }
}

/// Per-head oblique attention weights `softmax(-D_h / tau_obl)`.
pub fn oblique_attention_weights<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    cfg: &AttentionConfig<T>,
) -> Result<Vec<Matrix<T>>> {
    let layout = check_qkv("oblique_attention", q, k, k, cfg)?;
    (0..cfg.heads)
        .map(|h| oblique_head_weights(q, k, h, layout.qk, cfg, None))
        .collect()
}

fn oblique_head_weights<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    head: usize,
    width: usize,
    cfg: &AttentionConfig<T>,
    mask: Option<&Matrix<T>>,
) -> Result<Matrix<T>> {
    let (lo, hi) = (head * width, (head + 1) * width);
    let eps_zero = T::of(oblique::DEFAULT_EPS_ZERO);
    let qh = project_rows(&q.column_block(lo, hi), eps_zero).point;
    let kh = project_rows(&k.column_block(lo, hi), eps_zero).point;
    let d = oblique::pairwise_distances(&qh, &kh, cfg.eps_oblique)?;
    let tau = cfg.tau_obl;
    weights_from_logits(d.map(|x| -x / tau), mask)
}

/// Oblique geodesic attention of `q` (n x e) against `k` (m x e) with values `v` (m x dv).
pub fn oblique_attention<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    cfg: &AttentionConfig<T>,
) -> Result<Matrix<T>> {
    oblique_attention_masked(q, k, v, None, cfg)
}

/// [`oblique_attention`] with an optional additive `n x m` mask.
pub fn oblique_attention_masked<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    mask: Option<&Matrix<T>>,
    cfg: &AttentionConfig<T>,
) -> Result<Matrix<T>> {
    let layout = check_qkv("oblique_attention", q, k, v, cfg)?;
    check_mask(mask, q.rows(), k.rows())?;
    let mut outs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let w = oblique_head_weights(q, k, h, layout.qk, cfg, mask)?;
        let vh = v.column_block(h * layout.v, (h + 1) * layout.v);
        outs.push(matmul(&w, &vh)?);
    }
    Matrix::hstack(&outs)
}

/// Self attention on the oblique manifold: `q = k = emb(x, pos)`, `v = x`.
pub fn oblique_self_attention<T: Scalar, E: Embed<T> + ?Sized>(
    x: &Matrix<T>,
    pos: &Matrix<T>,
    emb: &E,
    cfg: &AttentionConfig<T>,
) -> Result<Matrix<T>> {
    if pos.rows() != x.rows() || pos.cols() != 3 {
        return Err(GeoError::ShapeMismatch {
            op: "oblique_self_attention",
            left: pos.shape(),
            right: (x.rows(), 3),
        });
    }
    let e = emb.embed(x, pos)?;
    if e.cols() != emb.out_dim(x.cols()) {
        return Err(GeoError::DimensionMismatch {
            op: "oblique_self_attention embedding",
            left: e.cols(),
            right: emb.out_dim(x.cols()),
        });
    }
    oblique_attention(&e, &e, x, cfg)
}

/// Lifts every row of `alpha * m`; fails once `sinh` overflows, which
/// happens near `sqrt(c) |alpha q| = 710` in double precision.
fn lift_rows<T: Scalar>(m: &Matrix<T>, alpha: T, c: Curvature<T>) -> Result<Vec<lorentz::LorentzPoint<T>>> {
    (0..m.rows())
        .map(|i| {
            let a: Vec<T> = m.row(i).iter().map(|&v| alpha * v).collect();
            let x = exp_origin_raw(&a, c);
            if x.time().is_finite() {
                Ok(x)
            } else {
                Err(GeoError::NonFinite(format!(
                    "row {i} overflows when lifted to the hyperboloid; reduce alpha or the input scale"
                )))
            }
        })
        .collect()
}

fn lorentz_head_weights<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    head: usize,
    width: usize,
    cfg: &AttentionConfig<T>,
    mask: Option<&Matrix<T>>,
) -> Result<Matrix<T>> {
    let (lo, hi) = (head * width, (head + 1) * width);
    let alpha = cfg.alpha_for(q.cols());
    let c = cfg.curvature;
    let qh = lift_rows(&q.column_block(lo, hi), alpha, c)?;
    let kh = lift_rows(&k.column_block(lo, hi), alpha, c)?;
    let d = lorentz::pairwise_distances(&qh, &kh, c, cfg.eps_lorentz)?;
    let tau = cfg.tau_lor;
    weights_from_logits(d.map(|x| (-x / tau).exp()), mask)
}

/// Per-head Lorentz attention weights `softmax(exp(-D_h / tau_lor))`.
pub fn lorentz_attention_weights<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    cfg: &AttentionConfig<T>,
) -> Result<Vec<Matrix<T>>> {
    let layout = check_qkv("lorentz_cross_attention", q, k, k, cfg)?;
    (0..cfg.heads)
        .map(|h| lorentz_head_weights(q, k, h, layout.qk, cfg, None))
        .collect()
}

/// Lorentz geodesic cross attention of `q` (n x d) against `k` (m x d) with values `v` (m x dv).
pub fn lorentz_cross_attention<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    cfg: &AttentionConfig<T>,
) -> Result<Matrix<T>> {
    lorentz_cross_attention_masked(q, k, v, None, cfg)
}

/// [`lorentz_cross_attention`] with an optional additive `n x m` mask,
/// applied to the `exp(-D/tau)` logits.
pub fn lorentz_cross_attention_masked<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    mask: Option<&Matrix<T>>,
    cfg: &AttentionConfig<T>,
) -> Result<Matrix<T>> {
    let layout = check_qkv("lorentz_cross_attention", q, k, v, cfg)?;
    check_mask(mask, q.rows(), k.rows())?;
    let mut outs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let w = lorentz_head_weights(q, k, h, layout.qk, cfg, mask)?;
        let vh = v.column_block(h * layout.v, (h + 1) * layout.v);
        outs.push(matmul(&w, &vh)?);
    }
    Matrix::hstack(&outs)
}

/// Runs [`lorentz_cross_attention`] independently on each batch slice.
pub fn lorentz_cross_attention_batched<T: Scalar>(
    q: &[Matrix<T>],
    k: &[Matrix<T>],
    v: &[Matrix<T>],
    cfg: &AttentionConfig<T>,
) -> Result<Vec<Matrix<T>>> {
    if q.len() != k.len() || k.len() != v.len() {
        return Err(GeoError::DimensionMismatch {
            op: "lorentz_cross_attention_batched",
            left: q.len(),
            right: k.len().min(v.len()),
        });
    }
    q.iter()
        .zip(k)
        .zip(v)
        .map(|((q, k), v)| lorentz_cross_attention(q, k, v, cfg))
        .collect()
}

/// Object-aware context and context-aware object streams.
///
/// `oac` attends from instance queries to context keys/values; `cao`
/// attends from context queries to instance keys/values.
pub fn bidirectional_attention<T: Scalar>(
    instance: &Matrix<T>,
    context: &Matrix<T>,
    cfg: &AttentionConfig<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if instance.cols() != context.cols() {
        return Err(GeoError::DimensionMismatch {
            op: "bidirectional_attention",
            left: instance.cols(),
            right: context.cols(),
        });
    }
    let oac = lorentz_cross_attention(instance, context, context, cfg)?;
    let cao = lorentz_cross_attention(context, instance, instance, cfg)?;
    Ok((oac, cao))
}

/// Output of [`bidirectional_attention_sliced`].
#[derive(Debug, Clone)]
pub struct Bidirectional<T> {
    /// One object-aware-context output per context slice.
    pub oac: Vec<Matrix<T>>,
    /// Context-aware-object outputs mean-pooled over the context slices.
    pub cao: Matrix<T>,
}

/// Bidirectional attention against a multi-slice context; the CAO stream
/// is mean-pooled across slices.
pub fn bidirectional_attention_sliced<T: Scalar>(
    instance: &Matrix<T>,
    contexts: &[Matrix<T>],
    cfg: &AttentionConfig<T>,
) -> Result<Bidirectional<T>> {
    let Some(first) = contexts.first() else {
        return Err(GeoError::InvalidConfig("at least one context slice is required".into()));
    };
    let mut oac = Vec::with_capacity(contexts.len());
    let mut pooled = Matrix::zeros(first.rows(), instance.cols());
    for ctx in contexts {
        if ctx.shape() != first.shape() {
            return Err(GeoError::ShapeMismatch {
                op: "bidirectional_attention_sliced",
                left: first.shape(),
                right: ctx.shape(),
            });
        }
        let (o, c) = bidirectional_attention(instance, ctx, cfg)?;
        oac.push(o);
        pooled = pooled.add(&c)?;
    }
    let n = T::from_usize(contexts.len()).unwrap();
    Ok(Bidirectional {
        oac,
        cao: pooled.scale(T::one() / n),
    })
}

/// Scaled dot-product attention `softmax(q_h k_h^T / sqrt(d_h)) v_h`, the
/// Euclidean baseline.
pub fn euclidean_attention<T: Scalar>(
    q: &Matrix<T>,
    k: &Matrix<T>,
    v: &Matrix<T>,
    cfg: &AttentionConfig<T>,
) -> Result<Matrix<T>> {
    let layout = check_qkv("euclidean_attention", q, k, v, cfg)?;
    let inv = T::one() / T::from_usize(layout.qk.max(1)).unwrap().sqrt();
    let mut outs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = q.column_block(h * layout.qk, (h + 1) * layout.qk);
        let kh = k.column_block(h * layout.qk, (h + 1) * layout.qk);
        let logits = crate::linalg::matmul_nt(&qh, &kh)?.scale(inv);
        let vh = v.column_block(h * layout.v, (h + 1) * layout.v);
        outs.push(matmul(&softmax_rows(&logits), &vh)?);
    }
    Matrix::hstack(&outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
        Matrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn cfg(heads: usize) -> AttentionConfig<f64> {
        AttentionConfig {
            heads,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_values() {
        let c = AttentionConfig::<f64>::default();
        assert_eq!(c.heads, 4);
        assert_eq!(c.tau_obl, 1.0);
        assert_eq!(c.tau_lor, 0.1);
        assert_eq!(c.curvature.value(), 1.0);
        assert_eq!(c.eps_oblique, 1e-4);
        assert_eq!(c.eps_lorentz, 1e-15);
        assert_eq!(c.alpha, None);
        let c = c.with_log_alpha(0.0);
        assert_eq!(c.alpha, Some(1.0));
    }

    #[test]
    fn config_errors() {
        let x = Matrix::<f64>::zeros(2, 6);
        assert!(oblique_attention(&x, &x, &x, &cfg(4)).is_err());
        assert!(oblique_attention(&x, &x, &x, &cfg(0)).is_err());
        let bad_tau = AttentionConfig {
            tau_lor: 0.0,
            ..cfg(1)
        };
        assert!(lorentz_cross_attention(&x, &x, &x, &bad_tau).is_err());
        let k = Matrix::<f64>::zeros(3, 5);
        assert!(lorentz_cross_attention(&x, &k, &k, &cfg(1)).is_err());
        let v = Matrix::<f64>::zeros(2, 6);
        assert!(lorentz_cross_attention(&x, &Matrix::zeros(3, 6), &v, &cfg(1)).is_err());
    }

    #[test]
    fn fourier_pe_examples() {
        let pos = Matrix::from_rows(&[vec![0.0, 0.0, 0.0], vec![std::f64::consts::FRAC_PI_2, 0.0, 0.0]]).unwrap();
        let pe = fourier_pe(&pos, 3, 18).unwrap();
        for (j, &v) in pe.row(0).iter().enumerate() {
            assert_eq!(v, if j % 2 == 0 { 0.0 } else { 1.0 });
        }
        assert!((pe.get(1, 0) - 1.0).abs() < 1e-15);
        assert!(pe.get(1, 1).abs() < 1e-15);
        assert_eq!(pe, fourier_pe(&pos, 3, 18).unwrap());

        let padded = fourier_pe(&pos, 1, 8).unwrap();
        assert_eq!(&padded.row(0)[6..], &[0.0, 0.0]);
        let cut = fourier_pe(&pos, 2, 5).unwrap();
        let full = fourier_pe(&pos, 2, 12).unwrap();
        assert_eq!(cut.row(1), &full.row(1)[..5]);
        assert!(fourier_pe(&Matrix::<f64>::zeros(1, 2), 1, 6).is_err());
    }

    #[test]
    fn single_query_returns_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 1, 8);
        let pos = random(&mut rng, 1, 3);
        let out = oblique_self_attention(&x, &pos, &IdentityEmbed, &cfg(4)).unwrap();
        assert!(out.max_abs_diff(&x).unwrap() < 1e-15);
    }

    #[test]
    fn constant_distance_gives_column_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = Matrix::from_fn(5, 4, |_, j| [0.3, -0.2, 0.5, 0.1][j]);
        let k = Matrix::from_fn(7, 4, |_, j| [-0.4, 0.9, 0.2, 0.3][j]);
        let v = random(&mut rng, 7, 4);
        let means = v.column_means();
        for out in [
            oblique_attention(&q, &k, &v, &cfg(2)).unwrap(),
            lorentz_cross_attention(&q, &k, &v, &cfg(2)).unwrap(),
        ] {
            for i in 0..5 {
                for j in 0..4 {
                    assert!((out.get(i, j) - means[j]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn lorentz_two_point_example() {
        let q = Matrix::<f64>::from_rows(&[vec![0.5], vec![-0.5]]).unwrap();
        let v = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let c = AttentionConfig {
            heads: 1,
            tau_lor: 1.0,
            alpha: Some(1.0),
            ..Default::default()
        };
        let w = &lorentz_attention_weights(&q, &q, &c).unwrap()[0];
        assert!((w.get(0, 0) - 0.6530).abs() < 1e-4);
        assert!((w.get(0, 1) - 0.3470).abs() < 1e-4);
        let out = lorentz_cross_attention(&q, &q, &v, &c).unwrap();
        assert!((out.get(0, 0) - 0.6530).abs() < 1e-4);
        assert!((out.get(1, 0) - 0.3470).abs() < 1e-4);
    }

    #[test]
    fn bidirectional_wiring() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, 6, 8);
        let (oac, cao) = bidirectional_attention(&x, &x, &cfg(4)).unwrap();
        assert_eq!(oac, cao);

        let ctx = random(&mut rng, 1, 8);
        let (oac, _) = bidirectional_attention(&x, &ctx, &cfg(4)).unwrap();
        for i in 0..6 {
            for (a, b) in oac.row(i).iter().zip(ctx.row(0)) {
                assert!((a - b).abs() < 1e-15);
            }
        }

        let inst = random(&mut rng, 8, 16);
        let ctx = random(&mut rng, 12, 16);
        let (oac, cao) = bidirectional_attention(&inst, &ctx, &cfg(4)).unwrap();
        assert_eq!(oac, lorentz_cross_attention(&inst, &ctx, &ctx, &cfg(4)).unwrap());
        assert_eq!(cao, lorentz_cross_attention(&ctx, &inst, &inst, &cfg(4)).unwrap());
        assert!(bidirectional_attention(&inst, &random(&mut rng, 3, 8), &cfg(4)).is_err());
    }

    #[test]
    fn sliced_context_pools_cao() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let inst = random(&mut rng, 5, 8);
        let slices = vec![random(&mut rng, 5, 8), random(&mut rng, 5, 8)];
        let out = bidirectional_attention_sliced(&inst, &slices, &cfg(2)).unwrap();
        assert_eq!(out.oac.len(), 2);
        let (_, c0) = bidirectional_attention(&inst, &slices[0], &cfg(2)).unwrap();
        let (_, c1) = bidirectional_attention(&inst, &slices[1], &cfg(2)).unwrap();
        let mean = c0.add(&c1).unwrap().scale(0.5);
        assert!(out.cao.max_abs_diff(&mean).unwrap() < 1e-15);
        assert!(bidirectional_attention_sliced(&inst, &[], &cfg(2)).is_err());
    }

    #[test]
    fn masks_remove_keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = random(&mut rng, 3, 4);
        let k = random(&mut rng, 4, 4);
        let v = random(&mut rng, 4, 4);
        let mut mask = Matrix::zeros(3, 4);
        for i in 0..3 {
            mask.set(i, 3, f64::NEG_INFINITY);
        }
        let (k3, v3) = (k.permute_rows(&[0, 1, 2]), v.permute_rows(&[0, 1, 2]));
        let full = lorentz_cross_attention(&q, &k3, &v3, &cfg(1)).unwrap();
        let masked = lorentz_cross_attention_masked(&q, &k, &v, Some(&mask), &cfg(1)).unwrap();
        assert!(full.max_abs_diff(&masked).unwrap() < 1e-14);
        let full = oblique_attention(&q, &k3, &v3, &cfg(1)).unwrap();
        let masked = oblique_attention_masked(&q, &k, &v, Some(&mask), &cfg(1)).unwrap();
        assert!(full.max_abs_diff(&masked).unwrap() < 1e-14);
        assert!(oblique_attention_masked(&q, &k, &v, Some(&Matrix::zeros(2, 2)), &cfg(1)).is_err());
    }

    #[test]
    fn concat_pe_and_fn_embed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random(&mut rng, 4, 6);
        let pos = random(&mut rng, 4, 3);
        let e = ConcatPe { num_freqs: 1 }.embed(&x, &pos).unwrap();
        assert_eq!(e.shape(), (4, 12));
        let out = oblique_self_attention(&x, &pos, &ConcatPe { num_freqs: 1 }, &cfg(2)).unwrap();
        assert_eq!(out.shape(), (4, 6));

        let doubler = FnEmbed {
            out_dim: 6,
            f: |x: &Matrix<f64>, _: &Matrix<f64>| Ok(x.scale(2.0)),
        };
        // projection removes the scale
        let a = oblique_self_attention(&x, &pos, &doubler, &cfg(2)).unwrap();
        let b = oblique_self_attention(&x, &pos, &IdentityEmbed, &cfg(2)).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-15);
        let wrong = FnEmbed {
            out_dim: 5,
            f: |x: &Matrix<f64>, _: &Matrix<f64>| Ok(x.clone()),
        };
        assert!(oblique_self_attention(&x, &pos, &wrong, &cfg(2)).is_err());
    }

    #[test]
    fn euclidean_baseline_rows_are_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let q = random(&mut rng, 5, 8);
        let v = Matrix::from_fn(5, 8, |_, _| 1.0);
        let out = euclidean_attention(&q, &q, &v, &cfg(4)).unwrap();
        assert!(out.as_slice().iter().all(|&x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn overflowing_lift_is_an_error() {
        let q = Matrix::<f64>::from_rows(&[vec![1e4, 0.0]]).unwrap();
        let cfg = AttentionConfig {
            heads: 1,
            alpha: Some(1.0),
            ..AttentionConfig::default()
        };
        let err = lorentz_cross_attention(&q, &q, &q, &cfg).unwrap_err();
        assert!(matches!(err, GeoError::NonFinite(_)));
    }
}
