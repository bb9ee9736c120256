//! Self-check suite: every manifold, kernel and experiment invariant as a
//! named, randomized property with a measured worst-case error.
//!
//! The clip epsilons can be overridden to inject faults; the clip-floor
//! properties compare against the floors implied by the default epsilons, so
//! a changed epsilon shows up as a failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::attention::{
    lorentz_attention_weights, lorentz_cross_attention, oblique_attention, oblique_attention_weights,
    AttentionConfig,
};
use crate::diffcheck::{check_gradient, naive_attention_reference, FDConfig, Space};
use crate::error::Result;
use crate::experiments::{descent_demo, embed_tree, DescentParams, EmbeddingParams, TreeSpec};
use crate::linalg::{dot, matmul, norm, softmax_rows, Matrix};
use crate::lorentz::{self, exp_origin, log_origin, Curvature, LorentzPoint, TangentAtOrigin};
use crate::oblique::{self, project, ObliqueMatrix};

/// Module tags, in report order.
pub const MODULES: [&str; 6] = ["linalg", "oblique", "lorentz", "attention", "diffcheck", "experiments"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub eps_oblique: f64,
    pub eps_lorentz: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            eps_oblique: oblique::DEFAULT_EPS_CLIP,
            eps_lorentz: lorentz::DEFAULT_EPS_CLIP,
            seed: 0,
        }
    }
}

impl VerifyConfig {
    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    fn attention(&self, heads: usize) -> AttentionConfig<f64> {
        AttentionConfig {
            heads,
            eps_oblique: self.eps_oblique,
            eps_lorentz: self.eps_lorentz,
            ..AttentionConfig::default()
        }
    }
}

/// Worst case observed by one property.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
}

pub struct Property {
    pub module: &'static str,
    pub name: &'static str,
    check: fn(&VerifyConfig) -> Result<Measurement>,
}

impl Property {
    pub fn id(&self) -> String {
        format!("{}::{}", self.module, self.name)
    }

    /// `filter` selects a whole module by its tag, or any property whose id
    /// contains it.
    pub fn matches(&self, filter: &str) -> bool {
        if MODULES.contains(&filter) {
            self.module == filter
        } else {
            self.id().contains(filter)
        }
    }

    pub fn run(&self, cfg: &VerifyConfig) -> PropertyReport {
        let outcome = (self.check)(cfg);
        let (m, error) = match outcome {
            Ok(m) => (m, None),
            Err(e) => (
                Measurement {
                    max_error: f64::NAN,
                    tolerance: f64::NAN,
                    cases: 0,
                },
                Some(e.to_string()),
            ),
        };
        PropertyReport {
            module: self.module,
            name: self.name,
            max_error: m.max_error,
            tolerance: m.tolerance,
            cases: m.cases,
            passed: error.is_none() && m.max_error <= m.tolerance,
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub module: &'static str,
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
    pub cases: usize,
    pub passed: bool,
    pub error: Option<String>,
}

impl std::fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}::{}", self.module, self.name)?;
        match &self.error {
            Some(e) => write!(f, "  error: {e}"),
            None => write!(
                f,
                "  max_error={:.3e} tolerance={:.1e} cases={}",
                self.max_error, self.tolerance, self.cases
            ),
        }
    }
}

macro_rules! prop {
    ($module:literal, $name:literal, $f:ident) => {
        Property {
            module: $module,
            name: $name,
            check: $f,
        }
    };
}

pub fn registry() -> Vec<Property> {
    vec![
        prop!("linalg", "matmul-associativity", matmul_associativity),
        prop!("linalg", "softmax-row-sums", softmax_row_sums),
        prop!("linalg", "softmax-shift-invariance", softmax_shift_invariance),
        prop!("oblique", "unit-columns", oblique_unit_columns),
        prop!("oblique", "project-idempotent", oblique_idempotent),
        prop!("oblique", "project-scale-invariance", oblique_scale_invariance),
        prop!("oblique", "distance-symmetry", oblique_symmetry),
        prop!("oblique", "triangle-inequality", oblique_triangle),
        prop!("oblique", "tangent-projection-bound", oblique_projection_bound),
        prop!("oblique", "clip-floor", oblique_clip_floor),
        prop!("lorentz", "hyperboloid-membership", lorentz_membership),
        prop!("lorentz", "exp-log-roundtrip", lorentz_roundtrip),
        prop!("lorentz", "radial-isometry", lorentz_radial_isometry),
        prop!("lorentz", "distance-symmetry", lorentz_symmetry),
        prop!("lorentz", "triangle-inequality", lorentz_triangle),
        prop!("lorentz", "curvature-scaling", lorentz_curvature_scaling),
        prop!("lorentz", "clip-floor", lorentz_clip_floor),
        prop!("attention", "row-sums", attention_row_sums),
        prop!("attention", "permutation-equivariance", attention_permutation),
        prop!("attention", "clip-safety", attention_clip_safety),
        prop!("attention", "oracle-equivalence", attention_oracle),
        prop!("attention", "monotone-in-distance", attention_monotone),
        prop!("diffcheck", "oblique-distance-gradient", oblique_gradient),
        prop!("diffcheck", "lorentz-distance-gradient", lorentz_gradient),
        prop!("experiments", "tree-determinism", tree_determinism),
        prop!("experiments", "stress-monotone", tree_stress_monotone),
        prop!("experiments", "descent-strictly-decreasing", descent_decreasing),
    ]
}

/// Runs every property selected by `filter` (all when `None`).
pub fn run_verify(cfg: &VerifyConfig, filter: Option<&str>) -> Vec<PropertyReport> {
    registry()
        .iter()
        .filter(|p| filter.is_none_or(|f| p.matches(f)))
        .map(|p| p.run(cfg))
        .collect()
}

// ---- sampling helpers ----

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn gauss_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::new(rows, cols, gauss(rng, rows * cols)).expect("finite samples")
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gauss(rng, n);
        let r = norm(&v);
        if r > 1e-3 {
            return v.into_iter().map(|x| x / r).collect();
        }
    }
}

fn column(v: &[f64]) -> ObliqueMatrix<f64> {
    ObliqueMatrix::try_new(Matrix::new(v.len(), 1, v.to_vec()).expect("finite")).expect("unit column")
}

/// Tangent vector with a random direction and norm uniform in `[0, max_norm]`.
fn tangent(rng: &mut ChaCha8Rng, dim: usize, max_norm: f64) -> Vec<f64> {
    let r = rng.gen_range(0.0..=max_norm);
    unit(rng, dim).into_iter().map(|x| x * r).collect()
}

fn lift(enc: &[f64], c: Curvature<f64>) -> LorentzPoint<f64> {
    exp_origin(&TangentAtOrigin::unscaled(enc.to_vec()), c)
}

fn curv(c: f64) -> Curvature<f64> {
    Curvature::new(c).expect("valid curvature")
}

fn max_diff(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.max_abs_diff(b).unwrap_or(f64::INFINITY)
}

// ---- linalg ----

fn matmul_associativity(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(1);
    let mut worst = 0.0_f64;
    let cases = 200;
    for _ in 0..cases {
        let (p, q, r, s) = (
            rng.gen_range(1..9),
            rng.gen_range(1..9),
            rng.gen_range(1..9),
            rng.gen_range(1..9),
        );
        let (a, b, c) = (gauss_matrix(&mut rng, p, q), gauss_matrix(&mut rng, q, r), gauss_matrix(&mut rng, r, s));
        let left = matmul(&matmul(&a, &b)?, &c)?;
        let right = matmul(&a, &matmul(&b, &c)?)?;
        let scale = a.frobenius_norm() * b.frobenius_norm() * c.frobenius_norm();
        worst = worst.max(left.sub(&right)?.frobenius_norm() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-10,
        cases,
    })
}

fn softmax_row_sums(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(2);
    let mut worst = 0.0_f64;
    let cases = 200;
    for _ in 0..cases {
        let (r, c) = (rng.gen_range(1..10), rng.gen_range(1..20));
        let m = Matrix::from_fn(r, c, |_, _| rng.gen_range(-700.0..=700.0));
        let s = softmax_rows(&m);
        for i in 0..r {
            worst = worst.max((s.row(i).iter().sum::<f64>() - 1.0).abs());
        }
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-12,
        cases,
    })
}

fn softmax_shift_invariance(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(3);
    let mut worst = 0.0_f64;
    let cases = 200;
    for _ in 0..cases {
        let (r, c) = (rng.gen_range(1..10), rng.gen_range(1..20));
        let m = Matrix::from_fn(r, c, |_, _| rng.gen_range(-50.0..=50.0));
        let shift: f64 = rng.gen_range(-100.0..=100.0);
        worst = worst.max(max_diff(&softmax_rows(&m), &softmax_rows(&m.map(|x| x + shift))));
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-12,
        cases,
    })
}

// ---- oblique ----

fn random_oblique(rng: &mut ChaCha8Rng) -> Matrix<f64> {
    let (d, n) = (rng.gen_range(1..17), rng.gen_range(1..9));
    let scale = 10f64.powf(rng.gen_range(-6.0..=6.0));
    gauss_matrix(rng, d, n).scale(scale)
}

fn oblique_unit_columns(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(10);
    let mut worst = 0.0_f64;
    let cases = 1000;
    for _ in 0..cases {
        let p = project(&random_oblique(&mut rng), oblique::DEFAULT_EPS_ZERO);
        for r in crate::linalg::col_norms(p.point.inner()) {
            worst = worst.max((r - 1.0).abs());
        }
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-12,
        cases,
    })
}

fn oblique_idempotent(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(11);
    let mut worst = 0.0_f64;
    let cases = 1000;
    for _ in 0..cases {
        let once = project(&random_oblique(&mut rng), oblique::DEFAULT_EPS_ZERO).point.into_inner();
        let twice = project(&once, oblique::DEFAULT_EPS_ZERO).point.into_inner();
        worst = worst.max(max_diff(&once, &twice));
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-15,
        cases,
    })
}

fn oblique_scale_invariance(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(12);
    let mut worst = 0.0_f64;
    let cases = 1000;
    for _ in 0..cases {
        let m = random_oblique(&mut rng);
        let lambda = rng.gen_range(-10.0_f64..=10.0).exp();
        let a = project(&m, oblique::DEFAULT_EPS_ZERO).point.into_inner();
        let b = project(&m.scale(lambda), oblique::DEFAULT_EPS_ZERO).point.into_inner();
        worst = worst.max(max_diff(&a, &b));
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-12,
        cases,
    })
}

fn oblique_symmetry(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(13);
    let mut worst = 0.0_f64;
    let cases = 1000;
    for _ in 0..cases {
        let (d, n) = (rng.gen_range(1..17), rng.gen_range(1..9));
        let q = project(&gauss_matrix(&mut rng, d, n), oblique::DEFAULT_EPS_ZERO).point;
        let k = project(&gauss_matrix(&mut rng, d, n), oblique::DEFAULT_EPS_ZERO).point;
        let a = oblique::geodesic_distance(&q, &k, cfg.eps_oblique)?;
        let b = oblique::geodesic_distance(&k, &q, cfg.eps_oblique)?;
        worst = worst.max((a - b).abs());
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 0.0,
        cases,
    })
}

fn oblique_triangle(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(14);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    let limit = 1.0 - cfg.eps_oblique;
    while cases < 1000 {
        let d = rng.gen_range(2..9);
        let pts: Vec<Vec<f64>> = (0..3).map(|_| unit(&mut rng, d)).collect();
        let inside = [(0, 1), (1, 2), (0, 2)]
            .iter()
            .all(|&(i, j)| dot(&pts[i], &pts[j]).abs() < limit);
        if !inside {
            continue;
        }
        let cols: Vec<ObliqueMatrix<f64>> = pts.iter().map(|p| column(p)).collect();
        let dist = |i: usize, j: usize| oblique::pairwise_distances(&cols[i], &cols[j], cfg.eps_oblique).map(|m| m.get(0, 0));
        let excess = dist(0, 2)? - dist(0, 1)? - dist(1, 2)?;
        worst = worst.max(excess.max(0.0));
        cases += 1;
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-9,
        cases,
    })
}

fn oblique_projection_bound(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(15);
    let mut worst = 0.0_f64;
    let cases = 10_000;
    for _ in 0..cases {
        let (d, n) = (rng.gen_range(1..9), rng.gen_range(1..5));
        let w = project(&gauss_matrix(&mut rng, d, n), oblique::DEFAULT_EPS_ZERO).point;
        let g = gauss_matrix(&mut rng, d, n).scale(10f64.powf(rng.gen_range(-3.0..=3.0)));
        let t = oblique::tangent_project(&w, &g)?;
        worst = worst.max((t.delta().frobenius_norm() - g.frobenius_norm()).max(0.0));
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 0.0,
        cases,
    })
}

/// Self-distance of a `g`-column point against `sqrt(g) * arccos(1 - 1e-4)`,
/// as a relative error.
fn oblique_clip_floor(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(16);
    let mut worst = 0.0_f64;
    let expected_single = (1.0 - oblique::DEFAULT_EPS_CLIP).acos();
    let cases = 8;
    for g in 1..=cases {
        let w = project(&gauss_matrix(&mut rng, 3, g), oblique::DEFAULT_EPS_ZERO).point;
        let d = oblique::geodesic_distance(&w, &w, cfg.eps_oblique)?;
        let expected = (g as f64).sqrt() * expected_single;
        worst = worst.max((d - expected).abs() / expected);
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-6,
        cases,
    })
}

// ---- lorentz ----

fn lorentz_membership(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(20);
    let mut worst = 0.0_f64;
    let cases = 10_000;
    for _ in 0..cases {
        let c = curv(10f64.powf(rng.gen_range(-3.0..=1.0)));
        let dim = rng.gen_range(2..17);
        let x = lift(&tangent(&mut rng, dim, 20.0), c);
        // residual relative to the magnitude of the terms that cancel
        worst = worst.max(x.residual(c).abs() / x.time().powi(2).max(1.0));
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-9,
        cases,
    })
}

fn lorentz_roundtrip(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(21);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for c in [0.5, 1.0, 2.0].map(curv) {
        for _ in 0..1000 {
            let dim = rng.gen_range(2..17);
            let u = tangent(&mut rng, dim, 10.0);
            let back = log_origin(&lift(&u, c), c)?.effective();
            let err: Vec<f64> = back.iter().zip(&u).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&err));
            cases += 1;
        }
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-9,
        cases,
    })
}

fn lorentz_radial_isometry(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(22);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for c in [0.5, 1.0, 2.0].map(curv) {
        for _ in 0..1000 {
            let dim = rng.gen_range(2..17);
            let enc = tangent(&mut rng, dim, 10.0);
            let scale = rng.gen_range(0.25..=2.0);
            let u = TangentAtOrigin::new(enc, scale)?;
            let x = exp_origin(&u, c);
            let d = lorentz::geodesic_distance(&LorentzPoint::origin(dim, c), &x, c, cfg.eps_lorentz)?;
            worst = worst.max((d - norm(&u.effective())).abs());
            cases += 1;
        }
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-9,
        cases,
    })
}

fn lorentz_triples(rng: &mut ChaCha8Rng) -> (Curvature<f64>, [LorentzPoint<f64>; 3]) {
    let c = curv([0.5, 1.0, 2.0][rng.gen_range(0..3)]);
    let dim = rng.gen_range(2..9);
    let pts = [(); 3].map(|_| lift(&tangent(rng, dim, 5.0), c));
    (c, pts)
}

fn lorentz_symmetry(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(23);
    let mut worst = 0.0_f64;
    let cases = 1000;
    for _ in 0..cases {
        let (c, [x, y, _]) = lorentz_triples(&mut rng);
        let a = lorentz::geodesic_distance(&x, &y, c, cfg.eps_lorentz)?;
        let b = lorentz::geodesic_distance(&y, &x, c, cfg.eps_lorentz)?;
        worst = worst.max((a - b).abs());
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-9,
        cases,
    })
}

fn lorentz_triangle(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(24);
    let mut worst = 0.0_f64;
    let cases = 1000;
    for _ in 0..cases {
        let (c, [x, y, z]) = lorentz_triples(&mut rng);
        let d = |a: &LorentzPoint<f64>, b: &LorentzPoint<f64>| lorentz::geodesic_distance(a, b, c, cfg.eps_lorentz);
        worst = worst.max((d(&x, &z)? - d(&x, &y)? - d(&y, &z)?).max(0.0));
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-9,
        cases,
    })
}

fn lorentz_curvature_scaling(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(25);
    let mut worst = 0.0_f64;
    let cases = 1000;
    let one = curv(1.0);
    for _ in 0..cases {
        let c = curv(10f64.powf(rng.gen_range(-1.0..=1.0)));
        let dim = rng.gen_range(2..9);
        let (u, w) = (tangent(&mut rng, dim, 5.0), tangent(&mut rng, dim, 5.0));
        let at_c = lorentz::geodesic_distance(&lift(&u, c), &lift(&w, c), c, cfg.eps_lorentz)?;
        let k = c.sqrt();
        let stretch = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        let at_one = lorentz::geodesic_distance(&lift(&stretch(&u), one), &lift(&stretch(&w), one), one, cfg.eps_lorentz)?;
        worst = worst.max((at_c - at_one / k).abs());
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-9,
        cases,
    })
}

/// Self-distance at several curvatures against `arcosh(1 + 1e-15) / sqrt(c)`,
/// as a relative error.
fn lorentz_clip_floor(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(26);
    let mut worst = 0.0_f64;
    let floor = (1.0 + lorentz::DEFAULT_EPS_CLIP).acosh();
    let curvatures = [0.5, 1.0, 2.0];
    for c in curvatures.map(curv) {
        let x = lift(&tangent(&mut rng, 3, 2.0), c);
        let d = lorentz::geodesic_distance(&x, &x, c, cfg.eps_lorentz)?;
        let expected = floor / c.sqrt();
        worst = worst.max((d - expected).abs() / expected);
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-6,
        cases: curvatures.len(),
    })
}

// ---- attention ----

struct Case {
    q: Matrix<f64>,
    k: Matrix<f64>,
    v: Matrix<f64>,
    cfg: AttentionConfig<f64>,
}

fn attention_case(rng: &mut ChaCha8Rng, cfg: &VerifyConfig, max_rows: usize) -> Case {
    let heads = if rng.gen_bool(0.5) { 1 } else { 4 };
    let (n, m) = (rng.gen_range(1..=max_rows), rng.gen_range(1..=max_rows));
    let d = heads * rng.gen_range(1..5);
    let dv = heads * rng.gen_range(1..4);
    let mut acfg = cfg.attention(heads);
    acfg.tau_obl = rng.gen_range(0.2..=2.0);
    acfg.tau_lor = rng.gen_range(0.05..=1.0);
    acfg.curvature = curv(rng.gen_range(0.5..=2.0));
    Case {
        q: gauss_matrix(rng, n, d),
        k: gauss_matrix(rng, m, d),
        v: gauss_matrix(rng, m, dv),
        cfg: acfg,
    }
}

fn attention_row_sums(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(30);
    let mut worst = 0.0_f64;
    let cases = 200;
    for _ in 0..cases {
        let case = attention_case(&mut rng, cfg, 32);
        let mut all = oblique_attention_weights(&case.q, &case.k, &case.cfg)?;
        all.extend(lorentz_attention_weights(&case.q, &case.k, &case.cfg)?);
        for w in &all {
            for i in 0..w.rows() {
                worst = worst.max((w.row(i).iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-12,
        cases,
    })
}

type Kernel = fn(&Matrix<f64>, &Matrix<f64>, &Matrix<f64>, &AttentionConfig<f64>) -> Result<Matrix<f64>>;

const KERNELS: [Kernel; 2] = [oblique_attention, lorentz_cross_attention];

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.gen_range(0..=i));
    }
    p
}

fn attention_permutation(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(31);
    let mut worst = 0.0_f64;
    let cases = 200;
    for _ in 0..cases {
        let case = attention_case(&mut rng, cfg, 32);
        let pq = shuffled(&mut rng, case.q.rows());
        let pk = shuffled(&mut rng, case.k.rows());
        for kernel in KERNELS {
            let base = kernel(&case.q, &case.k, &case.v, &case.cfg)?;
            let rows_permuted = kernel(&case.q.permute_rows(&pq), &case.k, &case.v, &case.cfg)?;
            worst = worst.max(max_diff(&rows_permuted, &base.permute_rows(&pq)));
            let keys_permuted = kernel(&case.q, &case.k.permute_rows(&pk), &case.v.permute_rows(&pk), &case.cfg)?;
            worst = worst.max(max_diff(&keys_permuted, &base));
        }
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-12,
        cases,
    })
}

/// Counts non-finite outputs for coincident, antipodal, far and all-zero
/// keys. An overflowing lift must surface as an error, never as NaN.
fn attention_clip_safety(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(32);
    let mut bad = 0usize;
    let cases = 100;
    for _ in 0..cases {
        let case = attention_case(&mut rng, cfg, 16);
        let q = case.q;
        let variants = [
            q.clone(),
            q.scale(-1.0),
            q.scale(100.0),
            Matrix::zeros(q.rows(), q.cols()),
        ];
        let v = gauss_matrix(&mut rng, q.rows(), case.v.cols());
        for k in &variants {
            for kernel in KERNELS {
                let out = kernel(&q, k, &v, &case.cfg)?;
                bad += out.as_slice().iter().filter(|x| !x.is_finite()).count();
            }
        }
    }
    Ok(Measurement {
        max_error: bad as f64,
        tolerance: 0.0,
        cases,
    })
}

fn attention_oracle(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(33);
    let mut worst = 0.0_f64;
    let cases = 100;
    for _ in 0..cases {
        let case = attention_case(&mut rng, cfg, 64);
        for (kernel, space) in KERNELS.iter().zip([Space::Oblique, Space::Lorentz]) {
            let fast = kernel(&case.q, &case.k, &case.v, &case.cfg)?;
            let slow = naive_attention_reference(&case.q, &case.k, &case.v, space, &case.cfg)?;
            worst = worst.max(max_diff(&fast, &slow));
        }
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: 1e-12,
        cases,
    })
}

/// Moves one key further from the query and counts weights that fail to drop.
fn attention_monotone(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(34);
    let mut violations = 0usize;
    let cases = 200;
    for _ in 0..cases {
        let m = rng.gen_range(2..8);
        let j = rng.gen_range(0..m);
        let mut acfg = cfg.attention(1);
        acfg.alpha = Some(1.0);
        acfg.tau_lor = 1.0;

        // oblique: keys on a circle around the query direction e1
        let mut angles: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..2.5)).collect();
        let circle = |a: &[f64]| Matrix::from_fn(a.len(), 2, |i, c| if c == 0 { a[i].cos() } else { a[i].sin() });
        let q = Matrix::from_rows(&[vec![1.0, 0.0]])?;
        let w0 = oblique_attention_weights(&q, &circle(&angles), &acfg)?[0].get(0, j);
        angles[j] += rng.gen_range(0.01..0.5);
        let w1 = oblique_attention_weights(&q, &circle(&angles), &acfg)?[0].get(0, j);
        violations += usize::from(w1 >= w0);

        // lorentz: query at the origin, keys at increasing radius
        let mut radii: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let ray = |r: &[f64]| Matrix::from_fn(r.len(), 2, |i, c| if c == 0 { r[i] } else { 0.0 });
        let origin = Matrix::zeros(1, 2);
        let w0 = lorentz_attention_weights(&origin, &ray(&radii), &acfg)?[0].get(0, j);
        radii[j] += rng.gen_range(0.01..0.5);
        let w1 = lorentz_attention_weights(&origin, &ray(&radii), &acfg)?[0].get(0, j);
        violations += usize::from(w1 >= w0);
    }
    Ok(Measurement {
        max_error: violations as f64,
        tolerance: 0.0,
        cases,
    })
}

// ---- diffcheck ----

fn oblique_gradient(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(40);
    let fd = FDConfig::default();
    let mut worst = 0.0_f64;
    let mut cases = 0;
    let limit = 1.0 - cfg.eps_oblique - 1e-3;
    while cases < 500 {
        let d = rng.gen_range(2..9);
        let (q, k) = (unit(&mut rng, d), unit(&mut rng, d));
        if dot(&q, &k).abs() >= limit {
            continue;
        }
        let eps = cfg.eps_oblique;
        let f = |x: &[f64]| dot(x, &k).clamp(-(1.0 - eps), 1.0 - eps).acos();
        let analytic = oblique::distance_gradient(&q, &k, eps)?;
        worst = worst.max(check_gradient(f, analytic, &q, &fd)?.relative_error);
        cases += 1;
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: fd.tolerance,
        cases,
    })
}

fn lorentz_gradient(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut rng = cfg.rng(41);
    let fd = FDConfig::default();
    let mut worst = 0.0_f64;
    let mut cases = 0;
    while cases < 500 {
        let c = curv([0.5, 1.0, 2.0][rng.gen_range(0..3)]);
        let dim = rng.gen_range(2..9);
        let scale = rng.gen_range(0.5..=1.5);
        let u = TangentAtOrigin::new(tangent(&mut rng, dim, 3.0), scale)?;
        let w = TangentAtOrigin::new(tangent(&mut rng, dim, 3.0), scale)?;
        let y = exp_origin(&w, c);
        let x = exp_origin(&u, c);
        if lorentz::geodesic_distance(&x, &y, c, cfg.eps_lorentz)? < 1e-3 {
            continue;
        }
        let f = |enc: &[f64]| {
            let p = exp_origin(&TangentAtOrigin::new(enc.to_vec(), scale).expect("positive scale"), c);
            lorentz::geodesic_distance(&p, &y, c, cfg.eps_lorentz).unwrap_or(f64::NAN)
        };
        let analytic = lorentz::distance_gradient(&u, &w, c, cfg.eps_lorentz)?;
        worst = worst.max(check_gradient(f, analytic, u.enc(), &fd)?.relative_error);
        cases += 1;
    }
    Ok(Measurement {
        max_error: worst,
        tolerance: fd.tolerance,
        cases,
    })
}

// ---- experiments ----

fn small_tree_params(cfg: &VerifyConfig) -> (TreeSpec, EmbeddingParams) {
    (
        TreeSpec {
            depth: 3,
            ..TreeSpec::default()
        },
        EmbeddingParams {
            steps: 300,
            seed: cfg.seed,
            ..EmbeddingParams::default()
        },
    )
}

fn tree_determinism(cfg: &VerifyConfig) -> Result<Measurement> {
    let (spec, params) = small_tree_params(cfg);
    let a = embed_tree(&spec, &params)?;
    let b = embed_tree(&spec, &params)?;
    let same = a.final_distortion.to_bits() == b.final_distortion.to_bits();
    Ok(Measurement {
        max_error: if same { 0.0 } else { (a.final_distortion - b.final_distortion).abs().max(f64::MIN_POSITIVE) },
        tolerance: 0.0,
        cases: 2,
    })
}

fn tree_stress_monotone(cfg: &VerifyConfig) -> Result<Measurement> {
    let (spec, params) = small_tree_params(cfg);
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for space in [
        crate::experiments::EmbeddingSpace::Euclidean,
        crate::experiments::EmbeddingSpace::Lorentz { curvature: 1.0 },
    ] {
        let run = embed_tree(&spec, &EmbeddingParams { space, ..params })?;
        for w in run.stress_history.windows(2) {
            worst = worst.max(w[1] - w[0]);
        }
        cases += run.stress_history.len();
    }
    Ok(Measurement {
        max_error: worst.max(0.0),
        tolerance: 0.0,
        cases,
    })
}

/// Counts unconstrained iterations whose objective fails to drop.
fn descent_decreasing(cfg: &VerifyConfig) -> Result<Measurement> {
    let mut violations = 0usize;
    let mut cases = 0;
    for kappa in [1.0, 10.0, 100.0] {
        let run = descent_demo(&DescentParams {
            condition_number: kappa,
            seed: cfg.seed,
            ..DescentParams::default()
        })?;
        let t = &run.unconstrained.trajectory;
        violations += t.windows(2).filter(|w| w[1].f >= w[0].f).count();
        cases += t.len();
    }
    Ok(Measurement {
        max_error: violations as f64,
        tolerance: 0.0,
        cases,
    })
}
