//! Acceptance suite. Each test prints one `ACCEPTANCE <n> PASS|FAIL` line to
//! the real stdout (not the captured test output) and then asserts.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use geoattn::attention::{
    lorentz_attention_weights, lorentz_cross_attention, oblique_attention, oblique_attention_weights,
    AttentionConfig,
};
use geoattn::diffcheck::{check_gradient, naive_attention_reference, FDConfig, Space};
use geoattn::experiments::{descent_demo, embed_tree, DescentParams, EmbeddingParams, EmbeddingSpace, TreeSpec};
use geoattn::linalg::{col_norms, dot, norm};
use geoattn::lorentz::{self, exp_origin, log_origin, Curvature, LorentzPoint, TangentAtOrigin};
use geoattn::oblique::{self, project, tangent_project, ObliqueMatrix};
use geoattn::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const SEEDS: [u64; 3] = [0, 333, 777];

fn report(id: u32, title: &str, passed: bool, detail: &str) {
    let status = if passed { "PASS" } else { "FAIL" };
    let line = format!("ACCEPTANCE {id:>2} {status} {title}: {detail}\n");
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(passed, "{}", line.trim_end());
}

fn rng(salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xACCE_5500 + salt)
}

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn gauss_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::new(r, c, gauss(rng, r * c)).unwrap()
}

fn direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gauss(rng, n);
        let r = norm(&v);
        if r > 1e-6 {
            return v.iter().map(|x| x / r).collect();
        }
    }
}

fn tangent(rng: &mut ChaCha8Rng, n: usize, max_norm: f64) -> Vec<f64> {
    let r = rng.gen_range(0.0..=max_norm);
    direction(rng, n).iter().map(|x| x * r).collect()
}

fn curv(c: f64) -> Curvature<f64> {
    Curvature::new(c).unwrap()
}

fn lift(v: &[f64], c: Curvature<f64>) -> LorentzPoint<f64> {
    exp_origin(&TangentAtOrigin::unscaled(v.to_vec()), c)
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

#[test]
fn criterion_01_manifold_invariants() {
    let start = Instant::now();
    let mut r = rng(1);

    let mut worst_norm = 0.0_f64;
    for _ in 0..1000 {
        let (d, n) = (r.gen_range(1..33), r.gen_range(1..17));
        let m = gauss_matrix(&mut r, d, n).scale(10f64.powf(r.gen_range(-6.0..=6.0)));
        for cn in col_norms(project(&m, oblique::DEFAULT_EPS_ZERO).point.inner()) {
            worst_norm = worst_norm.max((cn - 1.0).abs());
        }
    }

    let mut worst_abs = 0.0_f64;
    let mut worst_rel = 0.0_f64;
    let mut failures = 0;
    let mut worst_at = (0.0, 0.0);
    for _ in 0..10_000 {
        let c = 10f64.powf(r.gen_range(-3.0..=1.0));
        let dim = r.gen_range(2..17);
        let u = tangent(&mut r, dim, 20.0);
        let x = lift(&u, curv(c));
        let s2: f64 = x.space().iter().map(|v| v * v).sum();
        let residual = (s2 - x.time() * x.time() + 1.0 / c).abs();
        if residual > 1e-9 {
            failures += 1;
        }
        if residual > worst_abs {
            worst_abs = residual;
            worst_at = (c, norm(&u));
        }
        worst_rel = worst_rel.max(residual / x.time().powi(2).max(1.0));
    }
    let elapsed = start.elapsed();
    let passed = worst_norm <= 1e-12 && failures == 0 && elapsed < Duration::from_secs(10);
    report(
        1,
        "manifold invariants",
        passed,
        &format!(
            "max |col norm - 1| = {worst_norm:.2e} (tol 1e-12); hyperboloid |<x,x> + 1/c| > 1e-9 for {failures}/10000 points, \
             worst {worst_abs:.3e} at c={:.3e}, |u|={:.2}; residual relative to t^2 at most {worst_rel:.2e}; {}",
            worst_at.0,
            worst_at.1,
            secs(elapsed)
        ),
    );
}

#[test]
fn criterion_02_exp_log_roundtrip() {
    let mut r = rng(2);
    let mut worst = 0.0_f64;
    for c in [0.5, 1.0, 2.0] {
        for _ in 0..1000 {
            let dim = r.gen_range(2..17);
            let u = tangent(&mut r, dim, 10.0);
            let back = log_origin(&lift(&u, curv(c)), curv(c)).unwrap().effective();
            let diff: Vec<f64> = back.iter().zip(&u).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff));
        }
    }
    report(
        2,
        "exp/log roundtrip",
        worst <= 1e-9,
        &format!("max |log(exp(u)) - u| = {worst:.3e} over 3000 tangents (tol 1e-9)"),
    );
}

#[test]
fn criterion_03_radial_isometry() {
    let mut r = rng(3);
    let mut worst = 0.0_f64;
    for c in [0.5, 1.0, 2.0] {
        for _ in 0..1000 {
            let dim = r.gen_range(2..17);
            let u = tangent(&mut r, dim, 10.0);
            let x = lift(&u, curv(c));
            let o = LorentzPoint::origin(dim, curv(c));
            let d = lorentz::geodesic_distance(&o, &x, curv(c), lorentz::DEFAULT_EPS_CLIP).unwrap();
            worst = worst.max((d - norm(&u)).abs());
        }
    }
    report(
        3,
        "radial isometry",
        worst <= 1e-9,
        &format!("max |d(O, exp(u)) - |u|| = {worst:.3e} over 3000 tangents (tol 1e-9)"),
    );
}

#[test]
fn criterion_04_gradient_checks() {
    let mut r = rng(4);
    let fd = FDConfig {
        step: 1e-6,
        tolerance: 1e-5,
    };

    let eps = oblique::DEFAULT_EPS_CLIP;
    let mut worst_obl = 0.0_f64;
    let mut n_obl = 0;
    while n_obl < 500 {
        let d = r.gen_range(2..17);
        let (q, k) = (direction(&mut r, d), direction(&mut r, d));
        // stay clear of the clip boundary, where the distance has a kink
        if dot(&q, &k).abs() > 1.0 - eps - 1e-3 {
            continue;
        }
        let f = |x: &[f64]| {
            let c = dot(x, &k).clamp(-1.0 + eps, 1.0 - eps);
            c.acos()
        };
        let g = oblique::distance_gradient(&q, &k, eps).unwrap();
        worst_obl = worst_obl.max(check_gradient(f, g, &q, &fd).unwrap().relative_error);
        n_obl += 1;
    }

    let mut worst_lor = 0.0_f64;
    let mut n_lor = 0;
    while n_lor < 500 {
        let c = curv([0.5, 1.0, 2.0][r.gen_range(0..3)]);
        let dim = r.gen_range(2..9);
        let scale = r.gen_range(0.5..=1.5);
        let u = TangentAtOrigin::new(tangent(&mut r, dim, 3.0), scale).unwrap();
        let w = TangentAtOrigin::new(tangent(&mut r, dim, 3.0), scale).unwrap();
        let y = exp_origin(&w, c);
        let eps = lorentz::DEFAULT_EPS_CLIP;
        if lorentz::geodesic_distance(&exp_origin(&u, c), &y, c, eps).unwrap() < 1e-3 {
            continue;
        }
        let f = |enc: &[f64]| {
            let x = exp_origin(&TangentAtOrigin::new(enc.to_vec(), scale).unwrap(), c);
            lorentz::geodesic_distance(&x, &y, c, eps).unwrap()
        };
        let g = lorentz::distance_gradient(&u, &w, c, eps).unwrap();
        worst_lor = worst_lor.max(check_gradient(f, g, u.enc(), &fd).unwrap().relative_error);
        n_lor += 1;
    }
    report(
        4,
        "gradient checks",
        worst_obl <= 1e-5 && worst_lor <= 1e-5,
        &format!("max relative error oblique {worst_obl:.3e}, lorentz {worst_lor:.3e} over 500 pairs each (tol 1e-5)"),
    );
}

#[test]
fn criterion_05_tangent_projection_bound() {
    let mut r = rng(5);
    let mut violations = 0;
    let mut worst_ratio = 0.0_f64;
    for _ in 0..10_000 {
        let (d, n) = (r.gen_range(1..17), r.gen_range(1..9));
        let w = ObliqueMatrix::try_new(project(&gauss_matrix(&mut r, d, n), oblique::DEFAULT_EPS_ZERO).point.into_inner())
            .unwrap();
        let g = gauss_matrix(&mut r, d, n).scale(10f64.powf(r.gen_range(-4.0..=4.0)));
        let p = tangent_project(&w, &g).unwrap();
        let (pn, gn) = (p.delta().frobenius_norm(), g.frobenius_norm());
        if pn > gn {
            violations += 1;
        }
        worst_ratio = worst_ratio.max(pn / gn);
    }
    report(
        5,
        "tangent projection bound",
        violations == 0,
        &format!("{violations} violations of |Proj(G)|_F <= |G|_F in 10000 draws; max ratio {worst_ratio:.6}"),
    );
}

#[derive(Clone)]
struct Case {
    q: Matrix<f64>,
    k: Matrix<f64>,
    v: Matrix<f64>,
    cfg: AttentionConfig<f64>,
}

fn attention_case(r: &mut ChaCha8Rng, heads: usize, max_rows: usize) -> Case {
    let (n, m) = (r.gen_range(1..=max_rows), r.gen_range(1..=max_rows));
    let d = heads * r.gen_range(1..5);
    let dv = heads * r.gen_range(1..4);
    let scale = r.gen_range(0.1..3.0);
    Case {
        q: gauss_matrix(r, n, d).scale(scale),
        k: gauss_matrix(r, m, d).scale(scale),
        v: gauss_matrix(r, m, dv),
        cfg: AttentionConfig {
            heads,
            tau_obl: r.gen_range(0.2..2.0),
            tau_lor: r.gen_range(0.05..1.0),
            curvature: curv(r.gen_range(0.5..2.0)),
            ..AttentionConfig::default()
        },
    }
}

#[test]
fn criterion_06_kernel_oracle_equivalence() {
    let mut r = rng(6);
    let mut worst = [0.0_f64; 2];
    for i in 0..100 {
        let heads = if i % 2 == 0 { 1 } else { 4 };
        let c = attention_case(&mut r, heads, 64);
        let pairs = [
            (oblique_attention(&c.q, &c.k, &c.v, &c.cfg).unwrap(), Space::Oblique),
            (lorentz_cross_attention(&c.q, &c.k, &c.v, &c.cfg).unwrap(), Space::Lorentz),
        ];
        for (slot, (fast, space)) in pairs.into_iter().enumerate() {
            let slow = naive_attention_reference(&c.q, &c.k, &c.v, space, &c.cfg).unwrap();
            worst[slot] = worst[slot].max(fast.max_abs_diff(&slow).unwrap());
        }
    }
    report(
        6,
        "kernel/oracle equivalence",
        worst[0] <= 1e-12 && worst[1] <= 1e-12,
        &format!(
            "max |kernel - reference| oblique {:.3e}, lorentz {:.3e} over 100 cases each, heads in {{1,4}}, n,m <= 64 (tol 1e-12)",
            worst[0], worst[1]
        ),
    );
}

#[test]
fn criterion_07_stability_clips() {
    let defaults = AttentionConfig::<f64>::default();
    let eps_ok = defaults.eps_oblique == 1e-4 && defaults.eps_lorentz == 1e-15;

    let mut r = rng(7);
    let mut non_finite = 0;
    for i in 0..50 {
        let c = attention_case(&mut r, if i % 2 == 0 { 1 } else { 4 }, 16);
        let v = gauss_matrix(&mut r, c.q.rows(), c.v.cols());
        for k in [c.q.clone(), c.q.scale(-1.0), Matrix::zeros(c.q.rows(), c.q.cols())] {
            for out in [
                oblique_attention(&c.q, &k, &v, &c.cfg).unwrap(),
                lorentz_cross_attention(&c.q, &k, &v, &c.cfg).unwrap(),
            ] {
                non_finite += out.as_slice().iter().filter(|x| !x.is_finite()).count();
            }
        }
    }

    let w = ObliqueMatrix::try_new(Matrix::new(3, 1, direction(&mut r, 3)).unwrap()).unwrap();
    let obl_self = oblique::geodesic_distance(&w, &w, defaults.eps_oblique).unwrap();
    let x = lift(&tangent(&mut r, 3, 2.0), curv(1.0));
    let lor_self = lorentz::geodesic_distance(&x, &x, curv(1.0), defaults.eps_lorentz).unwrap();
    let obl_ok = (obl_self - 0.014142).abs() <= 1e-6;
    let lor_ok = (lor_self - 4.5e-8).abs() <= 1e-6;

    report(
        7,
        "stability clips",
        eps_ok && non_finite == 0 && obl_ok && lor_ok,
        &format!(
            "default eps ({}, {}); {non_finite} non-finite outputs for coincident/antipodal/zero keys; \
             oblique self-distance {obl_self:.7} (expected 0.014142 +- 1e-6); lorentz self-distance {lor_self:.4e} \
             (expected 4.5e-8 +- 1e-6)",
            defaults.eps_oblique, defaults.eps_lorentz
        ),
    );
}

#[test]
fn criterion_08_attention_algebra() {
    let mut r = rng(8);
    let mut worst_sum = 0.0_f64;
    let mut worst_perm = 0.0_f64;
    for i in 0..100 {
        let c = attention_case(&mut r, if i % 2 == 0 { 1 } else { 4 }, 32);
        let mut ws = oblique_attention_weights(&c.q, &c.k, &c.cfg).unwrap();
        ws.extend(lorentz_attention_weights(&c.q, &c.k, &c.cfg).unwrap());
        for w in &ws {
            for row in 0..w.rows() {
                worst_sum = worst_sum.max((w.row(row).iter().sum::<f64>() - 1.0).abs());
            }
        }
        let mut pq: Vec<usize> = (0..c.q.rows()).collect();
        let mut pk: Vec<usize> = (0..c.k.rows()).collect();
        for j in (1..pq.len()).rev() {
            pq.swap(j, r.gen_range(0..=j));
        }
        for j in (1..pk.len()).rev() {
            pk.swap(j, r.gen_range(0..=j));
        }
        for kernel in [oblique_attention, lorentz_cross_attention] {
            let base = kernel(&c.q, &c.k, &c.v, &c.cfg).unwrap();
            let rows = kernel(&c.q.permute_rows(&pq), &c.k, &c.v, &c.cfg).unwrap();
            worst_perm = worst_perm.max(rows.max_abs_diff(&base.permute_rows(&pq)).unwrap());
            let keys = kernel(&c.q, &c.k.permute_rows(&pk), &c.v.permute_rows(&pk), &c.cfg).unwrap();
            worst_perm = worst_perm.max(keys.max_abs_diff(&base).unwrap());
        }
    }

    // move key 0 away from the query while the other keys stay put
    let mut monotone_failures = 0;
    let cfg = AttentionConfig {
        heads: 1,
        tau_lor: 1.0,
        alpha: Some(1.0),
        ..AttentionConfig::default()
    };
    let q_obl = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
    let q_lor = Matrix::zeros(1, 3);
    let others = [vec![0.0, 0.6, 0.8], vec![0.3, -0.4, 0.0]];
    let (mut prev_obl, mut prev_lor) = (f64::INFINITY, f64::INFINITY);
    for step in 0..60 {
        let t = 0.05 * step as f64;
        let keys = |first: Vec<f64>| Matrix::from_rows(&[first, others[0].clone(), others[1].clone()]).unwrap();
        let w_obl = oblique_attention_weights(&q_obl, &keys(vec![t.cos(), 0.0, t.sin()]), &cfg).unwrap()[0].get(0, 0);
        let w_lor = lorentz_attention_weights(&q_lor, &keys(vec![0.01 + t, 0.0, 0.0]), &cfg).unwrap()[0].get(0, 0);
        monotone_failures += usize::from(w_obl >= prev_obl) + usize::from(w_lor >= prev_lor);
        prev_obl = w_obl;
        prev_lor = w_lor;
    }

    report(
        8,
        "attention algebra",
        worst_sum <= 1e-12 && worst_perm <= 1e-12 && monotone_failures == 0,
        &format!(
            "max |row sum - 1| = {worst_sum:.3e} (tol 1e-12); permutation error {worst_perm:.3e} (tol 1e-12); \
             {monotone_failures} non-decreasing weights along 60-step distance sweeps"
        ),
    );
}

#[test]
fn criterion_09_tree_embedding() {
    let start = Instant::now();
    let spec = TreeSpec {
        branching: 2,
        depth: 5,
        edge_length: 1.0,
    };
    let mut lines = Vec::new();
    let mut all_better = true;
    for seed in SEEDS {
        let run = |space| {
            embed_tree(
                &spec,
                &EmbeddingParams {
                    space,
                    dim: 2,
                    steps: 5000,
                    seed,
                    ..EmbeddingParams::default()
                },
            )
            .unwrap()
            .final_distortion
        };
        let flat = run(EmbeddingSpace::Euclidean);
        let curved = run(EmbeddingSpace::Lorentz { curvature: 1.0 });
        all_better &= curved < flat;
        lines.push(format!("seed {seed}: lorentz {curved:.4} vs euclidean {flat:.4}"));
    }
    let elapsed = start.elapsed();
    report(
        9,
        "tree embedding",
        all_better && elapsed < Duration::from_secs(120),
        &format!("{}; {}", lines.join(", "), secs(elapsed)),
    );
}

#[test]
fn criterion_10_descent_demo() {
    let start = Instant::now();
    let mut ok = true;
    let mut lines = Vec::new();
    for seed in SEEDS {
        let run = descent_demo(&DescentParams {
            condition_number: 100.0,
            tol: 1e-6,
            seed,
            ..DescentParams::default()
        })
        .unwrap();
        ok &= run.oblique.converged && run.oblique.iterations <= run.unconstrained.iterations;
        lines.push(format!(
            "seed {seed}: oblique {} vs unconstrained {}",
            run.oblique.iterations, run.unconstrained.iterations
        ));
    }
    let elapsed = start.elapsed();
    report(
        10,
        "descent demo",
        ok && elapsed < Duration::from_secs(30),
        &format!("{}; {}", lines.join(", "), secs(elapsed)),
    );
}

#[test]
fn criterion_11_bench_command() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let json = dir.path().join("bench.json");
    let mut problems = Vec::new();
    for (format, path) in [("csv", &csv), ("json", &json)] {
        let out = Command::new(env!("CARGO_BIN_EXE_geoattn"))
            .args(["bench", "--n", "256", "--m", "256", "--d", "256", "--heads", "4", "--format", format])
            .arg("--output")
            .arg(path)
            .output()
            .unwrap();
        if !out.status.success() {
            problems.push(format!("{format} run exited with {:?}", out.status.code()));
        }
    }

    let expected = ["euclidean", "oblique", "lorentz"];
    let text = std::fs::read_to_string(&csv).unwrap_or_default();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let col = |name: &str| header.iter().position(|h| *h == name);
    match (col("kernel"), col("p50_ns"), col("p95_ns")) {
        (Some(k), Some(p50), Some(p95)) => {
            let kernels: Vec<&str> = rows.iter().map(|r| r[k]).collect();
            if kernels != expected {
                problems.push(format!("csv kernels {kernels:?}"));
            }
            for r in &rows {
                if r.len() != header.len() {
                    problems.push("ragged csv row".into());
                }
                let (a, b) = (r[p50].parse::<f64>(), r[p95].parse::<f64>());
                if !matches!((a, b), (Ok(a), Ok(b)) if a <= b) {
                    problems.push(format!("bad percentiles in {r:?}"));
                }
            }
        }
        _ => problems.push(format!("csv header {header:?}")),
    }

    match serde_json::from_str::<serde_json::Value>(&std::fs::read_to_string(&json).unwrap_or_default()) {
        Ok(serde_json::Value::Array(recs)) => {
            let kernels: Vec<&str> = recs.iter().filter_map(|r| r["kernel"].as_str()).collect();
            if kernels != expected {
                problems.push(format!("json kernels {kernels:?}"));
            }
            for rec in &recs {
                for key in &header {
                    if rec.get(*key).is_none() {
                        problems.push(format!("json record lacks {key}"));
                    }
                }
            }
        }
        other => problems.push(format!("json is not a flat array: {other:?}")),
    }

    report(
        11,
        "bench command",
        problems.is_empty(),
        &if problems.is_empty() {
            format!("3 kernels at n=m=256, d=256, heads=4 in well-formed CSV and JSON ({} rows)", rows.len())
        } else {
            problems.join("; ")
        },
    );
}
