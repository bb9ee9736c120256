//! Gradient descent on an ill-conditioned quadratic, with and without the
//! unit-column constraint on the data matrix.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GeoError, Result};
use crate::linalg::Matrix;
use crate::oblique::{self, ObliqueMatrix};

/// File names used by [`export_trajectories`] for a given seed.
pub fn trajectory_file_names(seed: u64) -> [String; 2] {
    [
        format!("descent_unconstrained_seed{seed}.csv"),
        format!("descent_oblique_seed{seed}.csv"),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentParams {
    /// Ratio of the largest to the smallest curvature of the objective.
    pub condition_number: f64,
    /// Stop once the objective is at or below this value.
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    /// Distance of the random start point from the minimizer.
    pub start_radius: f64,
}

impl Default for DescentParams {
    fn default() -> Self {
        Self {
            condition_number: 100.0,
            tol: 1e-6,
            max_iters: 100_000,
            seed: 0,
            start_radius: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub iter: usize,
    pub x: f64,
    pub y: f64,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentArm {
    pub iterations: usize,
    pub converged: bool,
    pub trajectory: Vec<TrajectoryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentRun {
    pub condition_number: f64,
    pub tol: f64,
    pub seed: u64,
    pub start: [f64; 2],
    pub unconstrained: DescentArm,
    /// Trajectory in the coordinates of the column-normalized problem.
    pub oblique: DescentArm,
}

impl DescentRun {
    /// Unconstrained over constrained iteration count.
    pub fn iteration_ratio(&self) -> f64 {
        self.unconstrained.iterations as f64 / self.oblique.iterations.max(1) as f64
    }
}

/// `f(x) = |D x|^2` for `D = diag(1, sqrt(kappa))`.
fn objective(kappa: f64, x: [f64; 2]) -> f64 {
    x[0] * x[0] + kappa * x[1] * x[1]
}

/// Runs both descent arms from the same seeded start point.
///
/// The unconstrained arm takes fixed steps `1 / L` with `L = 2 kappa`. The
/// constrained arm first projects the columns of `D` onto the unit sphere,
/// which rescales the variables, then writes the iterate as `rho * w` with
/// `w` on the oblique manifold. `w` moves by tangent projection and
/// retraction, `rho` by a plain gradient step; both use `1 / L_hat` from the
/// normalized Hessian.
pub fn descent_demo(params: &DescentParams) -> Result<DescentRun> {
    let kappa = params.condition_number;
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(GeoError::InvalidConfig(format!(
            "condition number must be finite and at least 1, got {kappa}"
        )));
    }
    if !(params.tol > 0.0 && params.start_radius > 0.0) {
        return Err(GeoError::InvalidConfig("tolerance and start radius must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let theta = rng.gen::<f64>() * TAU;
    let start = [params.start_radius * theta.cos(), params.start_radius * theta.sin()];

    let unconstrained = run_unconstrained(kappa, start, params);
    let oblique = run_oblique(kappa, start, params)?;
    Ok(DescentRun {
        condition_number: kappa,
        tol: params.tol,
        seed: params.seed,
        start,
        unconstrained,
        oblique,
    })
}

fn run_unconstrained(kappa: f64, start: [f64; 2], params: &DescentParams) -> DescentArm {
    let step = 1.0 / (2.0 * kappa);
    let mut x = start;
    let mut trajectory = Vec::new();
    let mut iterations = 0;
    loop {
        let f = objective(kappa, x);
        trajectory.push(TrajectoryPoint {
            iter: iterations,
            x: x[0],
            y: x[1],
            f,
        });
        if f <= params.tol || iterations == params.max_iters {
            return DescentArm {
                iterations,
                converged: f <= params.tol,
                trajectory,
            };
        }
        x = [x[0] - step * 2.0 * x[0], x[1] - step * 2.0 * kappa * x[1]];
        iterations += 1;
    }
}

fn run_oblique(kappa: f64, start: [f64; 2], params: &DescentParams) -> Result<DescentArm> {
    let data = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, kappa.sqrt()]])?;
    let scales = crate::linalg::col_norms(&data);
    let unit = oblique::project(&data, oblique::DEFAULT_EPS_ZERO).point.into_inner();
    let h = crate::linalg::matmul(&unit.transpose(), &unit)?;
    // largest eigenvalue of the symmetric 2x2 normalized Hessian / 2
    let (a, b, d) = (h.get(0, 0), h.get(0, 1), h.get(1, 1));
    let lambda_max = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let step = 1.0 / (2.0 * lambda_max);

    let z0 = [start[0] * scales[0], start[1] * scales[1]];
    let mut rho = (z0[0] * z0[0] + z0[1] * z0[1]).sqrt();
    let mut w = ObliqueMatrix::try_new(Matrix::new(2, 1, vec![z0[0] / rho, z0[1] / rho])?)?;
    let mut trajectory = Vec::new();
    let mut iterations = 0;
    loop {
        let z = [rho * w.inner().get(0, 0), rho * w.inner().get(1, 0)];
        let f = objective(kappa, [z[0] / scales[0], z[1] / scales[1]]);
        trajectory.push(TrajectoryPoint {
            iter: iterations,
            x: z[0],
            y: z[1],
            f,
        });
        if f <= params.tol || iterations == params.max_iters {
            return Ok(DescentArm {
                iterations,
                converged: f <= params.tol,
                trajectory,
            });
        }
        let gz = [2.0 * (a * z[0] + b * z[1]), 2.0 * (b * z[0] + d * z[1])];
        let wv = [w.inner().get(0, 0), w.inner().get(1, 0)];
        let grad_rho = wv[0] * gz[0] + wv[1] * gz[1];
        let grad_w = Matrix::new(2, 1, vec![rho * gz[0], rho * gz[1]])?;
        let tangent = oblique::tangent_project(&w, &grad_w)?;
        w = oblique::retract(&tangent, -step / (rho * rho).max(f64::MIN_POSITIVE));
        rho -= step * grad_rho;
        iterations += 1;
    }
}

/// Writes both trajectories as `iter,x,y,f` CSV files into `dir` and returns
/// their paths (unconstrained first).
pub fn export_trajectories(run: &DescentRun, dir: &Path) -> Result<[PathBuf; 2]> {
    if !dir.is_dir() {
        return Err(GeoError::MissingDirectory(dir.to_path_buf()));
    }
    let [u, o] = trajectory_file_names(run.seed).map(|name| dir.join(name));
    write_trajectory(&run.unconstrained.trajectory, &u)?;
    write_trajectory(&run.oblique.trajectory, &o)?;
    Ok([u, o])
}

pub fn write_trajectory(points: &[TrajectoryPoint], path: &Path) -> Result<()> {
    let mut out = String::from("iter,x,y,f\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.iter, p.x, p.y, p.f));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<TrajectoryPoint>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "iter,x,y,f")) => {}
        _ => {
            return Err(GeoError::Parse {
                line: 1,
                msg: "expected header iter,x,y,f".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = |msg: String| GeoError::Parse { line: i + 1, msg };
            let fields: Vec<&str> = l.split(',').collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 fields, found {}", fields.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("{s:?}: {e}")));
            Ok(TrajectoryPoint {
                iter: fields[0].trim().parse().map_err(|e| bad(format!("{e}")))?,
                x: num(fields[1])?,
                y: num(fields[2])?,
                f: num(fields[3])?,
            })
        })
        .collect()
}
