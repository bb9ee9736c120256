//! Embedding a complete tree into Euclidean or hyperbolic space by stress
//! minimization, and measuring how far embedded distances stray from hop
//! distances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{GeoError, Result};
use crate::linalg::{dot, norm};
use crate::lorentz::{self, exp_origin_raw, Curvature, LorentzPoint};
use crate::scalar::sinhc;

/// A complete `branching`-ary tree of the given depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeSpec {
    pub branching: usize,
    pub depth: usize,
    pub edge_length: f64,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            branching: 2,
            depth: 5,
            edge_length: 1.0,
        }
    }
}

impl TreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.branching < 2 || self.depth < 1 || !(self.edge_length > 0.0) {
            return Err(GeoError::InvalidConfig(format!(
                "tree needs branching >= 2, depth >= 1 and a positive edge length, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        (0..=self.depth).map(|l| self.branching.pow(l as u32)).sum()
    }

    /// Nodes are stored breadth-first; the root is 0.
    fn parent(&self, i: usize) -> usize {
        (i - 1) / self.branching
    }

    fn level(&self, mut i: usize) -> usize {
        let mut l = 0;
        while i > 0 {
            i = self.parent(i);
            l += 1;
        }
        l
    }

    /// `edge_length` times the hop count between nodes `i` and `j`.
    pub fn tree_distance(&self, mut i: usize, mut j: usize) -> f64 {
        let (mut li, mut lj) = (self.level(i), self.level(j));
        let mut hops = 0usize;
        while i != j {
            if li >= lj {
                i = self.parent(i);
                li -= 1;
            } else {
                j = self.parent(j);
                lj -= 1;
            }
            hops += 1;
        }
        hops as f64 * self.edge_length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingSpace {
    Euclidean,
    Lorentz { curvature: f64 },
}

impl EmbeddingSpace {
    pub fn label(&self) -> String {
        match self {
            Self::Euclidean => "euclidean".into(),
            Self::Lorentz { curvature } => format!("lorentz(c={curvature})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingParams {
    pub space: EmbeddingSpace,
    pub dim: usize,
    pub steps: usize,
    /// Initial (and largest) step size; the line search only shrinks it.
    pub step_size: f64,
    pub seed: u64,
    /// Standard deviation of the Gaussian initialization.
    pub init_std: f64,
    /// Curvature continuation stages for Lorentz runs; 1 disables it.
    pub anneal_stages: usize,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        Self {
            space: EmbeddingSpace::Lorentz { curvature: 1.0 },
            dim: 2,
            steps: 5000,
            step_size: 0.01,
            seed: 0,
            init_std: 0.1,
            anneal_stages: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingRun {
    pub space: EmbeddingSpace,
    pub dim: usize,
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Mean over node pairs of `|d_embedded - d_tree| / d_tree`.
    pub final_distortion: f64,
    /// `max(d_e / d_t) * max(d_t / d_e)`, at least one.
    pub worst_case_distortion: f64,
    pub final_stress: f64,
    /// Stress after every accepted step of the final stage, starting with
    /// its initial value.
    pub stress_history: Vec<f64>,
}

struct Problem {
    pairs: Vec<(usize, usize, f64)>,
    n: usize,
    dim: usize,
    geometry: Geometry,
}

#[derive(Clone, Copy)]
enum Geometry {
    Euclidean,
    Lorentz(Curvature<f64>),
}

impl Problem {
    fn point<'a>(&self, coords: &'a [f64], i: usize) -> &'a [f64] {
        &coords[i * self.dim..(i + 1) * self.dim]
    }

    fn lift_all(&self, coords: &[f64], c: Curvature<f64>) -> Vec<LorentzPoint<f64>> {
        (0..self.n).map(|i| exp_origin_raw(self.point(coords, i), c)).collect()
    }

    fn distances(&self, coords: &[f64]) -> Vec<f64> {
        match self.geometry {
            Geometry::Euclidean => self
                .pairs
                .iter()
                .map(|&(i, j, _)| euclidean(self.point(coords, i), self.point(coords, j)))
                .collect(),
            Geometry::Lorentz(c) => {
                let pts = self.lift_all(coords, c);
                self.pairs
                    .iter()
                    .map(|&(i, j, _)| {
                        let inner = dot(pts[i].space(), pts[j].space()) - pts[i].time() * pts[j].time();
                        let arg = (-c.value() * inner).max(1.0 + lorentz::DEFAULT_EPS_CLIP);
                        arg.acosh() / c.sqrt()
                    })
                    .collect()
            }
        }
    }

    fn stress(&self, coords: &[f64]) -> f64 {
        self.distances(coords)
            .iter()
            .zip(&self.pairs)
            .map(|(d, &(_, _, t))| (d - t) * (d - t))
            .sum()
    }

    fn gradient(&self, coords: &[f64]) -> Vec<f64> {
        let mut grad = self.raw_gradient(coords);
        if let Geometry::Lorentz(c) = self.geometry {
            for (node, g) in grad.chunks_mut(self.dim).enumerate() {
                precondition(self.point(coords, node), g, c);
            }
        }
        grad
    }

    fn raw_gradient(&self, coords: &[f64]) -> Vec<f64> {
        let dists = self.distances(coords);
        let mut grad = vec![0.0; coords.len()];
        let lifted = match self.geometry {
            Geometry::Lorentz(c) => Some((self.lift_all(coords, c), c)),
            Geometry::Euclidean => None,
        };
        for (&(i, j, t), &d) in self.pairs.iter().zip(&dists) {
            let w = 2.0 * (d - t);
            let (gi, gj) = match &lifted {
                None => {
                    let (a, b) = (self.point(coords, i), self.point(coords, j));
                    if d == 0.0 {
                        continue;
                    }
                    let gi: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y) / d).collect();
                    let gj: Vec<f64> = gi.iter().map(|v| -v).collect();
                    (gi, gj)
                }
                Some((pts, c)) => {
                    let eps = lorentz::DEFAULT_EPS_CLIP;
                    let gi = lorentz::distance_gradient_raw(self.point(coords, i), &pts[j], *c, eps);
                    let gj = lorentz::distance_gradient_raw(self.point(coords, j), &pts[i], *c, eps);
                    match (gi, gj) {
                        (Some(gi), Some(gj)) => (gi, gj),
                        _ => continue,
                    }
                }
            };
            for k in 0..self.dim {
                grad[i * self.dim + k] += w * gi[k];
                grad[j * self.dim + k] += w * gj[k];
            }
        }
        grad
    }
}

/// Turns a gradient in tangent coordinates into the Riemannian gradient of the
/// pulled-back hyperbolic metric. Radial directions are isometric; angular
/// ones are stretched by `sinhc(sqrt(c) |a|)`, so their component is divided
/// by its square.
fn precondition(a: &[f64], g: &mut [f64], c: Curvature<f64>) {
    let r = norm(a);
    if r == 0.0 {
        return;
    }
    let stretch = sinhc(c.sqrt() * r);
    let radial = dot(a, g) / (r * r);
    for (gk, ak) in g.iter_mut().zip(a) {
        let along = radial * ak;
        *gk = along + (*gk - along) / (stretch * stretch);
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Curvatures visited by the run; `None` for the Euclidean arm.
fn curvature_schedule(params: &EmbeddingParams) -> Result<Vec<Option<Curvature<f64>>>> {
    match params.space {
        EmbeddingSpace::Euclidean => Ok(vec![None]),
        EmbeddingSpace::Lorentz { curvature } => {
            let stages = params.anneal_stages.max(1);
            let start = lorentz::MIN_CURVATURE.min(curvature);
            (0..stages)
                .map(|k| {
                    let c = if stages == 1 {
                        curvature
                    } else {
                        let t = k as f64 / (stages - 1) as f64;
                        start * (curvature / start).powf(t)
                    };
                    Curvature::new(c).map(Some)
                })
                .collect()
        }
    }
}

/// Backtracking gradient descent at fixed geometry. Returns the stress after
/// every accepted step, preceded by the starting stress.
fn descend(
    problem: &Problem,
    coords: &mut Vec<f64>,
    steps: usize,
    max_step: f64,
    offset: usize,
) -> Result<Vec<f64>> {
    let mut stress = problem.stress(coords);
    if !stress.is_finite() {
        return Err(GeoError::Divergence {
            step: offset,
            hint: max_step * 0.5,
        });
    }
    let mut history = vec![stress];
    let mut step = max_step;
    for it in 0..steps {
        let grad = problem.gradient(coords);
        if norm(&grad) == 0.0 {
            break;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = coords.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let s = problem.stress(&trial);
            if s.is_nan() {
                return Err(GeoError::Divergence {
                    step: offset + it,
                    hint: step * 0.5,
                });
            }
            if s <= stress {
                *coords = trial;
                stress = s;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        history.push(stress);
        step = (step * 1.25).min(max_step);
    }
    Ok(history)
}

/// Fits node coordinates so that embedded distances match tree distances.
///
/// Minimizes the stress `sum_{i<j} (d(x_i, x_j) - d_tree(i, j))^2` by
/// gradient descent with a backtracking step. Lorentz runs optimize tangent
/// vectors at the origin, lift them with the exponential map and descend
/// along the Riemannian gradient. From a random start the hyperbolic stress
/// has many poor local minima, so Lorentz runs split the step budget over
/// `anneal_stages` stages whose curvature rises geometrically from
/// [`lorentz::MIN_CURVATURE`] to the target. The run is deterministic for a
/// given seed.
pub fn embed_tree(spec: &TreeSpec, params: &EmbeddingParams) -> Result<EmbeddingRun> {
    spec.validate()?;
    if params.dim < 2 {
        return Err(GeoError::InvalidConfig(format!(
            "embedding dimension must be at least 2, got {}",
            params.dim
        )));
    }
    if !(params.step_size > 0.0 && params.init_std > 0.0) {
        return Err(GeoError::InvalidConfig(
            "step size and initialization spread must be positive".into(),
        ));
    }
    let geometry = match params.space {
        EmbeddingSpace::Euclidean => Geometry::Euclidean,
        EmbeddingSpace::Lorentz { curvature } => Geometry::Lorentz(Curvature::new(curvature)?),
    };
    let n = spec.num_nodes();
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j, spec.tree_distance(i, j)));
        }
    }
    let mut problem = Problem {
        pairs,
        n,
        dim: params.dim,
        geometry,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, params.init_std).expect("positive spread");
    let mut coords: Vec<f64> = (0..n * params.dim).map(|_| normal.sample(&mut rng)).collect();

    let schedule = curvature_schedule(params)?;
    let mut history = Vec::new();
    let mut done = 0;
    for (stage, &c) in schedule.iter().enumerate() {
        if let Some(c) = c {
            problem.geometry = Geometry::Lorentz(c);
        }
        let budget = if stage + 1 == schedule.len() {
            params.steps - done
        } else {
            params.steps / schedule.len()
        };
        history = descend(&problem, &mut coords, budget, params.step_size, done)?;
        done += budget;
    }
    let stress = *history.last().expect("history holds the initial stress");

    let dists = problem.distances(&coords);
    let mut mean_rel = 0.0;
    let (mut expand, mut contract) = (0.0_f64, 0.0_f64);
    for (&d, &(_, _, t)) in dists.iter().zip(&problem.pairs) {
        mean_rel += (d - t).abs() / t;
        expand = expand.max(d / t);
        contract = contract.max(t / d);
    }
    mean_rel /= problem.pairs.len() as f64;

    Ok(EmbeddingRun {
        space: params.space,
        dim: params.dim,
        steps: params.steps,
        step_size: params.step_size,
        seed: params.seed,
        final_distortion: mean_rel,
        worst_case_distortion: expand * contract,
        final_stress: stress,
        stress_history: history,
    })
}
