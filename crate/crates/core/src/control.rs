//! Monte Carlo check of the control interpretation: Euler-Maruyama paths of
//! `dX = ξ*(X) dt + √2 dW` under the computed feedback drift, exit counting
//! and the discounted cost functional.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{optimal_drift_1d, optimal_drift_2d};
use crate::error::{Error, Result};
use crate::mesh::{gradient_1d, gradient_2d, Field1D, Field2D, Grid1D, Grid2D};
use crate::model::{running_cost, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub horizon_t: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// One coordinate in 1D, two in 2D.
    pub start_point: Vec<f64>,
    /// A path with distance to the boundary `<= reflect_clip` is exited.
    pub reflect_clip: f64,
    /// Multiplies the feedback drift (1 = optimal feedback, 0 = no control).
    pub drift_scale: f64,
    /// Multiplies the Brownian increment.
    pub noise_scale: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon_t: 5.0,
            dt: 1e-3,
            n_paths: 500,
            seed: 20240607,
            start_point: vec![0.0],
            reflect_clip: 0.05,
            drift_scale: 1.0,
            noise_scale: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon_t >= self.dt) {
            return bad(format!("horizon_t {} is shorter than dt {}", self.horizon_t, self.dt));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.start_point.len() != dim {
            return bad(format!(
                "start_point has {} coordinates, expected {dim}",
                self.start_point.len()
            ));
        }
        if !(self.reflect_clip >= 0.0) {
            return bad("reflect_clip must be nonnegative".into());
        }
        if !(self.drift_scale >= 0.0 && self.noise_scale >= 0.0) {
            return bad("drift_scale and noise_scale must be nonnegative".into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon_t / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOutcome {
    pub exited: bool,
    /// Time of the step that first reached the exit band.
    pub exit_time: Option<f64>,
    pub cost: f64,
    /// Largest relative Fenchel gap at sampled path points (ξ = ξ*).
    pub max_fenchel_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryBatch {
    pub exit_fraction: f64,
    pub cost_estimates: Vec<f64>,
    pub cost_mean: f64,
    pub cost_stderr: f64,
    pub paths: Vec<PathOutcome>,
    pub max_fenchel_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueComparison {
    pub u_at_start: f64,
    pub cost_mean: f64,
    pub cost_stderr: f64,
    /// `cost_mean / u(start)`; absent when `u(start)` vanishes.
    pub ratio: Option<f64>,
}

/// Left-endpoint discounted cost along a sampled path. `states` holds the
/// visited points (at least `drifts.len()` of them); the discount exponent
/// is the trapezoidal integral of `a`.
pub fn discounted_cost<const D: usize>(spec: &ProblemSpec, states: &[[f64; D]], drifts: &[[f64; D]], dt: f64) -> f64 {
    let mut acc = CostAccumulator::default();
    for (k, xi) in drifts.iter().enumerate() {
        let x = &states[k];
        let v = defining_value(x);
        acc.add_running(spec, v, norm(xi), dt);
        if let Some(next) = states.get(k + 1) {
            acc.advance_discount(spec, v, defining_value(next), dt);
        }
    }
    acc.cost
}

/// `b h(|p|) + L(x, ξ) + ξ·p`, nonnegative by Fenchel-Young and zero at
/// the feedback drift.
pub fn fenchel_gap(spec: &ProblemSpec, b: f64, p: &[f64], xi: &[f64]) -> f64 {
    let dot: f64 = p.iter().zip(xi).map(|(p, x)| p * x).sum();
    b * spec.h(norm(p)) + running_cost(spec, b, norm(xi)) + dot
}

fn relative_fenchel_gap(spec: &ProblemSpec, b: f64, p: &[f64], xi: &[f64]) -> f64 {
    let dot: f64 = p.iter().zip(xi).map(|(p, x)| p * x).sum();
    let scale = b * spec.h(norm(p)) + running_cost(spec, b, norm(xi)) + dot.abs();
    if scale == 0.0 {
        0.0
    } else {
        fenchel_gap(spec, b, p, xi).abs() / scale
    }
}

#[derive(Default)]
struct CostAccumulator {
    exponent: f64,
    cost: f64,
}

impl CostAccumulator {
    fn add_running(&mut self, spec: &ProblemSpec, v: f64, xi_norm: f64, dt: f64) {
        let l = running_cost(spec, spec.b_of(v), xi_norm);
        self.cost += (-self.exponent).exp() * (l + spec.f_level) * dt;
    }

    fn advance_discount(&mut self, spec: &ProblemSpec, v_now: f64, v_next: f64, dt: f64) {
        self.exponent += 0.5 * (spec.a_of(v_now) + spec.a_of(v_next)) * dt;
    }
}

#[inline]
fn norm(x: &[f64]) -> f64 {
    x.iter().map(|c| c * c).sum::<f64>().sqrt()
}

/// `1 - |x|²` floored at the 2D mesh floor; only used on paths that have not
/// exited, where it stays well above the floor.
#[inline]
fn defining_value<const D: usize>(x: &[f64; D]) -> f64 {
    (1.0 - x.iter().map(|c| c * c).sum::<f64>()).max(crate::mesh::V_FLOOR_2D)
}

/// Interpolated fields a path needs.
trait PathModel<const D: usize>: Sync {
    fn drift(&self, x: &[f64; D]) -> [f64; D];
    fn gradient(&self, x: &[f64; D]) -> [f64; D];
    fn distance(&self, x: &[f64; D]) -> f64;
}

fn locate(x: f64, x0: f64, dx: f64, n: usize) -> (usize, f64) {
    let s = ((x - x0) / dx).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

struct Model1D {
    x0: f64,
    dx: f64,
    half_width: f64,
    drift: Vec<f64>,
    grad: Vec<f64>,
}

impl Model1D {
    fn lerp(&self, f: &[f64], x: f64) -> f64 {
        let (i, t) = locate(x, self.x0, self.dx, f.len());
        f[i] * (1.0 - t) + f[i + 1] * t
    }
}

impl PathModel<1> for Model1D {
    fn drift(&self, x: &[f64; 1]) -> [f64; 1] {
        [self.lerp(&self.drift, x[0])]
    }
    fn gradient(&self, x: &[f64; 1]) -> [f64; 1] {
        [self.lerp(&self.grad, x[0])]
    }
    fn distance(&self, x: &[f64; 1]) -> f64 {
        self.half_width - x[0].abs()
    }
}

struct Model2D {
    n: usize,
    dx: f64,
    drift: [Vec<f64>; 2],
    grad: [Vec<f64>; 2],
}

impl Model2D {
    fn bilerp(&self, f: &[f64], x: &[f64; 2]) -> f64 {
        let (i, s) = locate(x[0], -1.0, self.dx, self.n);
        let (j, t) = locate(x[1], -1.0, self.dx, self.n);
        let n = self.n;
        let k = i * n + j;
        (1.0 - s) * ((1.0 - t) * f[k] + t * f[k + 1]) + s * ((1.0 - t) * f[k + n] + t * f[k + n + 1])
    }
}

impl PathModel<2> for Model2D {
    fn drift(&self, x: &[f64; 2]) -> [f64; 2] {
        [self.bilerp(&self.drift[0], x), self.bilerp(&self.drift[1], x)]
    }
    fn gradient(&self, x: &[f64; 2]) -> [f64; 2] {
        [self.bilerp(&self.grad[0], x), self.bilerp(&self.grad[1], x)]
    }
    fn distance(&self, x: &[f64; 2]) -> f64 {
        1.0 - norm(x)
    }
}

/// Copies the nearest interior value into every masked-out point.
fn fill_from_interior(values: &[f64], grid: &Grid2D) -> Vec<f64> {
    let inside: Vec<usize> = (0..grid.len()).filter(|&k| grid.interior[k]).collect();
    let mut out = values.to_vec();
    for k in 0..grid.len() {
        if grid.interior[k] {
            continue;
        }
        let (x1, x2) = grid.coords(k);
        let nearest = inside
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let da = { let (y1, y2) = grid.coords(a); (y1 - x1).powi(2) + (y2 - x2).powi(2) };
                let db = { let (y1, y2) = grid.coords(b); (y1 - x1).powi(2) + (y2 - x2).powi(2) };
                da.total_cmp(&db)
            });
        if let Some(m) = nearest {
            out[k] = values[m];
        }
    }
    out
}

fn run_paths<const D: usize, M: PathModel<D>>(
    spec: &ProblemSpec,
    model: &M,
    sim: &SimConfig,
    max_drift: f64,
    stability_limit: f64,
) -> Result<TrajectoryBatch> {
    let start: [f64; D] = std::array::from_fn(|c| sim.start_point[c]);
    if !(model.distance(&start) > sim.reflect_clip) {
        return Err(Error::InvalidParameter(format!(
            "start point {:?} is not inside the truncated domain",
            sim.start_point
        )));
    }
    let d0 = model.drift(&start);
    if let Some(c) = d0.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite(c));
    }
    let step = sim.dt * sim.drift_scale * max_drift;
    if step > stability_limit {
        return Err(Error::Stability {
            step,
            limit: stability_limit,
        });
    }

    let steps = sim.steps();
    let paths: Vec<PathOutcome> = (0..sim.n_paths)
        .into_par_iter()
        .map(|p| simulate_path(spec, model, sim, start, steps, p as u64))
        .collect();

    let n = paths.len() as f64;
    let exits = paths.iter().filter(|p| p.exited).count();
    let costs: Vec<f64> = paths.iter().map(|p| p.cost).collect();
    let mean = costs.iter().sum::<f64>() / n;
    let stderr = if paths.len() > 1 {
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let max_gap = paths.iter().map(|p| p.max_fenchel_gap).fold(0.0, f64::max);
    Ok(TrajectoryBatch {
        exit_fraction: exits as f64 / n,
        cost_estimates: costs,
        cost_mean: mean,
        cost_stderr: stderr,
        paths,
        max_fenchel_gap: max_gap,
    })
}

fn simulate_path<const D: usize, M: PathModel<D>>(
    spec: &ProblemSpec,
    model: &M,
    sim: &SimConfig,
    start: [f64; D],
    steps: usize,
    path: u64,
) -> PathOutcome {
    let mut rng = ChaCha12Rng::seed_from_u64(sim.seed);
    rng.set_stream(path);
    let noise = sim.noise_scale * (2.0 * sim.dt).sqrt();
    let mut x = start;
    let mut v = defining_value(&x);
    let mut acc = CostAccumulator::default();
    let mut max_gap = 0.0f64;
    for k in 0..steps {
        let xi = model.drift(&x).map(|d| sim.drift_scale * d);
        acc.add_running(spec, v, norm(&xi), sim.dt);

        let p = model.gradient(&x);
        let pn = norm(&p);
        if pn > 0.0 {
            let b = spec.b_of(v);
            let feedback = p.map(|c| -b * spec.h_prime(pn) * c / pn);
            max_gap = max_gap.max(relative_fenchel_gap(spec, b, &p, &feedback));
        }

        for c in 0..D {
            let g: f64 = StandardNormal.sample(&mut rng);
            x[c] += xi[c] * sim.dt + noise * g;
        }
        let v_next = defining_value(&x);
        acc.advance_discount(spec, v, v_next, sim.dt);
        v = v_next;
        if model.distance(&x) <= sim.reflect_clip {
            return PathOutcome {
                exited: true,
                exit_time: Some((k + 1) as f64 * sim.dt),
                cost: acc.cost,
                max_fenchel_gap: max_gap,
            };
        }
    }
    PathOutcome {
        exited: false,
        exit_time: None,
        cost: acc.cost,
        max_fenchel_gap: max_gap,
    }
}

fn model_1d(spec: &ProblemSpec, grid: &Grid1D, u: &Field1D) -> Model1D {
    Model1D {
        x0: grid.x[0],
        dx: grid.dx,
        half_width: grid.half_width,
        drift: optimal_drift_1d(spec, grid, u).field.values,
        grad: gradient_1d(u, grid).values,
    }
}

/// Simulates 1D paths under the interpolated feedback drift of `u`.
///
/// The step is rejected when `dt · max|ξ*|` exceeds the half-width of the
/// computational interval.
pub fn simulate_1d(spec: &ProblemSpec, grid: &Grid1D, u: &Field1D, sim: &SimConfig) -> Result<TrajectoryBatch> {
    sim.validate(1)?;
    let model = model_1d(spec, grid, u);
    let max_drift = model.drift.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    run_paths(spec, &model, sim, max_drift, grid.half_width - grid.delta)
}

fn model_2d(spec: &ProblemSpec, grid: &Grid2D, u: &Field2D) -> Model2D {
    let (d1, d2) = optimal_drift_2d(spec, grid, u).field;
    let (g1, g2) = gradient_2d(u, grid);
    Model2D {
        n: grid.n,
        dx: grid.dx,
        drift: [fill_from_interior(&d1.values, grid), fill_from_interior(&d2.values, grid)],
        grad: [fill_from_interior(&g1.values, grid), fill_from_interior(&g2.values, grid)],
    }
}

/// 2D counterpart of [`simulate_1d`] with bilinear interpolation.
pub fn simulate_2d(spec: &ProblemSpec, grid: &Grid2D, u: &Field2D, sim: &SimConfig) -> Result<TrajectoryBatch> {
    sim.validate(2)?;
    let model = model_2d(spec, grid, u);
    let max_drift = (0..grid.len())
        .map(|k| model.drift[0][k].hypot(model.drift[1][k]))
        .fold(0.0f64, f64::max);
    run_paths(spec, &model, sim, max_drift, 1.0 - grid.delta)
}

fn compare(u_at_start: f64, batch: &TrajectoryBatch) -> ValueComparison {
    ValueComparison {
        u_at_start,
        cost_mean: batch.cost_mean,
        cost_stderr: batch.cost_stderr,
        ratio: (u_at_start.abs() > 1e-300).then(|| batch.cost_mean / u_at_start),
    }
}

pub fn verify_value_1d(
    spec: &ProblemSpec,
    grid: &Grid1D,
    u: &Field1D,
    sim: &SimConfig,
) -> Result<(ValueComparison, TrajectoryBatch)> {
    let batch = simulate_1d(spec, grid, u, sim)?;
    let m = model_1d(spec, grid, u);
    let u0 = m.lerp(&u.values, sim.start_point[0]);
    Ok((compare(u0, &batch), batch))
}

pub fn verify_value_2d(
    spec: &ProblemSpec,
    grid: &Grid2D,
    u: &Field2D,
    sim: &SimConfig,
) -> Result<(ValueComparison, TrajectoryBatch)> {
    let batch = simulate_2d(spec, grid, u, sim)?;
    let m = model_2d(spec, grid, u);
    let filled = fill_from_interior(&u.values, grid);
    let u0 = m.bilerp(&filled, &[sim.start_point[0], sim.start_point[1]]);
    Ok((compare(u0, &batch), batch))
}
