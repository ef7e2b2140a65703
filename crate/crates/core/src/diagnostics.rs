//! Verification battery: residual, barrier sandwich, convexity, feedback
//! drift and scaling regressions.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{
    defining_function_1d, defining_function_2d, gradient_1d, gradient_2d, hessian_min_eigenvalue_2d,
    laplacian_2d, second_difference_1d, Field1D, Field2D, Grid1D, Grid2D,
};
use crate::model::{classify_regime, critical_constant, ProblemSpec, RegimeKind, DEFAULT_CRITICAL_TOL};
use crate::solver::SolveReport;

/// Pointwise values with non-finite entries replaced by 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Zeroed<F> {
    pub field: F,
    pub nonfinite: usize,
}

fn zero_nonfinite(values: &mut [f64]) -> usize {
    let mut count = 0;
    for v in values.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
            count += 1;
        }
    }
    count
}

/// `-u'' + b h(|u'|) + a u - f` in 1D. The second difference uses `ghost`
/// beyond the ends (the Dirichlet value); without one the ends report 0.
pub fn residual_1d(spec: &ProblemSpec, grid: &Grid1D, u: &Field1D, ghost: Option<f64>) -> Zeroed<Field1D> {
    let v = defining_function_1d(grid);
    let d1 = gradient_1d(u, grid);
    let d2 = second_difference_1d(u, grid, ghost);
    let n = grid.n;
    let mut values: Vec<f64> = (0..n)
        .map(|i| {
            if ghost.is_none() && (i == 0 || i == n - 1) {
                return 0.0;
            }
            let vi = v.values[i];
            -d2.values[i] + spec.b_of(vi) * spec.h(d1.values[i].abs()) + spec.a_of(vi) * u.values[i] - spec.f_level
        })
        .collect();
    let nonfinite = zero_nonfinite(&mut values);
    Zeroed {
        field: Field1D { values },
        nonfinite,
    }
}

/// 2D residual on the interior mask; 0 elsewhere.
pub fn residual_2d(spec: &ProblemSpec, grid: &Grid2D, u: &Field2D) -> Zeroed<Field2D> {
    let v = defining_function_2d(grid);
    let (g1, g2) = gradient_2d(u, grid);
    let lap = laplacian_2d(u, grid);
    let mut values: Vec<f64> = (0..grid.len())
        .map(|k| {
            if !grid.interior[k] {
                return 0.0;
            }
            let vk = v.values[k];
            let p = g1.values[k].hypot(g2.values[k]);
            -lap.values[k] + spec.b_of(vk) * spec.h(p) + spec.a_of(vk) * u.values[k] - spec.f_level
        })
        .collect();
    let nonfinite = zero_nonfinite(&mut values);
    Zeroed {
        field: Field2D { n: grid.n, values },
        nonfinite,
    }
}

/// Largest `|values|` among points with `distance >= band`.
pub fn max_abs_outside_band(values: &[f64], distance: &[f64], band: f64) -> f64 {
    values
        .iter()
        .zip(distance)
        .filter(|(_, &d)| d >= band)
        .map(|(r, _)| r.abs())
        .fold(0.0, f64::max)
}

/// Distance `1 - |x|` to the unit circle for every 2D grid point.
pub fn distance_2d(grid: &Grid2D) -> Vec<f64> {
    (0..grid.len()).map(|k| 1.0 - grid.radius_sq(k).sqrt()).collect()
}

fn envelope_constant(spec: &ProblemSpec) -> Result<(f64, f64)> {
    let regime = classify_regime(spec, DEFAULT_CRITICAL_TOL)?;
    if regime.kind != RegimeKind::GradientDominant {
        return Err(Error::UnsupportedRegime(regime.kind));
    }
    Ok((critical_constant(spec, &regime)?, regime.power_gamma()?))
}

fn envelope(spec: &ProblemSpec, v: &[f64], plus: f64, minus: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let (c, gamma) = envelope_constant(spec)?;
    let base: Vec<f64> = v.iter().map(|&v| c * v.powf(-gamma)).collect();
    Ok((
        base.iter().map(|w| plus * w).collect(),
        base.iter().map(|w| minus * w).collect(),
    ))
}

/// `(upper, lower) = (plus, minus) · C* v^-γ` on the floored 1D grid.
pub fn barrier_envelope_1d(spec: &ProblemSpec, grid: &Grid1D, plus: f64, minus: f64) -> Result<(Field1D, Field1D)> {
    let (up, lo) = envelope(spec, &defining_function_1d(grid).values, plus, minus)?;
    Ok((Field1D { values: up }, Field1D { values: lo }))
}

pub fn barrier_envelope_2d(spec: &ProblemSpec, grid: &Grid2D, plus: f64, minus: f64) -> Result<(Field2D, Field2D)> {
    let (up, lo) = envelope(spec, &defining_function_2d(grid).values, plus, minus)?;
    Ok((Field2D { n: grid.n, values: up }, Field2D { n: grid.n, values: lo }))
}

#[inline]
fn violates(u: f64, lower: f64, upper: f64) -> bool {
    let eps = 1e-9 * upper.abs();
    u < lower - eps || u > upper + eps
}

/// Points outside `[lower - ε, upper + ε]`, `ε = 1e-9 · upper`.
pub fn check_barriers(u: &[f64], lower: &[f64], upper: &[f64]) -> usize {
    u.iter()
        .zip(lower.iter().zip(upper))
        .filter(|(&u, (&lo, &up))| violates(u, lo, up))
        .count()
}

/// Indices of barrier violations.
pub fn barrier_violation_indices(u: &[f64], lower: &[f64], upper: &[f64]) -> Vec<usize> {
    (0..u.len()).filter(|&i| violates(u[i], lower[i], upper[i])).collect()
}

/// Clamps `u` into `[lower, upper]` pointwise. This post-processing step
/// only exists to reproduce the reference barrier check and is never
/// applied implicitly.
pub fn clamp_into_envelope(u: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    u.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&u, (&lo, &up))| u.min(up).max(lo))
        .collect()
}

/// Fraction of interior points with a positive second difference.
pub fn convexity_1d(u: &Field1D) -> f64 {
    let u = &u.values;
    if u.len() < 3 {
        return 0.0;
    }
    let positive = u.windows(3).filter(|w| w[2] - 2.0 * w[1] + w[0] > 0.0).count();
    positive as f64 / (u.len() - 2) as f64
}

/// Fraction of interior points with `|x| < radius_cut` whose discrete
/// Hessian has a positive smallest eigenvalue.
pub fn convexity_2d(u: &Field2D, grid: &Grid2D, radius_cut: f64) -> f64 {
    let lam = hessian_min_eigenvalue_2d(u, grid);
    let cut2 = radius_cut * radius_cut;
    let (mut total, mut positive) = (0usize, 0usize);
    for k in 0..grid.len() {
        if grid.interior[k] && grid.radius_sq(k) < cut2 {
            total += 1;
            if lam.values[k] > 0.0 {
                positive += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        positive as f64 / total as f64
    }
}

/// Feedback drift `-b l0 q |u'|^{q-1} sign(u')`.
pub fn optimal_drift_1d(spec: &ProblemSpec, grid: &Grid1D, u: &Field1D) -> Zeroed<Field1D> {
    let v = defining_function_1d(grid);
    let du = gradient_1d(u, grid);
    let mut values: Vec<f64> = du
        .values
        .iter()
        .zip(&v.values)
        .map(|(&g, &v)| {
            if g == 0.0 {
                0.0
            } else {
                -spec.b_of(v) * spec.h_prime(g.abs()) * g.signum()
            }
        })
        .collect();
    let nonfinite = zero_nonfinite(&mut values);
    Zeroed {
        field: Field1D { values },
        nonfinite,
    }
}

/// Feedback drift `-b h'(|∇u|) ∇u/|∇u|` on the interior mask; the zero
/// vector elsewhere and where the gradient vanishes.
pub fn optimal_drift_2d(spec: &ProblemSpec, grid: &Grid2D, u: &Field2D) -> Zeroed<(Field2D, Field2D)> {
    let v = defining_function_2d(grid);
    let (g1, g2) = gradient_2d(u, grid);
    let len = grid.len();
    let mut d1 = vec![0.0; len];
    let mut d2 = vec![0.0; len];
    for k in 0..len {
        if !grid.interior[k] {
            continue;
        }
        let p = g1.values[k].hypot(g2.values[k]);
        if p == 0.0 {
            continue;
        }
        let scale = -spec.b_of(v.values[k]) * spec.h_prime(p) / p;
        d1[k] = scale * g1.values[k];
        d2[k] = scale * g2.values[k];
    }
    let nonfinite = zero_nonfinite(&mut d1) + zero_nonfinite(&mut d2);
    Zeroed {
        field: (Field2D { n: grid.n, values: d1 }, Field2D { n: grid.n, values: d2 }),
        nonfinite,
    }
}

/// `max_i |ξ(x_i) + ξ(-x_i)| / max|ξ|` for a field on a symmetric grid.
pub fn antisymmetry_error(drift: &[f64]) -> f64 {
    let scale = drift.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let n = drift.len();
    (0..n).map(|i| (drift[i] + drift[n - 1 - i]).abs()).fold(0.0, f64::max) / scale
}

/// Fraction of interior points with `r_min < |x| < r_max` whose drift has a
/// negative radial component.
pub fn inward_fraction_2d(grid: &Grid2D, drift: &(Field2D, Field2D), r_min: f64, r_max: f64) -> f64 {
    let (mut total, mut inward) = (0usize, 0usize);
    for k in 0..grid.len() {
        let r = grid.radius_sq(k).sqrt();
        if !grid.interior[k] || r <= r_min || r >= r_max {
            continue;
        }
        total += 1;
        let (x1, x2) = grid.coords(k);
        if x1 * drift.0.values[k] + x2 * drift.1.values[k] < 0.0 {
            inward += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        inward as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub point_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitKind {
    /// `log u` against `log d`.
    PowerLaw,
    /// `u` against `log(1/d)`.
    SemiLog,
}

pub const DEFAULT_FIT_WINDOW: (f64, f64) = (0.01, 0.3);

/// Variance at the rounding level of the mean counts as zero.
fn degenerate(ss: f64, m: f64, n: f64) -> bool {
    ss <= n * (64.0 * f64::EPSILON * m.abs()).powi(2)
}

fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let slope = if degenerate(syy, my, n) { 0.0 } else { slope };
    let intercept = my - slope * mx;
    if degenerate(syy, my, n) || degenerate(sxx, mx, n) {
        warn!("degenerate regression data, reporting r^2 = 0");
        return (slope, intercept, 0.0);
    }
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum();
    (slope, intercept, (1.0 - ss_res / syy).clamp(0.0, 1.0))
}

/// Least-squares fit over points with `d` strictly inside `window`.
pub fn fit(kind: FitKind, distance: &[f64], u: &[f64], window: (f64, f64)) -> Result<FitResult> {
    let (d_min, d_max) = window;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&d, &u) in distance.iter().zip(u) {
        if !(d > d_min && d < d_max) || !u.is_finite() {
            continue;
        }
        match kind {
            FitKind::PowerLaw => {
                if u <= 0.0 {
                    return Err(Error::NonPositive(u));
                }
                xs.push(d.ln());
                ys.push(u.ln());
            }
            FitKind::SemiLog => {
                xs.push((1.0 / d).ln());
                ys.push(u);
            }
        }
    }
    if xs.len() < 3 {
        return Err(Error::EmptyWindow {
            d_min,
            d_max,
            found: xs.len(),
        });
    }
    let (slope, intercept, r_squared) = least_squares(&xs, &ys);
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        window,
        point_count: xs.len(),
    })
}

pub fn powerlaw_fit_1d(u: &Field1D, grid: &Grid1D, window: (f64, f64)) -> Result<FitResult> {
    fit(FitKind::PowerLaw, &grid.distance(), &u.values, window)
}

pub fn semilog_fit_1d(u: &Field1D, grid: &Grid1D, window: (f64, f64)) -> Result<FitResult> {
    fit(FitKind::SemiLog, &grid.distance(), &u.values, window)
}

/// `(d, u)` along the centre column `j = n/2`, interior points only.
pub fn center_slice(u: &Field2D, grid: &Grid2D) -> (Vec<f64>, Vec<f64>) {
    let j = grid.center_column();
    (0..grid.n)
        .map(|i| grid.idx(i, j))
        .filter(|&k| grid.interior[k])
        .map(|k| (1.0 - grid.radius_sq(k).sqrt(), u.values[k]))
        .unzip()
}

pub fn powerlaw_fit_2d_slice(u: &Field2D, grid: &Grid2D, window: (f64, f64)) -> Result<FitResult> {
    let (d, vals) = center_slice(u, grid);
    fit(FitKind::PowerLaw, &d, &vals, window)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsOptions {
    /// Residual exclusion band as a multiple of δ.
    pub band_factor: f64,
    pub plus: f64,
    pub minus: f64,
    pub window: (f64, f64),
    /// Clamp into the envelope before the barrier check.
    pub clamp: bool,
    /// Radius for the 2D convexity fraction.
    pub radius_cut: f64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        Self {
            band_factor: 2.0,
            plus: 1.02,
            minus: 0.98,
            window: DEFAULT_FIT_WINDOW,
            clamp: false,
            radius_cut: 0.85f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub max_residual_interior: f64,
    pub residual_nonfinite: usize,
    /// `None` outside the gradient-dominant regime.
    pub barrier_violations: Option<usize>,
    pub convexity_fraction: f64,
    pub powerlaw_fit: Option<FitResult>,
    pub semilog_fit: Option<FitResult>,
    pub drift_min: f64,
    pub drift_max: f64,
    pub drift_nonfinite: usize,
}

fn extrema(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn fit_or_none(r: Result<FitResult>) -> Option<FitResult> {
    r.map_err(|e| warn!("fit skipped: {e}")).ok()
}

pub fn diagnose_1d(
    spec: &ProblemSpec,
    grid: &Grid1D,
    report: &SolveReport<Field1D>,
    opts: &DiagnosticsOptions,
) -> DiagnosticsReport {
    let u = &report.solution;
    let res = residual_1d(spec, grid, u, Some(report.boundary_value));
    let max_res = max_abs_outside_band(&res.field.values, &grid.distance(), opts.band_factor * grid.delta);
    let barrier_violations = barrier_envelope_1d(spec, grid, opts.plus, opts.minus).ok().map(|(up, lo)| {
        if opts.clamp {
            let c = clamp_into_envelope(&u.values, &lo.values, &up.values);
            check_barriers(&c, &lo.values, &up.values)
        } else {
            check_barriers(&u.values, &lo.values, &up.values)
        }
    });
    let drift = optimal_drift_1d(spec, grid, u);
    let (drift_min, drift_max) = extrema(drift.field.values.iter().copied());
    DiagnosticsReport {
        max_residual_interior: max_res,
        residual_nonfinite: res.nonfinite,
        barrier_violations,
        convexity_fraction: convexity_1d(u),
        powerlaw_fit: fit_or_none(powerlaw_fit_1d(u, grid, opts.window)),
        semilog_fit: fit_or_none(semilog_fit_1d(u, grid, opts.window)),
        drift_min,
        drift_max,
        drift_nonfinite: drift.nonfinite,
    }
}

pub fn diagnose_2d(
    spec: &ProblemSpec,
    grid: &Grid2D,
    report: &SolveReport<Field2D>,
    opts: &DiagnosticsOptions,
) -> DiagnosticsReport {
    let u = &report.solution;
    let res = residual_2d(spec, grid, u);
    let max_res = max_abs_outside_band(&res.field.values, &distance_2d(grid), opts.band_factor * grid.delta);
    let mask = |vals: &[f64]| -> Vec<f64> {
        (0..grid.len()).filter(|&k| grid.interior[k]).map(|k| vals[k]).collect()
    };
    let barrier_violations = barrier_envelope_2d(spec, grid, opts.plus, opts.minus).ok().map(|(up, lo)| {
        let (uu, lo, up) = (mask(&u.values), mask(&lo.values), mask(&up.values));
        if opts.clamp {
            check_barriers(&clamp_into_envelope(&uu, &lo, &up), &lo, &up)
        } else {
            check_barriers(&uu, &lo, &up)
        }
    });
    let drift = optimal_drift_2d(spec, grid, u);
    let (d1, d2) = &drift.field;
    let (drift_min, drift_max) = extrema(
        (0..grid.len())
            .filter(|&k| grid.interior[k])
            .map(|k| d1.values[k].hypot(d2.values[k])),
    );
    let (d, vals) = center_slice(u, grid);
    DiagnosticsReport {
        max_residual_interior: max_res,
        residual_nonfinite: res.nonfinite,
        barrier_violations,
        convexity_fraction: convexity_2d(u, grid, opts.radius_cut),
        powerlaw_fit: fit_or_none(fit(FitKind::PowerLaw, &d, &vals, opts.window)),
        semilog_fit: fit_or_none(fit(FitKind::SemiLog, &d, &vals, opts.window)),
        drift_min,
        drift_max,
        drift_nonfinite: drift.nonfinite,
    }
}
