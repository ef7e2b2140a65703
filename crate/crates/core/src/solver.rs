//! Damped monotone iteration on the truncated domain.
//!
//! Each outer step solves the linear problem
//!
//! ```text
//! (-Δ + Λ) u_new = Λ u - (b h(|∇u|) + a u - f)
//! ```
//!
//! with the blow-up value imposed on the truncation boundary, then blends
//! `ω u + (1 - ω) u_new`. The 1D problem is solved exactly by tridiagonal
//! elimination; the 2D disk problem takes one Jacobi sweep per step.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{defining_function_1d, defining_function_2d, Field1D, Field2D, Grid1D, Grid2D};
use crate::model::{classify_regime, critical_constant, ProblemSpec, Regime, RegimeKind, DEFAULT_CRITICAL_TOL};
use crate::tridiag::Tridiagonal;

/// Added to the norm of the previous iterate in the relative-change metric.
const NORM_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// `u ≡ u_bnd` everywhere.
    BoundaryConstant,
    /// `fraction · C* · v^-γ`, a subsolution for small enough fractions.
    Subsolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    /// Stop once the relative L2 change drops below this.
    pub tol: f64,
    /// Weight on the OLD iterate in the blend; 0 is the undamped iteration.
    pub damping: f64,
    /// Scalar rule `Λ = lambda_factor · max(a)`.
    pub lambda_factor: f64,
    /// Replace the scalar Λ by the pointwise bound dominating `a` and the
    /// gradient term's stencil Lipschitz constant at the supersolution.
    pub pointwise_lambda: bool,
    /// Symmetric clip applied to gradient values fed to `h`.
    pub grad_clip: f64,
    pub init_mode: InitMode,
    /// `C- / C*` for [`InitMode::Subsolution`].
    pub subsolution_fraction: f64,
    /// `C+ / C*` used by the pointwise Λ bound.
    pub supersolution_fraction: f64,
    /// Reproduce the reference arithmetic for the high-order regime (negative
    /// γ in the power-law constant). Not backed by the theory.
    pub compat_high_order: bool,
}

impl SolverConfig {
    /// Reference 1D settings.
    pub fn default_1d() -> Self {
        Self {
            max_iter: 80,
            tol: 1e-6,
            damping: 0.5,
            lambda_factor: 5.0,
            pointwise_lambda: false,
            grad_clip: 1e3,
            init_mode: InitMode::BoundaryConstant,
            subsolution_fraction: 0.98,
            supersolution_fraction: 1.02,
            compat_high_order: false,
        }
    }

    /// Reference 2D settings.
    pub fn default_2d() -> Self {
        Self {
            max_iter: 150,
            tol: 1e-5,
            damping: 0.4,
            lambda_factor: 8.0,
            grad_clip: 1e4,
            ..Self::default_1d()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 7] = [
            (self.max_iter >= 1, "max_iter must be at least 1"),
            (self.tol > 0.0, "tol must be positive"),
            (
                (0.0..1.0).contains(&self.damping),
                "damping (weight on the old iterate) must lie in [0, 1)",
            ),
            (self.lambda_factor >= 1.0, "lambda_factor must be >= 1"),
            (self.grad_clip > 0.0, "grad_clip must be positive"),
            (
                self.subsolution_fraction > 0.0 && self.subsolution_fraction <= 1.0,
                "subsolution_fraction must lie in (0, 1]",
            ),
            (self.supersolution_fraction >= 1.0, "supersolution_fraction must be >= 1"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParameter(msg.to_string()));
            }
        }
        Ok(())
    }
}

/// Power-law barrier `c_star · v^-gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub c_star: f64,
    pub gamma: f64,
}

impl Barrier {
    #[inline]
    pub fn at(&self, v: f64) -> f64 {
        self.c_star * v.powf(-self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport<F> {
    pub solution: F,
    pub iterations_used: usize,
    pub relative_change_history: Vec<f64>,
    pub boundary_value: f64,
    pub converged: bool,
    /// Points where the solution came out negative (soft check).
    pub negative_points: usize,
    pub regime: Option<Regime>,
    pub barrier: Option<Barrier>,
    /// Set when the boundary value came from the compatibility
    /// high-order arithmetic.
    pub theory_unsupported: bool,
}

pub type SolveReport1D = SolveReport<Field1D>;
pub type SolveReport2D = SolveReport<Field2D>;

/// Dirichlet value on the truncation boundary: `C* v^-γ` or `C* ln(1/v)`.
pub fn boundary_value(spec: &ProblemSpec, regime: &Regime, v_bnd: f64) -> Result<f64> {
    if !(v_bnd > 0.0 && v_bnd <= 1.0) {
        return Err(Error::Domain(format!("v_bnd must lie in (0, 1], got {v_bnd}")));
    }
    let c = critical_constant(spec, regime)?;
    match regime.kind {
        RegimeKind::GradientDominant => Ok(c * v_bnd.powf(-regime.power_gamma()?)),
        RegimeKind::CriticalLogarithmic => Ok(c * (1.0 / v_bnd).ln()),
        RegimeKind::HighOrder => Err(Error::UnsupportedRegime(RegimeKind::HighOrder)),
    }
}

/// Reference-code arithmetic: the power-law constant evaluated with the raw
/// `γ = (β - q + 2)/(q - 1)` whatever its sign, logarithmic branch when
/// `|γ| <= 1e-12`. Returns `(constant, boundary value)`.
pub fn compat_boundary(spec: &ProblemSpec, v_bnd: f64) -> Result<(f64, f64)> {
    let q = spec.q;
    let m = spec.grad_scale_m;
    let amp = spec.b0 * spec.l0;
    let gamma = crate::model::blowup_exponent(q, spec.beta);
    let (c, ub) = if gamma.abs() > 1e-12 {
        let c = (gamma * (gamma + 1.0) * m * m / (amp * (gamma * m).powf(q))).powf(1.0 / (q - 1.0));
        (c, c * v_bnd.powf(-gamma))
    } else {
        let c = (m * m / (amp * m.powf(q))).powf(1.0 / (q - 1.0));
        (c, c * (1.0 / v_bnd).ln())
    };
    if !(c.is_finite() && ub.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "compatibility constant is not finite for q={q}, beta={}",
            spec.beta
        )));
    }
    Ok((c, ub))
}

struct BoundaryData {
    regime: Regime,
    u_bnd: f64,
    barrier: Option<Barrier>,
    theory_unsupported: bool,
}

fn resolve_boundary(spec: &ProblemSpec, config: &SolverConfig, v_bnd: f64) -> Result<BoundaryData> {
    let regime = classify_regime(spec, DEFAULT_CRITICAL_TOL)?;
    if regime.kind == RegimeKind::HighOrder {
        if !config.compat_high_order {
            return Err(Error::UnsupportedRegime(RegimeKind::HighOrder));
        }
        let (_, u_bnd) = compat_boundary(spec, v_bnd)?;
        return Ok(BoundaryData {
            regime,
            u_bnd,
            barrier: None,
            theory_unsupported: true,
        });
    }
    let barrier = match regime.kind {
        RegimeKind::GradientDominant => Some(Barrier {
            c_star: critical_constant(spec, &regime)?,
            gamma: regime.power_gamma()?,
        }),
        _ => None,
    };
    Ok(BoundaryData {
        regime,
        u_bnd: boundary_value(spec, &regime, v_bnd)?,
        barrier,
        theory_unsupported: false,
    })
}

fn require_barrier(barrier: Option<Barrier>, regime: Option<Regime>) -> Result<Barrier> {
    barrier.ok_or(Error::UnsupportedRegime(
        regime.map(|r| r.kind).unwrap_or(RegimeKind::HighOrder),
    ))
}

/// `fraction · C* · v^-γ` on a 1D grid.
pub fn subsolution_init_1d(spec: &ProblemSpec, grid: &Grid1D, fraction: f64) -> Result<Field1D> {
    let regime = classify_regime(spec, DEFAULT_CRITICAL_TOL)?;
    let barrier = Barrier {
        c_star: critical_constant(spec, &regime)?,
        gamma: regime.power_gamma()?,
    };
    let v = defining_function_1d(grid);
    Field1D::try_new(v.values.iter().map(|&v| fraction * barrier.at(v)).collect())
}

/// `fraction · C* · v^-γ` on a 2D grid.
pub fn subsolution_init_2d(spec: &ProblemSpec, grid: &Grid2D, fraction: f64) -> Result<Field2D> {
    let regime = classify_regime(spec, DEFAULT_CRITICAL_TOL)?;
    let barrier = Barrier {
        c_star: critical_constant(spec, &regime)?,
        gamma: regime.power_gamma()?,
    };
    let v = defining_function_2d(grid);
    Field2D::try_new(grid.n, v.values.iter().map(|&v| fraction * barrier.at(v)).collect())
}

/// Continuum monotonicity shift `b q l0 (C+ γ m)^{q-1} v^{-(γ+1)(q-1)+β}`.
fn continuum_lambda_term(spec: &ProblemSpec, barrier: &Barrier, c_plus: f64, v: f64, b: f64) -> f64 {
    let q = spec.q;
    let g = barrier.gamma;
    b * q * spec.l0 * (c_plus * g * spec.grad_scale_m).powf(q - 1.0) * v.powf(-(g + 1.0) * (q - 1.0) + spec.beta)
}

fn pointwise_lambda_1d(
    spec: &ProblemSpec,
    grid: &Grid1D,
    config: &SolverConfig,
    barrier: &Barrier,
    v: &[f64],
    a: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let c_plus = config.supersolution_fraction * barrier.c_star;
    let upper = Field1D {
        values: v.iter().map(|&v| c_plus * v.powf(-barrier.gamma)).collect(),
    };
    let grad = crate::mesh::gradient_1d(&upper, grid);
    let n = grid.n;
    (0..n)
        .map(|i| {
            let p = grad.values[i].abs().min(config.grad_clip);
            // Σ_j |∂(Du)_i/∂u_j|: 1/dx inside, 2/dx for the one-sided ends
            let stencil = if i == 0 || i == n - 1 { 2.0 } else { 1.0 } / grid.dx;
            let lip = b[i] * spec.h_prime(p) * stencil;
            let cont = continuum_lambda_term(spec, barrier, c_plus, v[i], b[i]);
            a[i].max(cont).max(a[i] + lip)
        })
        .collect()
}

/// Solves the 1D problem on `grid` with the regime's boundary value.
pub fn solve_1d(spec: &ProblemSpec, grid: &Grid1D, config: &SolverConfig) -> Result<SolveReport1D> {
    solve_1d_observed(spec, grid, config, |_, _| {})
}

/// [`solve_1d`], calling `observer(k, u_k)` for the initial iterate
/// (`k = 0`) and after every step.
pub fn solve_1d_observed(
    spec: &ProblemSpec,
    grid: &Grid1D,
    config: &SolverConfig,
    observer: impl FnMut(usize, &[f64]),
) -> Result<SolveReport1D> {
    spec.validate()?;
    config.validate()?;
    let bd = resolve_boundary(spec, config, grid.boundary_v())?;
    run_1d(spec, grid, config, bd.u_bnd, Some(bd.regime), bd.barrier, bd.theory_unsupported, observer)
}

/// Solves the 1D iteration with an explicit Dirichlet value and no barrier
/// (so neither subsolution init nor the pointwise Λ are available).
pub fn solve_1d_with_boundary(
    spec: &ProblemSpec,
    grid: &Grid1D,
    config: &SolverConfig,
    u_bnd: f64,
) -> Result<SolveReport1D> {
    spec.validate()?;
    config.validate()?;
    run_1d(spec, grid, config, u_bnd, None, None, false, |_, _| {})
}

#[allow(clippy::too_many_arguments)]
fn run_1d(
    spec: &ProblemSpec,
    grid: &Grid1D,
    config: &SolverConfig,
    u_bnd: f64,
    regime: Option<Regime>,
    barrier: Option<Barrier>,
    theory_unsupported: bool,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<SolveReport1D> {
    let n = grid.n;
    let dx = grid.dx;
    let v = defining_function_1d(grid).values;
    let a: Vec<f64> = v.iter().map(|&v| spec.a_of(v)).collect();
    let b: Vec<f64> = v.iter().map(|&v| spec.b_of(v)).collect();

    let lambda = if config.pointwise_lambda {
        let bar = require_barrier(barrier, regime)?;
        pointwise_lambda_1d(spec, grid, config, &bar, &v, &a, &b)
    } else {
        let a_max = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        vec![config.lambda_factor * a_max; n]
    };
    let matrix = Tridiagonal::shifted_laplacian(dx, &lambda);

    let mut u = match config.init_mode {
        InitMode::BoundaryConstant => vec![u_bnd; n],
        InitMode::Subsolution => {
            let bar = require_barrier(barrier, regime)?;
            v.iter().map(|&v| config.subsolution_fraction * bar.at(v)).collect()
        }
    };
    observer(0, &u);

    let q = spec.q;
    let w = config.damping;
    let coupling = u_bnd / (dx * dx);
    let mut rhs = vec![0.0; n];
    let mut history = Vec::new();
    let mut converged = false;

    for k in 0..config.max_iter {
        for i in 0..n {
            let du = if i == 0 {
                (u[1] - u[0]) / dx
            } else if i == n - 1 {
                (u[n - 1] - u[n - 2]) / dx
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * dx)
            };
            let p = du.abs().min(config.grad_clip);
            rhs[i] = lambda[i] * u[i] - (b[i] * spec.l0 * p.powf(q) + a[i] * u[i] - spec.f_level);
        }
        rhs[0] += coupling;
        rhs[n - 1] += coupling;

        let solved = matrix.solve(&rhs);
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        let mut next = Vec::with_capacity(n);
        for (i, s) in solved.into_iter().enumerate() {
            let blended = w * u[i] + (1.0 - w) * s;
            if !blended.is_finite() {
                return Err(Error::Divergence { iteration: k + 1 });
            }
            diff2 += (blended - u[i]) * (blended - u[i]);
            norm2 += u[i] * u[i];
            next.push(blended);
        }
        let rel = diff2.sqrt() / (norm2.sqrt() + NORM_GUARD);
        history.push(rel);
        u = next;
        observer(k + 1, &u);
        if rel < config.tol {
            converged = true;
            break;
        }
    }

    let negative_points = u.iter().filter(|&&x| x < 0.0).count();
    if negative_points > 0 {
        warn!("1D solution has {negative_points} negative points");
    }
    Ok(SolveReport {
        solution: Field1D { values: u },
        iterations_used: history.len(),
        relative_change_history: history,
        boundary_value: u_bnd,
        converged,
        negative_points,
        regime,
        barrier,
        theory_unsupported,
    })
}

fn pointwise_lambda_2d(
    spec: &ProblemSpec,
    grid: &Grid2D,
    config: &SolverConfig,
    barrier: &Barrier,
    v: &[f64],
    a: &[f64],
    b: &[f64],
) -> Vec<f64> {
    let c_plus = config.supersolution_fraction * barrier.c_star;
    let upper = Field2D {
        n: grid.n,
        values: v.iter().map(|&v| c_plus * v.powf(-barrier.gamma)).collect(),
    };
    let (g1, g2) = crate::mesh::gradient_2d(&upper, grid);
    // Σ_j |∂|∇u|/∂u_j| <= √2/dx for the central-difference magnitude
    let stencil = std::f64::consts::SQRT_2 / grid.dx;
    (0..grid.len())
        .map(|k| {
            let p = g1.values[k].hypot(g2.values[k]).min(config.grad_clip);
            let lip = b[k] * spec.h_prime(p) * stencil;
            let cont = continuum_lambda_term(spec, barrier, c_plus, v[k], b[k]);
            a[k].max(cont).max(a[k] + lip)
        })
        .collect()
}

/// Solves the 2D disk problem with one damped Jacobi sweep per step.
pub fn solve_2d(spec: &ProblemSpec, grid: &Grid2D, config: &SolverConfig) -> Result<SolveReport2D> {
    solve_2d_observed(spec, grid, config, |_, _| {})
}

pub fn solve_2d_observed(
    spec: &ProblemSpec,
    grid: &Grid2D,
    config: &SolverConfig,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<SolveReport2D> {
    spec.validate()?;
    config.validate()?;
    let bd = resolve_boundary(spec, config, grid.boundary_v())?;
    let u_bnd = bd.u_bnd;
    let n = grid.n;
    let dx = grid.dx;
    let h2 = dx * dx;
    let v = defining_function_2d(grid).values;
    let a: Vec<f64> = v.iter().map(|&v| spec.a_of(v)).collect();
    let b: Vec<f64> = v.iter().map(|&v| spec.b_of(v)).collect();
    let interior: Vec<usize> = (0..grid.len()).filter(|&k| grid.interior[k]).collect();
    if interior.is_empty() {
        return Err(Error::InvalidParameter("grid has no interior points".into()));
    }
    // the stencil below reads k ± 1 and k ± n without bounds on the ring
    debug_assert!(interior.iter().all(|&k| {
        let (i, j) = (k / n, k % n);
        i > 0 && i < n - 1 && j > 0 && j < n - 1
    }));

    let lambda = if config.pointwise_lambda {
        let bar = require_barrier(bd.barrier, Some(bd.regime))?;
        pointwise_lambda_2d(spec, grid, config, &bar, &v, &a, &b)
    } else {
        let a_max = interior.iter().map(|&k| a[k]).fold(f64::NEG_INFINITY, f64::max);
        vec![config.lambda_factor * a_max; grid.len()]
    };

    let mut u = vec![u_bnd; grid.len()];
    if config.init_mode == InitMode::Subsolution {
        let bar = require_barrier(bd.barrier, Some(bd.regime))?;
        for &k in &interior {
            u[k] = config.subsolution_fraction * bar.at(v[k]);
        }
    }
    observer(0, &u);

    // per-point coefficients in interior order:
    // jac = ((Λ - a) u - b l0 |∇u|^q + f) h² + Σ neighbours, scaled by 1/(4 + Λ h²)
    let shift: Vec<f64> = interior.iter().map(|&k| lambda[k] - a[k]).collect();
    let amp: Vec<f64> = interior.iter().map(|&k| b[k] * spec.l0 * h2).collect();
    let inv_den: Vec<f64> = interior.iter().map(|&k| 1.0 / (4.0 + lambda[k] * h2)).collect();
    let half_q = 0.5 * spec.q;
    let f_h2 = spec.f_level * h2;
    let w = config.damping;
    let inv2dx = 1.0 / (2.0 * dx);
    let clip2 = config.grad_clip * config.grad_clip;
    let mut next = u.clone();
    let mut history = Vec::new();
    let mut converged = false;

    for it in 0..config.max_iter {
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for (idx, &k) in interior.iter().enumerate() {
            let uc = u[k];
            let (un, us, ue, uw) = (u[k + n], u[k - n], u[k + 1], u[k - 1]);
            let g1 = (un - us) * inv2dx;
            let g2 = (ue - uw) * inv2dx;
            let p2 = (g1 * g1 + g2 * g2).min(clip2);
            // |∇u|^q = exp((q/2) ln |∇u|²), sparing the square root
            let pq = if p2 > 0.0 { (half_q * p2.ln()).exp() } else { 0.0 };
            let jac = ((shift[idx] * uc) * h2 - amp[idx] * pq + f_h2 + un + us + ue + uw) * inv_den[idx];
            let upd = w * uc + (1.0 - w) * jac;
            diff2 += (upd - uc) * (upd - uc);
            norm2 += uc * uc;
            next[k] = upd;
        }
        if !diff2.is_finite() {
            return Err(Error::Divergence { iteration: it + 1 });
        }
        std::mem::swap(&mut u, &mut next);
        let rel = diff2.sqrt() / (norm2.sqrt() + NORM_GUARD);
        history.push(rel);
        observer(it + 1, &u);
        if rel < config.tol {
            converged = true;
            break;
        }
    }

    let negative_points = u.iter().filter(|&&x| x < 0.0).count();
    if negative_points > 0 {
        warn!("2D solution has {negative_points} negative points");
    }
    Ok(SolveReport {
        solution: Field2D { n, values: u },
        iterations_used: history.len(),
        relative_change_history: history,
        boundary_value: u_bnd,
        converged,
        negative_points,
        regime: Some(bd.regime),
        barrier: bd.barrier,
        theory_unsupported: bd.theory_unsupported,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn boundary_values() {
        let spec = ProblemSpec::new(1.6, 0.5);
        let r = classify_regime(&spec, 1e-9).unwrap();
        assert!(close(boundary_value(&spec, &r, 0.0975).unwrap(), 160.074_380_209_693_27, 1e-12));
        let c = critical_constant(&spec, &r).unwrap();
        assert_eq!(boundary_value(&spec, &r, 1.0).unwrap(), c);

        let log = ProblemSpec::new(2.5, 0.5);
        let r = classify_regime(&log, 1e-9).unwrap();
        assert!(close(boundary_value(&log, &r, 0.0975).unwrap(), 1.847_657_756_946_416_6, 1e-12));

        let high = ProblemSpec::new(3.0, 0.5);
        let r = classify_regime(&high, 1e-9).unwrap();
        assert!(matches!(
            boundary_value(&high, &r, 0.0975),
            Err(Error::UnsupportedRegime(RegimeKind::HighOrder))
        ));
        assert!(boundary_value(&spec, &r, 0.0).is_err());
    }

    #[test]
    fn compat_high_order_boundary() {
        // γ = -0.25: ((-0.25·0.75·4)/(-0.5)^3)^{1/2} = √6
        let (c, ub) = compat_boundary(&ProblemSpec::new(3.0, 0.5), 0.0975).unwrap();
        assert!(close(c, 6f64.sqrt(), 1e-14));
        assert!(close(ub, 6f64.sqrt() * 0.0975f64.powf(0.25), 1e-14));

        let grid = Grid1D::new(50, 1.0, 0.05).unwrap();
        let spec = ProblemSpec::new(3.0, 0.5);
        let err = solve_1d(&spec, &grid, &SolverConfig::default_1d()).unwrap_err();
        assert!(matches!(err, Error::UnsupportedRegime(RegimeKind::HighOrder)));
        let cfg = SolverConfig {
            compat_high_order: true,
            ..SolverConfig::default_1d()
        };
        let rep = solve_1d(&spec, &grid, &cfg).unwrap();
        assert!(rep.theory_unsupported);
        assert!(rep.barrier.is_none());
    }

    #[test]
    fn subsolution_values() {
        let spec = ProblemSpec::new(1.6, 0.5);
        let grid = Grid1D::new(5, 1.0, 0.05).unwrap();
        let c = 4.873_362_897_021_443;
        let u = subsolution_init_1d(&spec, &grid, 0.98).unwrap();
        assert!(close(u.values[2], 0.98 * c, 1e-13));
        let full = subsolution_init_1d(&spec, &grid, 1.0).unwrap();
        assert!(close(full.values[0], c * 0.0975f64.powf(-1.5), 1e-13));
        let b = Barrier { c_star: c, gamma: 1.5 };
        assert!(close(0.5 * b.at(0.25), 19.493_451_588_085_774, 1e-13));
        assert!(subsolution_init_1d(&ProblemSpec::new(2.5, 0.5), &grid, 0.5).is_err());
    }

    #[test]
    fn constant_fixed_point() {
        // a ≡ 1, f = 1, u_bnd = 1: u ≡ 1 solves -u'' + b|u'|^q + u = 1
        let spec = ProblemSpec {
            alpha: 0.0,
            ..ProblemSpec::default()
        };
        let grid = Grid1D::new(40, 1.0, 0.05).unwrap();
        let rep = solve_1d_with_boundary(&spec, &grid, &SolverConfig::default_1d(), 1.0).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations_used, 1);
        for v in &rep.solution.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default_1d();
        c.damping = 1.0;
        assert!(c.validate().is_err());
        c.damping = 0.0;
        assert!(c.validate().is_ok());
        c.tol = 0.0;
        assert!(c.validate().is_err());
        let c = SolverConfig {
            lambda_factor: 0.5,
            ..SolverConfig::default_2d()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn history_length_matches_iterations() {
        let grid = Grid1D::new(60, 1.0, 0.05).unwrap();
        let rep = solve_1d(&ProblemSpec::default(), &grid, &SolverConfig::default_1d()).unwrap();
        assert_eq!(rep.relative_change_history.len(), rep.iterations_used);
        assert!(rep.solution.is_finite());
        assert_eq!(rep.negative_points, 0);
    }

    #[test]
    fn small_2d_solve_is_symmetric() {
        let grid = Grid2D::new(24, 0.2).unwrap();
        let cfg = SolverConfig {
            max_iter: 400,
            ..SolverConfig::default_2d()
        };
        let rep = solve_2d(&ProblemSpec::default(), &grid, &cfg).unwrap();
        let u = &rep.solution;
        let n = grid.n;
        let scale = u.values.iter().cloned().fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                assert!((u.at(i, j) - u.at(j, i)).abs() <= 1e-12 * scale);
                assert!((u.at(i, j) - u.at(n - 1 - i, j)).abs() <= 1e-12 * scale);
            }
        }
        for k in 0..grid.len() {
            if !grid.interior[k] {
                assert_eq!(u.values[k], rep.boundary_value);
            }
        }
    }

    fn dense_solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
        let n = rhs.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
            m.swap(c, piv);
            rhs.swap(c, piv);
            for r in c + 1..n {
                let f = m[r][c] / m[c][c];
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                rhs[r] -= f * rhs[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
            x[r] = (rhs[r] - s) / m[r][r];
        }
        x
    }

    #[test]
    fn first_iterate_matches_dense_oracle() {
        for n in [3usize, 7, 12] {
            let spec = ProblemSpec::new(1.6, 0.5);
            let grid = Grid1D::new(n, 1.0, 0.05).unwrap();
            let cfg = SolverConfig {
                max_iter: 1,
                damping: 0.0,
                init_mode: InitMode::Subsolution,
                ..SolverConfig::default_1d()
            };
            let mut first = Vec::new();
            let report = solve_1d_observed(&spec, &grid, &cfg, |k, u| {
                if k == 1 {
                    first = u.to_vec();
                }
            })
            .unwrap();

            let dx = grid.dx;
            let r = classify_regime(&spec, 1e-9).unwrap();
            let bar = Barrier {
                c_star: critical_constant(&spec, &r).unwrap(),
                gamma: r.power_gamma().unwrap(),
            };
            let v: Vec<f64> = grid.x.iter().map(|x| (1.0 - x * x).max(1e-6)).collect();
            let u0: Vec<f64> = v.iter().map(|&v| 0.98 * bar.at(v)).collect();
            let a: Vec<f64> = v.iter().map(|&v| spec.a_of(v)).collect();
            let lam = 5.0 * a.iter().cloned().fold(f64::MIN, f64::max);
            let mut m = vec![vec![0.0; n]; n];
            let mut rhs = vec![0.0; n];
            for i in 0..n {
                m[i][i] = 2.0 / (dx * dx) + lam;
                if i > 0 {
                    m[i][i - 1] = -1.0 / (dx * dx);
                }
                if i + 1 < n {
                    m[i][i + 1] = -1.0 / (dx * dx);
                }
                let du = match i {
                    0 => (u0[1] - u0[0]) / dx,
                    _ if i == n - 1 => (u0[n - 1] - u0[n - 2]) / dx,
                    _ => (u0[i + 1] - u0[i - 1]) / (2.0 * dx),
                };
                let p = du.abs().min(1e3);
                rhs[i] = lam * u0[i] - (spec.b_of(v[i]) * p.powf(spec.q) + a[i] * u0[i] - 1.0);
            }
            rhs[0] += report.boundary_value / (dx * dx);
            rhs[n - 1] += report.boundary_value / (dx * dx);
            let oracle = dense_solve(m, rhs);
            for (g, e) in first.iter().zip(&oracle) {
                assert!(close(*g, *e, 1e-12), "n={n}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn runs_are_bit_identical() {
        let spec = ProblemSpec::new(1.6, 0.5);
        let grid = Grid1D::new(120, 1.0, 0.05).unwrap();
        let cfg = SolverConfig::default_1d();
        let a = solve_1d(&spec, &grid, &cfg).unwrap();
        let b = solve_1d(&spec, &grid, &cfg).unwrap();
        assert_eq!(a.solution, b.solution);
        assert_eq!(a.relative_change_history, b.relative_change_history);
    }

    #[test]
    fn tail_contracts_linearly() {
        let spec = ProblemSpec::new(1.6, 0.5);
        let grid = Grid1D::new(200, 1.0, 0.05).unwrap();
        let cfg = SolverConfig {
            max_iter: 20000,
            tol: 1e-12,
            ..SolverConfig::default_1d()
        };
        let rep = solve_1d(&spec, &grid, &cfg).unwrap();
        assert!(rep.converged);
        let h = &rep.relative_change_history;
        let tail = &h[h.len() - 11..];
        let ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.iter().all(|&r| r < 1.0), "{ratios:?}");
        let spread = ratios.iter().cloned().fold(0.0, f64::max) - ratios.iter().cloned().fold(1.0, f64::min);
        assert!(spread < 0.05, "{ratios:?}");
    }
}
