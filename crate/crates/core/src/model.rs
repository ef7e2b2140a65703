//! Problem parameterization, regime classification and the closed-form
//! constants of the blow-up problem
//!
//! ```text
//! -Δu + b(x) h(|∇u|) + a(x) u = f,    u → +∞ at the boundary,
//! ```
//!
//! with `h(s) = l0 s^q`, `a = v^α`, `b = b0 v^β` and `v` the defining
//! function of the domain.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `q - (β + 2)` below which the critical
/// logarithmic regime is reported.
pub const DEFAULT_CRITICAL_TOL: f64 = 1e-9;

/// Full parameterization of the equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    /// Gradient exponent, `q > 1`.
    pub q: f64,
    /// Singularity exponent of `b`, `β >= 0`.
    pub beta: f64,
    /// Exponent of the reaction weight `a`, `α > -2`.
    pub alpha: f64,
    /// Constant source value.
    pub f_level: f64,
    pub b0: f64,
    pub l0: f64,
    /// `|∇v|` on the boundary; 2 for `v = 1 - |x|²`.
    pub grad_scale_m: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            q: 1.6,
            beta: 0.5,
            alpha: -0.2,
            f_level: 1.0,
            b0: 1.0,
            l0: 1.0,
            grad_scale_m: 2.0,
        }
    }
}

impl ProblemSpec {
    /// Spec with the given exponents and the default remaining parameters.
    pub fn new(q: f64, beta: f64) -> Self {
        Self {
            q,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 7] = [
            (self.q > 1.0, "q must exceed 1"),
            (self.beta >= 0.0, "beta must be nonnegative"),
            (self.alpha > -2.0, "alpha must exceed -2"),
            (self.f_level >= 0.0, "f_level must be nonnegative"),
            (self.b0 > 0.0, "b0 must be positive"),
            (self.l0 > 0.0, "l0 must be positive"),
            (self.grad_scale_m > 0.0, "grad_scale_m must be positive"),
        ];
        for (ok, msg) in checks {
            // NaN fails every comparison above, so it lands here too.
            if !ok {
                return Err(Error::InvalidParameter(msg.to_string()));
            }
        }
        Ok(())
    }

    /// `h(s) = l0 s^q` without the domain check, for inner loops.
    #[inline]
    pub(crate) fn h(&self, s: f64) -> f64 {
        self.l0 * s.powf(self.q)
    }

    #[inline]
    pub(crate) fn h_prime(&self, s: f64) -> f64 {
        self.l0 * self.q * s.powf(self.q - 1.0)
    }

    /// Closed-form Legendre conjugate of `h` restricted to `t >= 0`.
    #[inline]
    pub(crate) fn h_star(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let q = self.q;
        (q - 1.0) * self.l0 * (s / (q * self.l0)).powf(q / (q - 1.0))
    }

    #[inline]
    pub(crate) fn a_of(&self, v: f64) -> f64 {
        v.powf(self.alpha)
    }

    #[inline]
    pub(crate) fn b_of(&self, v: f64) -> f64 {
        self.b0 * v.powf(self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeKind {
    GradientDominant,
    CriticalLogarithmic,
    HighOrder,
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeKind::GradientDominant => "gradient-dominant",
            RegimeKind::CriticalLogarithmic => "critical-logarithmic",
            RegimeKind::HighOrder => "high-order",
        })
    }
}

/// Asymptotic regime together with its blow-up exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    /// `(β - q + 2)/(q - 1)` for the gradient-dominant case, `0` for the
    /// logarithmic case, absent otherwise.
    pub gamma: Option<f64>,
}

impl Regime {
    /// Exponent γ, or an unsupported-regime error outside the power-law case.
    pub fn power_gamma(&self) -> Result<f64> {
        match (self.kind, self.gamma) {
            (RegimeKind::GradientDominant, Some(g)) => Ok(g),
            _ => Err(Error::UnsupportedRegime(self.kind)),
        }
    }
}

/// Blow-up exponent `(β - q + 2)/(q - 1)` from the balance of the diffusion
/// and gradient terms.
///
/// Parameters are usually decimal literals, so the quotient is formed from
/// their shortest decimal expansions and rounded once (giving exactly 1.5
/// for q = 1.6, β = 0.5). Inputs with too many digits fall back to plain
/// floating-point evaluation.
pub fn blowup_exponent(q: f64, beta: f64) -> f64 {
    exact_decimal_gamma(q, beta).unwrap_or((beta - q + 2.0) / (q - 1.0))
}

/// `x = mantissa · 10^exp` from the shortest round-trip representation.
fn decimal_parts(x: f64) -> Option<(i128, i32)> {
    if !x.is_finite() {
        return None;
    }
    let s = format!("{x:e}");
    let (mant, exp) = s.split_once('e')?;
    let exp: i32 = exp.parse().ok()?;
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits: i128 = format!("{int}{frac}").parse().ok()?;
    Some((digits, exp - frac.len() as i32))
}

fn exact_decimal_gamma(q: f64, beta: f64) -> Option<f64> {
    let (qm, qe) = decimal_parts(q)?;
    let (bm, be) = decimal_parts(beta)?;
    let e = qe.min(be).min(0);
    let scale = |m: i128, from: i32| -> Option<i128> { m.checked_mul(10i128.checked_pow((from - e) as u32)?) };
    let (qi, bi, one) = (scale(qm, qe)?, scale(bm, be)?, scale(1, 0)?);
    let num = bi.checked_add(one.checked_mul(2)?)?.checked_sub(qi)?;
    let den = qi.checked_sub(one)?;
    const EXACT: i128 = 1 << 53;
    if den == 0 || num.abs() > EXACT || den.abs() > EXACT {
        return None;
    }
    Some(num as f64 / den as f64)
}

/// Exponent of `v` left over in the leading bracket of `L(C v^-γ)`;
/// vanishes at the balanced γ.
pub fn balance_residual(q: f64, beta: f64, gamma: f64) -> f64 {
    beta - q * (gamma + 1.0) + gamma + 2.0
}

pub fn classify_regime(spec: &ProblemSpec, tol: f64) -> Result<Regime> {
    spec.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let gap = spec.q - (spec.beta + 2.0);
    let regime = if gap.abs() <= tol {
        Regime {
            kind: RegimeKind::CriticalLogarithmic,
            gamma: Some(0.0),
        }
    } else if gap < 0.0 {
        Regime {
            kind: RegimeKind::GradientDominant,
            gamma: Some(blowup_exponent(spec.q, spec.beta)),
        }
    } else {
        Regime {
            kind: RegimeKind::HighOrder,
            gamma: None,
        }
    };
    Ok(regime)
}

/// Barrier constant `C*`, carrying the boundary gradient scale `m`.
///
/// Power case: `(γ(γ+1) m² / (b0 l0 (γ m)^q))^{1/(q-1)}`.
/// Logarithmic case: `(m² / (b0 l0 m^q))^{1/(q-1)}`.
pub fn critical_constant(spec: &ProblemSpec, regime: &Regime) -> Result<f64> {
    let q = spec.q;
    let m = spec.grad_scale_m;
    let amp = spec.b0 * spec.l0;
    match regime.kind {
        RegimeKind::GradientDominant => {
            let g = regime.power_gamma()?;
            let ratio = g * (g + 1.0) * m * m / (amp * (g * m).powf(q));
            Ok(ratio.powf(1.0 / (q - 1.0)))
        }
        RegimeKind::CriticalLogarithmic => {
            let ratio = m * m / (amp * m.powf(q));
            Ok(ratio.powf(1.0 / (q - 1.0)))
        }
        RegimeKind::HighOrder => Err(Error::UnsupportedRegime(RegimeKind::HighOrder)),
    }
}

/// `(γ(γ+1)/(b l γ^q))^{1/(q-1)}`, the sharp constant for weight and
/// Hamiltonian amplitudes `b`, `l` (unit boundary gradient).
fn sharp_constant(q: f64, gamma: f64, b: f64, l: f64) -> f64 {
    (gamma * (gamma + 1.0) / (b * l * gamma.powf(q))).powf(1.0 / (q - 1.0))
}

/// Closed-form constants of the gradient-dominant regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticConstants {
    pub c_star: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub xi0: f64,
}

/// Sharp liminf/limsup bounds of `u d^γ` for weight amplitudes in
/// `[b1, b2]` and Hamiltonian amplitudes in `[l1, l2]`.
pub fn xi_bounds(spec: &ProblemSpec, b1: f64, b2: f64, l1: f64, l2: f64) -> Result<AsymptoticConstants> {
    let regime = classify_regime(spec, DEFAULT_CRITICAL_TOL)?;
    let gamma = regime.power_gamma()?;
    if !(b1 > 0.0 && b1 <= b2 && l1 > 0.0 && l1 <= l2) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < b1 <= b2 and 0 < l1 <= l2, got b=[{b1}, {b2}], l=[{l1}, {l2}]"
        )));
    }
    let q = spec.q;
    Ok(AsymptoticConstants {
        c_star: critical_constant(spec, &regime)?,
        xi1: sharp_constant(q, gamma, b2, l2),
        xi2: sharp_constant(q, gamma, b1, l1),
        xi0: sharp_constant(q, gamma, spec.b0, spec.l0),
    })
}

/// [`xi_bounds`] with exact limits `b1 = b2 = b0`, `l1 = l2 = l0`.
pub fn asymptotic_constants(spec: &ProblemSpec) -> Result<AsymptoticConstants> {
    xi_bounds(spec, spec.b0, spec.b0, spec.l0, spec.l0)
}

fn check_nonnegative(s: f64) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("hamiltonian argument must be >= 0, got {s}")))
    }
}

pub fn hamiltonian(spec: &ProblemSpec, s: f64) -> Result<f64> {
    check_nonnegative(s)?;
    Ok(spec.h(s))
}

pub fn hamiltonian_prime(spec: &ProblemSpec, s: f64) -> Result<f64> {
    check_nonnegative(s)?;
    Ok(spec.h_prime(s))
}

/// `h*(s) = sup_{t >= 0} (s t - l0 t^q)`.
pub fn conjugate(spec: &ProblemSpec, s: f64) -> f64 {
    spec.h_star(s)
}

fn check_positive_v(v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("defining function must be > 0, got {v}")))
    }
}

pub fn weight_a(spec: &ProblemSpec, v: f64) -> Result<f64> {
    check_positive_v(v)?;
    Ok(spec.a_of(v))
}

pub fn weight_b(spec: &ProblemSpec, v: f64) -> Result<f64> {
    check_positive_v(v)?;
    Ok(spec.b_of(v))
}

/// Running cost `L(x, ξ) = b(x) h*(|ξ| / b(x))` for a weight value `b`.
pub fn running_cost(spec: &ProblemSpec, b: f64, xi_norm: f64) -> f64 {
    b * spec.h_star(xi_norm / b)
}
