//! Truncated 1D interval and masked 2D disk grids, the defining function
//! and the finite-difference operators shared by the solver and the
//! diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to `v = 1 - x²` on 1D grids.
pub const V_FLOOR_1D: f64 = 1e-6;
/// Floor applied to `v = 1 - |x|²` on 2D grids.
pub const V_FLOOR_2D: f64 = 1e-10;

/// Uniform grid on `[-L + δ, L - δ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub n: usize,
    pub half_width: f64,
    pub delta: f64,
    pub v_floor: f64,
    pub dx: f64,
    pub x: Vec<f64>,
}

impl Grid1D {
    pub fn new(n: usize, half_width: f64, delta: f64) -> Result<Self> {
        Self::with_floor(n, half_width, delta, V_FLOOR_1D)
    }

    pub fn with_floor(n: usize, half_width: f64, delta: f64, v_floor: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("grid needs n >= 3, got {n}")));
        }
        if !(delta > 0.0 && delta < half_width) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < delta < L, got delta={delta}, L={half_width}"
            )));
        }
        if !(v_floor > 0.0) {
            return Err(Error::InvalidParameter("v_floor must be positive".into()));
        }
        let reach = half_width - delta;
        let last = (n - 1) as f64;
        // integer-symmetric construction keeps x[n-1-i] == -x[i] exactly
        let x = (0..n)
            .map(|i| reach * ((2 * i) as f64 - last) / last)
            .collect();
        Ok(Self {
            n,
            half_width,
            delta,
            v_floor,
            dx: 2.0 * reach / last,
            x,
        })
    }

    /// Distance to the physical boundary, `min(L + x, L - x)`.
    pub fn distance(&self) -> Vec<f64> {
        self.x
            .iter()
            .map(|&x| (self.half_width + x).min(self.half_width - x))
            .collect()
    }

    /// `v` at the truncation point `x = L - δ`.
    pub fn boundary_v(&self) -> f64 {
        let r = self.half_width - self.delta;
        (1.0 - r * r).max(self.v_floor)
    }
}

/// Cartesian grid on `[-1, 1]²` with the truncated-disk mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub n: usize,
    pub delta: f64,
    pub v_floor: f64,
    pub dx: f64,
    /// Axis coordinates; point `(i, j)` sits at `(axis[i], axis[j])`.
    pub axis: Vec<f64>,
    /// `x1² + x2² < (1 - δ)²`, row-major.
    pub interior: Vec<bool>,
    /// `(1 - δ)² <= x1² + x2² < 1`.
    pub boundary_band: Vec<bool>,
}

impl Grid2D {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        Self::with_floor(n, delta, V_FLOOR_2D)
    }

    pub fn with_floor(n: usize, delta: f64, v_floor: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!("grid needs n >= 3 per axis, got {n}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("need 0 < delta < 1, got {delta}")));
        }
        if !(v_floor > 0.0) {
            return Err(Error::InvalidParameter("v_floor must be positive".into()));
        }
        let last = (n - 1) as f64;
        let axis: Vec<f64> = (0..n).map(|i| ((2 * i) as f64 - last) / last).collect();
        let cut = (1.0 - delta) * (1.0 - delta);
        let mut interior = Vec::with_capacity(n * n);
        let mut boundary_band = Vec::with_capacity(n * n);
        for &x1 in &axis {
            for &x2 in &axis {
                let r2 = x1 * x1 + x2 * x2;
                interior.push(r2 < cut);
                boundary_band.push(r2 >= cut && r2 < 1.0);
            }
        }
        Ok(Self {
            n,
            delta,
            v_floor,
            dx: 2.0 / last,
            axis,
            interior,
            boundary_band,
        })
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (f64, f64) {
        (self.axis[k / self.n], self.axis[k % self.n])
    }

    #[inline]
    pub fn radius_sq(&self, k: usize) -> f64 {
        let (x1, x2) = self.coords(k);
        x1 * x1 + x2 * x2
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().filter(|&&m| m).count()
    }

    pub fn boundary_v(&self) -> f64 {
        let r = 1.0 - self.delta;
        (1.0 - r * r).max(self.v_floor)
    }

    /// Index of the grid column closest to `x2 = 0` (the upper one when
    /// `n` is even).
    pub fn center_column(&self) -> usize {
        self.n / 2
    }
}

/// Scalar values on a [`Grid1D`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field1D {
    pub values: Vec<f64>,
}

/// Row-major scalar values on a [`Grid2D`]; the mask lives on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field2D {
    pub n: usize,
    pub values: Vec<f64>,
}

fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

impl Field1D {
    /// Wraps `values`, rejecting any non-finite entry.
    pub fn try_new(values: Vec<f64>) -> Result<Self> {
        match first_non_finite(&values) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(Self { values }),
        }
    }

    pub fn from_fn(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: grid.x.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn constant(grid: &Grid1D, c: f64) -> Self {
        Self {
            values: vec![c; grid.n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        first_non_finite(&self.values).is_none()
    }
}

impl Field2D {
    pub fn try_new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::InvalidParameter(format!(
                "expected {} values for a {n}x{n} field, got {}",
                n * n,
                values.len()
            )));
        }
        match first_non_finite(&values) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(Self { n, values }),
        }
    }

    pub fn from_fn(grid: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &x1 in &grid.axis {
            for &x2 in &grid.axis {
                values.push(f(x1, x2));
            }
        }
        Self { n: grid.n, values }
    }

    pub fn constant(grid: &Grid2D, c: f64) -> Self {
        Self {
            n: grid.n,
            values: vec![c; grid.len()],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            values: vec![0.0; n * n],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn is_finite(&self) -> bool {
        first_non_finite(&self.values).is_none()
    }
}

pub fn defining_function_1d(grid: &Grid1D) -> Field1D {
    Field1D::from_fn(grid, |x| (1.0 - x * x).max(grid.v_floor))
}

pub fn defining_function_2d(grid: &Grid2D) -> Field2D {
    Field2D::from_fn(grid, |x1, x2| (1.0 - x1 * x1 - x2 * x2).max(grid.v_floor))
}

/// Centered differences inside, first-order one-sided at the two ends.
pub fn gradient_1d(field: &Field1D, grid: &Grid1D) -> Field1D {
    let u = &field.values;
    let n = u.len();
    let dx = grid.dx;
    let mut g = vec![0.0; n];
    g[0] = (u[1] - u[0]) / dx;
    g[n - 1] = (u[n - 1] - u[n - 2]) / dx;
    for i in 1..n - 1 {
        g[i] = (u[i + 1] - u[i - 1]) / (2.0 * dx);
    }
    Field1D { values: g }
}

/// Three-point second difference. The ends use `ghost` as the value one
/// spacing beyond the grid when given, otherwise they report 0.
pub fn second_difference_1d(field: &Field1D, grid: &Grid1D, ghost: Option<f64>) -> Field1D {
    let u = &field.values;
    let n = u.len();
    let h2 = grid.dx * grid.dx;
    let mut d2 = vec![0.0; n];
    for i in 1..n - 1 {
        d2[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
    }
    if let Some(g) = ghost {
        d2[0] = (u[1] - 2.0 * u[0] + g) / h2;
        d2[n - 1] = (g - 2.0 * u[n - 1] + u[n - 2]) / h2;
    }
    Field1D { values: d2 }
}

/// Central-difference gradient components; the first/last row of the
/// differentiated axis reports 0.
pub fn gradient_2d(field: &Field2D, grid: &Grid2D) -> (Field2D, Field2D) {
    let n = grid.n;
    let u = &field.values;
    let inv = 1.0 / (2.0 * grid.dx);
    let mut g1 = vec![0.0; n * n];
    let mut g2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            if i > 0 && i < n - 1 {
                g1[k] = (u[k + n] - u[k - n]) * inv;
            }
            if j > 0 && j < n - 1 {
                g2[k] = (u[k + 1] - u[k - 1]) * inv;
            }
        }
    }
    (Field2D { n, values: g1 }, Field2D { n, values: g2 })
}

/// Five-point Laplacian; the outer ring reports 0.
pub fn laplacian_2d(field: &Field2D, grid: &Grid2D) -> Field2D {
    let n = grid.n;
    let u = &field.values;
    let h2 = grid.dx * grid.dx;
    let mut lap = vec![0.0; n * n];
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let k = i * n + j;
            lap[k] = (u[k + n] + u[k - n] + u[k + 1] + u[k - 1] - 4.0 * u[k]) / h2;
        }
    }
    Field2D { n, values: lap }
}

/// Smaller eigenvalue of the symmetric 2×2 matrix `[[a, c], [c, b]]`.
#[inline]
pub fn min_eigenvalue_sym2(a: f64, b: f64, c: f64) -> f64 {
    // (a - b)^2 + 4c^2 avoids the cancellation in trace^2 - 4 det
    let disc = (a - b) * (a - b) + 4.0 * c * c;
    (a + b - disc.sqrt()) / 2.0
}

/// Pointwise minimum eigenvalue of the finite-difference Hessian, with the
/// four-corner mixed derivative.
pub fn hessian_min_eigenvalue_2d(field: &Field2D, grid: &Grid2D) -> Field2D {
    let n = grid.n;
    let u = &field.values;
    let h2 = grid.dx * grid.dx;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let d11 = if i > 0 && i < n - 1 {
                (u[k + n] - 2.0 * u[k] + u[k - n]) / h2
            } else {
                0.0
            };
            let d22 = if j > 0 && j < n - 1 {
                (u[k + 1] - 2.0 * u[k] + u[k - 1]) / h2
            } else {
                0.0
            };
            let d12 = if i > 0 && i < n - 1 && j > 0 && j < n - 1 {
                (u[k + n + 1] - u[k + n - 1] - u[k - n + 1] + u[k - n - 1]) / (4.0 * h2)
            } else {
                0.0
            };
            out[k] = min_eigenvalue_sym2(d11, d22, d12);
        }
    }
    Field2D { n, values: out }
}
