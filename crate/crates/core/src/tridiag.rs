//! Thomas elimination for tridiagonal systems.

/// Tridiagonal matrix with constant off-diagonals, as produced by
/// `-D2 + diag(Λ)` on a uniform grid.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    /// `-D2 + diag(shift)` with spacing `dx`.
    pub fn shifted_laplacian(dx: f64, shift: &[f64]) -> Self {
        let n = shift.len();
        let off = -1.0 / (dx * dx);
        Self {
            lower: vec![off; n],
            diag: shift.iter().map(|s| 2.0 / (dx * dx) + s).collect(),
            upper: vec![off; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Solves `A x = rhs`. `lower[0]` and `upper[n-1]` are ignored. The
    /// matrix must be diagonally dominant or otherwise safe without pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        assert_eq!(rhs.len(), n, "rhs length mismatch");
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = self.upper[0] / self.diag[0];
        d[0] = rhs[0] / self.diag[0];
        for i in 1..n {
            let den = self.diag[i] - self.lower[i] * c[i - 1];
            c[i] = self.upper[i] / den;
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / den;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }
}
