//! Natural cubic spline interpolation.
//!
//! The λ estimator produces values on a fixed θ-grid; downstream quadrature
//! and optimization need `λ(tan θ)` at arbitrary θ, so the grid is bridged by
//! a cubic spline with natural boundary conditions (vanishing second
//! derivative at both ends). Degenerate node counts fall back gracefully:
//! three nodes take the single interpolating parabola (the not-a-knot
//! choice), two nodes interpolate linearly.

use thiserror::Error;

/// Errors from spline construction.
#[derive(Debug, Error, PartialEq)]
pub enum SplineError {
    /// Fewer than two nodes, or mismatched coordinate lengths.
    #[error("spline needs at least 2 nodes with matching x/y lengths, got {xs} x and {ys} y")]
    BadNodes {
        /// Number of x coordinates supplied.
        xs: usize,
        /// Number of y coordinates supplied.
        ys: usize,
    },
    /// Abscissae not strictly ascending.
    #[error("spline abscissae must be strictly ascending (violated at index {0})")]
    NotAscending(usize),
    /// A coordinate was NaN or infinite.
    #[error("spline coordinates must be finite")]
    NonFinite,
}

/// A piecewise-cubic interpolant `S` with `S(x_i) = y_i`.
///
/// On interval `i` the polynomial is
/// `y_i + b_i·δ + c_i·δ² + d_i·δ³` with `δ = x − x_i`. Evaluation outside
/// `[x_0, x_{n−1}]` extrapolates with the boundary polynomial.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl CubicSpline {
    /// Fit a natural cubic spline through `(xs[i], ys[i])`.
    pub fn natural(xs: &[f64], ys: &[f64]) -> Result<Self, SplineError> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(SplineError::BadNodes { xs: xs.len(), ys: ys.len() });
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(SplineError::NonFinite);
        }
        for (i, w) in xs.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(SplineError::NotAscending(i + 1));
            }
        }
        let n = xs.len();
        if n == 2 {
            // Linear fallback: a single first-degree piece.
            let slope = (ys[1] - ys[0]) / (xs[1] - xs[0]);
            return Ok(CubicSpline {
                xs: xs.to_vec(),
                ys: ys.to_vec(),
                b: vec![slope],
                c: vec![0.0],
                d: vec![0.0],
            });
        }
        if n == 3 {
            // Not-a-knot fallback: both pieces are the one parabola through
            // the three points (Newton form).
            let h0 = xs[1] - xs[0];
            let f01 = (ys[1] - ys[0]) / h0;
            let f12 = (ys[2] - ys[1]) / (xs[2] - xs[1]);
            let f012 = (f12 - f01) / (xs[2] - xs[0]);
            return Ok(CubicSpline {
                xs: xs.to_vec(),
                ys: ys.to_vec(),
                b: vec![f01 - f012 * h0, f01 + f012 * h0],
                c: vec![f012, f012],
                d: vec![0.0, 0.0],
            });
        }

        // Solve the tridiagonal system for the second derivatives m[i],
        // with natural conditions m[0] = m[n-1] = 0 (Thomas algorithm).
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        for i in 1..n {
            let w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut m = vec![0.0; n];
        m[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (0..n - 1).rev() {
            m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
        }

        let mut b = vec![0.0; n - 1];
        let mut c = vec![0.0; n - 1];
        let mut d = vec![0.0; n - 1];
        for i in 0..n - 1 {
            b[i] = (ys[i + 1] - ys[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
            c[i] = m[i] / 2.0;
            d[i] = (m[i + 1] - m[i]) / (6.0 * h[i]);
        }
        Ok(CubicSpline { xs: xs.to_vec(), ys: ys.to_vec(), b, c, d })
    }

    /// Index of the interval containing `x` (clamped to the boundary pieces).
    fn interval(&self, x: f64) -> usize {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0;
        }
        if x >= self.xs[n - 1] {
            return n - 2;
        }
        // partition_point returns the first index with xs[i] > x; the
        // containing interval starts one before that.
        self.xs.partition_point(|&t| t <= x).saturating_sub(1).min(n - 2)
    }

    /// Interpolated value `S(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let dx = x - self.xs[i];
        self.ys[i] + dx * (self.b[i] + dx * (self.c[i] + dx * self.d[i]))
    }

    /// Interpolated derivative `S'(x)`.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        let i = self.interval(x);
        let dx = x - self.xs[i];
        self.b[i] + dx * (2.0 * self.c[i] + dx * 3.0 * self.d[i])
    }

    /// The interpolation abscissae.
    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    /// The interpolated ordinates at the knots.
    pub fn values(&self) -> &[f64] {
        &self.ys
    }
}
