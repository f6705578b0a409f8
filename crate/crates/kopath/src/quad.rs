//! Numerical quadrature: composite Simpson rules and Gauss–Hermite nodes.
//!
//! The energy functionals are integrals of smooth-to-mildly-singular
//! integrands on `[0, 1]`, handled by composite Simpson on uniform grids
//! (optionally trimmed away from singular endpoints by the caller). The
//! expectation oracles (`λ` of a two-point dataset, the `η` function) are
//! Gaussian expectations, handled by Gauss–Hermite quadrature whose nodes and
//! weights come from the Golub–Welsch eigenvalue method on the Jacobi matrix.

/// Composite Simpson rule for `f` on `[a, b]` with `nodes` equally spaced
/// evaluation points.
///
/// `nodes` must be odd and at least 3; an even request is rounded up so the
/// rule always closes. Exact for cubics.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize) -> f64 {
    let nodes = nodes.max(3);
    let nodes = if nodes % 2 == 0 { nodes + 1 } else { nodes };
    let h = (b - a) / (nodes - 1) as f64;
    let mut sum = f(a) + f(b);
    for i in 1..nodes - 1 {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + h * i as f64);
    }
    sum * h / 3.0
}

/// Composite Simpson over precomputed equally spaced samples `ys` on `[a, b]`.
///
/// `ys.len()` must be odd and at least 3. Useful when the integrand values
/// are produced by a pipeline stage rather than a closure.
pub fn simpson_samples(ys: &[f64], a: f64, b: f64) -> f64 {
    assert!(ys.len() >= 3 && ys.len() % 2 == 1, "need an odd sample count >= 3");
    let h = (b - a) / (ys.len() - 1) as f64;
    let mut sum = ys[0] + ys[ys.len() - 1];
    for (i, y) in ys.iter().enumerate().take(ys.len() - 1).skip(1) {
        sum += if i % 2 == 1 { 4.0 * y } else { 2.0 * y };
    }
    sum * h / 3.0
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
///
/// Classic bisection scheme with the Richardson error estimate
/// `|S_left + S_right − S_whole| / 15`; recursion depth is capped so a
/// pathological integrand cannot hang the caller.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson3(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson3(fa, flm, fm, m - a);
        let right = simpson3(fm, frm, fb, b - m);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson3(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Gauss–Hermite quadrature rule: nodes `x_i` and weights `w_i` such that
/// `∫ f(x)·exp(−x²) dx ≈ Σ w_i f(x_i)` (physicists' convention).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    /// Nodes in ascending order.
    pub nodes: Vec<f64>,
    /// Weights matching `nodes`.
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Build an `n`-point rule by the Golub–Welsch method: the nodes are the
    /// eigenvalues of the symmetric tridiagonal Jacobi matrix with zero
    /// diagonal and off-diagonals `sqrt(i/2)`, and each weight is
    /// `sqrt(π)` times the squared first component of the corresponding
    /// normalized eigenvector.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n]; // off[i] couples i and i+1; off[n-1] unused
        for (i, o) in off.iter_mut().enumerate().take(n - 1) {
            *o = ((i + 1) as f64 / 2.0).sqrt();
        }
        // First row of the eigenvector matrix, updated alongside the rotations.
        let mut vec0 = vec![0.0; n];
        vec0[0] = 1.0;
        symmetric_tridiagonal_ql(&mut diag, &mut off, &mut vec0);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let nodes: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| sqrt_pi * vec0[i] * vec0[i]).collect();
        GaussHermite { nodes, weights }
    }

    /// Expectation `E[f(u)]` for `u ~ N(0, 1)` via the substitution
    /// `u = sqrt(2)·x`: `E f(u) = (1/sqrt(π)) Σ w_i f(sqrt(2)·x_i)`.
    pub fn expect_standard_normal<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(std::f64::consts::SQRT_2 * x);
        }
        acc * inv_sqrt_pi
    }
}

/// Gauss–Legendre quadrature rule: nodes `x_i` and weights `w_i` such that
/// `∫_{−1}^{1} f(x) dx ≈ Σ w_i f(x_i)`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    /// Nodes in ascending order.
    pub nodes: Vec<f64>,
    /// Weights matching `nodes`.
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Build an `n`-point rule by the Golub–Welsch method: the Jacobi matrix
    /// of the Legendre weight has zero diagonal and off-diagonals
    /// `i/sqrt(4i²−1)`, and each weight is `2` (the weight-function mass)
    /// times the squared first component of the corresponding eigenvector.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut diag = vec![0.0; n];
        let mut off = vec![0.0; n]; // off[i] couples i and i+1; off[n-1] unused
        for (i, o) in off.iter_mut().enumerate().take(n - 1) {
            let k = (i + 1) as f64;
            *o = k / (4.0 * k * k - 1.0).sqrt();
        }
        let mut vec0 = vec![0.0; n];
        vec0[0] = 1.0;
        symmetric_tridiagonal_ql(&mut diag, &mut off, &mut vec0);

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let nodes: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
        let weights: Vec<f64> = order.iter().map(|&i| 2.0 * vec0[i] * vec0[i]).collect();
        GaussLegendre { nodes, weights }
    }

    /// `∫_a^b f` by affine transport of the reference rule.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }
}

/// Implicit-shift QL iteration for a symmetric tridiagonal matrix, also
/// rotating a single accumulated row (`vec0`) of the eigenvector matrix.
///
/// On return `diag` holds the eigenvalues (unordered) and `vec0[j]` the first
/// component of the `j`-th normalized eigenvector. `off[i]` couples rows `i`
/// and `i+1` on input (`off[n-1]` is ignored) and is destroyed.
fn symmetric_tridiagonal_ql(diag: &mut [f64], off: &mut [f64], vec0: &mut [f64]) {
    let n = diag.len();
    if n <= 1 {
        return;
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            // Find a negligible subdiagonal element to split the matrix.
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 64, "tridiagonal QL failed to converge");

            // Wilkinson shift.
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0_f64, 1.0_f64);
            let mut p = 0.0;
            let mut underflow = false;

            for i in (l..m).rev() {
                let mut f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;

                // Rotate the tracked eigenvector row.
                f = vec0[i + 1];
                vec0[i + 1] = s * vec0[i] + c * f;
                vec0[i] = c * vec0[i] - s * f;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_is_exact_on_cubics() {
        // ∫₀¹ (4x³ − 3x² + 2x − 1) dx = 1 − 1 + 1 − 1 = 0.
        let v = simpson(|x| 4.0 * x.powi(3) - 3.0 * x.powi(2) + 2.0 * x - 1.0, 0.0, 1.0, 11);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn simpson_converges_on_quartic() {
        // ∫₀¹ x⁴ dx = 0.2.
        let v = simpson(|x| x.powi(4), 0.0, 1.0, 1001);
        assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn simpson_samples_matches_closure_form() {
        let nodes = 101;
        let ys: Vec<f64> = (0..nodes)
            .map(|i| {
                let x = i as f64 / (nodes - 1) as f64;
                (std::f64::consts::PI * x).sin()
            })
            .collect();
        let a = simpson_samples(&ys, 0.0, 1.0);
        let b = simpson(|x| (std::f64::consts::PI * x).sin(), 0.0, 1.0, nodes);
        assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        // ∫₀¹ sin(πx) dx = 2/π; Simpson error at this resolution is ~3.4e-9.
        assert_abs_diff_eq!(a, 2.0 / std::f64::consts::PI, epsilon = 1e-8);
    }

    #[test]
    fn adaptive_simpson_handles_peaked_integrand() {
        // ∫₀¹ 1/sqrt(x) dx = 2 (integrable endpoint singularity, start inset).
        let v = adaptive_simpson(&|x: f64| x.sqrt().recip(), 1e-12, 1.0, 1e-10);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-5);
        // Smooth case to tight tolerance: ∫₀^π sin = 2.
        let s = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert_abs_diff_eq!(s, 2.0, epsilon = 1e-10);
    }

    #[test]
    fn gauss_hermite_weights_sum_to_sqrt_pi() {
        for n in [1, 2, 5, 20, 80, 200] {
            let gh = GaussHermite::new(n);
            let total: f64 = gh.weights.iter().sum();
            assert_abs_diff_eq!(total, std::f64::consts::PI.sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn gauss_hermite_nodes_are_symmetric_and_sorted() {
        let gh = GaussHermite::new(41);
        for w in gh.nodes.windows(2) {
            assert!(w[0] < w[1]);
        }
        for i in 0..gh.nodes.len() {
            let j = gh.nodes.len() - 1 - i;
            assert_abs_diff_eq!(gh.nodes[i], -gh.nodes[j], epsilon = 1e-10);
            assert_abs_diff_eq!(gh.weights[i], gh.weights[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn standard_normal_moments() {
        let gh = GaussHermite::new(40);
        assert_abs_diff_eq!(gh.expect_standard_normal(|_| 1.0), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(gh.expect_standard_normal(|u| u), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(gh.expect_standard_normal(|u| u * u), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gh.expect_standard_normal(|u| u.powi(4)), 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(gh.expect_standard_normal(|u| u.powi(6)), 15.0, epsilon = 1e-10);
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 5, 24, 64] {
            let gl = GaussLegendre::new(n);
            let total: f64 = gl.weights.iter().sum();
            assert_abs_diff_eq!(total, 2.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gauss_legendre_is_exact_on_polynomials() {
        // An n-point rule integrates degree 2n−1 exactly: ∫₀¹ x⁷ dx = 1/8.
        let gl = GaussLegendre::new(4);
        assert_abs_diff_eq!(gl.integrate(0.0, 1.0, |x| x.powi(7)), 0.125, epsilon = 1e-14);
        // ...but not degree 2n: ∫₀¹ x⁸ dx = 1/9 misses at order 4.
        assert!((gl.integrate(0.0, 1.0, |x| x.powi(8)) - 1.0 / 9.0).abs() > 1e-10);
    }

    #[test]
    fn gauss_legendre_on_transcendental_integrands() {
        let gl = GaussLegendre::new(24);
        // ∫₀^π sin = 2.
        assert_abs_diff_eq!(
            gl.integrate(0.0, std::f64::consts::PI, f64::sin),
            2.0,
            epsilon = 1e-14
        );
        // ∫₁² dx/x = ln 2.
        assert_abs_diff_eq!(
            gl.integrate(1.0, 2.0, |x| 1.0 / x),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );
    }

    #[test]
    fn standard_normal_characteristic_function() {
        // E cos(u) = exp(−1/2) for u ~ N(0,1).
        let gh = GaussHermite::new(60);
        assert_abs_diff_eq!(
            gh.expect_standard_normal(|u| u.cos()),
            (-0.5f64).exp(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn large_rule_stays_stable() {
        // The 200-node rule is used for the η function; it must remain
        // well-conditioned: positive weights, symmetric nodes, exact moments.
        let gh = GaussHermite::new(200);
        assert!(gh.weights.iter().all(|&w| w > 0.0));
        assert_abs_diff_eq!(gh.expect_standard_normal(|u| u * u), 1.0, epsilon = 1e-10);
    }
}
