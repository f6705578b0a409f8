//! Kinetic-energy functionals of Gaussian probability-path schedules.
//!
//! Two functionals matter here. The *conditional* kinetic energy
//!
//! ```text
//! cke = ∫₀¹ (ṁ² + ȧ²) dt
//! ```
//!
//! measures the per-sample conditional flows and is data-independent. The
//! kinetic energy of the marginal flow subtracts a data-dependent term
//! controlled by the separation function λ:
//!
//! ```text
//! ke = cke − ∫₀¹ β²·(1 − λ(a/m)) dt,     β = ȧ − (a/m)·ṁ,
//! ```
//!
//! or equivalently, in polar coordinates `a = r·sin θ`, `m = r·cos θ`,
//!
//! ```text
//! ke = ∫₀¹ ṙ² + r²θ̇²·γ(θ) dt,     γ(θ) = 1 − (1 − λ(tan θ))/cos²θ.
//! ```
//!
//! [`ke`] evaluates *both* forms and insists they agree; a disagreement
//! means the quadrature or the λ surrogate is in trouble, not that one
//! number is preferable. Since λ ≤ 1 implies γ ≤ 1, the kinetic energy
//! never exceeds the conditional kinetic energy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad;
use crate::schedule::Schedule;
use crate::separation::LambdaEstimate;
use crate::spline::CubicSpline;

/// Default quadrature resolution (composite Simpson node count).
pub const DEFAULT_NODES: usize = 1001;

/// Trim applied when an integrand cannot be stabilized at an endpoint.
const EDGE_TRIM: f64 = 1e-4;

/// Diagnostic floor for γ; values below it flag a λ estimate that fails to
/// approach 1 fast enough near θ = π/2.
const GAMMA_FLOOR: f64 = -10.0;

/// Errors from kinetic-energy evaluation.
#[derive(Debug, Error)]
pub enum EnergyError {
    /// The Cartesian and polar routes to the kinetic energy disagree (or
    /// one of them failed to produce a finite number).
    #[error(
        "kinetic-energy routes disagree: cartesian {cartesian}, polar {polar} \
         (relative defect {defect:.3e})"
    )]
    Inconsistent { cartesian: f64, polar: f64, defect: f64 },
}

/// Energy evaluation of one schedule against one λ estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Conditional kinetic energy ∫(ṁ² + ȧ²)dt.
    pub cke: f64,
    /// Kinetic energy (polar-form value).
    pub ke: f64,
    /// `cke − ke ≥ 0` for any λ ≤ 1.
    pub gap: f64,
    /// Simpson nodes used.
    pub nodes: usize,
    /// Smallest γ seen along the path.
    pub min_gamma: f64,
    /// True when `min_gamma` fell below the diagnostic floor of −10,
    /// indicating a λ estimate inconsistent with a well-posed energy.
    pub gamma_floored: bool,
}

/// Conditional kinetic energy ∫₀¹ (ṁ² + ȧ²) dt by composite Simpson on at
/// least [`DEFAULT_NODES`] nodes. Schedules whose derivatives blow up at an
/// endpoint (the variance-preserving diffusion schedule at `t = 1`) are
/// integrated on the trimmed interval `[ε, 1−ε]` instead.
pub fn cke(schedule: &Schedule, nodes: usize) -> f64 {
    let nodes = nodes.max(DEFAULT_NODES);
    robust_unit_integral(
        &|t: f64| {
            let p = schedule.eval(t);
            p.da * p.da + p.dm * p.dm
        },
        nodes,
    )
}

/// γ(θ) = 1 − (1 − λ(tan θ))/cos²θ, the angular weight of the polar
/// kinetic-energy form. At θ = π/2 the expression is 0/0; per the energy
/// identity it is taken as 1 when the estimate saturates (λ(π/2) = 1) and
/// as −∞ otherwise, signalling an ill-posed energy.
pub fn gamma(est: &LambdaEstimate, theta: f64) -> f64 {
    if theta >= std::f64::consts::FRAC_PI_2 - 1e-9 {
        let tail = est.eval_clamped(std::f64::consts::FRAC_PI_2);
        return if tail >= 1.0 - 1e-9 { 1.0 } else { f64::NEG_INFINITY };
    }
    gamma_raw(est, theta)
}

/// γ without the endpoint rule; used inside quadrature where the endpoint
/// is handled by limit extrapolation instead of a sentinel.
pub(crate) fn gamma_raw(est: &LambdaEstimate, theta: f64) -> f64 {
    let c = theta.cos();
    1.0 - (1.0 - est.eval_clamped(theta)) / (c * c)
}

/// Interpolant of g(θ) = (1 − λ(tan θ))/cos²θ = 1 − γ(θ), built from the
/// *nodal* values of the λ estimate.
///
/// Evaluating the ratio through the λ spline amplifies its interpolation
/// error by 1/cos²θ, which near θ = π/2 turns harmless wiggles into an
/// O(1) integrand error — enough to corrupt the kinetic energy. At the
/// grid nodes, however, the λ values are exact, so the ratio is formed
/// there and interpolated directly; its own error is never amplified. At
/// the π/2 node the ratio is 0/0 when λ saturates and is replaced by the
/// quadratic extrapolation of the preceding nodes (for Gaussian-like data
/// g is flat there). A non-saturating estimate has a genuinely divergent
/// tail, modelled as the last resolvable value growing like 1/cos²θ.
pub(crate) struct GammaSurrogate {
    spline: CubicSpline,
    /// g beyond the last spline knot follows `tail_scale/cos²θ`; zero for
    /// a saturated estimate (no tail needed).
    tail_from: f64,
    tail_scale: f64,
}

impl GammaSurrogate {
    pub(crate) fn build(est: &LambdaEstimate) -> Self {
        let thetas = est.theta_grid();
        let lambdas = est.values();
        let n = thetas.len();
        let mut knots = Vec::with_capacity(n);
        let mut gs = Vec::with_capacity(n);
        for (&theta, &lam) in thetas.iter().zip(lambdas) {
            let c2 = theta.cos().powi(2);
            if c2 > 1e-12 {
                knots.push(theta);
                gs.push((1.0 - lam) / c2);
            }
        }
        let last_lambda = *lambdas.last().unwrap();
        let last_theta = *thetas.last().unwrap();
        let saturated = last_theta < std::f64::consts::FRAC_PI_2 - 1e-6
            || last_lambda >= 1.0 - 1e-9;
        if saturated && knots.len() < n {
            // Close the 0/0 node with the extrapolated finite limit.
            let k = gs.len();
            let g_end = if k >= 3 {
                (3.0 * gs[k - 1] - 3.0 * gs[k - 2] + gs[k - 3]).max(0.0)
            } else {
                gs[k - 1]
            };
            knots.push(last_theta);
            gs.push(g_end);
        }
        let (tail_from, tail_scale) = if saturated {
            (f64::INFINITY, 0.0)
        } else {
            let from = *knots.last().unwrap();
            (from, gs.last().unwrap() * from.cos().powi(2))
        };
        let spline = CubicSpline::natural(&knots, &gs).expect("ascending finite knots");
        GammaSurrogate { spline, tail_from, tail_scale }
    }

    /// g(θ) ≥ 0; beyond the knots of a non-saturating estimate the value
    /// grows like 1/cos²θ, reproducing the divergent energy gap.
    pub(crate) fn g(&self, theta: f64) -> f64 {
        if theta > self.tail_from {
            return self.tail_scale / theta.cos().powi(2).max(1e-300);
        }
        self.spline.eval(theta).max(0.0)
    }

    /// γ(θ) = 1 − g(θ).
    pub(crate) fn gamma(&self, theta: f64) -> f64 {
        1.0 - self.g(theta)
    }
}

/// Kinetic energy of `schedule` under the separation estimate `est`.
///
/// Evaluates the Cartesian gap form and the polar direct form on the same
/// Simpson grid, substituting extrapolated endpoint limits where the raw
/// integrand is indeterminate (for boundary-pinned schedules both forms are
/// 0·∞ at the ends). The two routes must agree within 1% relative — the
/// report's `ke` is the polar value — otherwise [`EnergyError::Inconsistent`]
/// is returned.
pub fn ke(
    schedule: &Schedule,
    est: &LambdaEstimate,
    nodes: usize,
) -> Result<EnergyReport, EnergyError> {
    let nodes = nodes.max(DEFAULT_NODES);
    let cke_value = cke(schedule, nodes);
    let gsur = GammaSurrogate::build(est);

    let polar_integrand = |t: f64| {
        let p = schedule.polar(t);
        p.dr * p.dr + p.r * p.r * p.dtheta * p.dtheta * gsur.gamma(p.theta)
    };
    let cart_integrand = |t: f64| {
        let p = schedule.eval(t);
        let beta = p.da - p.a / p.m * p.dm;
        let r2 = p.a * p.a + p.m * p.m;
        let theta = p.a.atan2(p.m);
        (p.da * p.da + p.dm * p.dm) - beta * beta * (p.m * p.m / r2) * gsur.g(theta)
    };

    // Both routes integrate the same function through different coordinate
    // algebra; evaluating them on the same grid with a *shared* endpoint
    // plan keeps any trim decision from desynchronizing the comparison.
    let polar_samples = sample_unit_grid(&polar_integrand, nodes, 0.0);
    let cart_samples = sample_unit_grid(&cart_integrand, nodes, 0.0);
    let (ke_polar, ke_cart) = match (
        plan_endpoints(&polar_samples),
        plan_endpoints(&cart_samples),
    ) {
        (Some((pl, pr)), Some((cl, cr))) => {
            let mut p = polar_samples;
            let mut c = cart_samples;
            let n = p.len();
            (p[0], p[n - 1], c[0], c[n - 1]) = (pl, pr, cl, cr);
            (quad::simpson_samples(&p, 0.0, 1.0), quad::simpson_samples(&c, 0.0, 1.0))
        }
        _ => {
            let p = sample_unit_grid(&polar_integrand, nodes, EDGE_TRIM);
            let c = sample_unit_grid(&cart_integrand, nodes, EDGE_TRIM);
            (
                quad::simpson_samples(&p, EDGE_TRIM, 1.0 - EDGE_TRIM),
                quad::simpson_samples(&c, EDGE_TRIM, 1.0 - EDGE_TRIM),
            )
        }
    };

    // Track γ along the interior of the path for diagnostics.
    let mut min_gamma = f64::INFINITY;
    for i in 1..nodes - 1 {
        let t = i as f64 / (nodes - 1) as f64;
        let g = gsur.gamma(schedule.polar(t).theta);
        if g.is_finite() && g < min_gamma {
            min_gamma = g;
        }
    }

    let scale = ke_polar.abs().max(ke_cart.abs()).max(1e-9);
    let defect = (ke_polar - ke_cart).abs() / scale;
    if !ke_polar.is_finite() || !ke_cart.is_finite() || defect > 1e-3 {
        return Err(EnergyError::Inconsistent { cartesian: ke_cart, polar: ke_polar, defect });
    }
    Ok(EnergyReport {
        cke: cke_value,
        ke: ke_polar,
        gap: cke_value - ke_polar,
        nodes,
        min_gamma: min_gamma.max(GAMMA_FLOOR),
        gamma_floored: min_gamma < GAMMA_FLOOR,
    })
}

/// Decide how to treat the two endpoint samples of a full-grid sweep:
/// `Some((left, right))` gives usable endpoint values (the raw samples
/// where finite, else stabilized limits), `None` demands the trimmed
/// interval. Non-finite interior samples always demand the trim.
fn plan_endpoints(ys: &[f64]) -> Option<(f64, f64)> {
    let n = ys.len();
    if ys[1..n - 1].iter().any(|v| !v.is_finite()) {
        return None;
    }
    let left = if ys[0].is_finite() {
        ys[0]
    } else {
        stable_limit(ys[3], ys[2], ys[1])?
    };
    let right = if ys[n - 1].is_finite() {
        ys[n - 1]
    } else {
        stable_limit(ys[n - 4], ys[n - 3], ys[n - 2])?
    };
    Some((left, right))
}

/// Evaluate `f` on a uniform grid over `[trim, 1−trim]`.
fn sample_unit_grid<F: Fn(f64) -> f64>(f: &F, nodes: usize, trim: f64) -> Vec<f64> {
    let a = trim;
    let b = 1.0 - trim;
    let h = (b - a) / (nodes - 1) as f64;
    (0..nodes).map(|i| f(a + h * i as f64)).collect()
}

/// ∫₀¹ f dt where `f` may be indeterminate at the endpoints. Endpoint values
/// that come out non-finite are replaced by stabilized limits of the nearest
/// interior nodes; where no finite limit exists (or interior values are
/// non-finite) the integral falls back to the trimmed interval `[ε, 1−ε]`.
fn robust_unit_integral<F: Fn(f64) -> f64>(f: &F, nodes: usize) -> f64 {
    let mut ys = sample_unit_grid(f, nodes, 0.0);
    let n = ys.len();
    if let Some((left, right)) = plan_endpoints(&ys) {
        ys[0] = left;
        ys[n - 1] = right;
        return quad::simpson_samples(&ys, 0.0, 1.0);
    }
    let trimmed = sample_unit_grid(f, nodes, EDGE_TRIM);
    quad::simpson_samples(&trimmed, EDGE_TRIM, 1.0 - EDGE_TRIM)
}

/// Limit of three equispaced samples `y3, y2, y1` (y1 nearest the
/// endpoint) continued one step further. Flat samples return `y1`; samples
/// whose successive differences grow toward the endpoint indicate a
/// divergent integrand and return `None`; otherwise the quadratic
/// continuation `3y1 − 3y2 + y3`, rejected if it leaves the sample scale.
fn stable_limit(y3: f64, y2: f64, y1: f64) -> Option<f64> {
    if !(y1.is_finite() && y2.is_finite() && y3.is_finite()) {
        return None;
    }
    let d1 = y1 - y2;
    let d2 = y2 - y3;
    let mag = y1.abs().max(y2.abs()).max(y3.abs());
    let tiny = 1e-9 * (1.0 + mag);
    if d1.abs() <= tiny {
        return Some(y1);
    }
    if d1.abs() > 1.5 * d2.abs() + tiny {
        return None;
    }
    let v = 3.0 * y1 - 3.0 * y2 + y3;
    (v.is_finite() && v.abs() <= 10.0 * (mag + 1.0)).then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Tabulated;
    use crate::separation::{lambda_gaussian, standard_grid};
    use approx::assert_abs_diff_eq;

    fn flat_lambda() -> LambdaEstimate {
        LambdaEstimate::from_fn(standard_grid(), |_| 1.0).unwrap()
    }

    fn gaussian_lambda() -> LambdaEstimate {
        LambdaEstimate::from_fn(standard_grid(), lambda_gaussian).unwrap()
    }

    #[test]
    fn cke_of_straight_path_is_two() {
        assert_abs_diff_eq!(cke(&Schedule::CondOt, DEFAULT_NODES), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cke_of_trigonometric_path_is_pi_squared_over_four() {
        let expected = std::f64::consts::PI * std::f64::consts::PI / 4.0;
        assert_abs_diff_eq!(cke(&Schedule::Si, DEFAULT_NODES), expected, epsilon = 1e-9);
    }

    #[test]
    fn cke_of_diffusion_schedule_is_finite_and_large() {
        // ṁ diverges at t = 1 so the trimmed interval is used; the
        // log-divergent tail makes the value depend on the trim, but it
        // must be finite and well above the straight path.
        let v = cke(&Schedule::ddpm_default(), DEFAULT_NODES);
        assert!(v.is_finite());
        assert!(v > 2.0, "diffusion cke {v} should exceed the straight path");
    }

    #[test]
    fn gamma_closed_forms() {
        let flat = flat_lambda();
        let gauss = gaussian_lambda();
        for theta in [0.0, 0.3, 0.9, 1.4] {
            assert_abs_diff_eq!(gamma(&flat, theta), 1.0, epsilon = 1e-9);
            assert_abs_diff_eq!(gamma(&gauss, theta), 0.0, epsilon = 2e-6);
        }
        // λ(tan θ) = 0.5 at θ = π/4 gives γ = 1 − 0.5/0.5 = 0.
        let half = LambdaEstimate::from_fn(standard_grid(), |_| 0.5).unwrap();
        assert_abs_diff_eq!(gamma(&half, std::f64::consts::FRAC_PI_4), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn gamma_endpoint_rule() {
        assert_eq!(gamma(&flat_lambda(), std::f64::consts::FRAC_PI_2), 1.0);
        assert_eq!(gamma(&gaussian_lambda(), std::f64::consts::FRAC_PI_2), 1.0);
        let capped = LambdaEstimate::from_fn(standard_grid(), |s| {
            0.7 * lambda_gaussian(s)
        })
        .unwrap();
        assert_eq!(gamma(&capped, std::f64::consts::FRAC_PI_2), f64::NEG_INFINITY);
    }

    #[test]
    fn saturated_lambda_closes_the_gap() {
        let flat = flat_lambda();
        for schedule in [Schedule::CondOt, Schedule::Si] {
            let report = ke(&schedule, &flat, DEFAULT_NODES).unwrap();
            assert!(report.gap.abs() < 1e-6, "gap {} for {:?}", report.gap, schedule);
            assert_abs_diff_eq!(report.ke, report.cke, epsilon = 1e-6);
        }
    }

    #[test]
    fn straight_path_against_gaussian_lambda_matches_oracle() {
        // Closed form: gap = ∫ dt/(t² + (1−t)²) = π/2, so ke = 2 − π/2.
        let report = ke(&Schedule::CondOt, &gaussian_lambda(), DEFAULT_NODES).unwrap();
        let oracle = 2.0 - std::f64::consts::FRAC_PI_2;
        assert_abs_diff_eq!(report.ke, oracle, epsilon = 1e-4);
        assert_abs_diff_eq!(report.cke, 2.0, epsilon = 1e-12);
        assert!(!report.gamma_floored);
        assert!(report.min_gamma.abs() < 1e-4, "gaussian γ should vanish: {}", report.min_gamma);
    }

    #[test]
    fn ke_never_exceeds_cke() {
        use rand::Rng;
        let mut rng = crate::rng::stream(21, crate::rng::stage::SCRATCH);
        let ts: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let gauss = gaussian_lambda();
        let two_pt = LambdaEstimate::from_fn(standard_grid(), |s| {
            crate::separation::lambda_two_point(s, 2, 60)
        })
        .unwrap();
        for trial in 0..20 {
            let c: Vec<f64> = (0..3).map(|_| rng.random_range(-0.08..0.08)).collect();
            let e: Vec<f64> = (0..3).map(|_| rng.random_range(-0.08..0.08)).collect();
            let a: Vec<f64> = ts
                .iter()
                .map(|&t| {
                    t * (1.0
                        + c.iter()
                            .enumerate()
                            .map(|(j, cj)| cj * ((j + 1) as f64 * std::f64::consts::PI * t).sin())
                            .sum::<f64>())
                })
                .collect();
            let m: Vec<f64> = ts
                .iter()
                .map(|&t| {
                    (1.0 - t)
                        * (1.0
                            + e.iter()
                                .enumerate()
                                .map(|(j, ej)| {
                                    ej * ((j + 1) as f64 * std::f64::consts::PI * t).sin()
                                })
                                .sum::<f64>())
                })
                .collect();
            let tab = Tabulated::from_values(ts.clone(), a, m).unwrap();
            let schedule = Schedule::Tabulated(tab);
            for est in [&gauss, &two_pt] {
                let report = ke(&schedule, est, DEFAULT_NODES).unwrap();
                assert!(
                    report.ke <= report.cke + 1e-8,
                    "trial {trial}: ke {} > cke {}",
                    report.ke,
                    report.cke
                );
                assert!(report.gap >= -1e-8, "trial {trial}: gap {}", report.gap);
            }
        }
    }

    #[test]
    fn ke_is_stable_under_grid_refinement() {
        let est = gaussian_lambda();
        let coarse = ke(&Schedule::CondOt, &est, 1001).unwrap().ke;
        let fine = ke(&Schedule::CondOt, &est, 4001).unwrap().ke;
        assert!((coarse - fine).abs() < 1e-5, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn interior_zero_mass_is_a_removable_singularity() {
        // A tabulated path whose m touches zero in the interior hits 0/0 in
        // the Cartesian form on the full grid (t = 0.5 is a sample), but the
        // limit β²m² → (a·ṁ)² is finite, so the shared fallback onto the
        // trimmed interval recovers a finite, route-consistent energy.
        let ts: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        let a: Vec<f64> = ts.clone();
        let m: Vec<f64> = ts.iter().map(|&t| (1.0 - t) * (2.0 * t - 1.0).abs()).collect();
        let tab = Tabulated::from_values(ts, a, m).unwrap();
        let report = ke(&Schedule::Tabulated(tab), &gaussian_lambda(), DEFAULT_NODES).unwrap();
        assert!(report.ke.is_finite());
        assert!(report.ke > 0.0);
        assert!(report.gap > 0.0, "{report:?}");
    }

    #[test]
    fn zero_mass_on_the_trimmed_grid_is_rejected_as_inconsistent() {
        // Pin m = 0 exactly onto a node of *both* integration grids: the
        // full-grid sample at t = 0.5 forces the trimmed fallback, and the
        // knot placed on a trimmed-grid node leaves the Cartesian route no
        // escape from its 0/0 while the polar route stays finite. The
        // cross-check must refuse to report an energy.
        let trim_node = {
            // Mirrors the trimmed-grid arithmetic for 1001 nodes.
            let a = 1e-4f64;
            let h = (1.0 - 2e-4) / 1000.0;
            a + h * 500.0
        };
        let ts = vec![0.0, 0.25, 0.5, trim_node, 0.75, 1.0];
        let a = ts.clone();
        let m = vec![1.0, 0.6, 0.0, 0.0, 0.3, 0.0];
        let tab = Tabulated::from_values(ts, a, m).unwrap();
        let err = ke(&Schedule::Tabulated(tab), &gaussian_lambda(), DEFAULT_NODES);
        assert!(matches!(err, Err(EnergyError::Inconsistent { .. })), "{err:?}");
    }
}
