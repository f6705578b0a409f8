//! Numerical verification of the separation and energy bounds.
//!
//! The library's analytical backbone is a chain of inequalities tying the
//! kinetic energy of a schedule to the sample count `n` and dimension `d`
//! of the dataset:
//!
//! 1. the sigmoid-moment function `η(t) = E 1/(1 + e^{t²/2 − t·z})`
//!    (z standard normal) is integrable with `∫₀^∞ η ≤ 3`;
//! 2. for any normalized dataset, `∫₀^∞ (1 − λ(s)) ds ≤ 3n/√d`;
//! 3. therefore any admissible schedule with mass bound `M` satisfies the
//!    squeeze `cke − 6M²·n/√d ≤ ke ≤ cke`.
//!
//! As `n/√d → 0` the kinetic energy of every schedule collapses onto its
//! conditional kinetic energy, whose minimizer is the straight path — the
//! quantitative reason kinetic-optimal schedules converge to it in high
//! dimension. Each check here recomputes one link of that chain on
//! concrete data and reports computed value, bound, and margin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::energy::{self, EnergyError};
use crate::quad;
use crate::schedule::Schedule;
use crate::separation::LambdaEstimate;

/// Errors from theorem verification.
#[derive(Debug, Error)]
pub enum TheoryError {
    /// A schedule handed to the squeeze check does not have strictly
    /// increasing signal-to-noise ratio.
    #[error("schedule '{0}' does not have strictly increasing SNR")]
    SnrNotMonotone(String),
    /// Energy evaluation failed.
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

/// One verified inequality: `computed ≤ bound` up to `tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    /// What was checked.
    pub quantity: String,
    /// The numerically computed left-hand side.
    pub computed: f64,
    /// The theoretical right-hand side.
    pub bound: f64,
    /// Slack granted for Monte-Carlo noise and quadrature.
    pub tolerance: f64,
    /// `bound − computed` (positive when the inequality holds strictly).
    pub margin: f64,
    /// Whether the inequality held within tolerance.
    pub pass: bool,
}

impl BoundReport {
    fn new(quantity: impl Into<String>, computed: f64, bound: f64, tolerance: f64) -> Self {
        BoundReport {
            quantity: quantity.into(),
            computed,
            bound,
            tolerance,
            margin: bound - computed,
            pass: computed <= bound + tolerance,
        }
    }
}

/// `η(t) = E_{z∼N(0,1)} 1/(1 + e^{t²/2 − t·z})`. Equals 1/2 at t = 0 and
/// decays like `√(2/π)·(2/t)·e^{−t²/8}` — the Gaussian mass beyond
/// `z = t/2`, inflated by the logistic tails on both sides of the
/// threshold.
///
/// The logistic transition sits at `z = t/2` with width `1/t`; by t ≈ 10
/// it is too sharp for fixed global quadrature rules (Gauss–Hermite at 200
/// nodes is ~2% off out there). The expectation is therefore taken against
/// the explicit normal density on a graded panel mesh: unit panels across
/// the Gaussian bulk plus a geometric ladder of panels matched to the
/// layer width around `z = t/2`, each integrated by a 24-point
/// Gauss–Legendre rule. Every panel then holds at most one feature scale
/// and the composite is accurate to ~1e-15 uniformly in t.
pub fn eta(t: f64) -> f64 {
    if t <= 1e-12 {
        return 0.5;
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let f = |z: f64| {
        // exp overflow saturates the logistic factor to exactly 0, which is
        // the correct limit; no clamping needed.
        norm * (-0.5 * z * z).exp() / (1.0 + (0.5 * t * t - t * z).exp())
    };
    let lo = -9.0;
    let hi = 0.5 * t + 9.0;
    let mut cuts: Vec<f64> = Vec::new();
    let mut z = lo;
    while z < hi {
        cuts.push(z);
        z += 1.0;
    }
    cuts.push(hi);
    cuts.push(0.5 * t);
    for k in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        for sgn in [-1.0, 1.0] {
            let p = 0.5 * t + sgn * k / t;
            if p > lo && p < hi {
                cuts.push(p);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let rule = legendre_rule();
    cuts.windows(2).map(|w| rule.integrate(w[0], w[1], f)).sum()
}

/// The shared 24-point Legendre rule backing [`eta`].
fn legendre_rule() -> &'static quad::GaussLegendre {
    static RULE: std::sync::OnceLock<quad::GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| quad::GaussLegendre::new(24))
}

/// Verify `∫₀^∞ η(t) dt ≤ 3` by adaptive quadrature on [0, 40]; beyond 40
/// the integrand is below 1e-80 and contributes nothing at this precision.
pub fn check_eta_integral() -> BoundReport {
    // Pre-split at the knee of the integrand: beyond t ≈ 10 the function is
    // below 1e-6 and a single adaptive pass over the whole range can
    // terminate before resolving the head.
    let value = quad::adaptive_simpson(&eta, 0.0, 5.0, 1e-12)
        + quad::adaptive_simpson(&eta, 5.0, 10.0, 1e-12)
        + quad::adaptive_simpson(&eta, 10.0, 40.0, 1e-12);
    BoundReport::new("eta-integral", value, 3.0, 0.0)
}

/// Verify `∫₀^∞ (1 − λ̂(s)) ds ≤ 3n/√d` for a dataset and its separation
/// estimate. The integral substitutes `s = tan θ` (Jacobian `sec²θ`) and
/// integrates the spline surrogate up to the last finite-s grid node; the
/// tail beyond it is closed conservatively by `(1 − λ̂(θ_last))·tan θ_last`
/// added to the computed side.
pub fn check_lambda_bound(ds: &Dataset, est: &LambdaEstimate) -> BoundReport {
    let value = lambda_gap_integral(est);
    let bound = 3.0 * ds.n() as f64 / (ds.d() as f64).sqrt();
    let name = format!("lambda-integral(n={}, d={})", ds.n(), ds.d());
    BoundReport::new(name, value, bound, 0.0)
}

/// `∫₀^∞ (1 − λ̂(s)) ds` with the tail closure described on
/// [`check_lambda_bound`].
pub fn lambda_gap_integral(est: &LambdaEstimate) -> f64 {
    let grid = est.theta_grid();
    let last_finite = grid
        .iter()
        .rev()
        .find(|&&th| th < std::f64::consts::FRAC_PI_2 - 1e-9)
        .copied()
        .unwrap_or(grid[grid.len() - 2]);
    let integrand = |theta: f64| {
        let c = theta.cos();
        (1.0 - est.eval_clamped(theta)) / (c * c)
    };
    let body = quad::simpson(&integrand, grid[0], last_finite, 2001);
    let tail = (1.0 - est.eval_clamped(last_finite)) * last_finite.tan();
    body + tail
}

/// Verify the separation condition `λ(s) ≥ s²/(1+s²)` — equivalently
/// γ(θ) ≥ 0 — on the estimate's grid. The report's computed side is the
/// worst violation `max(sin²θ − λ̂)`, which must stay within the
/// Monte-Carlo slack of 0.02.
pub fn check_gamma_condition(est: &LambdaEstimate) -> BoundReport {
    let mut worst = f64::NEG_INFINITY;
    for &theta in est.theta_grid() {
        let sin = theta.sin();
        let violation = sin * sin - est.eval_clamped(theta);
        if violation > worst {
            worst = violation;
        }
    }
    BoundReport::new("gamma-condition-violation", worst, 0.0, 0.02)
}

/// Verify the kinetic-energy squeeze
/// `cke − 6M²·n/√d ≤ ke ≤ cke`
/// for each schedule, with `M` measured as the largest of sup|a|, sup|ȧ|,
/// sup|m|, sup|ṁ| on a 1001-point grid (trimmed when an endpoint
/// derivative diverges). Produces an upper- and a lower-bound report per
/// schedule; the lower bound carries an absolute tolerance of 0.05 for
/// Monte-Carlo noise in λ̂.
pub fn check_ke_squeeze(
    ds: &Dataset,
    est: &LambdaEstimate,
    schedules: &[Schedule],
) -> Result<Vec<BoundReport>, TheoryError> {
    let mut reports = Vec::with_capacity(2 * schedules.len());
    for schedule in schedules {
        let name = schedule.kind_name();
        if !snr_strictly_increasing(schedule) {
            return Err(TheoryError::SnrNotMonotone(name.to_string()));
        }
        let report = energy::ke(schedule, est, energy::DEFAULT_NODES)?;
        let m = mass_bound(schedule);
        let lower_gap_bound = 6.0 * m * m * ds.n() as f64 / (ds.d() as f64).sqrt();
        reports.push(BoundReport::new(
            format!("squeeze-upper({name})"),
            report.ke,
            report.cke,
            1e-8,
        ));
        reports.push(BoundReport::new(
            format!("squeeze-lower({name})"),
            report.gap,
            lower_gap_bound,
            0.05,
        ));
    }
    Ok(reports)
}

fn snr_strictly_increasing(schedule: &Schedule) -> bool {
    let nodes = 1001;
    let mut prev = f64::NEG_INFINITY;
    for i in 0..nodes {
        // Interior sample: SNR is 0/0-free away from the endpoints.
        let t = (i as f64 + 0.5) / nodes as f64;
        let snr = schedule.snr(t);
        if !(snr > prev) {
            return false;
        }
        prev = snr;
    }
    true
}

/// Sup-norm bound M over a 1001-point grid; falls back to a trimmed grid
/// when an endpoint derivative is infinite (diffusion schedules).
fn mass_bound(schedule: &Schedule) -> f64 {
    let sample = |trim: f64| -> Option<f64> {
        let nodes = 1001;
        let mut m = 0.0f64;
        for i in 0..nodes {
            let t = trim + (1.0 - 2.0 * trim) * i as f64 / (nodes - 1) as f64;
            let p = schedule.eval(t);
            for v in [p.a, p.m, p.da, p.dm] {
                if !v.is_finite() {
                    return None;
                }
                m = m.max(v.abs());
            }
        }
        Some(m)
    };
    sample(0.0).or_else(|| sample(1e-4)).unwrap_or(f64::INFINITY)
}
