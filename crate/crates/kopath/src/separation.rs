//! The data separation function λ and its Monte-Carlo estimator.
//!
//! For a finite dataset `q = {x_1..x_n}` and noise scale `s⁻¹`, the
//! separation function is
//!
//! ```text
//! λ(s) = (1/d)·E‖E[x1 | x]‖²,   x = x_j + s⁻¹·z,  z ~ N(0, I),
//! ```
//!
//! the expected squared norm (per dimension) of the posterior mean of a
//! clean sample given its noisy version. It runs from 0 (`s = 0`: the
//! posterior is the prior, whose mean is zero for normalized data) to 1
//! (`s = ∞`: the posterior identifies the sample). λ is exactly the
//! quantity that separates the kinetic energy of a schedule from its
//! conditional kinetic energy, so everything downstream — energy reports,
//! kinetic-optimal schedules, the theory checks — consumes the estimate
//! produced here.
//!
//! The estimator averages the posterior-mean norm over all data points and
//! `k` shared noise draws on a θ-grid (`s = tan θ` compactifies `[0, ∞)` to
//! `[0, π/2]`), then fits a cubic spline in θ for downstream evaluation at
//! arbitrary angles. The `O(k·n²·d)` kernel uses the expanded squared
//! distance with a precomputed Gram matrix and log-space softmax, and is
//! parallelized over fixed-size row blocks reduced in deterministic order:
//! results are bit-identical for any worker count.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::{Array1, Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::quad::GaussHermite;
use crate::rng::{self, stage};
use crate::spline::{CubicSpline, SplineError};

/// Rows per work block of the estimator kernel. Fixed so that the reduction
/// order — and therefore the floating-point result — is independent of the
/// number of worker threads.
const BLOCK_ROWS: usize = 64;

/// Log-weight cutoff below the row maximum; `exp(−40) ≈ 4e-18` contributes
/// nothing at double precision, and skipping it makes separated regimes
/// (most of the grid for high-dimensional data) cheap.
const LOG_WEIGHT_CUTOFF: f64 = -40.0;

/// Errors from separation estimation and I/O.
#[derive(Debug, Error)]
pub enum SeparationError {
    /// θ-grid not ascending or not inside `[0, π/2]`.
    #[error("theta grid must be ascending within [0, pi/2]")]
    BadGrid,
    /// Evaluation angle outside the estimate's grid range.
    #[error("theta {0} outside the estimated range")]
    OutOfRange(f64),
    /// Noise matrix shape does not match `(k, d)`.
    #[error("noise matrix must be k x d with k >= 1, got {0} x {1}")]
    BadNoise(usize, usize),
    /// Spline fitting failed.
    #[error(transparent)]
    Spline(#[from] SplineError),
    /// Underlying file-system failure.
    #[error("lambda I/O failed: {0}")]
    Io(#[from] std::io::Error),
    /// Structurally invalid file content.
    #[error("bad lambda file: {0}")]
    Format(String),
}

/// Options for [`estimate_lambda`].
#[derive(Debug, Clone, Copy)]
pub struct LambdaOptions {
    /// Number of shared noise draws `z_l`.
    pub k: usize,
    /// Seed for the noise stream.
    pub seed: u64,
    /// Worker threads; `0` uses the available parallelism. The result does
    /// not depend on this value.
    pub threads: usize,
}

impl Default for LambdaOptions {
    fn default() -> Self {
        LambdaOptions { k: 100, seed: 0, threads: 0 }
    }
}

/// The standard evaluation grid `θ_i = 0.01·(π/2)·i`, `i = 0..=100`.
pub fn standard_grid() -> Vec<f64> {
    (0..=100).map(|i| 0.01 * std::f64::consts::FRAC_PI_2 * i as f64).collect()
}

/// Posterior weights of the data points given a noisy observation `x` at
/// scale `s`: `w_i ∝ exp(−s²/2·‖x_i − x‖²)`, normalized, computed in
/// log-space with max subtraction. `s = 0` yields the uniform posterior.
pub fn posterior_weights(ds: &Dataset, x: ndarray::ArrayView1<'_, f64>, s: f64) -> Array1<f64> {
    let n = ds.n();
    let mut logw = Array1::zeros(n);
    for (i, row) in ds.points().rows().into_iter().enumerate() {
        let mut d2 = 0.0;
        for (a, b) in row.iter().zip(x.iter()) {
            let diff = a - b;
            d2 += diff * diff;
        }
        logw[i] = -0.5 * s * s * d2;
    }
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logw.iter_mut() {
        *v = (*v - mx).exp();
        total += *v;
    }
    logw / total
}

/// The separation function of the continuous standard Gaussian:
/// `λ(s) = s²/(1+s²)` (1 at `s = ∞`).
pub fn lambda_gaussian(s: f64) -> f64 {
    if s.is_infinite() {
        return 1.0;
    }
    s * s / (1.0 + s * s)
}

/// The separation function of the symmetric two-point dataset `{±v}` with
/// `‖v‖² = d`: `λ(s) = E_{u~N(0,1)} tanh²(s²·d + s·√d·u)`, evaluated by
/// Gauss–Hermite quadrature with `quad_order` nodes.
pub fn lambda_two_point(s: f64, d: usize, quad_order: usize) -> f64 {
    if s.is_infinite() {
        return 1.0;
    }
    let gh = GaussHermite::new(quad_order);
    let sd = s * s * d as f64;
    let sr = s * (d as f64).sqrt();
    gh.expect_standard_normal(|u| {
        let t = (sd + sr * u).tanh();
        t * t
    })
}

/// A λ estimate on a θ-grid with a cubic-spline surrogate of `λ∘tan`.
#[derive(Debug, Clone)]
pub struct LambdaEstimate {
    theta_grid: Vec<f64>,
    lambda_values: Vec<f64>,
    spline: CubicSpline,
    n_data: usize,
    k_noise: usize,
    seed: u64,
}

/// JSON sidecar of a saved λ estimate.
#[derive(Debug, Serialize, Deserialize)]
struct LambdaSidecar {
    n: usize,
    k: usize,
    seed: u64,
    grid_spec: GridSpec,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridSpec {
    nodes: usize,
    theta_min: f64,
    theta_max: f64,
}

impl LambdaEstimate {
    /// Build from explicit grid values (clamped to `[0, 1]`), fitting the
    /// spline surrogate. Metadata records where the values came from.
    pub fn from_values(
        theta_grid: Vec<f64>,
        lambda_values: Vec<f64>,
        n_data: usize,
        k_noise: usize,
        seed: u64,
    ) -> Result<Self, SeparationError> {
        check_theta_grid(&theta_grid)?;
        if lambda_values.len() != theta_grid.len() {
            return Err(SeparationError::Format("grid/value length mismatch".into()));
        }
        if lambda_values.iter().any(|v| !v.is_finite()) {
            return Err(SeparationError::Format("non-finite lambda value".into()));
        }
        let clamped: Vec<f64> = lambda_values.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let spline = CubicSpline::natural(&theta_grid, &clamped)?;
        Ok(LambdaEstimate { theta_grid, lambda_values: clamped, spline, n_data, k_noise, seed })
    }

    /// Build from a closed-form separation function `f(s)` evaluated on the
    /// grid (`f` receives `s = tan θ`, and `f(∞)` at the `π/2` node).
    pub fn from_fn<F: Fn(f64) -> f64>(
        theta_grid: Vec<f64>,
        f: F,
    ) -> Result<Self, SeparationError> {
        let values: Vec<f64> = theta_grid
            .iter()
            .map(|&theta| {
                if theta >= std::f64::consts::FRAC_PI_2 - 1e-9 {
                    f(f64::INFINITY)
                } else {
                    f(theta.tan())
                }
            })
            .collect();
        Self::from_values(theta_grid, values, 0, 0, 0)
    }

    /// The θ-grid.
    pub fn theta_grid(&self) -> &[f64] {
        &self.theta_grid
    }

    /// The estimated λ values at the grid nodes.
    pub fn values(&self) -> &[f64] {
        &self.lambda_values
    }

    /// Number of data points used.
    pub fn n_data(&self) -> usize {
        self.n_data
    }

    /// Number of noise draws used.
    pub fn k_noise(&self) -> usize {
        self.k_noise
    }

    /// Noise seed used.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Spline evaluation of `λ(tan θ)` at `θ`, clamped to `[0, 1]`.
    /// Errors when `θ` lies outside the estimated grid range.
    pub fn eval(&self, theta: f64) -> Result<f64, SeparationError> {
        let lo = self.theta_grid[0];
        let hi = *self.theta_grid.last().unwrap();
        if !(lo - 1e-12..=hi + 1e-12).contains(&theta) {
            return Err(SeparationError::OutOfRange(theta));
        }
        Ok(self.spline.eval(theta).clamp(0.0, 1.0))
    }

    /// Like [`LambdaEstimate::eval`] but with `θ` clamped into the grid range
    /// first; convenient inside integrands where range errors cannot occur.
    pub fn eval_clamped(&self, theta: f64) -> f64 {
        let lo = self.theta_grid[0];
        let hi = *self.theta_grid.last().unwrap();
        self.spline.eval(theta.clamp(lo, hi)).clamp(0.0, 1.0)
    }

    /// Evaluate as a function of the scale `s ≥ 0` (`s = ∞` allowed).
    pub fn eval_s(&self, s: f64) -> f64 {
        if s.is_infinite() {
            self.eval_clamped(std::f64::consts::FRAC_PI_2)
        } else {
            self.eval_clamped(s.atan())
        }
    }

    /// Save as CSV (`theta,lambda`) with a JSON metadata sidecar at
    /// `<path>.json`.
    pub fn save_csv(&self, path: &Path) -> Result<(), SeparationError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "theta,lambda")?;
        for (t, v) in self.theta_grid.iter().zip(&self.lambda_values) {
            writeln!(w, "{t},{v}")?;
        }
        w.flush()?;
        let sidecar = LambdaSidecar {
            n: self.n_data,
            k: self.k_noise,
            seed: self.seed,
            grid_spec: GridSpec {
                nodes: self.theta_grid.len(),
                theta_min: self.theta_grid[0],
                theta_max: *self.theta_grid.last().unwrap(),
            },
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| SeparationError::Format(e.to_string()))?;
        std::fs::write(crate::schedule::sidecar_path(path), json + "\n")?;
        Ok(())
    }

    /// Load a CSV written by [`LambdaEstimate::save_csv`]. The sidecar is
    /// consulted for metadata when present.
    pub fn load_csv(path: &Path) -> Result<Self, SeparationError> {
        let r = BufReader::new(File::open(path)?);
        let mut lines = r.lines();
        let header =
            lines.next().ok_or_else(|| SeparationError::Format("empty lambda CSV".into()))??;
        if header.trim() != "theta,lambda" {
            return Err(SeparationError::Format(format!("unexpected header: {header}")));
        }
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let parse = |c: Option<&str>| {
                c.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| SeparationError::Format(format!("line {}", lineno + 2)))
            };
            grid.push(parse(cells.next())?);
            values.push(parse(cells.next())?);
        }
        let (mut n, mut k, mut seed) = (0, 0, 0);
        let sidecar = crate::schedule::sidecar_path(path);
        if let Ok(text) = std::fs::read_to_string(sidecar) {
            if let Ok(meta) = serde_json::from_str::<LambdaSidecar>(&text) {
                n = meta.n;
                k = meta.k;
                seed = meta.seed;
            }
        }
        Self::from_values(grid, values, n, k, seed)
    }
}

fn check_theta_grid(grid: &[f64]) -> Result<(), SeparationError> {
    if grid.len() < 2
        || grid[0] < -1e-12
        || *grid.last().unwrap() > std::f64::consts::FRAC_PI_2 + 1e-12
        || grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(SeparationError::BadGrid);
    }
    Ok(())
}

/// Monte-Carlo estimate of λ on `theta_grid`, drawing `opts.k` noise vectors
/// from the seed's λ-noise stream. The noise draws are shared across all
/// data points and grid nodes (common random numbers), which smooths the
/// curve in θ without biasing it.
pub fn estimate_lambda(
    ds: &Dataset,
    theta_grid: &[f64],
    opts: &LambdaOptions,
) -> Result<LambdaEstimate, SeparationError> {
    if opts.k < 1 {
        return Err(SeparationError::BadNoise(opts.k, ds.d()));
    }
    let mut rng = rng::stream(opts.seed, stage::LAMBDA_NOISE);
    let mut noise = Array2::zeros((opts.k, ds.d()));
    for v in noise.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    let values = lambda_values_with_noise(ds, theta_grid, noise.view(), opts.threads)?;
    LambdaEstimate::from_values(theta_grid.to_vec(), values, ds.n(), opts.k, opts.seed)
}

/// Like [`estimate_lambda`] but with caller-supplied noise rows (`k × d`).
/// Used for coupled-noise experiments such as the orthogonal-invariance
/// property, where data and noise must be transformed together.
pub fn estimate_lambda_with_noise(
    ds: &Dataset,
    theta_grid: &[f64],
    noise: ArrayView2<'_, f64>,
    threads: usize,
) -> Result<LambdaEstimate, SeparationError> {
    let values = lambda_values_with_noise(ds, theta_grid, noise, threads)?;
    LambdaEstimate::from_values(theta_grid.to_vec(), values, ds.n(), noise.nrows(), 0)
}

/// λ at `s = ∞`: the average squared norm per dimension over the *distinct*
/// points (exactly 1 for normalized data with no duplicates, since in that
/// limit the posterior identifies the point).
fn lambda_at_infinity(ds: &Dataset) -> f64 {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(ds.n());
    let mut sumsq = 0.0;
    let mut count = 0usize;
    for row in ds.points().rows() {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        if seen.insert(key) {
            sumsq += row.iter().map(|v| v * v).sum::<f64>();
            count += 1;
        }
    }
    (sumsq / (count * ds.d()) as f64).clamp(0.0, 1.0)
}

fn lambda_values_with_noise(
    ds: &Dataset,
    theta_grid: &[f64],
    noise: ArrayView2<'_, f64>,
    threads: usize,
) -> Result<Vec<f64>, SeparationError> {
    check_theta_grid(theta_grid)?;
    let (k, nd) = noise.dim();
    if k < 1 || nd != ds.d() {
        return Err(SeparationError::BadNoise(k, nd));
    }
    let n = ds.n();
    let d = ds.d();
    let points = ds.points();

    let norms2: Vec<f64> = points.rows().into_iter().map(|r| r.dot(&r)).collect();
    // x_i · z_l for every (i, l); one pass, reused by every grid node.
    let xzt: Array2<f64> = points.dot(&noise.t());
    // The Gram matrix makes the kernel a cheap rank-1 update per row; cap
    // the precomputation at a memory budget and fall back to per-block
    // recomputation beyond it.
    let gram: Option<Array2<f64>> =
        if n <= 4096 { Some(points.dot(&points.t())) } else { None };

    // Special-cased nodes: s = 0 (uniform posterior over the data, so the
    // posterior mean is the dataset mean for every draw) and θ = π/2.
    let mean = points.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let lambda_zero = mean.dot(&mean) / d as f64;
    let lambda_inf = lambda_at_infinity(ds);

    #[derive(Clone, Copy)]
    enum Node {
        Zero,
        Infinity,
        Scale(f64),
    }
    let nodes: Vec<Node> = theta_grid
        .iter()
        .map(|&theta| {
            if theta >= std::f64::consts::FRAC_PI_2 - 1e-9 {
                Node::Infinity
            } else if theta <= 0.0 {
                Node::Zero
            } else {
                Node::Scale(theta.tan())
            }
        })
        .collect();

    let scale_nodes: Vec<(usize, f64)> = nodes
        .iter()
        .enumerate()
        .filter_map(|(i, nd)| match nd {
            Node::Scale(s) => Some((i, *s)),
            _ => None,
        })
        .collect();

    let n_blocks = n.div_ceil(BLOCK_ROWS);
    let n_jobs = scale_nodes.len() * n_blocks;
    let job = |jid: usize| -> f64 {
        let (node_pos, block) = (jid / n_blocks, jid % n_blocks);
        let (_, s) = scale_nodes[node_pos];
        let j0 = block * BLOCK_ROWS;
        let j1 = (j0 + BLOCK_ROWS).min(n);
        block_sum(points, &norms2, gram.as_ref(), &xzt, s, j0, j1)
    };
    let partials = parallel_map(n_jobs, resolve_threads(threads), &job);

    let mut values = vec![0.0; theta_grid.len()];
    for (pos, &(node_idx, _)) in scale_nodes.iter().enumerate() {
        // Fixed block order: the reduction is identical for any thread count.
        let mut acc = 0.0;
        for b in 0..n_blocks {
            acc += partials[pos * n_blocks + b];
        }
        values[node_idx] = (acc / (n * d * k) as f64).clamp(0.0, 1.0);
    }
    for (i, node) in nodes.iter().enumerate() {
        match node {
            Node::Zero => values[i] = lambda_zero.clamp(0.0, 1.0),
            Node::Infinity => values[i] = lambda_inf,
            Node::Scale(_) => {}
        }
    }
    Ok(values)
}

/// Sum of `‖posterior mean‖²` over data rows `j0..j1` and all noise draws at
/// scale `s`. Pure and self-contained: bit-identical wherever it runs.
fn block_sum(
    points: &Array2<f64>,
    norms2: &[f64],
    gram: Option<&Array2<f64>>,
    xzt: &Array2<f64>,
    s: f64,
    j0: usize,
    j1: usize,
) -> f64 {
    let (n, d) = points.dim();
    let k = xzt.ncols();
    let s2 = s * s;

    // Gram rows for this block, computed on demand if not cached.
    let gram_block;
    let gram_rows: ArrayView2<'_, f64> = match gram {
        Some(g) => g.slice(ndarray::s![j0..j1, ..]),
        None => {
            gram_block = points.slice(ndarray::s![j0..j1, ..]).dot(&points.t());
            gram_block.view()
        }
    };

    // Per-candidate base term −s²/2·‖x_i‖², shared by every row and draw.
    let base: Vec<f64> = norms2.iter().map(|&q| -0.5 * s2 * q).collect();

    let mut logits = vec![0.0f64; n];
    let mut mu = vec![0.0f64; d];
    let mut acc = 0.0;
    for l in 0..k {
        // zcol_i = −s²/2·‖x_i‖² + s·(x_i·z_l): everything except the Gram term.
        let zc = xzt.column(l);
        for jj in 0..j1 - j0 {
            let grow = gram_rows.row(jj);
            let mut mx = f64::NEG_INFINITY;
            for i in 0..n {
                let v = s2 * grow[i] + base[i] + s * zc[i];
                logits[i] = v;
                if v > mx {
                    mx = v;
                }
            }
            let cutoff = mx + LOG_WEIGHT_CUTOFF;
            let mut total = 0.0;
            mu.fill(0.0);
            for (i, &v) in logits.iter().enumerate() {
                if v >= cutoff {
                    let w = (v - mx).exp();
                    total += w;
                    let row = points.row(i);
                    for (mj, xj) in mu.iter_mut().zip(row.iter()) {
                        *mj += w * xj;
                    }
                }
            }
            let inv = 1.0 / total;
            let norm2: f64 = mu.iter().map(|v| v * v).sum();
            acc += norm2 * inv * inv;
        }
    }
    acc
}

fn resolve_threads(requested: usize) -> usize {
    if cfg!(target_family = "wasm") {
        return 1;
    }
    if requested == 0 {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    } else {
        requested
    }
}

/// Run `f(0..n_jobs)` on up to `threads` workers, collecting results by job
/// index. Work-stealing only changes which worker computes a job, never the
/// result placement, so the output is identical for any thread count.
fn parallel_map<F>(n_jobs: usize, threads: usize, f: &F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    if threads <= 1 || n_jobs <= 1 || cfg!(target_family = "wasm") {
        return (0..n_jobs).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let results = Mutex::new(vec![0.0f64; n_jobs]);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n_jobs) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n_jobs {
                    break;
                }
                let v = f(i);
                results.lock().expect("worker panicked")[i] = v;
            });
        }
    });
    results.into_inner().expect("worker panicked")
}
