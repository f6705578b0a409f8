//! `kopath` — command-line pipeline for kinetic-optimal probability-path
//! schedules: dataset → λ estimation → schedule optimization → verification
//! → 2-D flow-matching training → sampling, plus CSV/SVG emitters.
//!
//! Every subcommand writes its primary output plus a JSON run manifest at
//! `<output>.manifest.json` recording the resolved options, the SHA-256
//! digests of the files read and written, the wall-clock time, and the seed
//! actually used. Identical inputs and seed produce byte-identical primary
//! outputs for any `--threads` value.
//!
//! Exit codes: 0 on success, 1 on a failed check or runtime error, 2 on a
//! usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use kopath::dataset::{self, FileFormat};
use kopath::flowmatch::{self, TrainConfig};
use kopath::kopt::{self, OptimizeOptions};
use kopath::plot::{self, PlotStyle, Series};
use kopath::schedule::uniform_grid;
use kopath::separation::{estimate_lambda, LambdaOptions};
use kopath::theory;
use kopath::{Dataset, LambdaEstimate, Schedule};

#[derive(Parser, Debug)]
#[command(name = "kopath")]
#[command(about = "Kinetic-optimal Gaussian probability-path schedules for flow matching")]
#[command(version)]
#[command(after_help = "Data specs accept a file path (.csv or binary) or a builtin:
  checkerboard:N[:SEED]      normalized 4x4 checkerboard, N points
  gaussian:N:D[:SEED]        N standard-normal points in D dimensions

Schedule specs accept cond-ot | si | ddpm, a ko.json solution file, or a
schedule CSV exported by `kopath schedule`.

Example pipeline:
  kopath lambda   --data checkerboard:2000 --k 100 --out lambda.csv
  kopath optimize --lambda lambda.csv --method shooting --out ko.json
  kopath energy   --schedule ko.json --lambda lambda.csv --out energy.json
  kopath train2d  --data checkerboard:2000 --schedule ko.json --out model.bin
  kopath sample   --model model.bin --n 2000 --nfe 8 --out samples.csv
  kopath plot     --schedule cond-ot --schedule ko.json --out schedules.svg")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Estimate the data separation function λ on a θ-grid
    Lambda {
        /// Dataset: file path or builtin spec
        #[arg(long)]
        data: String,
        /// Output CSV (`theta,lambda`; JSON sidecar at <out>.json)
        #[arg(long)]
        out: PathBuf,
        /// Number of Monte-Carlo noise draws
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Noise seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (0 = auto; falls back to KOPATH_THREADS)
        #[arg(long)]
        threads: Option<usize>,
        /// Number of θ-grid nodes over [0, π/2]
        #[arg(long, default_value_t = 101)]
        grid: usize,
    },
    /// Find the kinetic-optimal schedule for a λ estimate
    Optimize {
        /// λ estimate CSV written by `kopath lambda`
        #[arg(long)]
        lambda: PathBuf,
        /// Output solution JSON
        #[arg(long)]
        out: PathBuf,
        /// Solver to use
        #[arg(long, value_enum, default_value_t = MethodArg::Direct)]
        method: MethodArg,
        /// Direct-solver iterations per restart
        #[arg(long, default_value_t = 3000)]
        iters: usize,
        /// Direct-solver init seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate schedule kinetic energies
    Energy {
        /// Schedule: builtin name, ko.json, or schedule CSV
        #[arg(long)]
        schedule: String,
        /// λ estimate CSV; omit for the conditional energy only
        #[arg(long)]
        lambda: Option<PathBuf>,
        /// Output report JSON
        #[arg(long)]
        out: PathBuf,
        /// Quadrature nodes
        #[arg(long, default_value_t = 1001)]
        grid: usize,
    },
    /// Run the theorem suite against a dataset
    Verify {
        /// Dataset: file path or builtin spec
        #[arg(long)]
        data: String,
        /// Reuse a λ estimate instead of re-estimating
        #[arg(long)]
        lambda: Option<PathBuf>,
        /// Output report JSON
        #[arg(long, default_value = "verify.json")]
        out: PathBuf,
        /// Also run the kinetic-energy squeeze over the builtin schedules
        #[arg(long)]
        all: bool,
        /// Noise draws for λ estimation
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Noise seed for λ estimation
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (0 = auto; falls back to KOPATH_THREADS)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Validate a schedule and export its tabulation
    Schedule {
        /// Schedule: builtin name, ko.json, or schedule CSV
        #[arg(long, alias = "kind")]
        schedule: String,
        /// Output CSV (`t,a,m,da,dm`; JSON sidecar at <out>.json)
        #[arg(long)]
        out: PathBuf,
        /// Tabulation rows
        #[arg(long, default_value_t = 1001)]
        grid: usize,
    },
    /// Train the 2-D flow-matching model
    Train2d {
        /// 2-D dataset: file path or builtin spec
        #[arg(long)]
        data: String,
        /// Probability-path schedule to train under
        #[arg(long, default_value = "cond-ot")]
        schedule: String,
        /// Output model file (loss trace lands at <out>.loss.csv)
        #[arg(long)]
        out: PathBuf,
        /// Optimizer steps
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        /// Init/batch/noise seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw samples from a trained model with the Euler solver
    Sample {
        /// Model file written by `kopath train2d`
        #[arg(long)]
        model: PathBuf,
        /// Output samples CSV
        #[arg(long)]
        out: PathBuf,
        /// Number of samples
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Euler function evaluations per sample
        #[arg(long, default_value_t = 100)]
        nfe: usize,
        /// Noise seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional reference dataset for the divergence metric
        #[arg(long)]
        data: Option<String>,
    },
    /// Render λ curves or schedules as an SVG line chart
    Plot {
        /// λ estimate CSV (repeatable; one series per file)
        #[arg(long)]
        lambda: Vec<PathBuf>,
        /// Schedule spec (repeatable; a(t) and m(t) series per schedule)
        #[arg(long)]
        schedule: Vec<String>,
        /// Output SVG
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    /// Finite-difference descent over the (b, θ-net) parameters
    Direct,
    /// Euler–Lagrange shooting with bisection on b
    #[value(name = "shoot", alias = "shooting")]
    Shoot,
}

/// Error marker for bad argument *values* (bad spec strings, conflicting
/// flags); mapped to exit code 2 like clap's own parse failures.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if err.downcast_ref::<Usage>().is_some() {
                eprintln!("error: {err}");
                eprintln!("{}", Cli::command().render_usage());
                ExitCode::from(2)
            } else {
                eprintln!("error: {err:#}");
                ExitCode::FAILURE
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

/// The provenance record written next to every primary output.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    options: serde_json::Value,
    inputs: Vec<FileDigest>,
    outputs: Vec<FileDigest>,
    wall_clock_seconds: f64,
    /// Seed actually used; absent for deterministic-only commands.
    seed: Option<u64>,
}

fn digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot digest {}", path.display()))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    let sum = h.finalize();
    let mut hex = String::with_capacity(64);
    for b in sum {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(FileDigest { path: path.display().to_string(), sha256: hex })
}

fn write_manifest(
    primary_out: &Path,
    command: &str,
    options: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
    started: Instant,
    seed: Option<u64>,
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        options,
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        outputs: outputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        seed,
    };
    let path = suffixed(primary_out, ".manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// `<path><suffix>` keeping the original extension (`a.csv` → `a.csv.json`).
fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(suffix);
    PathBuf::from(os)
}

// ---------------------------------------------------------------------------
// Argument-value parsing
// ---------------------------------------------------------------------------

enum DataSpec {
    File(PathBuf),
    Checkerboard { n: usize, seed: u64 },
    Gaussian { n: usize, d: usize, seed: u64 },
}

impl DataSpec {
    fn parse(s: &str) -> Result<DataSpec> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts[0] {
            "checkerboard" => {
                if !(2..=3).contains(&parts.len()) {
                    return Err(usage(format!(
                        "bad data spec '{s}': expected checkerboard:N[:SEED]"
                    )));
                }
                let n = parse_field(parts[1], s, "N")?;
                let seed = if parts.len() == 3 { parse_field(parts[2], s, "SEED")? } else { 0 };
                Ok(DataSpec::Checkerboard { n, seed })
            }
            "gaussian" => {
                if !(3..=4).contains(&parts.len()) {
                    return Err(usage(format!(
                        "bad data spec '{s}': expected gaussian:N:D[:SEED]"
                    )));
                }
                let n = parse_field(parts[1], s, "N")?;
                let d = parse_field(parts[2], s, "D")?;
                let seed = if parts.len() == 4 { parse_field(parts[3], s, "SEED")? } else { 0 };
                Ok(DataSpec::Gaussian { n, d, seed })
            }
            _ => Ok(DataSpec::File(PathBuf::from(s))),
        }
    }

    /// The file read, if any — for the manifest's input digests.
    fn input_path(&self) -> Option<&Path> {
        match self {
            DataSpec::File(p) => Some(p),
            _ => None,
        }
    }

    fn load(&self) -> Result<Dataset> {
        let ds = match self {
            DataSpec::File(path) => {
                Dataset::load(path, FileFormat::from_path(path))
                    .with_context(|| format!("cannot load dataset {}", path.display()))?
            }
            DataSpec::Checkerboard { n, seed } => dataset::gen_checkerboard(*n, *seed)?,
            DataSpec::Gaussian { n, d, seed } => dataset::gen_gaussian(*n, *d, *seed)?,
        };
        if !ds.is_normalized(1e-6) {
            eprintln!("note: dataset is not normalized; λ theory assumes unit per-dimension energy");
        }
        Ok(ds)
    }
}

fn parse_field<T: std::str::FromStr>(field: &str, spec: &str, name: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| usage(format!("bad data spec '{spec}': cannot parse {name} from '{field}'")))
}

/// Accepts a builtin name, a `ko.json` solution, or an exported CSV.
fn parse_schedule_spec(s: &str) -> Result<(Schedule, Option<PathBuf>)> {
    match s {
        "cond-ot" | "condot" => return Ok((Schedule::CondOt, None)),
        "si" => return Ok((Schedule::Si, None)),
        "ddpm" => return Ok((Schedule::ddpm_default(), None)),
        _ => {}
    }
    let path = PathBuf::from(s);
    if !path.exists() {
        return Err(usage(format!(
            "unknown schedule '{s}': expected cond-ot | si | ddpm or an existing file"
        )));
    }
    let schedule = if path.extension().and_then(|e| e.to_str()) == Some("json") {
        kopt::load_ko(&path)
            .with_context(|| format!("cannot load solution {}", path.display()))?
            .schedule()
    } else {
        Schedule::load_csv(&path)
            .with_context(|| format!("cannot load schedule {}", path.display()))?
    };
    Ok((schedule, Some(path)))
}

fn resolve_threads(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var("KOPATH_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0)
}

fn theta_grid(nodes: usize) -> Result<Vec<f64>> {
    if nodes < 3 {
        return Err(usage(format!("--grid {nodes}: need at least 3 nodes")));
    }
    let last = (nodes - 1) as f64;
    Ok((0..nodes).map(|i| std::f64::consts::FRAC_PI_2 * i as f64 / last).collect())
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Lambda { data, out, k, seed, threads, grid } => {
            cmd_lambda(&data, &out, k, seed, resolve_threads(threads), grid)
        }
        Cmd::Optimize { lambda, out, method, iters, seed } => {
            cmd_optimize(&lambda, &out, method, iters, seed)
        }
        Cmd::Energy { schedule, lambda, out, grid } => {
            cmd_energy(&schedule, lambda.as_deref(), &out, grid)
        }
        Cmd::Verify { data, lambda, out, all, k, seed, threads } => {
            cmd_verify(&data, lambda.as_deref(), &out, all, k, seed, resolve_threads(threads))
        }
        Cmd::Schedule { schedule, out, grid } => cmd_schedule(&schedule, &out, grid),
        Cmd::Train2d { data, schedule, out, steps, seed } => {
            cmd_train2d(&data, &schedule, &out, steps, seed)
        }
        Cmd::Sample { model, out, n, nfe, seed, data } => {
            cmd_sample(&model, &out, n, nfe, seed, data.as_deref())
        }
        Cmd::Plot { lambda, schedule, out } => cmd_plot(&lambda, &schedule, &out),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_lambda(
    data: &str,
    out: &Path,
    k: usize,
    seed: u64,
    threads: usize,
    grid_nodes: usize,
) -> Result<()> {
    let started = Instant::now();
    let spec = DataSpec::parse(data)?;
    let ds = spec.load()?;
    let grid = theta_grid(grid_nodes)?;
    let est = estimate_lambda(&ds, &grid, &LambdaOptions { k, seed, threads })?;
    est.save_csv(out)?;
    let sidecar = suffixed(out, ".json");
    write_manifest(
        out,
        "lambda",
        serde_json::json!({
            "data": data, "k": k, "grid": grid_nodes, "threads": threads,
        }),
        &spec.input_path().into_iter().collect::<Vec<_>>(),
        &[out, &sidecar],
        started,
        Some(seed),
    )?;
    println!(
        "lambda: n={} d={} k={k} over {grid_nodes} nodes -> {}",
        ds.n(),
        ds.d(),
        out.display()
    );
    Ok(())
}

fn cmd_optimize(
    lambda: &Path,
    out: &Path,
    method: MethodArg,
    iters: usize,
    seed: u64,
) -> Result<()> {
    let started = Instant::now();
    let est = LambdaEstimate::load_csv(lambda)
        .with_context(|| format!("cannot load lambda estimate {}", lambda.display()))?;
    let sol = match method {
        MethodArg::Direct => {
            let opts = OptimizeOptions { iters, seed, ..OptimizeOptions::default() };
            kopt::optimize_direct(&est, &opts)?
        }
        MethodArg::Shoot => kopt::shoot_b(&est)?,
    };
    kopt::save_ko(&sol, out)?;
    write_manifest(
        out,
        "optimize",
        serde_json::json!({
            "lambda": lambda.display().to_string(),
            "method": format!("{method:?}").to_lowercase(),
            "iters": iters,
        }),
        &[lambda],
        &[out],
        started,
        // The shooting solver is deterministic; only the direct method draws.
        matches!(method, MethodArg::Direct).then_some(seed),
    )?;
    println!(
        "optimize: {} b={:.6} energy={:.6} -> {}",
        format!("{method:?}").to_lowercase(),
        sol.b,
        sol.final_energy,
        out.display()
    );
    Ok(())
}

fn cmd_energy(schedule: &str, lambda: Option<&Path>, out: &Path, grid: usize) -> Result<()> {
    let started = Instant::now();
    let (sched, sched_path) = parse_schedule_spec(schedule)?;
    let mut inputs: Vec<&Path> = Vec::new();
    if let Some(p) = sched_path.as_deref() {
        inputs.push(p);
    }
    let report = match lambda {
        Some(lpath) => {
            let est = LambdaEstimate::load_csv(lpath)
                .with_context(|| format!("cannot load lambda estimate {}", lpath.display()))?;
            inputs.push(lpath);
            let rep = kopath::energy::ke(&sched, &est, grid)?;
            println!(
                "energy: {} cke={:.6} ke={:.6} gap={:.6}",
                sched.kind_name(),
                rep.cke,
                rep.ke,
                rep.gap
            );
            serde_json::to_value(&rep)?
        }
        None => {
            let cke = kopath::energy::cke(&sched, grid);
            println!("energy: {} cke={cke:.6}", sched.kind_name());
            serde_json::json!({ "cke": cke, "nodes": grid.max(kopath::energy::DEFAULT_NODES) })
        }
    };
    std::fs::write(out, serde_json::to_string_pretty(&report)? + "\n")
        .with_context(|| format!("cannot write {}", out.display()))?;
    write_manifest(
        out,
        "energy",
        serde_json::json!({
            "schedule": schedule,
            "lambda": lambda.map(|p| p.display().to_string()),
            "grid": grid,
        }),
        &inputs,
        &[out],
        started,
        None,
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_verify(
    data: &str,
    lambda: Option<&Path>,
    out: &Path,
    all: bool,
    k: usize,
    seed: u64,
    threads: usize,
) -> Result<()> {
    let started = Instant::now();
    let spec = DataSpec::parse(data)?;
    let ds = spec.load()?;
    let mut inputs: Vec<&Path> = spec.input_path().into_iter().collect();
    let est = match lambda {
        Some(lpath) => {
            inputs.push(lpath);
            LambdaEstimate::load_csv(lpath)
                .with_context(|| format!("cannot load lambda estimate {}", lpath.display()))?
        }
        None => estimate_lambda(
            &ds,
            &kopath::separation::standard_grid(),
            &LambdaOptions { k, seed, threads },
        )?,
    };

    let mut reports = vec![
        theory::check_eta_integral(),
        theory::check_lambda_bound(&ds, &est),
        theory::check_gamma_condition(&est),
    ];
    if all {
        let builtins = [Schedule::CondOt, Schedule::Si, Schedule::ddpm_default()];
        reports.extend(theory::check_ke_squeeze(&ds, &est, &builtins)?);
    }
    let mut failures = 0;
    for rep in &reports {
        let status = if rep.pass { "pass" } else { "FAIL" };
        println!(
            "{status} {}: computed {:.6} vs bound {:.6} (margin {:+.3e})",
            rep.quantity, rep.computed, rep.bound, rep.margin
        );
        if !rep.pass {
            failures += 1;
        }
    }
    std::fs::write(out, serde_json::to_string_pretty(&reports)? + "\n")
        .with_context(|| format!("cannot write {}", out.display()))?;
    write_manifest(
        out,
        "verify",
        serde_json::json!({
            "data": data,
            "lambda": lambda.map(|p| p.display().to_string()),
            "all": all, "k": k, "threads": threads,
        }),
        &inputs,
        &[out],
        started,
        lambda.is_none().then_some(seed),
    )?;
    if failures > 0 {
        anyhow::bail!("{failures} of {} checks failed", reports.len());
    }
    println!("verify: all {} checks passed", reports.len());
    Ok(())
}

fn cmd_schedule(schedule: &str, out: &Path, grid: usize) -> Result<()> {
    let started = Instant::now();
    let (sched, sched_path) = parse_schedule_spec(schedule)?;
    let report = sched.validate();
    sched.export_csv(&uniform_grid(grid.max(2)), out)?;
    let sidecar = suffixed(out, ".json");
    let inputs: Vec<&Path> = sched_path.as_deref().into_iter().collect();
    write_manifest(
        out,
        "schedule",
        serde_json::json!({ "schedule": schedule, "grid": grid }),
        &inputs,
        &[out, &sidecar],
        started,
        None,
    )?;
    println!(
        "schedule: {} boundary_defect={:.3e} snr_monotone={} -> {}",
        sched.kind_name(),
        report.boundary_defect,
        report.snr_monotone,
        out.display()
    );
    if !report.admissible() {
        anyhow::bail!("schedule {} failed admissibility: {report:?}", sched.kind_name());
    }
    Ok(())
}

fn cmd_train2d(data: &str, schedule: &str, out: &Path, steps: usize, seed: u64) -> Result<()> {
    let started = Instant::now();
    let spec = DataSpec::parse(data)?;
    let ds = spec.load()?;
    let (sched, sched_path) = parse_schedule_spec(schedule)?;
    let mut config = TrainConfig::new(sched);
    config.steps = steps;
    config.seed = seed;
    let result = flowmatch::train(&ds, &config)?;
    flowmatch::save_model(&result.model, out)?;

    let trace_path = suffixed(out, ".loss.csv");
    let mut trace = String::from("step,loss\n");
    for (i, loss) in result.loss_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{loss}\n"));
    }
    std::fs::write(&trace_path, trace)
        .with_context(|| format!("cannot write {}", trace_path.display()))?;

    let mut inputs: Vec<&Path> = spec.input_path().into_iter().collect();
    if let Some(p) = sched_path.as_deref() {
        inputs.push(p);
    }
    write_manifest(
        out,
        "train2d",
        serde_json::json!({ "data": data, "schedule": schedule, "steps": steps }),
        &inputs,
        &[out, &trace_path],
        started,
        Some(seed),
    )?;
    match flowmatch::smoothed_endpoints(&result.loss_trace, 100) {
        Some((head, tail)) => println!(
            "train2d: {steps} steps, smoothed loss {head:.4} -> {tail:.4} ({})",
            out.display()
        ),
        None => println!("train2d: {steps} steps -> {}", out.display()),
    }
    Ok(())
}

fn cmd_sample(
    model_path: &Path,
    out: &Path,
    n: usize,
    nfe: usize,
    seed: u64,
    data: Option<&str>,
) -> Result<()> {
    let started = Instant::now();
    let model = flowmatch::load_model(model_path)
        .with_context(|| format!("cannot load model {}", model_path.display()))?;
    let samples = flowmatch::sample_euler(&model, n, nfe.max(1), seed);
    let ds = Dataset::new(samples)?;
    ds.save(out, FileFormat::from_path(out))?;
    let ke = flowmatch::model_ke(&model, nfe.max(1), 256, seed);
    println!("sample: {n} points at nfe={nfe}, model_ke={ke:.4} -> {}", out.display());

    let mut inputs: Vec<&Path> = vec![model_path];
    let data_spec = data.map(DataSpec::parse).transpose()?;
    if let Some(spec) = &data_spec {
        let reference = spec.load()?;
        if let Some(p) = spec.input_path() {
            inputs.push(p);
        }
        let gap = flowmatch::eval_divergence_metric(ds.points().view(), reference.points().view())?;
        println!("sample: energy distance to reference = {gap:.6}");
    }
    write_manifest(
        out,
        "sample",
        serde_json::json!({
            "model": model_path.display().to_string(),
            "n": n, "nfe": nfe, "data": data,
        }),
        &inputs,
        &[out],
        started,
        Some(seed),
    )?;
    Ok(())
}

fn cmd_plot(lambdas: &[PathBuf], schedules: &[String], out: &Path) -> Result<()> {
    let started = Instant::now();
    if lambdas.is_empty() == schedules.is_empty() {
        return Err(usage(
            "plot needs either --lambda files or --schedule specs (not both, not neither)",
        ));
    }
    let mut inputs: Vec<PathBuf> = Vec::new();
    let (series, style) = if !lambdas.is_empty() {
        let mut series = Vec::new();
        for path in lambdas {
            let est = LambdaEstimate::load_csv(path)
                .with_context(|| format!("cannot load lambda estimate {}", path.display()))?;
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            series.push(Series::new(label, est.theta_grid().to_vec(), est.values().to_vec()));
            inputs.push(path.clone());
        }
        let style = PlotStyle {
            title: "data separation".into(),
            x_label: "theta".into(),
            y_label: "lambda".into(),
            ..PlotStyle::default()
        };
        (series, style)
    } else {
        let grid = uniform_grid(201);
        let mut series = Vec::new();
        for spec in schedules {
            let (sched, path) = parse_schedule_spec(spec)?;
            if let Some(p) = path {
                inputs.push(p);
            }
            let name = sched.kind_name();
            let a: Vec<f64> = grid.iter().map(|&t| sched.a(t)).collect();
            let m: Vec<f64> = grid.iter().map(|&t| sched.m(t)).collect();
            series.push(Series::new(format!("{name} a"), grid.clone(), a));
            series.push(Series::new(format!("{name} m"), grid.clone(), m));
        }
        let style = PlotStyle {
            title: "schedules".into(),
            x_label: "t".into(),
            y_label: "value".into(),
            ..PlotStyle::default()
        };
        (series, style)
    };
    plot::save_svg(&series, &style, out)?;
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    write_manifest(
        out,
        "plot",
        serde_json::json!({
            "lambda": lambdas.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "schedule": schedules,
        }),
        &input_refs,
        &[out],
        started,
        None,
    )?;
    println!("plot: {} series -> {}", series.len(), out.display());
    Ok(())
}
