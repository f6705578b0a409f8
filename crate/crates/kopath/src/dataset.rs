//! Finite datasets: generation, normalization, and file I/O.
//!
//! The target distribution is a finite set of points `x_1..x_n` in `ℝ^d`,
//! each carrying probability `1/n`. All downstream theory assumes the
//! *normalized* convention: zero mean and unit average per-dimension energy,
//! `(1/(d·n)) Σ‖x_i‖² = 1`, so that the noise scale of the probability path
//! is commensurate with the data scale.
//!
//! Two generators cover the test surface: a 2-D checkerboard (the classic
//! hard multi-modal toy target) and an i.i.d. standard Gaussian cloud in
//! arbitrary dimension (whose separation function has a closed form).
//!
//! Files round-trip through either a compact binary format (magic `KOPD`)
//! or a plain CSV with an `x0,x1,...` header.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{self, stage};

/// Magic bytes of the binary dataset format.
const MAGIC: &[u8; 4] = b"KOPD";
/// Current binary format version.
const VERSION: u16 = 1;

/// Errors from dataset construction and I/O.
#[derive(Debug, Error)]
pub enum DatasetError {
    /// Fewer than two rows, or an empty dimension.
    #[error("dataset must have n >= 2 rows and d >= 1 columns, got {n} x {d}")]
    BadShape {
        /// Rows supplied.
        n: usize,
        /// Columns supplied.
        d: usize,
    },
    /// All points identical: the normalizing scale is undefined.
    #[error("degenerate data: all points identical, cannot normalize")]
    DegenerateData,
    /// Underlying file-system failure.
    #[error("dataset I/O failed: {0}")]
    Io(#[from] std::io::Error),
    /// Structurally invalid file content.
    #[error("bad dataset file: {0}")]
    Format(String),
}

/// Serialization format for [`Dataset::save`] and [`Dataset::load`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    /// Binary `KOPD` container; bit-exact round trip.
    Binary,
    /// Text CSV with header `x0,...,x{d-1}`; round trip exact for shortest
    /// round-trip float formatting.
    Csv,
}

impl FileFormat {
    /// Guess a format from a path extension (`.csv` → CSV, else binary).
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

/// A finite dataset: an `n × d` matrix of points, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Array2<f64>,
}

impl Dataset {
    /// Wrap a points matrix. Requires `n ≥ 2`, `d ≥ 1`, finite entries.
    pub fn new(points: Array2<f64>) -> Result<Self, DatasetError> {
        let (n, d) = points.dim();
        if n < 2 || d < 1 {
            return Err(DatasetError::BadShape { n, d });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Format("non-finite entry in points".into()));
        }
        Ok(Dataset { points })
    }

    /// Center and rescale `raw` to the normalized convention: subtract the
    /// mean, then multiply by `c = sqrt(d·n / Σ‖x_i − x̄‖²)` so the average
    /// per-dimension energy is exactly one.
    pub fn normalize(raw: Array2<f64>) -> Result<Self, DatasetError> {
        let ds = Dataset::new(raw)?;
        let (n, d) = ds.points.dim();
        let mean = ds.points.mean_axis(ndarray::Axis(0)).expect("n >= 2");
        let mut centered = ds.points;
        for mut row in centered.rows_mut() {
            row -= &mean;
        }
        let sumsq: f64 = centered.iter().map(|v| v * v).sum();
        if sumsq <= 0.0 {
            return Err(DatasetError::DegenerateData);
        }
        let c = ((d * n) as f64 / sumsq).sqrt();
        centered *= c;
        Ok(Dataset { points: centered })
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    /// Ambient dimension.
    pub fn d(&self) -> usize {
        self.points.ncols()
    }

    /// The underlying `n × d` matrix.
    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    /// Row view of sample `i`.
    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Whether the normalized-data invariants hold to tolerance `tol`:
    /// zero mean (max-abs entry) and unit average per-dimension energy.
    pub fn is_normalized(&self, tol: f64) -> bool {
        let (n, d) = self.points.dim();
        let mean = self.points.mean_axis(ndarray::Axis(0)).expect("n >= 2");
        let mean_ok = mean.iter().all(|v| v.abs() < tol);
        let energy: f64 = self.points.iter().map(|v| v * v).sum::<f64>() / (n * d) as f64;
        mean_ok && (energy - 1.0).abs() < tol
    }

    /// Save to `path` in the given format.
    pub fn save(&self, path: &Path, format: FileFormat) -> Result<(), DatasetError> {
        match format {
            FileFormat::Binary => self.save_binary(path),
            FileFormat::Csv => self.save_csv(path),
        }
    }

    /// Load from `path` in the given format.
    pub fn load(path: &Path, format: FileFormat) -> Result<Self, DatasetError> {
        match format {
            FileFormat::Binary => Self::load_binary(path),
            FileFormat::Csv => Self::load_csv(path),
        }
    }

    fn save_binary(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        let (n, d) = self.points.dim();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(n as u64).to_le_bytes())?;
        w.write_all(&(d as u64).to_le_bytes())?;
        for v in self.points.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    fn load_binary(path: &Path) -> Result<Self, DatasetError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(DatasetError::Format(format!("bad magic {magic:?}, expected \"KOPD\"")));
        }
        let mut buf2 = [0u8; 2];
        r.read_exact(&mut buf2)?;
        let version = u16::from_le_bytes(buf2);
        if version != VERSION {
            return Err(DatasetError::Format(format!("unsupported version {version}")));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let n = u64::from_le_bytes(buf8) as usize;
        r.read_exact(&mut buf8)?;
        let d = u64::from_le_bytes(buf8) as usize;
        if n < 2 || d < 1 || n.saturating_mul(d) > (1 << 31) {
            return Err(DatasetError::Format(format!("implausible shape {n} x {d}")));
        }
        let mut values = vec![0.0f64; n * d];
        for v in values.iter_mut() {
            r.read_exact(&mut buf8)?;
            *v = f64::from_le_bytes(buf8);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(DatasetError::Format("trailing bytes after matrix".into()));
        }
        let points = Array2::from_shape_vec((n, d), values)
            .map_err(|e| DatasetError::Format(e.to_string()))?;
        Dataset::new(points)
    }

    fn save_csv(&self, path: &Path) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        let d = self.d();
        let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in self.points.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    fn load_csv(path: &Path) -> Result<Self, DatasetError> {
        let r = BufReader::new(File::open(path)?);
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| DatasetError::Format("empty CSV".into()))?
            .map_err(DatasetError::Io)?;
        let d = header.split(',').count();
        if d == 0 || !header.starts_with('x') {
            return Err(DatasetError::Format(format!("unexpected CSV header: {header}")));
        }
        let mut values = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(DatasetError::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> =
                line.split(',').map(|cell| cell.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| {
                DatasetError::Format(format!("line {}: {e}", lineno + 2))
            })?;
            if row.len() != d {
                return Err(DatasetError::Format(format!(
                    "line {}: expected {d} columns, got {}",
                    lineno + 2,
                    row.len()
                )));
            }
            values.extend(row);
            n += 1;
        }
        let points = Array2::from_shape_vec((n, d), values)
            .map_err(|e| DatasetError::Format(e.to_string()))?;
        Dataset::new(points)
    }
}

/// The on-cells of the 4×4 checkerboard on `[−2, 2]²`: cell `(i, j)` is on
/// when `i + j` is even.
fn checkerboard_cells() -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(8);
    for i in 0..4 {
        for j in 0..4 {
            if (i + j) % 2 == 0 {
                cells.push((i, j));
            }
        }
    }
    cells
}

/// Raw (un-normalized) checkerboard draws; separated out so the sampling
/// distribution itself is testable before normalization rescales it.
fn checkerboard_raw(n: usize, seed: u64) -> Array2<f64> {
    let cells = checkerboard_cells();
    let mut rng = rng::stream(seed, stage::DATASET);
    let mut points = Array2::zeros((n, 2));
    for mut row in points.rows_mut() {
        let (i, j) = cells[rng.random_range(0..cells.len())];
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        row[0] = -2.0 + i as f64 + u;
        row[1] = -2.0 + j as f64 + v;
    }
    points
}

/// `n` points drawn uniformly from the alternating cells of a 4×4
/// checkerboard on `[−2, 2]²`, then normalized.
pub fn gen_checkerboard(n: usize, seed: u64) -> Result<Dataset, DatasetError> {
    Dataset::normalize(checkerboard_raw(n, seed))
}

/// `n` i.i.d. standard-normal points in `ℝ^d`, then normalized.
pub fn gen_gaussian(n: usize, d: usize, seed: u64) -> Result<Dataset, DatasetError> {
    if n < 2 || d < 1 {
        return Err(DatasetError::BadShape { n, d });
    }
    let mut rng = rng::stream(seed, stage::DATASET);
    let mut points = Array2::zeros((n, d));
    for v in points.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    Dataset::normalize(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn normalize_leaves_symmetric_pair_unchanged() {
        let ds = Dataset::normalize(array![[1.0, 1.0], [-1.0, -1.0]]).unwrap();
        assert_eq!(ds.points(), &array![[1.0, 1.0], [-1.0, -1.0]]);
    }

    #[test]
    fn normalize_rescales_pure_scale() {
        let ds = Dataset::normalize(array![[2.0, 2.0], [-2.0, -2.0]]).unwrap();
        assert_abs_diff_eq!(ds.points()[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ds.points()[(1, 1)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn normalize_centers_then_scales() {
        // {(0,0), (0,2)} centers to {(0,−1), (0,1)} and scales by sqrt(4/2).
        let ds = Dataset::normalize(array![[0.0, 0.0], [0.0, 2.0]]).unwrap();
        let s = 2.0f64.sqrt();
        assert_abs_diff_eq!(ds.points()[(0, 0)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ds.points()[(0, 1)], -s, epsilon = 1e-12);
        assert_abs_diff_eq!(ds.points()[(1, 1)], s, epsilon = 1e-12);
    }

    #[test]
    fn normalize_rejects_degenerate_and_bad_shape() {
        assert!(matches!(
            Dataset::normalize(array![[3.0, 3.0], [3.0, 3.0]]),
            Err(DatasetError::DegenerateData)
        ));
        assert!(matches!(
            Dataset::normalize(Array2::zeros((1, 2))),
            Err(DatasetError::BadShape { n: 1, d: 2 })
        ));
    }

    #[test]
    fn normalized_invariants_hold() {
        let ds = gen_gaussian(500, 16, 3).unwrap();
        let mean = ds.points().mean_axis(ndarray::Axis(0)).unwrap();
        assert!(mean.iter().all(|v| v.abs() < 1e-9));
        let energy: f64 =
            ds.points().iter().map(|v| v * v).sum::<f64>() / (ds.n() * ds.d()) as f64;
        assert_abs_diff_eq!(energy, 1.0, epsilon = 1e-9);
        assert!(ds.is_normalized(1e-9));
    }

    #[test]
    fn checkerboard_is_deterministic_and_normalized() {
        let a = gen_checkerboard(1000, 7).unwrap();
        let b = gen_checkerboard(1000, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 1000);
        assert_eq!(a.d(), 2);
        assert!(a.is_normalized(1e-9));
        let c = gen_checkerboard(1000, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn checkerboard_occupancy_is_uniform_over_on_cells() {
        // Raw draws before normalization: each of the 8 on-cells should hold
        // n/8 points up to 3σ of the multinomial count.
        let n = 100_000usize;
        let pts = checkerboard_raw(n, 11);
        let mut counts = std::collections::HashMap::new();
        for row in pts.rows() {
            let i = (row[0] + 2.0).floor() as i64;
            let j = (row[1] + 2.0).floor() as i64;
            assert!((0..4).contains(&i) && (0..4).contains(&j));
            assert_eq!((i + j) % 2, 0, "point landed on an off cell");
            *counts.entry((i, j)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 8);
        let expected = n as f64 / 8.0;
        let sigma = (n as f64 * (1.0 / 8.0) * (7.0 / 8.0)).sqrt();
        for (&cell, &count) in &counts {
            let dev = (count as f64 - expected).abs();
            assert!(dev < 3.0 * sigma, "cell {cell:?} count {count} deviates {dev:.1}");
        }
    }

    #[test]
    fn gaussian_raw_energy_concentrates() {
        // Before normalization, (1/(nd)) Σ‖x‖² for a standard normal sample
        // concentrates near 1 (chi-squared mean).
        let mut rng = rng::stream(5, stage::DATASET);
        let n = 2000;
        let d = 64;
        let mut sumsq = 0.0;
        for _ in 0..n * d {
            let v: f64 = StandardNormal.sample(&mut rng);
            sumsq += v * v;
        }
        let energy = sumsq / (n * d) as f64;
        assert!((0.9..=1.1).contains(&energy), "raw energy {energy}");
    }

    #[test]
    fn binary_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.kopd");
        let ds = gen_checkerboard(257, 9).unwrap();
        ds.save(&path, FileFormat::Binary).unwrap();
        let back = Dataset::load(&path, FileFormat::Binary).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = gen_gaussian(64, 3, 1).unwrap();
        ds.save(&path, FileFormat::Csv).unwrap();
        let back = Dataset::load(&path, FileFormat::Csv).unwrap();
        // Shortest round-trip formatting makes text round trips exact.
        assert_eq!(ds, back);
    }

    #[test]
    fn load_rejects_bad_magic_and_shape() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.kopd");
        std::fs::write(&path, b"NOPE\x01\x00garbage").unwrap();
        assert!(matches!(
            Dataset::load(&path, FileFormat::Binary),
            Err(DatasetError::Format(_))
        ));
        let path2 = dir.path().join("short.kopd");
        std::fs::write(&path2, b"KOPD\x01\x00").unwrap();
        assert!(Dataset::load(&path2, FileFormat::Binary).is_err());
    }

    #[test]
    fn format_from_path_detects_csv() {
        assert_eq!(FileFormat::from_path(Path::new("a.csv")), FileFormat::Csv);
        assert_eq!(FileFormat::from_path(Path::new("a.CSV")), FileFormat::Csv);
        assert_eq!(FileFormat::from_path(Path::new("a.kopd")), FileFormat::Binary);
        assert_eq!(FileFormat::from_path(Path::new("a")), FileFormat::Binary);
    }
}
