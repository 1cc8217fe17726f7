//! File formats.
//!
//! Matrix file (`.dirm`), all integers little-endian:
//!
//! | offset | size | content                     |
//! |--------|------|-----------------------------|
//! | 0      | 4    | magic `DIRM`                |
//! | 4      | 2    | version (u16) = 1           |
//! | 6      | 8    | rows (u64)                  |
//! | 14     | 8    | cols (u64)                  |
//! | 22     | 8·rows·cols | f64 LE, row-major    |
//!
//! Vector file (`.dirv`): magic `DIRV`, version (u16), length (u64), then
//! `8·length` bytes of f64 LE.
//!
//! A dataset directory holds `system.dirm`, `frame_NNN.dirv` per frame,
//! `truth_NNN.dirv` per stored ground-truth state and `meta.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{CellOutcome, EstimatorMethod, ExperimentConfig, MetricsReport};
use crate::inexactness::{LevelMethod, UncertaintyLevels};
use crate::model::{ConcentrationSequence, DynamicDataset, Grid2D, Provenance, SystemMatrix, TimePartition};
use crate::simulator::{default_fine_grid, PhantomMotion, ScannerConfig};
use crate::solvers::{Algorithm, SolveResult};


pub const MATRIX_MAGIC: &[u8; 4] = b"DIRM";
pub const VECTOR_MAGIC: &[u8; 4] = b"DIRV";
pub const FORMAT_VERSION: u16 = 1;
pub const META_VERSION: u32 = 1;

/// Writes via a temporary file in the same directory and a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::io(path, std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn format_err(path: &Path, field: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        field,
        reason: reason.into(),
    }
}

pub fn encode_matrix(rows: usize, cols: usize, data: &[f64]) -> Vec<u8> {
    assert_eq!(data.len(), rows * cols);
    let mut out = Vec::with_capacity(22 + 8 * data.len());
    out.extend_from_slice(MATRIX_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn encode_vector(data: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(14 + 8 * data.len());
    out.extend_from_slice(VECTOR_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(
                self.path,
                field,
                format!("truncated: need {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4, "magic")?;
        if m != magic {
            return Err(format_err(
                self.path,
                "magic",
                format!("expected {:?}, found {:?}", String::from_utf8_lossy(magic), String::from_utf8_lossy(m)),
            ));
        }
        let v = u16::from_le_bytes(self.take(2, "version")?.try_into().unwrap());
        if v != FORMAT_VERSION {
            return Err(format_err(self.path, "version", format!("unsupported version {v}")));
        }
        Ok(())
    }

    fn dim(&mut self, field: &'static str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, field)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| format_err(self.path, field, format!("{v} does not fit in memory")))
    }

    fn payload(&mut self, count: usize) -> Result<Vec<f64>> {
        let n = count
            .checked_mul(8)
            .ok_or_else(|| format_err(self.path, "dims", "dimension overflow"))?;
        let raw = self.take(n, "payload")?;
        if self.pos != self.bytes.len() {
            return Err(format_err(
                self.path,
                "payload",
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Parses a matrix file image; `path` only labels errors.
pub fn decode_matrix(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f64>)> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.header(MATRIX_MAGIC)?;
    let rows = r.dim("rows")?;
    let cols = r.dim("cols")?;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| format_err(path, "dims", "rows * cols overflows"))?;
    let data = r.payload(count)?;
    Ok((rows, cols, data))
}

pub fn decode_vector(path: &Path, bytes: &[u8]) -> Result<Vec<f64>> {
    let mut r = Reader { path, bytes, pos: 0 };
    r.header(VECTOR_MAGIC)?;
    let len = r.dim("length")?;
    r.payload(len)
}

pub fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    atomic_write(path, &encode_matrix(rows, cols, data))
}

pub fn read_matrix(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    decode_matrix(path, &read_bytes(path)?)
}

pub fn write_vector(path: &Path, data: &[f64]) -> Result<()> {
    atomic_write(path, &encode_vector(data))
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    decode_vector(path, &read_bytes(path)?)
}

/// Contents of a dataset's `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub meta_version: u32,
    pub matrix_format_version: u16,
    pub vector_format_version: u16,
    pub grid: Grid2D,
    pub n_frames: usize,
    pub samples_per_frame: usize,
    pub subproblems_per_frame: usize,
    pub coils: usize,
    pub sample_dt: f64,
    pub snr: Option<f64>,
    pub noise_norms: Vec<f64>,
    pub truth_states: usize,
    pub truth_states_per_frame: usize,
    pub seed: Option<u64>,
    pub frames_per_rotation: Option<f64>,
    pub config_hash: Option<String>,
}

fn frame_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("frame_{i:03}.dirv"))
}

fn truth_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("truth_{i:03}.dirv"))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn write_dataset(dir: &Path, dataset: &DynamicDataset) -> Result<()> {
    dataset.validate()?;
    create_dir(dir)?;
    let a = &dataset.system_matrix;
    write_matrix(&dir.join("system.dirm"), a.rows(), a.cols(), a.entries())?;
    for (i, f) in dataset.frames.iter().enumerate() {
        write_vector(&frame_path(dir, i), f)?;
    }
    let truth_states = dataset.truth.as_ref().map_or(0, ConcentrationSequence::len);
    if let Some(truth) = &dataset.truth {
        for (i, s) in truth.states().iter().enumerate() {
            write_vector(&truth_path(dir, i), s)?;
        }
    }
    let p = &dataset.partition;
    let meta = DatasetMeta {
        meta_version: META_VERSION,
        matrix_format_version: FORMAT_VERSION,
        vector_format_version: FORMAT_VERSION,
        grid: dataset.grid,
        n_frames: p.n_frames(),
        samples_per_frame: p.samples_per_frame(),
        subproblems_per_frame: p.subproblems_per_frame(),
        coils: a.coils(),
        sample_dt: a.sample_dt(),
        snr: dataset.snr,
        noise_norms: dataset.noise_norms.clone(),
        truth_states,
        truth_states_per_frame: dataset.truth_states_per_frame,
        seed: dataset.provenance.seed,
        frames_per_rotation: dataset.provenance.frames_per_rotation,
        config_hash: dataset.provenance.config_hash.clone(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn read_dataset(dir: &Path) -> Result<DynamicDataset> {
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = read_json(&meta_path)?;
    if meta.meta_version != META_VERSION {
        return Err(format_err(&meta_path, "meta_version", format!("unsupported {}", meta.meta_version)));
    }
    let (rows, cols, entries) = read_matrix(&dir.join("system.dirm"))?;
    let a = SystemMatrix::new(rows, cols, meta.coils, meta.sample_dt, entries)?;
    let frames = (0..meta.n_frames)
        .map(|i| read_vector(&frame_path(dir, i)))
        .collect::<Result<Vec<_>>>()?;
    let truth = if meta.truth_states > 0 {
        let states = (0..meta.truth_states)
            .map(|i| read_vector(&truth_path(dir, i)))
            .collect::<Result<Vec<_>>>()?;
        Some(ConcentrationSequence::new(states)?)
    } else {
        None
    };
    let dataset = DynamicDataset {
        system_matrix: a.into(),
        partition: TimePartition::new(meta.n_frames, meta.samples_per_frame, meta.subproblems_per_frame)?,
        frames,
        truth,
        truth_states_per_frame: meta.truth_states_per_frame,
        grid: meta.grid,
        snr: meta.snr,
        noise_norms: meta.noise_norms,
        provenance: Provenance {
            seed: meta.seed,
            frames_per_rotation: meta.frames_per_rotation,
            config_hash: meta.config_hash,
        },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Shortest text with at least 17 significant digits; parses back exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// `subproblem,zeta` CSV plus a one-line `.rho` sidecar. The written levels
/// are the scaled values the solver uses.
pub fn write_levels(csv_path: &Path, levels: &UncertaintyLevels) -> Result<()> {
    let mut text = String::from("subproblem,zeta\n");
    for (i, z) in levels.values().iter().enumerate() {
        writeln!(text, "{i},{}", fmt_f64(*z)).unwrap();
    }
    atomic_write(csv_path, text.as_bytes())?;
    atomic_write(&rho_path(csv_path), format!("{}\n", fmt_f64(levels.rho)).as_bytes())
}

pub fn rho_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("rho")
}

pub fn read_levels(csv_path: &Path) -> Result<UncertaintyLevels> {
    let text = String::from_utf8(read_bytes(csv_path)?)
        .map_err(|_| format_err(csv_path, "encoding", "not UTF-8"))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("subproblem,zeta") {
        return Err(format_err(csv_path, "header", "expected `subproblem,zeta`"));
    }
    let mut zeta = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, value) = line
            .split_once(',')
            .ok_or_else(|| format_err(csv_path, "row", format!("line {}: missing comma", n + 2)))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| format_err(csv_path, "subproblem", format!("line {}: bad index", n + 2)))?;
        if idx != zeta.len() {
            return Err(format_err(csv_path, "subproblem", format!("line {}: expected index {}", n + 2, zeta.len())));
        }
        let z: f64 = value
            .trim()
            .parse()
            .map_err(|_| format_err(csv_path, "zeta", format!("line {}: bad number", n + 2)))?;
        zeta.push(z);
    }
    let rho_file = rho_path(csv_path);
    let rho_text = String::from_utf8(read_bytes(&rho_file)?)
        .map_err(|_| format_err(&rho_file, "encoding", "not UTF-8"))?;
    let rho: f64 = rho_text
        .trim()
        .parse()
        .map_err(|_| format_err(&rho_file, "rho", "bad number"))?;
    UncertaintyLevels::new(zeta, rho, LevelMethod::Manual)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm16,
    Csv,
}

/// 16-bit binary PGM, linearly scaled min → 0, max → 65535 (all zeros for a
/// constant image). Image row `iy` is written `iy`-th from the top.
pub fn encode_pgm16(c: &[f64], grid: &Grid2D) -> Result<Vec<u8>> {
    check_image(c, grid)?;
    let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{} {}\n65535\n", grid.nx, grid.ny).into_bytes();
    for &v in c {
        let level = if max > min {
            ((v - min) / (max - min) * 65535.0).round() as u16
        } else {
            0
        };
        out.extend_from_slice(&level.to_be_bytes());
    }
    Ok(out)
}

pub fn encode_image_csv(c: &[f64], grid: &Grid2D) -> Result<String> {
    check_image(c, grid)?;
    let mut text = String::new();
    for row in c.chunks(grid.nx) {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    Ok(text)
}

fn check_image(c: &[f64], grid: &Grid2D) -> Result<()> {
    if c.len() != grid.n_pixels() {
        return Err(Error::Dimension {
            context: "image vs grid",
            expected: grid.n_pixels(),
            actual: c.len(),
        });
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("image contains NaN or infinite values".into()));
    }
    Ok(())
}

pub fn export_image(c: &[f64], grid: &Grid2D, path: &Path, format: ImageFormat) -> Result<()> {
    match format {
        ImageFormat::Pgm16 => atomic_write(path, &encode_pgm16(c, grid)?),
        ImageFormat::Csv => atomic_write(path, encode_image_csv(c, grid)?.as_bytes()),
    }
}

pub const METRICS_HEADER: &str = "cell_id,algorithm,estimator,scale,subsize,lambda,frame,mse,rel_l2,centroid_err";
pub const TRACE_HEADER: &str = "sweep,subproblem,residual,skipped,mse";

/// One line of a metrics CSV. `report` is `None` for a failed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub cell_id: String,
    pub algorithm: String,
    pub estimator: String,
    pub scale: f64,
    pub subsize: usize,
    pub lambda: f64,
    pub report: Option<MetricsReport>,
}

impl From<&CellOutcome> for MetricsRow {
    fn from(o: &CellOutcome) -> Self {
        let c = &o.cell;
        Self {
            cell_id: c.id.clone(),
            algorithm: c.algorithm.name().to_string(),
            estimator: c.estimator_label(),
            scale: c.scale,
            subsize: c.subsize,
            lambda: c.lambda,
            report: o.outcome.as_ref().ok().map(|(r, _)| r.clone()),
        }
    }
}

/// Metrics CSV text; failed cells get an empty frame and `nan` metrics.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut text = format!("{METRICS_HEADER}\n");
    for row in rows {
        let (frame, m, r, ce) = match &row.report {
            Some(rep) => (rep.frame.to_string(), fmt_f64(rep.mse), fmt_f64(rep.rel_l2), fmt_f64(rep.centroid_error)),
            None => (String::new(), "nan".into(), "nan".into(), "nan".into()),
        };
        writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            row.cell_id,
            row.algorithm,
            row.estimator,
            fmt_f64(row.scale),
            subsize_label(row.subsize),
            fmt_f64(row.lambda),
            frame,
            m,
            r,
            ce
        )
        .unwrap();
    }
    text
}

pub fn subsize_label(subproblems_per_frame: usize) -> String {
    if subproblems_per_frame == 1 {
        "1".into()
    } else {
        format!("1/{subproblems_per_frame}")
    }
}

/// Parses a frame fraction (`1`, `1/4`, `0.25`) into subproblems per frame.
pub fn parse_subsize(text: &str) -> Result<usize> {
    let fraction = if let Some((num, den)) = text.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| Error::config("subsize", format!("bad fraction `{text}`")))?;
        let d: f64 = den.trim().parse().map_err(|_| Error::config("subsize", format!("bad fraction `{text}`")))?;
        n / d
    } else {
        text.trim().parse().map_err(|_| Error::config("subsize", format!("bad fraction `{text}`")))?
    };
    for s in ALLOWED_SUBSIZES {
        if (fraction * s as f64 - 1.0).abs() < 1e-9 {
            return Ok(s);
        }
    }
    Err(Error::config(
        "subsize",
        format!("`{text}` is not one of 1, 1/2, 1/4, 1/8, 1/16, 1/32"),
    ))
}

/// Subproblems per frame that the tools accept.
pub const ALLOWED_SUBSIZES: [usize; 6] = [1, 2, 4, 8, 16, 32];

pub fn trace_rows(result: &SolveResult) -> String {
    let mut text = format!("{TRACE_HEADER}\n");
    for (s, sweep) in result.trace.iter().enumerate() {
        let mse = sweep.mse.map(fmt_f64).unwrap_or_default();
        for (i, (r, skip)) in sweep.residuals.iter().zip(&sweep.skipped).enumerate() {
            writeln!(text, "{},{i},{},{},{mse}", s + 1, fmt_f64(*r), u8::from(*skip)).unwrap();
        }
    }
    text
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub recon: Grid2D,
    /// Data-generation grid; defaults to twice the resolution, shifted by
    /// half a data pixel.
    pub fine: Option<Grid2D>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            recon: Grid2D {
                nx: 31,
                ny: 31,
                fov_width: 0.012,
                fov_height: 0.012,
                origin_shift: [0.0, 0.0],
            },
            fine: None,
        }
    }
}

impl GridSection {
    pub fn fine_grid(&self) -> Result<Grid2D> {
        match self.fine {
            Some(g) => Ok(g),
            None => default_fine_grid(&self.recon),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// `null` disables noise.
    pub snr: Option<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { snr: Some(10.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSection {
    pub n_frames: usize,
    /// Subproblems per frame.
    pub subproblems_per_frame: usize,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self {
            n_frames: 7,
            subproblems_per_frame: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub sweeps: Option<usize>,
    pub tau: f64,
    pub positivity: bool,
    /// `None` is the middle frame.
    pub reference_frame: Option<usize>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Resesop,
            lambda: 8.5,
            sweeps: None,
            tau: 1.001,
            positivity: true,
            reference_frame: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    pub method: EstimatorMethod,
    pub scale: f64,
    pub zeta_noise: f64,
    pub prior_lambda: f64,
    pub prior_iters: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            method: EstimatorMethod::Norm,
            scale: 1.0,
            zeta_noise: 0.0,
            prior_lambda: crate::inexactness::DEFAULT_RHO_LAMBDA,
            prior_iters: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedSection {
    pub noise: u64,
    pub zeta_noise: u64,
}

impl Default for SeedSection {
    fn default() -> Self {
        Self {
            noise: 20_240_601,
            zeta_noise: 15,
        }
    }
}

/// Complete description of a run. Unknown keys are rejected everywhere.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scanner: ScannerConfig,
    pub grid: GridSection,
    pub phantom: PhantomMotion,
    pub noise: NoiseSection,
    pub partition: PartitionSection,
    pub solver: SolverSection,
    pub estimator: EstimatorSection,
    pub seeds: SeedSection,
    pub experiment: Option<ExperimentConfig>,
}

impl RunConfig {
    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| format_err(path, "encoding", "not UTF-8"))?;
        Self::from_json(path, &text)
    }

    pub fn validate(&self) -> Result<()> {
        self.scanner.validate()?;
        self.grid.recon.validate()?;
        let fine = self.grid.fine_grid()?;
        fine.validate()?;
        self.phantom.validate(&self.grid.recon)?;
        if let Some(s) = self.noise.snr {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("noise.snr", "must be positive"));
            }
        }
        if self.partition.n_frames == 0 {
            return Err(Error::config("partition.n_frames", "must be positive"));
        }
        if !ALLOWED_SUBSIZES.contains(&self.partition.subproblems_per_frame) {
            return Err(Error::config("partition.subproblems_per_frame", "must be 1, 2, 4, 8, 16 or 32"));
        }
        if self.solver.reference_frame.is_some_and(|k| k >= self.partition.n_frames) {
            return Err(Error::config("solver.reference_frame", "exceeds frame count"));
        }
        if let Some(exp) = &self.experiment {
            if exp.reference_frame.is_some_and(|k| k >= self.partition.n_frames) {
                return Err(Error::config("experiment.reference_frame", "exceeds frame count"));
            }
        }
        if !(self.estimator.scale > 0.0) {
            return Err(Error::config("estimator.scale", "must be positive"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            write!(s, "{b:02x}").unwrap();
            s
        })
    }

    pub fn simulate(&self) -> Result<DynamicDataset> {
        let mut data = crate::simulator::generate_dataset(
            &self.scanner,
            &self.grid.recon,
            &self.grid.fine_grid()?,
            &self.phantom,
            self.partition.n_frames,
            self.noise.snr,
            self.seeds.noise,
        )?
        .with_subproblems(self.partition.subproblems_per_frame)?;
        data.provenance.config_hash = Some(self.hash());
        Ok(data)
    }
}
