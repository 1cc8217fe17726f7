//! Image-quality metrics and the experiment grid driver.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inexactness::{
    zeta_norm_frames, zeta_prior_recon, zeta_subframe_interpolated, UncertaintyLevels,
};
use crate::linalg::{distance, norm};
use crate::model::{DynamicDataset, Grid2D};
use crate::solvers::{regularized_kaczmarz, resesop_kaczmarz, sesop_kaczmarz, Algorithm, SolveResult, SolverConfig};

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "mse operands",
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// `‖a - truth‖ / ‖truth‖`; zero truth gives `‖a‖`.
pub fn relative_l2(a: &[f64], truth: &[f64]) -> Result<f64> {
    if a.len() != truth.len() {
        return Err(Error::Dimension {
            context: "relative error operands",
            expected: truth.len(),
            actual: a.len(),
        });
    }
    let t = norm(truth);
    let d = distance(a, truth);
    Ok(if t > 0.0 { d / t } else { d })
}

/// Intensity-weighted centroid, `None` for zero total mass.
pub fn centroid(c: &[f64], grid: &Grid2D) -> Option<[f64; 2]> {
    let mass: f64 = c.iter().sum();
    if !(mass > 0.0) {
        return None;
    }
    let mut acc = [0.0, 0.0];
    for (k, &v) in c.iter().enumerate() {
        let x = grid.pixel_center(k);
        acc[0] += v * x[0];
        acc[1] += v * x[1];
    }
    Some([acc[0] / mass, acc[1] / mass])
}

/// Distance between the centroids of `rec` and `truth`. A reconstruction
/// without mass scores the FOV diagonal.
pub fn centroid_error(rec: &[f64], truth: &[f64], grid: &Grid2D) -> Result<f64> {
    let m = grid.n_pixels();
    for (len, what) in [(rec.len(), "reconstruction"), (truth.len(), "truth")] {
        if len != m {
            return Err(Error::Dimension {
                context: if what == "truth" { "truth vs grid" } else { "reconstruction vs grid" },
                expected: m,
                actual: len,
            });
        }
    }
    let t = centroid(truth, grid).ok_or_else(|| Error::Invalid("ground truth has no mass".into()))?;
    Ok(match centroid(rec, grid) {
        Some(r) => (r[0] - t[0]).hypot(r[1] - t[1]),
        None => grid.diagonal(),
    })
}

/// Mean squared value of `rec` on pixels where `truth` is zero.
pub fn background_mse(rec: &[f64], truth: &[f64]) -> Result<f64> {
    if rec.len() != truth.len() {
        return Err(Error::Dimension {
            context: "background mse operands",
            expected: truth.len(),
            actual: rec.len(),
        });
    }
    let (sum, count) = rec
        .iter()
        .zip(truth)
        .filter(|(_, t)| **t == 0.0)
        .fold((0.0, 0usize), |(s, n), (r, _)| (s + r * r, n + 1));
    Ok(if count > 0 { sum / count as f64 } else { 0.0 })
}

/// Ranks with ties sharing their average rank (1-based).
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Invalid("spearman needs two equally long samples of size >= 2".into()));
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Invalid("spearman of a constant sample".into()));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// True if no step of `trace` grows by more than `tolerance`.
pub fn is_non_increasing(trace: &[f64], tolerance: f64) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + tolerance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub frame: usize,
    pub mse: f64,
    pub rel_l2: f64,
    pub centroid_error: f64,
    pub mse_trace: Vec<f64>,
}

impl MetricsReport {
    pub fn compute(rec: &[f64], truth: &[f64], grid: &Grid2D, frame: usize, result: Option<&SolveResult>) -> Result<Self> {
        Ok(Self {
            frame,
            mse: mse(rec, truth)?,
            rel_l2: relative_l2(rec, truth)?,
            centroid_error: centroid_error(rec, truth, grid)?,
            mse_trace: result
                .map(|r| r.trace.iter().filter_map(|t| t.mse).collect())
                .unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorMethod {
    Norm,
    Interp,
    PriorRecon,
}

impl EstimatorMethod {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorMethod::Norm => "norm",
            EstimatorMethod::Interp => "interp",
            EstimatorMethod::PriorRecon => "prior-recon",
        }
    }
}

impl std::str::FromStr for EstimatorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm" => Ok(EstimatorMethod::Norm),
            "interp" => Ok(EstimatorMethod::Interp),
            "prior-recon" => Ok(EstimatorMethod::PriorRecon),
            other => Err(Error::config("estimator.method", format!("unknown method `{other}`"))),
        }
    }
}

/// How to obtain levels: the estimator plus optional multiplicative noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub method: EstimatorMethod,
    #[serde(default)]
    pub zeta_noise: f64,
    /// Tikhonov parameter of the prior reconstructions.
    #[serde(default = "default_prior_lambda")]
    pub prior_lambda: f64,
    #[serde(default = "default_prior_iters")]
    pub prior_iters: usize,
}

fn default_prior_lambda() -> f64 {
    crate::inexactness::DEFAULT_RHO_LAMBDA
}

fn default_prior_iters() -> usize {
    5
}

impl EstimatorSpec {
    pub fn new(method: EstimatorMethod) -> Self {
        Self {
            method,
            zeta_noise: 0.0,
            prior_lambda: default_prior_lambda(),
            prior_iters: default_prior_iters(),
        }
    }

    pub fn with_noise(mut self, fraction: f64) -> Self {
        self.zeta_noise = fraction;
        self
    }

    pub fn label(&self) -> String {
        if self.zeta_noise > 0.0 {
            format!("{}+noise{}", self.method.name(), self.zeta_noise)
        } else {
            self.method.name().to_string()
        }
    }

    /// Levels for `dataset` as partitioned (no scaling, no noise).
    pub fn base_levels(&self, dataset: &DynamicDataset) -> Result<UncertaintyLevels> {
        match self.method {
            EstimatorMethod::Norm => zeta_norm_frames(dataset),
            EstimatorMethod::Interp => zeta_subframe_interpolated(dataset),
            EstimatorMethod::PriorRecon => zeta_prior_recon(dataset, self.prior_lambda, self.prior_iters),
        }
    }

    pub fn levels(&self, dataset: &DynamicDataset, scale: f64, seed: u64) -> Result<UncertaintyLevels> {
        self.base_levels(dataset)?.scaled(scale)?.perturbed(self.zeta_noise, seed)
    }
}

/// Cross-product of settings to evaluate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub estimators: Vec<EstimatorSpec>,
    pub scales: Vec<f64>,
    /// Subproblems per frame (1 = frame, 4 = quarter frame, ...).
    pub subsizes: Vec<usize>,
    pub lambdas: Vec<f64>,
    /// Frame whose initial state is reconstructed; `None` is the middle frame.
    pub reference_frame: Option<usize>,
    /// Overrides the per-algorithm default sweep count.
    pub sweeps: Option<usize>,
    pub zeta_noise_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: Vec::new(),
            estimators: vec![EstimatorSpec::new(EstimatorMethod::Norm)],
            scales: vec![1.0],
            subsizes: vec![1],
            lambdas: Vec::new(),
            reference_frame: None,
            sweeps: None,
            zeta_noise_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub id: String,
    pub algorithm: Algorithm,
    pub estimator: Option<EstimatorSpec>,
    pub scale: f64,
    pub subsize: usize,
    pub lambda: f64,
}

impl Cell {
    pub fn estimator_label(&self) -> String {
        self.estimator.as_ref().map(EstimatorSpec::label).unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub cell: Cell,
    pub outcome: std::result::Result<(MetricsReport, SolveResult), String>,
}

/// Frame reconstructed when none is named: the middle one.
pub fn default_reference_frame(n_frames: usize) -> usize {
    n_frames / 2
}

impl ExperimentConfig {
    pub fn resolve_reference_frame(&self, n_frames: usize) -> usize {
        self.reference_frame.unwrap_or_else(|| default_reference_frame(n_frames))
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        let mut push = |algorithm, estimator: Option<EstimatorSpec>, scale, subsize, lambda| {
            let id = format!("c{:03}", cells.len());
            cells.push(Cell {
                id,
                algorithm,
                estimator,
                scale,
                subsize,
                lambda,
            });
        };
        for &algorithm in &self.algorithms {
            match algorithm {
                Algorithm::RegKaczmarz => {
                    for &lambda in &self.lambdas {
                        push(algorithm, None, 1.0, 1, lambda);
                    }
                }
                Algorithm::Sesop => {
                    for &subsize in &self.subsizes {
                        push(algorithm, None, 1.0, subsize, 0.0);
                    }
                }
                Algorithm::Resesop => {
                    for est in &self.estimators {
                        for &scale in &self.scales {
                            for &subsize in &self.subsizes {
                                push(algorithm, Some(est.clone()), scale, subsize, 0.0);
                            }
                        }
                    }
                }
            }
        }
        cells
    }
}

/// Solves for the state at the start of `reference_frame`.
pub fn reconstruct_reference(
    dataset: &DynamicDataset,
    cfg: &SolverConfig,
    levels: Option<&UncertaintyLevels>,
    reference_frame: usize,
    subsize: usize,
) -> Result<SolveResult> {
    let data = dataset.with_reference_frame(reference_frame)?.with_subproblems(subsize)?;
    match cfg.algorithm {
        Algorithm::RegKaczmarz => regularized_kaczmarz(
            data.system_matrix.view(),
            &data.frames[0],
            cfg,
            data.frame_truth(0),
        ),
        Algorithm::Sesop => sesop_kaczmarz(&data, cfg),
        Algorithm::Resesop => {
            let levels = levels.ok_or_else(|| Error::config("levels", "resesop requires levels"))?;
            resesop_kaczmarz(&data, levels, cfg)
        }
    }
}

fn run_cell(
    dataset: &DynamicDataset,
    exp: &ExperimentConfig,
    cell: &Cell,
    cache: &mut HashMap<(usize, usize), UncertaintyLevels>,
    estimator_index: Option<usize>,
) -> Result<(MetricsReport, SolveResult)> {
    let reference_frame = exp.resolve_reference_frame(dataset.partition.n_frames());
    let mut cfg = match cell.algorithm {
        Algorithm::RegKaczmarz => SolverConfig::reg_kaczmarz(cell.lambda),
        Algorithm::Sesop => SolverConfig::sesop(),
        Algorithm::Resesop => SolverConfig::resesop(),
    };
    if let Some(s) = exp.sweeps {
        cfg.max_sweeps = s;
    }
    let levels = match (&cell.estimator, estimator_index) {
        (Some(est), Some(ei)) => {
            let key = (ei, cell.subsize);
            if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(key) {
                let data = dataset
                    .with_reference_frame(reference_frame)?
                    .with_subproblems(cell.subsize)?;
                e.insert(est.base_levels(&data)?);
            }
            Some(cache[&key].scaled(cell.scale)?.perturbed(est.zeta_noise, exp.zeta_noise_seed)?)
        }
        _ => None,
    };
    let result = reconstruct_reference(dataset, &cfg, levels.as_ref(), reference_frame, cell.subsize)?;
    let truth = dataset
        .frame_truth(reference_frame)
        .ok_or_else(|| Error::Invalid("dataset has no ground truth".into()))?;
    let report = MetricsReport::compute(&result.reconstruction, truth, &dataset.grid, reference_frame, Some(&result))?;
    Ok((report, result))
}

/// Runs every cell; a failing cell is recorded and the rest still run.
pub fn run_experiment_suite(dataset: &DynamicDataset, exp: &ExperimentConfig) -> Vec<CellOutcome> {
    let mut cache = HashMap::new();
    exp.cells()
        .into_iter()
        .map(|cell| {
            let ei = cell
                .estimator
                .as_ref()
                .and_then(|e| exp.estimators.iter().position(|x| x == e));
            let outcome = run_cell(dataset, exp, &cell, &mut cache, ei).map_err(|e| {
                log::warn!("cell {} failed: {e}", cell.id);
                e.to_string()
            });
            CellOutcome { cell, outcome }
        })
        .collect()
}
