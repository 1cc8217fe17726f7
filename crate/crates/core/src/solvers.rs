//! Reconstruction algorithms: regularized Kaczmarz (the usual MPI baseline),
//! RESESOP-Kaczmarz with two search directions, and its SESOP limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mse;
use crate::inexactness::UncertaintyLevels;
use crate::linalg::{axpy, distance, dot, norm, norm_sq, sub, MatrixView};
use crate::model::DynamicDataset;
use crate::projections::{project_stripe_intersection, Stripe};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    RegKaczmarz,
    Sesop,
    Resesop,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::RegKaczmarz => "reg-kaczmarz",
            Algorithm::Sesop => "sesop",
            Algorithm::Resesop => "resesop",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reg-kaczmarz" => Ok(Algorithm::RegKaczmarz),
            "sesop" => Ok(Algorithm::Sesop),
            "resesop" => Ok(Algorithm::Resesop),
            other => Err(Error::config("algorithm", format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Tikhonov parameter (regularized Kaczmarz only).
    #[serde(default)]
    pub lambda: f64,
    pub max_sweeps: usize,
    /// Discrepancy multiplier.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_true")]
    pub positivity: bool,
    #[serde(skip)]
    pub initial_guess: Option<Vec<f64>>,
    #[serde(default = "default_stagnation")]
    pub stagnation_tolerance: f64,
}

fn default_tau() -> f64 {
    1.001
}

fn default_true() -> bool {
    true
}

fn default_stagnation() -> f64 {
    1e-12
}

impl SolverConfig {
    /// Five sweeps with positivity, as is customary for MPI.
    pub fn reg_kaczmarz(lambda: f64) -> Self {
        Self {
            algorithm: Algorithm::RegKaczmarz,
            lambda,
            max_sweeps: 5,
            tau: default_tau(),
            positivity: true,
            initial_guess: None,
            stagnation_tolerance: default_stagnation(),
        }
    }

    /// Ten full sweeps.
    pub fn resesop() -> Self {
        Self {
            algorithm: Algorithm::Resesop,
            lambda: 0.0,
            max_sweeps: 10,
            ..Self::reg_kaczmarz(0.0)
        }
    }

    pub fn sesop() -> Self {
        Self {
            algorithm: Algorithm::Sesop,
            ..Self::resesop()
        }
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.max_sweeps = sweeps;
        self
    }

    pub fn with_positivity(mut self, on: bool) -> Self {
        self.positivity = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0) {
            return Err(Error::config("solver.tau", "must exceed 1"));
        }
        if self.max_sweeps == 0 {
            return Err(Error::config("solver.max_sweeps", "must be at least 1"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("solver.lambda", "must be non-negative"));
        }
        if !(self.stagnation_tolerance >= 0.0) {
            return Err(Error::config("solver.stagnation_tolerance", "must be non-negative"));
        }
        Ok(())
    }

    fn start(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.initial_guess {
            Some(c) if c.len() != dim => Err(Error::Dimension {
                context: "initial guess",
                expected: dim,
                actual: c.len(),
            }),
            Some(c) => Ok(c.clone()),
            None => Ok(vec![0.0; dim]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Stagnation,
    MaxSweeps,
}

/// What happened during one full sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTrace {
    /// Residual norm per subproblem, measured before its update.
    pub residuals: Vec<f64>,
    /// Subproblems that already satisfied the discrepancy principle.
    pub skipped: Vec<bool>,
    /// MSE against the ground truth after the sweep, if known.
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub reconstruction: Vec<f64>,
    pub sweeps_run: usize,
    pub trace: Vec<SweepTrace>,
    pub termination: Termination,
}

impl SolveResult {
    pub fn mse_trace(&self) -> Vec<Option<f64>> {
        self.trace.iter().map(|t| t.mse).collect()
    }
}

pub fn discrepancy_check(residual_norm: f64, zeta: f64, tau: f64) -> bool {
    residual_norm <= tau * zeta
}

pub fn clamp_nonnegative(c: &[f64]) -> Vec<f64> {
    c.iter().map(|&v| v.max(0.0)).collect()
}

fn clamp_in_place(c: &mut [f64]) {
    for v in c {
        *v = v.max(0.0);
    }
}

/// Kaczmarz sweeps on `[A, √λ I] (c, z) = v`, which converge to the
/// Tikhonov solution `argmin ‖Ac - v‖² + λ‖c‖²`.
pub fn regularized_kaczmarz(
    a: MatrixView<'_>,
    v: &[f64],
    cfg: &SolverConfig,
    truth: Option<&[f64]>,
) -> Result<SolveResult> {
    cfg.validate()?;
    if v.len() != a.rows {
        return Err(Error::Dimension {
            context: "data length vs matrix rows",
            expected: a.rows,
            actual: v.len(),
        });
    }
    if let Some(t) = truth {
        if t.len() != a.cols {
            return Err(Error::Dimension {
                context: "ground truth length",
                expected: a.cols,
                actual: t.len(),
            });
        }
    }
    let row_norms: Vec<f64> = (0..a.rows).map(|j| norm_sq(a.row(j))).collect();
    if row_norms.iter().any(|n| !n.is_finite()) {
        return Err(Error::Invalid("system matrix has non-finite row norms".into()));
    }
    let sqrt_lambda = cfg.lambda.sqrt();
    let mut c = cfg.start(a.cols)?;
    let mut z = vec![0.0; a.rows];
    let mut trace = Vec::with_capacity(cfg.max_sweeps);

    for sweep in 0..cfg.max_sweeps {
        for (j, &rn) in row_norms.iter().enumerate() {
            if rn == 0.0 {
                continue;
            }
            let row = a.row(j);
            let step = (v[j] - dot(row, &c) - sqrt_lambda * z[j]) / (rn + cfg.lambda);
            axpy(step, row, &mut c);
            z[j] += step * sqrt_lambda;
        }
        if cfg.positivity {
            clamp_in_place(&mut c);
        }
        let residual = norm(&sub(&a.apply(&c), v));
        if !residual.is_finite() {
            return Err(Error::Numerical { sweep });
        }
        trace.push(SweepTrace {
            residuals: vec![residual],
            skipped: vec![false],
            mse: truth.map(|t| mse(&c, t).expect("length checked")),
        });
    }
    Ok(SolveResult {
        reconstruction: c,
        sweeps_run: cfg.max_sweeps,
        trace,
        termination: Termination::MaxSweeps,
    })
}

/// RESESOP-Kaczmarz on all subproblems of `dataset`, reconstructing the
/// state of subproblem 0.
///
/// Subproblems whose residual is within `tau * zeta` are skipped. Otherwise
/// the iterate is projected onto the intersection of the current stripe and
/// the stripe of the last subiteration that was not skipped.
pub fn resesop_kaczmarz(
    dataset: &DynamicDataset,
    levels: &UncertaintyLevels,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    resesop_kaczmarz_with(dataset, &levels.values(), cfg, |_, _| {})
}

/// RESESOP-Kaczmarz with all levels zero: stripes collapse to hyperplanes.
pub fn sesop_kaczmarz(dataset: &DynamicDataset, cfg: &SolverConfig) -> Result<SolveResult> {
    let zeta = vec![0.0; dataset.n_subproblems()];
    resesop_kaczmarz_with(dataset, &zeta, cfg, |_, _| {})
}

/// RESESOP-Kaczmarz with explicit levels; `observe(n, c)` sees every
/// iterate `c_(n+1)` after subiteration `n`.
pub fn resesop_kaczmarz_with(
    dataset: &DynamicDataset,
    zeta: &[f64],
    cfg: &SolverConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<SolveResult> {
    cfg.validate()?;
    let n_sub = dataset.n_subproblems();
    if zeta.len() != n_sub {
        return Err(Error::Dimension {
            context: "levels vs subproblems",
            expected: n_sub,
            actual: zeta.len(),
        });
    }
    if zeta.iter().any(|z| !(*z >= 0.0)) {
        return Err(Error::Invalid("levels must be non-negative".into()));
    }
    let dim = dataset.system_matrix.cols();
    let truth = dataset.ground_truth(0);
    let mut c = cfg.start(dim)?;
    let mut previous: Option<Stripe> = None;
    let whole = Stripe::whole_space(dim);
    let mut trace = Vec::with_capacity(cfg.max_sweeps);
    let mut termination = Termination::MaxSweeps;
    let mut n = 0usize;

    for sweep in 0..cfg.max_sweeps {
        let start = c.clone();
        let mut residuals = Vec::with_capacity(n_sub);
        let mut skipped = Vec::with_capacity(n_sub);
        for (i, &level) in zeta.iter().enumerate() {
            let (a_i, v_i) = dataset.subproblem(i)?;
            let w = sub(&a_i.apply(&c), v_i);
            let rn = norm(&w);
            if !rn.is_finite() {
                return Err(Error::Numerical { sweep });
            }
            residuals.push(rn);
            let skip = discrepancy_check(rn, level, cfg.tau);
            skipped.push(skip);
            if !skip {
                let u = a_i.apply_transpose(&w);
                if norm_sq(&u) > 0.0 {
                    let stripe = Stripe {
                        alpha: dot(&u, &c) - rn * rn,
                        xi: level * rn,
                        u,
                    };
                    c = project_stripe_intersection(&c, &stripe, previous.as_ref().unwrap_or(&whole));
                    previous = Some(stripe);
                }
            }
            observe(n, &c);
            n += 1;
        }
        if cfg.positivity {
            clamp_in_place(&mut c);
        }
        trace.push(SweepTrace {
            residuals,
            skipped,
            mse: truth.map(|t| mse(&c, t).expect("dimension checked")),
        });
        if distance(&c, &start) <= cfg.stagnation_tolerance * norm(&c) {
            termination = Termination::Stagnation;
            break;
        }
    }
    Ok(SolveResult {
        reconstruction: c,
        sweeps_run: trace.len(),
        trace,
        termination,
    })
}
