//! Estimates of the total uncertainty `ζ_i ≈ η_i ρ + δ_i` per subproblem,
//! taken directly from the measured frames or from prior reconstructions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mse;
use crate::linalg::{distance, norm};
use crate::model::{slice_data, DynamicDataset};
use crate::solvers::{regularized_kaczmarz, SolverConfig};

/// Tikhonov parameter of the prior reconstruction behind [`estimate_rho`]
/// when the caller has no better value.
pub const DEFAULT_RHO_LAMBDA: f64 = 1.0;

/// Safety factor between the prior reconstruction norm and `ρ`.
const RHO_FACTOR: f64 = 1.5;

const RHO_SWEEPS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelMethod {
    Norm,
    NormInterpolated,
    PriorRecon,
    Manual,
}

impl LevelMethod {
    pub fn name(self) -> &'static str {
        match self {
            LevelMethod::Norm => "norm",
            LevelMethod::NormInterpolated => "norm-interpolated",
            LevelMethod::PriorRecon => "prior-recon",
            LevelMethod::Manual => "manual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyLevels {
    zeta: Vec<f64>,
    pub rho: f64,
    pub method: LevelMethod,
    pub scale: f64,
}

impl UncertaintyLevels {
    pub fn new(zeta: Vec<f64>, rho: f64, method: LevelMethod) -> Result<Self> {
        if let Some(i) = zeta.iter().position(|z| !(*z >= 0.0 && z.is_finite())) {
            return Err(Error::Invalid(format!("level {i} is negative or not finite")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Invalid(format!("rho = {rho} must be positive")));
        }
        Ok(Self {
            zeta,
            rho,
            method,
            scale: 1.0,
        })
    }

    /// Levels before scaling.
    pub fn raw(&self) -> &[f64] {
        &self.zeta
    }

    /// Levels as used by the solver: `scale * zeta`.
    pub fn values(&self) -> Vec<f64> {
        self.zeta.iter().map(|z| self.scale * z).collect()
    }

    pub fn len(&self) -> usize {
        self.zeta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeta.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::config("scale", "must be positive"));
        }
        Ok(Self {
            scale: self.scale * factor,
            ..self.clone()
        })
    }

    /// Multiplies each level by `1 + ε_i`, `ε_i ~ U[-fraction, fraction]`.
    pub fn perturbed(&self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::config("zeta_noise", "must lie in [0, 1)"));
        }
        if fraction == 0.0 {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-fraction, fraction)
            .map_err(|e| Error::config("zeta_noise", e.to_string()))?;
        let zeta = self
            .zeta
            .iter()
            .map(|z| z * (1.0 + dist.sample(&mut rng)))
            .collect();
        Ok(Self {
            zeta,
            ..self.clone()
        })
    }
}

/// `ζ_i = ‖v_0 - v_i‖` for frame-sized subproblems.
pub fn zeta_norm_frames(dataset: &DynamicDataset) -> Result<UncertaintyLevels> {
    if dataset.partition.subproblems_per_frame() != 1 {
        return Err(Error::Granularity {
            expected: "frame",
            reason: "subframe subproblems need the interpolated estimator".into(),
        });
    }
    let v0 = &dataset.frames[0];
    let zeta = dataset.frames.iter().map(|v| distance(v0, v)).collect();
    UncertaintyLevels::new(zeta, estimate_rho(dataset, DEFAULT_RHO_LAMBDA)?.rho, LevelMethod::Norm)
}

/// Subframe levels: the first fragment of frame 0 is compared with the first
/// fragment of every frame, and a natural cubic spline through these anchors
/// fills in the other subproblems.
pub fn zeta_subframe_interpolated(dataset: &DynamicDataset) -> Result<UncertaintyLevels> {
    let p = &dataset.partition;
    let s = p.subproblems_per_frame();
    if s < 2 {
        return Err(Error::Granularity {
            expected: "subframe",
            reason: "frame-sized subproblems use the plain norm estimator".into(),
        });
    }
    if p.n_frames() < 2 {
        return Err(Error::Insufficient {
            what: "frames for interpolation anchors",
            needed: 2,
            got: p.n_frames(),
        });
    }
    let reference = slice_data(&dataset.frames[0], p, 0)?;
    let mut xs = Vec::with_capacity(p.n_frames());
    let mut ys = Vec::with_capacity(p.n_frames());
    for (k, frame) in dataset.frames.iter().enumerate() {
        xs.push((k * s) as f64);
        ys.push(distance(reference, slice_data(frame, p, 0)?));
    }
    let spline = NaturalCubicSpline::new(xs, ys)?;
    let mut zeta: Vec<f64> = (0..p.n_subproblems())
        .map(|i| spline.eval(i as f64).max(0.0))
        .collect();
    zeta[0] = 0.0;
    UncertaintyLevels::new(
        zeta,
        estimate_rho(dataset, DEFAULT_RHO_LAMBDA)?.rho,
        LevelMethod::NormInterpolated,
    )
}

/// Regularized-Kaczmarz reconstruction of every frame on its own.
pub fn frame_reconstructions(dataset: &DynamicDataset, lambda: f64, sweeps: usize) -> Result<Vec<Vec<f64>>> {
    let cfg = SolverConfig::reg_kaczmarz(lambda).with_sweeps(sweeps);
    let a = dataset.system_matrix.view();
    dataset
        .frames
        .iter()
        .map(|v| regularized_kaczmarz(a, v, &cfg, None).map(|r| r.reconstruction))
        .collect()
}

/// Levels from the MSE between per-frame reconstructions, rescaled so the
/// largest level equals the largest data-space distance `max_i ‖v_0 - v_i‖`.
pub fn zeta_prior_recon(dataset: &DynamicDataset, lambda: f64, iters: usize) -> Result<UncertaintyLevels> {
    if dataset.partition.subproblems_per_frame() != 1 {
        return Err(Error::Granularity {
            expected: "frame",
            reason: "prior reconstructions are per frame".into(),
        });
    }
    if iters == 0 {
        return Err(Error::config("iters", "must be at least 1"));
    }
    let recons = frame_reconstructions(dataset, lambda, iters)?;
    let errors = recons
        .iter()
        .map(|r| mse(&recons[0], r))
        .collect::<Result<Vec<_>>>()?;
    let v0 = &dataset.frames[0];
    let data_max = dataset
        .frames
        .iter()
        .map(|v| distance(v0, v))
        .fold(0.0, f64::max);
    let mse_max = errors.iter().cloned().fold(0.0, f64::max);
    let calibration = if mse_max > 0.0 { data_max / mse_max } else { 0.0 };
    let rho = rho_from_reconstruction(dataset, &recons[0]).rho;
    let mut zeta: Vec<f64> = errors.iter().map(|e| e * calibration).collect();
    zeta[0] = 0.0;
    UncertaintyLevels::new(zeta, rho, LevelMethod::PriorRecon)
}

/// Noise level from repeated frames of a static object: mean pairwise
/// distance over `√2`.
pub fn estimate_noise_level(dataset: &DynamicDataset) -> Result<f64> {
    let frames = &dataset.frames;
    if frames.len() < 2 {
        return Err(Error::Insufficient {
            what: "frames",
            needed: 2,
            got: frames.len(),
        });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for j in 0..frames.len() {
        for k in j + 1..frames.len() {
            total += distance(&frames[j], &frames[k]);
            pairs += 1;
        }
    }
    Ok(total / pairs as f64 / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    /// The prior reconstruction vanished; `ρ` came from `‖v_0‖ / ‖A‖_F`.
    pub fallback: bool,
}

/// Bound on the solution norm: 1.5 times the norm of a five-sweep
/// regularized-Kaczmarz reconstruction of frame 0.
pub fn estimate_rho(dataset: &DynamicDataset, lambda: f64) -> Result<RhoEstimate> {
    let cfg = SolverConfig::reg_kaczmarz(lambda).with_sweeps(RHO_SWEEPS);
    let recon = regularized_kaczmarz(dataset.system_matrix.view(), &dataset.frames[0], &cfg, None)?;
    Ok(rho_from_reconstruction(dataset, &recon.reconstruction))
}

fn rho_from_reconstruction(dataset: &DynamicDataset, recon: &[f64]) -> RhoEstimate {
    let n = norm(recon);
    if n > 0.0 {
        return RhoEstimate {
            rho: RHO_FACTOR * n,
            fallback: false,
        };
    }
    let a = dataset.system_matrix.view().frobenius_norm();
    let guess = if a > 0.0 { norm(&dataset.frames[0]) / a } else { 0.0 };
    log::warn!("prior reconstruction is zero; falling back to ‖v_0‖/‖A‖_F for rho");
    RhoEstimate {
        rho: guess.max(f64::EPSILON),
        fallback: true,
    }
}

/// Natural cubic spline (zero second derivative at both ends), extended
/// linearly outside the knot range.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::Insufficient {
                what: "spline knots",
                needed: 2,
                got: n,
            });
        }
        if ys.len() != n {
            return Err(Error::Dimension {
                context: "spline values",
                expected: n,
                actual: ys.len(),
            });
        }
        if xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("spline knots must increase strictly".into()));
        }
        let mut second = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior equations
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut upper = vec![0.0; m];
            let mut rhs = vec![0.0; m];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 1..m {
                let lower = xs[i + 1] - xs[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            second[m] = rhs[m - 1] / diag[m - 1];
            for i in (0..m - 1).rev() {
                second[i + 1] = (rhs[i] - upper[i] * second[i + 2]) / diag[i];
            }
        }
        Ok(Self { xs, ys, second })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0] + self.slope(0, false) * (x - self.xs[0]);
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1] + self.slope(n - 2, true) * (x - self.xs[n - 1]);
        }
        let i = self.xs.partition_point(|&k| k <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h / 6.0
    }

    /// First derivative at the left (`end = false`) or right end of interval `i`.
    fn slope(&self, i: usize, end: bool) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let secant = (self.ys[i + 1] - self.ys[i]) / h;
        if end {
            secant + h * (self.second[i] + 2.0 * self.second[i + 1]) / 6.0
        } else {
            secant - h * (2.0 * self.second[i] + self.second[i + 1]) / 6.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Natural cubic spline by brute force: four coefficients per interval,
    /// all continuity and end conditions in one dense system.
    fn dense_spline(xs: &[f64], ys: &[f64], x: f64) -> f64 {
        let seg = xs.len() - 1;
        let n = 4 * seg;
        let mut m = vec![vec![0.0; n + 1]; n];
        let mut row = 0;
        let poly = |t: f64| [1.0, t, t * t, t * t * t];
        let d1 = |t: f64| [0.0, 1.0, 2.0 * t, 3.0 * t * t];
        let d2 = |t: f64| [0.0, 0.0, 2.0, 6.0 * t];
        for i in 0..seg {
            for (t, y) in [(xs[i], ys[i]), (xs[i + 1], ys[i + 1])] {
                m[row][4 * i..4 * i + 4].copy_from_slice(&poly(t));
                m[row][n] = y;
                row += 1;
            }
        }
        for i in 0..seg - 1 {
            let t = xs[i + 1];
            for basis in [d1(t), d2(t)] {
                for k in 0..4 {
                    m[row][4 * i + k] = basis[k];
                    m[row][4 * (i + 1) + k] = -basis[k];
                }
                row += 1;
            }
        }
        m[row][0..4].copy_from_slice(&d2(xs[0]));
        row += 1;
        m[row][4 * (seg - 1)..4 * seg].copy_from_slice(&d2(xs[seg]));
        // Gaussian elimination with partial pivoting
        for col in 0..n {
            let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
            m.swap(col, piv);
            let pivot = m[col].clone();
            for (r, row) in m.iter_mut().enumerate() {
                if r != col {
                    let f = row[col] / pivot[col];
                    for (v, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                        *v -= f * p;
                    }
                }
            }
        }
        let coef: Vec<f64> = (0..n).map(|i| m[i][n] / m[i][i]).collect();
        let i = (0..seg).find(|&i| x <= xs[i + 1]).unwrap_or(seg - 1);
        let p = poly(x);
        (0..4).map(|k| coef[4 * i + k] * p[k]).sum()
    }

    #[test]
    fn spline_matches_dense_oracle() {
        let xs = vec![0.0, 2.0, 4.0, 6.0];
        let ys = vec![0.0, 1.0, 4.0, 9.0];
        let spline = NaturalCubicSpline::new(xs.clone(), ys.clone()).unwrap();
        for i in 0..=6 {
            let x = i as f64;
            assert!((spline.eval(x) - dense_spline(&xs, &ys, x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn spline_reproduces_constants_and_anchors() {
        let s = NaturalCubicSpline::new(vec![0.0, 4.0, 8.0, 12.0], vec![2.5; 4]).unwrap();
        for i in 0..20 {
            assert!((s.eval(i as f64) - 2.5).abs() < 1e-14);
        }
        let xs = vec![0.0, 1.0, 3.0, 4.0, 7.0];
        let ys = vec![1.0, -2.0, 0.5, 3.0, 0.0];
        let s = NaturalCubicSpline::new(xs.clone(), ys.clone()).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((s.eval(*x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn spline_two_knots_is_linear() {
        let s = NaturalCubicSpline::new(vec![0.0, 2.0], vec![1.0, 5.0]).unwrap();
        assert!((s.eval(1.0) - 3.0).abs() < 1e-15);
        assert!((s.eval(3.0) - 7.0).abs() < 1e-15);
    }

    #[test]
    fn spline_rejects_bad_knots() {
        assert!(NaturalCubicSpline::new(vec![0.0], vec![1.0]).is_err());
        assert!(NaturalCubicSpline::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn scaling_and_perturbation() {
        let levels = UncertaintyLevels::new(vec![0.0, 1.0, 2.0], 1.0, LevelMethod::Manual).unwrap();
        assert_eq!(levels.scaled(1e5).unwrap().values(), vec![0.0, 1e5, 2e5]);
        let noisy = levels.perturbed(0.15, 3).unwrap();
        for (a, b) in noisy.values().iter().zip(levels.values()) {
            assert!((a - b).abs() <= 0.15 * b + 1e-15);
        }
        assert_eq!(noisy, levels.perturbed(0.15, 3).unwrap());
    }

    #[test]
    fn levels_reject_invalid() {
        assert!(UncertaintyLevels::new(vec![-1.0], 1.0, LevelMethod::Manual).is_err());
        assert!(UncertaintyLevels::new(vec![1.0], 0.0, LevelMethod::Manual).is_err());
    }
}
