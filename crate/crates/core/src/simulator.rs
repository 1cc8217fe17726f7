//! Forward simulation of 2D Lissajous MPI with an equilibrium (Langevin)
//! particle model, plus a rotating-disk phantom.
//!
//! The applied field at position `x` is `H(x, t) = G x - D(t)` with a
//! diagonal selection gradient `G` and sinusoidal drive `D`, so that `H`
//! vanishes at the field-free point `G⁻¹ D(t)`. Particles align with `H`
//! following `m̄ = m L(β|H|) H/|H|` and the induced voltage in coil `r` is
//! `-gain · p_rᵀ ∂ₜm̄`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::model::{
    ConcentrationSequence, DynamicDataset, Grid2D, Provenance, SystemMatrix, TimePartition,
};

/// Number of phantom updates per frame when generating data.
pub const MOTION_STEPS_PER_FRAME: usize = 32;

const LANGEVIN_SERIES_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScannerConfig {
    /// Hz
    pub drive_frequencies: [f64; 2],
    /// tesla
    pub drive_amplitudes: [f64; 2],
    /// tesla / meter
    pub selection_gradient: [f64; 2],
    /// Hz
    pub sample_rate: f64,
    /// Unit sensitivity vector per receive coil.
    pub coil_sensitivities: Vec<[f64; 2]>,
    /// A·m²
    pub particle_moment: f64,
    /// 1 / tesla
    pub langevin_beta: f64,
    /// Folds μ0, receive chain and unit conversions into one factor.
    pub gain: f64,
}

impl Default for ScannerConfig {
    fn default() -> Self {
        Self {
            drive_frequencies: [2.5e6 / 102.0, 2.5e6 / 96.0],
            drive_amplitudes: [0.012, 0.012],
            selection_gradient: [2.0, 2.0],
            sample_rate: 2.5e6,
            coil_sensitivities: vec![[1.0, 0.0], [0.0, 1.0]],
            particle_moment: 6.8e-18,
            langevin_beta: 600.0,
            gain: 5.0e17,
        }
    }
}

impl ScannerConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !self.drive_frequencies.iter().all(|&f| positive(f)) {
            return Err(Error::config("scanner.drive_frequencies", "must be positive"));
        }
        if self.drive_frequencies[0] == self.drive_frequencies[1] {
            return Err(Error::config(
                "scanner.drive_frequencies",
                "x and y frequencies must differ",
            ));
        }
        if !self.drive_amplitudes.iter().all(|&a| positive(a)) {
            return Err(Error::config("scanner.drive_amplitudes", "must be positive"));
        }
        if !self.selection_gradient.iter().all(|&g| positive(g)) {
            return Err(Error::config("scanner.selection_gradient", "must be positive"));
        }
        if !positive(self.sample_rate) {
            return Err(Error::config("scanner.sample_rate", "must be positive"));
        }
        if self.coil_sensitivities.is_empty() {
            return Err(Error::config("scanner.coil_sensitivities", "need at least one coil"));
        }
        for p in &self.coil_sensitivities {
            if !((p[0].hypot(p[1]) - 1.0).abs() < 1e-9) {
                return Err(Error::config(
                    "scanner.coil_sensitivities",
                    format!("{p:?} is not a unit vector"),
                ));
            }
        }
        if !positive(self.particle_moment) {
            return Err(Error::config("scanner.particle_moment", "must be positive"));
        }
        if !positive(self.langevin_beta) {
            return Err(Error::config("scanner.langevin_beta", "must be positive"));
        }
        if !positive(self.gain) {
            return Err(Error::config("scanner.gain", "must be positive"));
        }
        self.samples_per_frame().map(|_| ())
    }

    pub fn n_coils(&self) -> usize {
        self.coil_sensitivities.len()
    }

    /// Coprime `(p, q)` with `f_x / f_y = p / q`.
    pub fn frequency_ratio(&self) -> Result<(u64, u64)> {
        let [fx, fy] = self.drive_frequencies;
        for q in 1..=1024u64 {
            let p = (fx / fy * q as f64).round();
            if p >= 1.0 && ((p / q as f64) - fx / fy).abs() <= 1e-12 * (fx / fy) {
                let p = p as u64;
                if gcd(p, q) == 1 {
                    return Ok((p, q));
                }
            }
        }
        Err(Error::config(
            "scanner.drive_frequencies",
            "f_x / f_y is not a ratio of small integers; the trajectory does not close",
        ))
    }

    /// Duration of one Lissajous period (seconds).
    pub fn frame_duration(&self) -> Result<f64> {
        let (p, _) = self.frequency_ratio()?;
        Ok(p as f64 / self.drive_frequencies[0])
    }

    pub fn samples_per_frame(&self) -> Result<usize> {
        let n = self.sample_rate * self.frame_duration()?;
        let rounded = n.round();
        if rounded < 1.0 || (n - rounded).abs() > 1e-6 * n {
            return Err(Error::config(
                "scanner.sample_rate",
                format!("sample_rate * frame_duration = {n} is not an integer"),
            ));
        }
        Ok(rounded as usize)
    }

    pub fn sample_dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Field-free point offset amplitudes `A / g` (meters).
    pub fn ffp_extent(&self) -> [f64; 2] {
        [
            self.drive_amplitudes[0] / self.selection_gradient[0],
            self.drive_amplitudes[1] / self.selection_gradient[1],
        ]
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Position of the field-free point at time `t`.
pub fn ffp_trajectory(cfg: &ScannerConfig, t: f64) -> [f64; 2] {
    let [ex, ey] = cfg.ffp_extent();
    [
        ex * (2.0 * PI * cfg.drive_frequencies[0] * t).sin(),
        ey * (2.0 * PI * cfg.drive_frequencies[1] * t).sin(),
    ]
}

/// Langevin function `coth(ξ) - 1/ξ`.
pub fn langevin(xi: f64) -> f64 {
    if xi.abs() <= LANGEVIN_SERIES_THRESHOLD {
        xi / 3.0 - xi * xi * xi / 45.0
    } else {
        1.0 / xi.tanh() - 1.0 / xi
    }
}

/// Drive field samples `D(t_j) = (A_x sin(2π f_x t_j), A_y sin(2π f_y t_j))`.
fn drive_table(cfg: &ScannerConfig, n_t: usize) -> Vec<[f64; 2]> {
    let dt = cfg.sample_dt();
    (0..n_t)
        .map(|j| {
            let t = j as f64 * dt;
            [
                cfg.drive_amplitudes[0] * (2.0 * PI * cfg.drive_frequencies[0] * t).sin(),
                cfg.drive_amplitudes[1] * (2.0 * PI * cfg.drive_frequencies[1] * t).sin(),
            ]
        })
        .collect()
}

/// Mean magnetic moment at `x` for drive field `drive`.
pub fn mean_moment(cfg: &ScannerConfig, x: [f64; 2], drive: [f64; 2]) -> [f64; 2] {
    let h = [
        cfg.selection_gradient[0] * x[0] - drive[0],
        cfg.selection_gradient[1] * x[1] - drive[1],
    ];
    let mag = h[0].hypot(h[1]);
    if mag == 0.0 {
        return [0.0, 0.0];
    }
    let scale = cfg.particle_moment * langevin(cfg.langevin_beta * mag) / mag;
    [scale * h[0], scale * h[1]]
}

/// Voltage response (one frame, all coils, interleaved `t * R + r`) of unit
/// concentration in a pixel of area `area` centred at `x`.
fn pixel_signal(cfg: &ScannerConfig, drive: &[[f64; 2]], x: [f64; 2], area: f64, out: &mut [f64]) {
    let n_t = drive.len();
    let n_coils = cfg.n_coils();
    let moments: Vec<[f64; 2]> = drive.iter().map(|&d| mean_moment(cfg, x, d)).collect();
    let scale = -cfg.gain * area / (2.0 * cfg.sample_dt());
    for t in 0..n_t {
        let next = moments[(t + 1) % n_t];
        let prev = moments[(t + n_t - 1) % n_t];
        let dm = [next[0] - prev[0], next[1] - prev[1]];
        for (r, p) in cfg.coil_sensitivities.iter().enumerate() {
            out[t * n_coils + r] = scale * (p[0] * dm[0] + p[1] * dm[1]);
        }
    }
}

pub fn build_system_matrix(cfg: &ScannerConfig, grid: &Grid2D) -> Result<SystemMatrix> {
    cfg.validate()?;
    grid.validate()?;
    let n_t = cfg.samples_per_frame()?;
    let n_coils = cfg.n_coils();
    let rows = n_t * n_coils;
    let cols = grid.n_pixels();
    let drive = drive_table(cfg, n_t);
    let area = grid.pixel_area();
    let mut entries = vec![0.0; rows * cols];
    let mut column = vec![0.0; rows];
    for (k, x) in grid.centers().enumerate() {
        pixel_signal(cfg, &drive, x, area, &mut column);
        for (row, &v) in column.iter().enumerate() {
            entries[row * cols + k] = v;
        }
    }
    SystemMatrix::new(rows, cols, n_coils, cfg.sample_dt(), entries)
}

/// Rotating disk phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomMotion {
    /// meters
    pub disk_radius: f64,
    /// meters; distance of the disk centre from the FOV centre
    pub orbit_radius: f64,
    /// `None` means the phantom does not move.
    pub frames_per_rotation: Option<f64>,
    pub amplitude: f64,
    /// radians
    pub initial_angle: f64,
}

impl Default for PhantomMotion {
    fn default() -> Self {
        Self {
            disk_radius: 1.6e-3,
            orbit_radius: 2.0e-3,
            frames_per_rotation: Some(7.0),
            amplitude: 1.0,
            initial_angle: 0.0,
        }
    }
}

impl PhantomMotion {
    pub fn validate(&self, grid: &Grid2D) -> Result<()> {
        if !(self.disk_radius > 0.0) || !(self.orbit_radius >= 0.0) {
            return Err(Error::config("phantom", "radii must be positive"));
        }
        if !(self.amplitude > 0.0 && self.amplitude.is_finite()) {
            return Err(Error::config("phantom.amplitude", "must be positive"));
        }
        if let Some(fpr) = self.frames_per_rotation {
            if !(fpr > 0.0) {
                return Err(Error::config("phantom.frames_per_rotation", "must be positive"));
            }
        }
        let reach = self.orbit_radius + self.disk_radius;
        let [x0, x1, y0, y1] = grid.bounds();
        if -reach < x0 || reach > x1 || -reach < y0 || reach > y1 {
            return Err(Error::config(
                "phantom",
                format!("disk leaves the field of view (reach {reach} m)"),
            ));
        }
        Ok(())
    }

    /// Fraction of a full rotation completed after `frames` frames.
    pub fn rotation_fraction(&self, frames: f64) -> f64 {
        match self.frames_per_rotation {
            Some(fpr) => (frames / fpr).rem_euclid(1.0),
            None => 0.0,
        }
    }

    pub fn disk_center(&self, time_fraction: f64) -> [f64; 2] {
        let angle = self.initial_angle + 2.0 * PI * time_fraction;
        [self.orbit_radius * angle.cos(), self.orbit_radius * angle.sin()]
    }
}

/// Concentration image of the phantom after `time_fraction` of a rotation.
pub fn phantom_state(motion: &PhantomMotion, grid: &Grid2D, time_fraction: f64) -> Result<Vec<f64>> {
    motion.validate(grid)?;
    let c = motion.disk_center(time_fraction);
    let r2 = motion.disk_radius * motion.disk_radius;
    Ok(grid
        .centers()
        .map(|x| {
            let d2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
            if d2 <= r2 {
                motion.amplitude
            } else {
                0.0
            }
        })
        .collect())
}

/// Noise-free data for a sequence of concentration states on `grid`.
///
/// `states` is frame-major with `states_per_frame` states per frame; state
/// `q` of a frame is active during the `q`-th of `states_per_frame` equal
/// sample blocks. Pixels that are zero in every state are skipped.
pub fn simulate_clean_frames(
    cfg: &ScannerConfig,
    grid: &Grid2D,
    states: &[Vec<f64>],
    states_per_frame: usize,
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    grid.validate()?;
    let n_t = cfg.samples_per_frame()?;
    if states_per_frame == 0 || n_t % states_per_frame != 0 {
        return Err(Error::config(
            "states_per_frame",
            format!("{states_per_frame} does not divide {n_t} samples"),
        ));
    }
    if states.is_empty() || !states.len().is_multiple_of(states_per_frame) {
        return Err(Error::Invalid(format!(
            "{} states is not a whole number of frames",
            states.len()
        )));
    }
    let m = grid.n_pixels();
    if let Some(bad) = states.iter().find(|s| s.len() != m) {
        return Err(Error::Dimension {
            context: "state length",
            expected: m,
            actual: bad.len(),
        });
    }
    let n_coils = cfg.n_coils();
    let rows = n_t * n_coils;
    let block = rows / states_per_frame;
    let n_frames = states.len() / states_per_frame;
    let drive = drive_table(cfg, n_t);
    let area = grid.pixel_area();

    let mut frames = vec![vec![0.0; rows]; n_frames];
    let mut column = vec![0.0; rows];
    for k in 0..m {
        if states.iter().all(|s| s[k] == 0.0) {
            continue;
        }
        pixel_signal(cfg, &drive, grid.pixel_center(k), area, &mut column);
        for (f, frame) in frames.iter_mut().enumerate() {
            for q in 0..states_per_frame {
                let c = states[f * states_per_frame + q][k];
                if c == 0.0 {
                    continue;
                }
                let range = q * block..(q + 1) * block;
                for (v, s) in frame[range.clone()].iter_mut().zip(&column[range]) {
                    *v += c * s;
                }
            }
        }
    }
    Ok(frames)
}

/// Checks that the data grid is at least twice as fine as the reconstruction
/// grid and covers it.
fn check_nested(recon: &Grid2D, fine: &Grid2D) -> Result<()> {
    let tol = 1e-12;
    if fine.pixel_width() > 0.5 * recon.pixel_width() * (1.0 + tol)
        || fine.pixel_height() > 0.5 * recon.pixel_height() * (1.0 + tol)
    {
        return Err(Error::config(
            "grid.fine",
            "data grid must have at least twice the reconstruction resolution",
        ));
    }
    let r = recon.bounds();
    let f = fine.bounds();
    let slack = [fine.pixel_width(), fine.pixel_height()];
    if f[0] > r[0] + slack[0] || f[1] < r[1] - slack[0] || f[2] > r[2] + slack[1] || f[3] < r[3] - slack[1] {
        return Err(Error::config(
            "grid.fine",
            "data grid does not cover the reconstruction field of view",
        ));
    }
    Ok(())
}

/// Simulates a dynamic experiment.
///
/// Data come from `grid_fine` with the phantom updated
/// [`MOTION_STEPS_PER_FRAME`] times per frame; the returned system matrix and
/// ground truth live on `grid_recon`. With `snr = Some(s)` each frame gets
/// white Gaussian noise scaled to `‖noise‖ = ‖signal‖ / s`.
pub fn generate_dataset(
    cfg: &ScannerConfig,
    grid_recon: &Grid2D,
    grid_fine: &Grid2D,
    motion: &PhantomMotion,
    n_frames: usize,
    snr: Option<f64>,
    seed: u64,
) -> Result<DynamicDataset> {
    cfg.validate()?;
    grid_recon.validate()?;
    grid_fine.validate()?;
    check_nested(grid_recon, grid_fine)?;
    motion.validate(grid_recon)?;
    motion.validate(grid_fine)?;
    if let Some(s) = snr {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::config("noise.snr", "must be positive"));
        }
    }
    let n_t = cfg.samples_per_frame()?;
    let partition = TimePartition::new(n_frames, n_t, 1)?;
    let steps = MOTION_STEPS_PER_FRAME;
    if n_t % steps != 0 {
        return Err(Error::config(
            "scanner",
            format!("{n_t} samples per frame not divisible by {steps} motion steps"),
        ));
    }

    let instants: Vec<f64> = (0..n_frames * steps)
        .map(|i| motion.rotation_fraction(i as f64 / steps as f64))
        .collect();
    let fine_states = instants
        .iter()
        .map(|&frac| phantom_state(motion, grid_fine, frac))
        .collect::<Result<Vec<_>>>()?;
    let mut frames = simulate_clean_frames(cfg, grid_fine, &fine_states, steps)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise_norms = Vec::with_capacity(n_frames);
    for frame in &mut frames {
        let Some(snr) = snr else {
            noise_norms.push(0.0);
            continue;
        };
        let noise: Vec<f64> = (0..frame.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let signal = norm(frame);
        let raw = norm(&noise);
        if signal == 0.0 || raw == 0.0 {
            noise_norms.push(0.0);
            continue;
        }
        let scale = signal / (snr * raw);
        for (v, n) in frame.iter_mut().zip(&noise) {
            *v += scale * n;
        }
        noise_norms.push(scale * raw);
    }

    let truth = instants
        .iter()
        .map(|&frac| phantom_state(motion, grid_recon, frac))
        .collect::<Result<Vec<_>>>()?;
    let dataset = DynamicDataset {
        system_matrix: build_system_matrix(cfg, grid_recon)?.into(),
        partition,
        frames,
        truth: Some(ConcentrationSequence::new(truth)?),
        truth_states_per_frame: steps,
        grid: *grid_recon,
        snr,
        noise_norms,
        provenance: Provenance {
            seed: Some(seed),
            frames_per_rotation: motion.frames_per_rotation,
            config_hash: None,
        },
    };
    dataset.validate()?;
    Ok(dataset)
}

/// Default data grid for a reconstruction grid: twice the resolution plus one
/// pixel, shifted by half a data pixel.
pub fn default_fine_grid(recon: &Grid2D) -> Result<Grid2D> {
    let nx = 2 * recon.nx + 1;
    let ny = 2 * recon.ny + 1;
    let pw = 0.5 * recon.pixel_width();
    let ph = 0.5 * recon.pixel_height();
    Grid2D::new(nx, ny, pw * nx as f64, ph * ny as f64)?
        .with_shift(recon.origin_shift[0] + 0.5 * pw, recon.origin_shift[1] + 0.5 * ph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, sub};

    fn small_cfg() -> ScannerConfig {
        ScannerConfig::default()
    }

    #[test]
    fn default_scanner_geometry() {
        let cfg = small_cfg();
        assert_eq!(cfg.frequency_ratio().unwrap(), (16, 17));
        assert_eq!(cfg.samples_per_frame().unwrap(), 1632);
    }

    #[test]
    fn ffp_starts_at_origin() {
        assert_eq!(ffp_trajectory(&small_cfg(), 0.0), [0.0, 0.0]);
    }

    #[test]
    fn ffp_quarter_period_reaches_extent() {
        let mut cfg = small_cfg();
        cfg.drive_frequencies = [25_000.0, 25_000.0];
        let p = ffp_trajectory(&cfg, 1.0 / (4.0 * 25_000.0));
        assert!((p[0] - cfg.ffp_extent()[0]).abs() < 1e-15);
    }

    #[test]
    fn ffp_trajectory_closes() {
        let cfg = small_cfg();
        let period = cfg.frame_duration().unwrap();
        let a = ffp_trajectory(&cfg, 0.0);
        let b = ffp_trajectory(&cfg, period);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn rejects_equal_frequencies() {
        let mut cfg = small_cfg();
        cfg.drive_frequencies = [1e4, 1e4];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn langevin_examples() {
        assert_eq!(langevin(0.0), 0.0);
        assert!((langevin(1e-6) - 1e-6 / 3.0).abs() < 1e-12);
        // coth(10) - 0.1, evaluated with 50-digit arithmetic
        assert!((langevin(10.0) - 0.900_000_004_122_307_2).abs() < 1e-15);
        assert_eq!(langevin(-2.5), -langevin(2.5));
    }

    #[test]
    fn langevin_bounded_and_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for i in -5000..=5000 {
            let xi = i as f64 * 0.01;
            let l = langevin(xi);
            assert!(l.abs() < 1.0);
            assert!(l >= prev, "not monotone at {xi}");
            prev = l;
        }
    }

    #[test]
    fn langevin_branches_agree_at_threshold() {
        let t = LANGEVIN_SERIES_THRESHOLD;
        let series = t / 3.0 - t.powi(3) / 45.0;
        let direct = 1.0 / t.tanh() - 1.0 / t;
        // the direct branch loses ~1e-8 relative to cancellation here
        assert!((series - direct).abs() < 1e-11);
    }

    #[test]
    fn moment_vanishes_at_ffp() {
        let cfg = small_cfg();
        let t = 37.0 * cfg.sample_dt();
        let x = ffp_trajectory(&cfg, t);
        let drive = drive_table(&cfg, 38)[37];
        let m = mean_moment(&cfg, x, drive);
        assert!(m[0].abs() < 1e-30 && m[1].abs() < 1e-30);
    }

    #[test]
    fn system_matrix_rows_telescope() {
        let cfg = small_cfg();
        let grid = Grid2D::new(5, 4, 0.012, 0.012).unwrap();
        let a = build_system_matrix(&cfg, &grid).unwrap();
        assert_eq!(a.rows(), 1632 * 2);
        assert_eq!(a.cols(), 20);
        // per pixel and coil, the periodic centred difference sums to zero
        let v = a.view();
        for k in 0..a.cols() {
            for r in 0..2 {
                let col: Vec<f64> = (0..1632).map(|t| v.row(t * 2 + r)[k]).collect();
                let sum: f64 = col.iter().sum();
                assert!(sum.abs() < 1e-9 * norm(&col), "pixel {k} coil {r}: {sum}");
            }
        }
    }

    #[test]
    fn phantom_periodic_and_static_orbit() {
        let grid = Grid2D::new(31, 31, 0.012, 0.012).unwrap();
        let motion = PhantomMotion::default();
        assert_eq!(
            phantom_state(&motion, &grid, 0.0).unwrap(),
            phantom_state(&motion, &grid, 1.0 - 1e-15).unwrap()
        );
        let centred = PhantomMotion {
            orbit_radius: 0.0,
            ..motion
        };
        let a = phantom_state(&centred, &grid, 0.0).unwrap();
        for frac in [0.1, 0.37, 0.5, 0.9] {
            assert_eq!(a, phantom_state(&centred, &grid, frac).unwrap());
        }
    }

    #[test]
    fn phantom_mass_nearly_constant() {
        let grid = Grid2D::new(31, 31, 0.012, 0.012).unwrap();
        let motion = PhantomMotion::default();
        let masses: Vec<f64> = (0..64)
            .map(|i| {
                let c = phantom_state(&motion, &grid, i as f64 / 64.0).unwrap();
                c.iter().sum::<f64>() * grid.pixel_area()
            })
            .collect();
        let exact = std::f64::consts::PI * motion.disk_radius.powi(2);
        let max_dev = masses.iter().map(|m| (m - exact).abs()).fold(0.0, f64::max);
        // pixelised disk boundary: deviation bounded by the boundary strip
        let strip = 2.0 * std::f64::consts::PI * motion.disk_radius * grid.pixel_width();
        assert!(max_dev < strip, "max deviation {max_dev} vs strip {strip}");
    }

    #[test]
    fn phantom_outside_fov_rejected() {
        let grid = Grid2D::new(31, 31, 0.012, 0.012).unwrap();
        let motion = PhantomMotion {
            orbit_radius: 5.5e-3,
            ..PhantomMotion::default()
        };
        assert!(phantom_state(&motion, &grid, 0.0).is_err());
    }

    #[test]
    fn clean_frames_are_linear() {
        let cfg = small_cfg();
        let grid = Grid2D::new(9, 9, 0.012, 0.012).unwrap();
        let c1: Vec<f64> = (0..81).map(|k| ((k * 7) % 5) as f64).collect();
        let c2: Vec<f64> = (0..81).map(|k| ((k * 3) % 4) as f64 * 0.5).collect();
        let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + b).collect();
        let v1 = simulate_clean_frames(&cfg, &grid, &[c1], 1).unwrap();
        let v2 = simulate_clean_frames(&cfg, &grid, &[c2], 1).unwrap();
        let v = simulate_clean_frames(&cfg, &grid, &[sum], 1).unwrap();
        let expected: Vec<f64> = v1[0].iter().zip(&v2[0]).map(|(a, b)| a + b).collect();
        assert!(norm(&sub(&v[0], &expected)) <= 1e-12 * norm(&expected));
    }

    #[test]
    fn clean_frames_match_system_matrix() {
        let cfg = small_cfg();
        let grid = Grid2D::new(6, 6, 0.012, 0.012).unwrap();
        let a = build_system_matrix(&cfg, &grid).unwrap();
        let c: Vec<f64> = (0..36).map(|k| (k % 3) as f64).collect();
        let v = simulate_clean_frames(&cfg, &grid, std::slice::from_ref(&c), 1).unwrap();
        let av = a.view().apply(&c);
        assert!(norm(&sub(&v[0], &av)) <= 1e-12 * norm(&av));
        assert!(dot(&av, &av) > 0.0);
    }

    #[test]
    fn fine_grid_must_be_finer() {
        let recon = Grid2D::new(31, 31, 0.012, 0.012).unwrap();
        assert!(check_nested(&recon, &recon).is_err());
        assert!(check_nested(&recon, &default_fine_grid(&recon).unwrap()).is_ok());
    }
}
