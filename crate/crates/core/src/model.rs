//! Core data types and the time partition that couples the sampling time
//! scale to the coarser time scale on which the concentration changes.

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::MatrixView;

/// Rectangular 2D pixel grid over a field of view centred at `origin_shift`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    /// meters
    pub fov_width: f64,
    /// meters
    pub fov_height: f64,
    /// meters; shifts the whole grid, used to avoid inverse crimes
    #[serde(default)]
    pub origin_shift: [f64; 2],
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, fov_width: f64, fov_height: f64) -> Result<Self> {
        let g = Self {
            nx,
            ny,
            fov_width,
            fov_height,
            origin_shift: [0.0, 0.0],
        };
        g.validate()?;
        Ok(g)
    }

    pub fn with_shift(mut self, dx: f64, dy: f64) -> Result<Self> {
        self.origin_shift = [dx, dy];
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::config("grid.nx/ny", "pixel counts must be positive"));
        }
        if !(self.fov_width > 0.0 && self.fov_width.is_finite())
            || !(self.fov_height > 0.0 && self.fov_height.is_finite())
        {
            return Err(Error::config("grid.fov", "field of view must be positive and finite"));
        }
        if !self.origin_shift.iter().all(|s| s.is_finite()) {
            return Err(Error::config("grid.origin_shift", "must be finite"));
        }
        Ok(())
    }

    pub fn n_pixels(&self) -> usize {
        self.nx * self.ny
    }

    pub fn pixel_width(&self) -> f64 {
        self.fov_width / self.nx as f64
    }

    pub fn pixel_height(&self) -> f64 {
        self.fov_height / self.ny as f64
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_width() * self.pixel_height()
    }

    /// Centre of pixel `k`, where `k = iy * nx + ix`.
    pub fn pixel_center(&self, k: usize) -> [f64; 2] {
        let ix = k % self.nx;
        let iy = k / self.nx;
        [
            self.origin_shift[0] - 0.5 * self.fov_width + (ix as f64 + 0.5) * self.pixel_width(),
            self.origin_shift[1] - 0.5 * self.fov_height + (iy as f64 + 0.5) * self.pixel_height(),
        ]
    }

    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.n_pixels()).map(|k| self.pixel_center(k))
    }

    /// Axis-aligned bounds `[xmin, xmax, ymin, ymax]` of the field of view.
    pub fn bounds(&self) -> [f64; 4] {
        [
            self.origin_shift[0] - 0.5 * self.fov_width,
            self.origin_shift[0] + 0.5 * self.fov_width,
            self.origin_shift[1] - 0.5 * self.fov_height,
            self.origin_shift[1] + 0.5 * self.fov_height,
        ]
    }

    pub fn diagonal(&self) -> f64 {
        self.fov_width.hypot(self.fov_height)
    }
}

/// Dense system matrix. Row `t * coils + r` holds coil `r` at sample `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    rows: usize,
    cols: usize,
    coils: usize,
    sample_dt: f64,
    entries: Vec<f64>,
}

impl SystemMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        coils: usize,
        sample_dt: f64,
        entries: Vec<f64>,
    ) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::Dimension {
                context: "system matrix entries",
                expected: rows * cols,
                actual: entries.len(),
            });
        }
        if coils == 0 || !rows.is_multiple_of(coils) {
            return Err(Error::config(
                "coils",
                format!("{rows} rows are not a multiple of {coils} coils"),
            ));
        }
        if let Some(k) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "system matrix entry {k} is not finite"
            )));
        }
        Ok(Self {
            rows,
            cols,
            coils,
            sample_dt,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn samples(&self) -> usize {
        self.rows / self.coils
    }

    pub fn sample_dt(&self) -> f64 {
        self.sample_dt
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView::new(self.rows, self.cols, &self.entries)
    }

    pub fn row_block(&self, rows: Range<usize>) -> MatrixView<'_> {
        let data = &self.entries[rows.start * self.cols..rows.end * self.cols];
        MatrixView::new(rows.len(), self.cols, data)
    }
}

/// Splits each frame into `subproblems_per_frame` equally long subintervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimePartition {
    n_frames: usize,
    samples_per_frame: usize,
    subproblems_per_frame: usize,
}

impl TimePartition {
    pub fn new(n_frames: usize, samples_per_frame: usize, subproblems_per_frame: usize) -> Result<Self> {
        if n_frames == 0 {
            return Err(Error::config("partition.n_frames", "must be positive"));
        }
        if samples_per_frame == 0 {
            return Err(Error::config("partition.samples_per_frame", "must be positive"));
        }
        if subproblems_per_frame == 0 || !samples_per_frame.is_multiple_of(subproblems_per_frame) {
            return Err(Error::config(
                "partition.subproblems_per_frame",
                format!("{subproblems_per_frame} does not divide {samples_per_frame} samples"),
            ));
        }
        Ok(Self {
            n_frames,
            samples_per_frame,
            subproblems_per_frame,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn samples_per_frame(&self) -> usize {
        self.samples_per_frame
    }

    pub fn subproblems_per_frame(&self) -> usize {
        self.subproblems_per_frame
    }

    /// Total number of subproblems `N_τ`.
    pub fn n_subproblems(&self) -> usize {
        self.n_frames * self.subproblems_per_frame
    }

    pub fn samples_per_subproblem(&self) -> usize {
        self.samples_per_frame / self.subproblems_per_frame
    }

    pub fn frame_of(&self, subproblem: usize) -> usize {
        subproblem / self.subproblems_per_frame
    }

    pub fn fragment_of(&self, subproblem: usize) -> usize {
        subproblem % self.subproblems_per_frame
    }

    /// Subproblem index owning `sample_index` of frame `frame_index`.
    pub fn gamma(&self, sample_index: usize, frame_index: usize) -> Result<usize> {
        if sample_index >= self.samples_per_frame {
            return Err(Error::Index {
                what: "sample_index",
                index: sample_index,
                limit: self.samples_per_frame,
            });
        }
        if frame_index >= self.n_frames {
            return Err(Error::Index {
                what: "frame_index",
                index: frame_index,
                limit: self.n_frames,
            });
        }
        Ok(frame_index * self.subproblems_per_frame + sample_index / self.samples_per_subproblem())
    }

    fn check_subproblem(&self, i: usize) -> Result<()> {
        if i >= self.n_subproblems() {
            return Err(Error::Index {
                what: "subproblem",
                index: i,
                limit: self.n_subproblems(),
            });
        }
        Ok(())
    }

    /// Frame-local row range of subproblem `i` for `coils` receive channels.
    pub fn row_range(&self, i: usize, coils: usize) -> Result<Range<usize>> {
        self.check_subproblem(i)?;
        let len = self.samples_per_subproblem() * coils;
        let start = self.fragment_of(i) * len;
        Ok(start..start + len)
    }
}

/// Row block `A_i` of the frame matrix belonging to subproblem `i`.
pub fn slice_subproblem<'a>(
    a: &'a SystemMatrix,
    partition: &TimePartition,
    i: usize,
) -> Result<(MatrixView<'a>, Range<usize>)> {
    if a.samples() != partition.samples_per_frame() {
        return Err(Error::Dimension {
            context: "system matrix samples per frame",
            expected: partition.samples_per_frame(),
            actual: a.samples(),
        });
    }
    let range = partition.row_range(i, a.coils())?;
    Ok((a.row_block(range.clone()), range))
}

/// Fragment `v_i` of a frame's voltage vector belonging to subproblem `i`.
pub fn slice_data<'a>(v_frame: &'a [f64], partition: &TimePartition, i: usize) -> Result<&'a [f64]> {
    let n_t = partition.samples_per_frame();
    if v_frame.is_empty() || !v_frame.len().is_multiple_of(n_t) {
        return Err(Error::Dimension {
            context: "frame data length (multiple of samples per frame)",
            expected: n_t,
            actual: v_frame.len(),
        });
    }
    let range = partition.row_range(i, v_frame.len() / n_t)?;
    Ok(&v_frame[range])
}

/// Piecewise-constant-in-time concentration, one state per stored time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationSequence {
    states: Vec<Vec<f64>>,
}

impl ConcentrationSequence {
    pub fn new(states: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = states.first() {
            let m = first.len();
            for (i, s) in states.iter().enumerate() {
                if s.len() != m {
                    return Err(Error::Dimension {
                        context: "concentration state length",
                        expected: m,
                        actual: s.len(),
                    });
                }
                if s.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                    return Err(Error::Invalid(format!(
                        "concentration state {i} has negative or non-finite entries"
                    )));
                }
            }
        }
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }
}

/// Where a dataset came from; enough to regenerate it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub frames_per_rotation: Option<f64>,
    pub config_hash: Option<String>,
}

/// Measured frames together with the (static) system matrix and, for
/// simulated data, the ground truth.
#[derive(Debug, Clone)]
pub struct DynamicDataset {
    pub system_matrix: Arc<SystemMatrix>,
    pub partition: TimePartition,
    pub frames: Vec<Vec<f64>>,
    /// Ground truth at `truth_states_per_frame` equally spaced instants per
    /// frame, frame-major.
    pub truth: Option<ConcentrationSequence>,
    pub truth_states_per_frame: usize,
    pub grid: Grid2D,
    pub snr: Option<f64>,
    /// Norm of the noise injected into each frame (zero when noise is off).
    pub noise_norms: Vec<f64>,
    pub provenance: Provenance,
}

impl DynamicDataset {
    pub fn validate(&self) -> Result<()> {
        let a = &self.system_matrix;
        if a.cols() != self.grid.n_pixels() {
            return Err(Error::Dimension {
                context: "system matrix columns vs grid pixels",
                expected: self.grid.n_pixels(),
                actual: a.cols(),
            });
        }
        if a.samples() != self.partition.samples_per_frame() {
            return Err(Error::Dimension {
                context: "samples per frame",
                expected: self.partition.samples_per_frame(),
                actual: a.samples(),
            });
        }
        if self.frames.len() != self.partition.n_frames() {
            return Err(Error::Dimension {
                context: "frame count",
                expected: self.partition.n_frames(),
                actual: self.frames.len(),
            });
        }
        for f in &self.frames {
            if f.len() != a.rows() {
                return Err(Error::Dimension {
                    context: "frame data length",
                    expected: a.rows(),
                    actual: f.len(),
                });
            }
        }
        if let Some(truth) = &self.truth {
            let expected = self.partition.n_frames() * self.truth_states_per_frame;
            if truth.len() != expected {
                return Err(Error::Dimension {
                    context: "ground truth states",
                    expected,
                    actual: truth.len(),
                });
            }
            if truth.states().iter().any(|s| s.len() != a.cols()) {
                return Err(Error::Invalid("ground truth state length differs from grid".into()));
            }
        }
        Ok(())
    }

    pub fn n_subproblems(&self) -> usize {
        self.partition.n_subproblems()
    }

    /// `(A_i, v_i)` for subproblem `i`.
    pub fn subproblem(&self, i: usize) -> Result<(MatrixView<'_>, &[f64])> {
        let (a_i, range) = slice_subproblem(&self.system_matrix, &self.partition, i)?;
        let frame = &self.frames[self.partition.frame_of(i)];
        Ok((a_i, &frame[range]))
    }

    /// Same data split into `subproblems_per_frame` subintervals per frame.
    pub fn with_subproblems(&self, subproblems_per_frame: usize) -> Result<Self> {
        let partition = TimePartition::new(
            self.partition.n_frames(),
            self.partition.samples_per_frame(),
            subproblems_per_frame,
        )?;
        if self.truth.is_some() && !self.truth_states_per_frame.is_multiple_of(subproblems_per_frame) {
            return Err(Error::config(
                "subsize",
                format!(
                    "ground truth has {} states per frame, not divisible by {subproblems_per_frame}",
                    self.truth_states_per_frame
                ),
            ));
        }
        Ok(Self {
            partition,
            ..self.clone()
        })
    }

    /// Rotates the frame order so that frame `k` comes first. RESESOP
    /// reconstructs the state of subproblem 0, so this selects which frame's
    /// state is recovered.
    pub fn with_reference_frame(&self, k: usize) -> Result<Self> {
        let n = self.partition.n_frames();
        if k >= n {
            return Err(Error::Index {
                what: "reference frame",
                index: k,
                limit: n,
            });
        }
        let mut frames = self.frames.clone();
        frames.rotate_left(k);
        let mut noise_norms = self.noise_norms.clone();
        if noise_norms.len() == n {
            noise_norms.rotate_left(k);
        }
        let truth = match &self.truth {
            Some(t) => {
                let mut states = t.states().to_vec();
                states.rotate_left(k * self.truth_states_per_frame);
                Some(ConcentrationSequence::new(states)?)
            }
            None => None,
        };
        Ok(Self {
            frames,
            truth,
            noise_norms,
            ..self.clone()
        })
    }

    /// Ground-truth state at the start of subproblem `i`.
    pub fn ground_truth(&self, i: usize) -> Option<&[f64]> {
        let truth = self.truth.as_ref()?;
        if i >= self.n_subproblems() {
            return None;
        }
        let per_sub = self.truth_states_per_frame / self.partition.subproblems_per_frame();
        let idx = self.partition.frame_of(i) * self.truth_states_per_frame
            + self.partition.fragment_of(i) * per_sub;
        Some(truth.state(idx))
    }

    /// Ground-truth state at the start of frame `f`.
    pub fn frame_truth(&self, f: usize) -> Option<&[f64]> {
        let truth = self.truth.as_ref()?;
        (f < self.partition.n_frames()).then(|| truth.state(f * self.truth_states_per_frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: usize, cols: usize, coils: usize) -> SystemMatrix {
        let entries = (0..rows * cols).map(|k| k as f64).collect();
        SystemMatrix::new(rows, cols, coils, 1.0, entries).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let p = TimePartition::new(5, 100, 1).unwrap();
        assert_eq!(p.gamma(57, 3).unwrap(), 3);
        let p = TimePartition::new(5, 100, 4).unwrap();
        assert_eq!(p.gamma(0, 0).unwrap(), 0);
        assert_eq!(p.gamma(75, 2).unwrap(), 11);
    }

    #[test]
    fn gamma_rejects_out_of_range() {
        let p = TimePartition::new(2, 100, 4).unwrap();
        assert!(matches!(p.gamma(100, 0), Err(Error::Index { .. })));
        assert!(matches!(p.gamma(0, 2), Err(Error::Index { .. })));
    }

    #[test]
    fn partition_requires_divisor() {
        assert!(TimePartition::new(1, 100, 3).is_err());
        assert!(TimePartition::new(0, 100, 1).is_err());
    }

    #[test]
    fn slice_whole_frame() {
        let a = matrix(10, 3, 2);
        let p = TimePartition::new(2, 5, 1).unwrap();
        let (view, range) = slice_subproblem(&a, &p, 1).unwrap();
        assert_eq!(range, 0..10);
        assert_eq!(view.data, a.entries());
    }

    #[test]
    fn slice_quarter_fragment() {
        let a = matrix(100, 2, 1);
        let p = TimePartition::new(3, 100, 4).unwrap();
        // subproblem 6 is fragment 2 of frame 1
        let (view, range) = slice_subproblem(&a, &p, 6).unwrap();
        assert_eq!(range, 50..75);
        assert_eq!(view.rows, 25);
        assert_eq!(view.row(0), a.view().row(50));
    }

    #[test]
    fn half_frame_even_is_first_half() {
        let a = matrix(8, 1, 2);
        let p = TimePartition::new(2, 4, 2).unwrap();
        let (_, range) = slice_subproblem(&a, &p, 2).unwrap();
        assert_eq!(range, 0..4);
    }

    #[test]
    fn slice_data_examples() {
        let v: Vec<f64> = (1..=8).map(f64::from).collect();
        let p = TimePartition::new(1, 8, 4).unwrap();
        assert_eq!(slice_data(&v, &p, 1).unwrap(), &[3.0, 4.0]);
        let whole = TimePartition::new(1, 8, 1).unwrap();
        assert_eq!(slice_data(&v, &whole, 0).unwrap(), &v[..]);
        let joined: Vec<f64> = (0..4)
            .flat_map(|i| slice_data(&v, &p, i).unwrap().to_vec())
            .collect();
        assert_eq!(joined, v);
    }

    #[test]
    fn slice_rejects_bad_index() {
        let a = matrix(8, 1, 2);
        let p = TimePartition::new(2, 4, 2).unwrap();
        assert!(slice_subproblem(&a, &p, 4).is_err());
    }

    #[test]
    fn reassembly_reproduces_frame_matrix() {
        let a = matrix(48, 3, 3);
        for s in [1, 2, 4, 8, 16] {
            let p = TimePartition::new(2, 16, s).unwrap();
            let mut stacked = Vec::new();
            for i in 0..s {
                stacked.extend_from_slice(slice_subproblem(&a, &p, i).unwrap().0.data);
            }
            assert_eq!(stacked, a.entries());
        }
    }

    #[test]
    fn every_sample_has_one_subproblem() {
        let p = TimePartition::new(3, 32, 8).unwrap();
        let mut counts = vec![0usize; p.n_subproblems()];
        for f in 0..3 {
            for t in 0..32 {
                counts[p.gamma(t, f).unwrap()] += 1;
            }
        }
        assert!(counts.iter().all(|&c| c == p.samples_per_subproblem()));
    }

    #[test]
    fn concentration_rejects_negative() {
        assert!(ConcentrationSequence::new(vec![vec![0.0, -1.0]]).is_err());
        assert!(ConcentrationSequence::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn pixel_centers_inside_fov() {
        let g = Grid2D::new(3, 2, 3.0, 2.0).unwrap().with_shift(0.25, 0.0).unwrap();
        let [x0, x1, y0, y1] = g.bounds();
        for c in g.centers() {
            assert!(c[0] > x0 && c[0] < x1 && c[1] > y0 && c[1] < y1);
        }
        assert_eq!(g.pixel_center(0), [-0.75, -0.5]);
    }
}
