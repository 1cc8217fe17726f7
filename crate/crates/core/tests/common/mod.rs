#![allow(dead_code)]

use std::sync::Arc;

use dynmpi::model::{DynamicDataset, Grid2D, Provenance, SystemMatrix, TimePartition};
use dynmpi::projections::Stripe;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Half-space `⟨a, z⟩ ≤ b`.
#[derive(Clone)]
pub struct HalfSpace {
    pub a: Vec<f64>,
    pub b: f64,
}

pub fn stripe_halfspaces(s: &Stripe) -> [HalfSpace; 2] {
    [
        HalfSpace {
            a: s.u.clone(),
            b: s.alpha + s.xi,
        },
        HalfSpace {
            a: s.u.iter().map(|v| -v).collect(),
            b: -(s.alpha - s.xi),
        },
    ]
}

/// Projection of `x` onto an intersection of half-spaces by brute force:
/// every subset of constraints is made active, the equality-constrained
/// least-squares problem is solved with a pseudo-inverse, and the nearest
/// feasible candidate wins.
pub fn qp_project(x: &[f64], cons: &[HalfSpace]) -> Vec<f64> {
    let n = x.len();
    let xv = DVector::from_column_slice(x);
    let scale = 1.0 + xv.norm();
    let feasible = |z: &DVector<f64>| {
        cons.iter().all(|h| {
            let an = DVector::from_column_slice(&h.a).norm();
            DVector::from_column_slice(&h.a).dot(z) - h.b <= 1e-9 * (an * scale + h.b.abs())
        })
    };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << cons.len()) {
        let active: Vec<&HalfSpace> = (0..cons.len()).filter(|k| mask & (1 << k) != 0).map(|k| &cons[k]).collect();
        let z = if active.is_empty() {
            xv.clone()
        } else {
            let a = DMatrix::from_fn(active.len(), n, |i, j| active[i].a[j]);
            let b = DVector::from_iterator(active.len(), active.iter().map(|h| h.b));
            let gram = &a * a.transpose();
            let Ok(pinv) = gram.pseudo_inverse(1e-12) else {
                continue;
            };
            &xv - a.transpose() * (pinv * (&a * &xv - b))
        };
        if feasible(&z) {
            let d = (&z - &xv).norm();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, z));
            }
        }
    }
    best.expect("feasible set is non-empty").1.as_slice().to_vec()
}

/// Random stripe that contains `p`.
pub fn stripe_through(rng: &mut ChaCha8Rng, p: &[f64]) -> Stripe {
    let u = gaussian(rng, p.len());
    let xi: f64 = rng.random_range(0.0..1.5);
    let shift: f64 = rng.random_range(-1.0..1.0) * xi;
    let alpha = dynmpi::linalg::dot(&u, p) + shift;
    Stripe::new(u, alpha, xi).unwrap()
}

/// Tikhonov solution `(AᵀA + λI)⁻¹ Aᵀ v` by Cholesky.
pub fn tikhonov(a: &[f64], rows: usize, cols: usize, v: &[f64], lambda: f64) -> Vec<f64> {
    let a = DMatrix::from_row_slice(rows, cols, a);
    let v = DVector::from_column_slice(v);
    let lhs = a.transpose() * &a + DMatrix::identity(cols, cols) * lambda;
    let rhs = a.transpose() * v;
    lhs.cholesky().expect("positive definite").solve(&rhs).as_slice().to_vec()
}

/// Dataset with a random system matrix and random frames on an `nx × ny`
/// grid. `truth` holds one state per frame when given.
pub fn random_dataset(
    rng: &mut ChaCha8Rng,
    n_frames: usize,
    samples: usize,
    coils: usize,
    nx: usize,
    ny: usize,
    truth: Option<Vec<Vec<f64>>>,
) -> DynamicDataset {
    let cols = nx * ny;
    let rows = samples * coils;
    let a = gaussian(rng, rows * cols);
    let frames = (0..n_frames).map(|_| gaussian(rng, rows)).collect();
    dataset_from(a, rows, cols, coils, nx, ny, frames, truth)
}

#[allow(clippy::too_many_arguments)]
pub fn dataset_from(
    a: Vec<f64>,
    rows: usize,
    cols: usize,
    coils: usize,
    nx: usize,
    ny: usize,
    frames: Vec<Vec<f64>>,
    truth: Option<Vec<Vec<f64>>>,
) -> DynamicDataset {
    let n_frames = frames.len();
    let ds = DynamicDataset {
        system_matrix: Arc::new(SystemMatrix::new(rows, cols, coils, 1e-6, a).unwrap()),
        partition: TimePartition::new(n_frames, rows / coils, 1).unwrap(),
        frames,
        truth: truth.map(|t| dynmpi::ConcentrationSequence::new(t).unwrap()),
        truth_states_per_frame: 1,
        grid: Grid2D::new(nx, ny, 0.01, 0.01).unwrap(),
        snr: None,
        noise_norms: vec![0.0; n_frames],
        provenance: Provenance::default(),
    };
    ds.validate().unwrap();
    ds
}
