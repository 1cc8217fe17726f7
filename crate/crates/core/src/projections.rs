//! Metric projections onto hyperplanes, stripes and intersections of two
//! stripes.

use crate::error::{Error, Result};
use crate::linalg::{axpy, distance, dot, norm, norm_sq};

/// Relative Gram determinant below which two directions count as parallel.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// Relative tolerance for verifying a joint projection.
const VERIFY_TOLERANCE: f64 = 1e-8;

/// Relative slack of the inside test in [`project_stripe`]. A point just
/// projected onto a bounding plane may miss it by a few ulps; the slack makes
/// a second projection a no-op.
const INSIDE_SLACK: f64 = 1e-13;

/// Alternating-projection rounds used when the closed-form step fails.
const FALLBACK_ROUNDS: usize = 100;

/// The slab `{x : |⟨u, x⟩ - α| ≤ ξ}`. `ξ = ∞` is the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct Stripe {
    pub u: Vec<f64>,
    pub alpha: f64,
    pub xi: f64,
}

impl Stripe {
    pub fn new(u: Vec<f64>, alpha: f64, xi: f64) -> Result<Self> {
        if norm_sq(&u) == 0.0 {
            return Err(Error::ZeroDirection);
        }
        if !(xi >= 0.0) {
            return Err(Error::Invalid(format!("stripe half-width {xi} is negative")));
        }
        Ok(Self { u, alpha, xi })
    }

    /// Sentinel stripe that contains every point of dimension `dim`.
    pub fn whole_space(dim: usize) -> Self {
        let mut u = vec![0.0; dim.max(1)];
        u[0] = 1.0;
        Self {
            u,
            alpha: 0.0,
            xi: f64::INFINITY,
        }
    }

    pub fn is_whole_space(&self) -> bool {
        self.xi == f64::INFINITY
    }

    /// Signed offset `⟨u, x⟩ - α`.
    pub fn offset(&self, x: &[f64]) -> f64 {
        dot(&self.u, x) - self.alpha
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.offset(x).abs() <= self.xi
    }

    /// Amount by which `x` lies outside the stripe (0 inside).
    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.offset(x).abs() - self.xi).max(0.0)
    }

    /// Membership up to `rel * (|α| + ‖u‖‖x‖)`.
    pub fn contains_within(&self, x: &[f64], rel: f64) -> bool {
        self.violation(x) <= rel * (self.alpha.abs() + norm(&self.u) * norm(x))
    }

    /// Membership up to rounding in evaluating the offset.
    fn contains_up_to_rounding(&self, x: &[f64]) -> bool {
        self.offset(x).abs() <= self.xi + INSIDE_SLACK * (self.alpha.abs() + norm(&self.u) * norm(x))
    }

    /// The bounding hyperplane offsets `(α - ξ, α + ξ)`.
    fn bounds(&self) -> [f64; 2] {
        [self.alpha - self.xi, self.alpha + self.xi]
    }
}

/// Projection onto `{z : ⟨u, z⟩ = a}`.
pub fn project_hyperplane(x: &[f64], u: &[f64], a: f64) -> Result<Vec<f64>> {
    let uu = norm_sq(u);
    if uu == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let mut out = x.to_vec();
    axpy(-(dot(u, x) - a) / uu, u, &mut out);
    Ok(out)
}

pub fn project_stripe(x: &[f64], s: &Stripe) -> Result<Vec<f64>> {
    if norm_sq(&s.u) == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let d = s.offset(x);
    if s.contains_up_to_rounding(x) {
        Ok(x.to_vec())
    } else if d > s.xi {
        project_hyperplane(x, &s.u, s.alpha + s.xi)
    } else {
        project_hyperplane(x, &s.u, s.alpha - s.xi)
    }
}

/// Projection onto the intersection of two hyperplanes with linearly
/// independent normals.
pub fn project_two_hyperplanes(x: &[f64], u1: &[f64], a1: f64, u2: &[f64], a2: f64) -> Result<Vec<f64>> {
    let g11 = norm_sq(u1);
    let g22 = norm_sq(u2);
    if g11 == 0.0 || g22 == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let g12 = dot(u1, u2);
    let det = g11 * g22 - g12 * g12;
    let rel = det / (g11 * g22);
    if !(rel.abs() > DEGENERACY_THRESHOLD) {
        return Err(Error::DegenerateDirection(rel));
    }
    let r1 = a1 - dot(u1, x);
    let r2 = a2 - dot(u2, x);
    let s = (g22 * r1 - g12 * r2) / det;
    let t = (g11 * r2 - g12 * r1) / det;
    let mut out = x.to_vec();
    axpy(s, u1, &mut out);
    axpy(t, u2, &mut out);
    Ok(out)
}

/// Projection onto `current ∩ previous`.
///
/// First projects onto `current` alone and keeps the result if it already
/// lies in `previous`. Otherwise every remaining active set (the single
/// bounding planes of `previous`, and each pair of one bounding plane per
/// stripe) is tried and the nearest feasible candidate wins. If no candidate
/// verifies, Dykstra's alternating projections provide the answer.
pub fn project_stripe_intersection(x: &[f64], current: &Stripe, previous: &Stripe) -> Vec<f64> {
    let Ok(first) = project_stripe(x, current) else {
        return x.to_vec();
    };
    if previous.is_whole_space() || previous.contains_up_to_rounding(&first) {
        return first;
    }

    // A joint solution may miss its planes by the solve's rounding error; a
    // single-stripe projection has to satisfy the other stripe outright.
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |z: Vec<f64>, feasible: bool| {
        if z.iter().all(|v| v.is_finite()) && feasible {
            let d = distance(&z, x);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, z));
            }
        }
    };

    if let Ok(z) = project_stripe(x, previous) {
        let ok = current.contains_up_to_rounding(&z);
        consider(z, ok);
    }
    for a1 in current.bounds() {
        for a2 in previous.bounds() {
            if let Ok(z) = project_two_hyperplanes(x, &current.u, a1, &previous.u, a2) {
                let ok = current.contains_within(&z, VERIFY_TOLERANCE) && previous.contains_within(&z, VERIFY_TOLERANCE);
                consider(z, ok);
            }
        }
    }

    match best {
        Some((_, z)) => z,
        None => {
            log::debug!("stripe intersection: closed form failed, using alternating projections");
            dykstra(x, current, previous, FALLBACK_ROUNDS)
        }
    }
}

/// Dykstra's alternating projections onto two stripes.
fn dykstra(x: &[f64], a: &Stripe, b: &Stripe, rounds: usize) -> Vec<f64> {
    let n = x.len();
    let mut z = x.to_vec();
    let mut pa = vec![0.0; n];
    let mut pb = vec![0.0; n];
    for _ in 0..rounds {
        let ya: Vec<f64> = z.iter().zip(&pa).map(|(z, p)| z + p).collect();
        let Ok(za) = project_stripe(&ya, a) else { break };
        pa = ya.iter().zip(&za).map(|(y, z)| y - z).collect();
        let yb: Vec<f64> = za.iter().zip(&pb).map(|(z, p)| z + p).collect();
        let Ok(zb) = project_stripe(&yb, b) else { break };
        pb = yb.iter().zip(&zb).map(|(y, z)| y - z).collect();
        z = zb;
    }
    z
}
