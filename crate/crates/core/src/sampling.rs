//! Seeded random draws used by the residual suites and tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::hypersurface::Chart;
use crate::killing::{KillingField, RigidMotion};
use crate::linalg;

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn random_killing_field<R: Rng>(rng: &mut R, ambient: usize) -> KillingField {
    let a = DMatrix::from_fn(ambient, ambient, |_, _| rng.random_range(-1.0..1.0));
    let s = &a - a.transpose();
    KillingField::new(s, random_vector(rng, ambient, 1.0)).expect("skew by construction")
}

/// Proper rotation from the QR factor of a random matrix.
pub fn random_rotation<R: Rng>(rng: &mut R, dim: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let mut q = a.qr().q();
    if q.determinant() < 0.0 {
        let c = -q.column(0);
        q.set_column(0, &c);
    }
    // Re-orthonormalize to machine precision.
    let (u, _, v) = linalg::thin_svd(&q);
    u * v.transpose()
}

pub fn random_rigid_motion<R: Rng>(rng: &mut R, dim: usize) -> RigidMotion {
    RigidMotion::new_unchecked(random_rotation(rng, dim), random_vector(rng, dim, 2.0))
}

/// Uniform point in the chart box shrunk by `margin_fraction` of each side.
pub fn random_chart_point<R: Rng>(rng: &mut R, chart: &Chart, margin_fraction: f64) -> Vec<f64> {
    chart
        .lower()
        .iter()
        .zip(chart.upper())
        .map(|(&lo, &hi)| {
            let pad = margin_fraction * (hi - lo);
            rng.random_range((lo + pad)..(hi - pad))
        })
        .collect()
}
