use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::killing::RigidMotion;
use crate::linalg;

/// Proper rigid motion best mapping one cloud onto another.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub motion: RigidMotion,
    /// Root-mean-square distance after applying `motion`.
    pub rms: f64,
}

#[derive(Serialize)]
struct AlignmentJson<'a> {
    rotation: Vec<f64>,
    translation: &'a [f64],
    rms: f64,
}

impl Serialize for Alignment {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let r = self.motion.rotation();
        AlignmentJson {
            rotation: super::fields::row_major(r),
            translation: self.motion.translation_part().as_slice(),
            rms: self.rms,
        }
        .serialize(s)
    }
}

/// Kabsch: the proper motion `φ` minimizing `Σ |φ(a_i) − b_i|²`, from the SVD
/// of the cross-covariance with the determinant sign corrected.
pub fn align_rigid(a: &[DVector<f64>], b: &[DVector<f64>]) -> Result<Alignment> {
    if a.len() != b.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let d = match a.first() {
        Some(p) => p.len(),
        None => return Err(GeometryError::DegenerateCloud { rank: 0 }),
    };
    if a.iter().chain(b).any(|p| p.len() != d) {
        return Err(GeometryError::InvalidParameter("points of mixed dimension".into()));
    }
    if a.len() < d {
        return Err(GeometryError::DegenerateCloud { rank: a.len().saturating_sub(1) });
    }
    let count = a.len() as f64;
    let ca = a.iter().fold(DVector::zeros(d), |acc, p| acc + p) / count;
    let cb = b.iter().fold(DVector::zeros(d), |acc, p| acc + p) / count;
    let mut h = DMatrix::zeros(d, d);
    for (p, q) in a.iter().zip(b) {
        h += (p - &ca) * (q - &cb).transpose();
    }
    let rank = linalg::numerical_rank(&h, 1e-12);
    if rank + 1 < d {
        return Err(GeometryError::DegenerateCloud { rank });
    }
    let (u, _, v) = linalg::thin_svd(&h);
    let mut correction = DMatrix::identity(d, d);
    if (&v * u.transpose()).determinant() < 0.0 {
        correction[(d - 1, d - 1)] = -1.0;
    }
    let r = v * correction * u.transpose();
    let t = &cb - &r * &ca;
    let motion = RigidMotion::new_unchecked(r, t);
    let rms = (a
        .iter()
        .zip(b)
        .map(|(p, q)| (motion.apply(p) - q).norm_squared())
        .sum::<f64>()
        / count)
        .sqrt();
    Ok(Alignment { motion, rms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud() -> Vec<DVector<f64>> {
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0], [0.5, 0.7, -0.2]]
            .iter()
            .map(|p| DVector::from_column_slice(p))
            .collect()
    }

    #[test]
    fn recovers_motion() {
        let a = cloud();
        let same = align_rigid(&a, &a).unwrap();
        assert!(same.rms < 1e-14);
        assert!((same.motion.rotation() - DMatrix::identity(3, 3)).amax() < 1e-14);
        let phi = sampling::random_rigid_motion(&mut ChaCha8Rng::seed_from_u64(3), 3);
        let b: Vec<_> = a.iter().map(|p| phi.apply(p)).collect();
        let fit = align_rigid(&a, &b).unwrap();
        assert!(fit.rms < 1e-10);
        assert!((fit.motion.rotation() - phi.rotation()).amax() < 1e-10);
        assert!((fit.motion.translation_part() - phi.translation_part()).amax() < 1e-10);
    }

    #[test]
    fn reflection_is_not_matched() {
        let a: Vec<_> = cloud().into_iter().take(4).collect();
        let b: Vec<_> = a.iter().map(|p| DVector::from_vec(vec![p[0], p[1], -p[2]])).collect();
        let fit = align_rigid(&a, &b).unwrap();
        assert!(fit.rms > 0.1, "{}", fit.rms);
        assert!((fit.motion.rotation().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cloud() {
        let a: Vec<_> = (0..5).map(|i| DVector::from_vec(vec![i as f64, 0.0, 0.0])).collect();
        assert!(matches!(align_rigid(&a, &a), Err(GeometryError::DegenerateCloud { .. })));
    }
}
