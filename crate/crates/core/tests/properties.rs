use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use surface_algebroid::bonnet::align_rigid;
use surface_algebroid::killing::{
    adjoint_pushforward, killing_bracket, killing_eval, KillingField, RigidMotion,
};
use surface_algebroid::linalg;
use surface_algebroid::sampling;

fn matrix(rows: usize, cols: usize, entries: Vec<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(rows, cols, entries)
}

prop_compose! {
    fn any_matrix()(rows in 1usize..8, cols in 1usize..8)
        (entries in prop::collection::vec(-10.0f64..10.0, rows * cols), rows in Just(rows), cols in Just(cols))
        -> DMatrix<f64> {
        matrix(rows, cols, entries)
    }
}

prop_compose! {
    /// Product of two random factors, so the rank is at most `inner`.
    fn low_rank()(rows in 2usize..7, cols in 2usize..7, inner in 1usize..3)
        (a in prop::collection::vec(-3.0f64..3.0, rows * inner),
         b in prop::collection::vec(-3.0f64..3.0, inner * cols),
         rows in Just(rows), cols in Just(cols), inner in Just(inner)) -> DMatrix<f64> {
        matrix(rows, inner, a) * matrix(inner, cols, b)
    }
}

fn field(ambient: usize, seed: u64) -> KillingField {
    sampling::random_killing_field(&mut ChaCha8Rng::seed_from_u64(seed), ambient)
}

fn motion(ambient: usize, seed: u64) -> RigidMotion {
    sampling::random_rigid_motion(&mut ChaCha8Rng::seed_from_u64(seed), ambient)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn thin_svd_reconstructs_with_orthonormal_factors(a in any_matrix()) {
        let (u, s, v) = linalg::thin_svd(&a);
        let k = a.nrows().min(a.ncols());
        prop_assert_eq!(s.len(), k);
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.iter().all(|&x| x >= 0.0));
        let back = &u * DMatrix::from_diagonal(&DVector::from_vec(s.clone())) * v.transpose();
        let scale = a.amax().max(1.0);
        prop_assert!((back - &a).amax() < 1e-12 * scale * 10.0);
        prop_assert!((u.transpose() * &u - DMatrix::identity(k, k)).amax() < 1e-12);
        prop_assert!((v.transpose() * &v - DMatrix::identity(k, k)).amax() < 1e-12);
    }

    #[test]
    fn rank_and_null_space_of_products(a in low_rank()) {
        let rank = linalg::numerical_rank(&a, 1e-10);
        let null = linalg::null_space(&a, 1e-10);
        prop_assert_eq!(rank + null.ncols(), a.ncols());
        prop_assert!((&a * &null).amax() < 1e-10 * a.amax().max(1.0));
    }

    #[test]
    fn least_squares_matches_normal_equations(a in any_matrix(), seed in any::<u64>()) {
        prop_assume!(a.nrows() >= a.ncols());
        prop_assume!(linalg::numerical_rank(&a, 1e-8) == a.ncols());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = sampling::random_vector(&mut rng, a.nrows(), 1.0);
        let (x, residual) = linalg::least_squares(&a, &b);
        let normal = (a.transpose() * &a).lu().solve(&(a.transpose() * &b)).unwrap();
        prop_assert!((&x - normal).amax() < 1e-6 * x.amax().max(1.0));
        prop_assert!((residual - (&a * &x - &b).norm()).abs() < 1e-9);
    }

    #[test]
    fn bracket_is_antisymmetric_and_satisfies_jacobi(d in 2usize..5, s in any::<u64>()) {
        let (x, y, z) = (field(d, s), field(d, s ^ 1), field(d, s ^ 2));
        let xy = killing_bracket(&x, &y).unwrap();
        let yx = killing_bracket(&y, &x).unwrap();
        prop_assert!(xy.add(&yx).max_abs() < 1e-12);
        let jac = killing_bracket(&xy, &z).unwrap()
            .add(&killing_bracket(&killing_bracket(&y, &z).unwrap(), &x).unwrap())
            .add(&killing_bracket(&killing_bracket(&z, &x).unwrap(), &y).unwrap());
        prop_assert!(jac.max_abs() < 1e-10);
    }

    #[test]
    fn adjoint_is_a_bracket_automorphism(d in 2usize..5, s in any::<u64>()) {
        let phi = motion(d, s);
        let (x, y) = (field(d, s ^ 3), field(d, s ^ 4));
        let lhs = adjoint_pushforward(&phi, &killing_bracket(&x, &y).unwrap()).unwrap();
        let rhs = killing_bracket(
            &adjoint_pushforward(&phi, &x).unwrap(),
            &adjoint_pushforward(&phi, &y).unwrap(),
        ).unwrap();
        prop_assert!(lhs.sub(&rhs).max_abs() < 1e-10);
    }

    #[test]
    fn pushforward_transports_values(d in 2usize..5, s in any::<u64>()) {
        let phi = motion(d, s);
        let x = field(d, s ^ 5);
        let p = sampling::random_vector(&mut ChaCha8Rng::seed_from_u64(s ^ 6), d, 2.0);
        let moved = adjoint_pushforward(&phi, &x).unwrap();
        let lhs = killing_eval(&moved, &phi.apply(&p)).unwrap();
        let rhs = phi.rotation() * killing_eval(&x, &p).unwrap();
        prop_assert!((lhs - rhs).amax() < 1e-10);
    }

    #[test]
    fn coefficients_round_trip(d in 1usize..6, s in any::<u64>()) {
        let x = field(d, s);
        let back = KillingField::from_coefficients(&x.coefficients()).unwrap();
        prop_assert!(x.sub(&back).max_abs() == 0.0);
    }

    #[test]
    fn alignment_recovers_a_motion(d in 2usize..5, count in 4usize..30, s in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let phi = sampling::random_rigid_motion(&mut rng, d);
        let cloud: Vec<DVector<f64>> = (0..count).map(|_| sampling::random_vector(&mut rng, d, 3.0)).collect();
        prop_assume!(linalg::numerical_rank(&centred(&cloud), 1e-6) == d);
        let moved: Vec<DVector<f64>> = cloud.iter().map(|p| phi.apply(p)).collect();
        let fit = align_rigid(&cloud, &moved).unwrap();
        prop_assert!(fit.rms < 1e-10);
        prop_assert!((fit.motion.rotation() - phi.rotation()).amax() < 1e-9);
        prop_assert!((fit.motion.rotation().determinant() - 1.0).abs() < 1e-12);
    }
}

fn centred(cloud: &[DVector<f64>]) -> DMatrix<f64> {
    let d = cloud[0].len();
    let mean = cloud.iter().fold(DVector::zeros(d), |acc, p| acc + p) / cloud.len() as f64;
    DMatrix::from_fn(d, cloud.len(), |i, j| cloud[j][i] - mean[i])
}
