//! Property tests for the geometric and algebraic invariants.

use nalgebra::{DMatrix, Matrix3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aniso::{
    single_term_minimizers, single_term_value, weight_from_hessian, EdgeMeasurement,
};
use crate::eval::{chordal_error, rms_angular_error};
use crate::sdp::{smat, svec};
use crate::so3::{closest_rotation, exp_map, in_hull, log_map, AxisAngle, Rotation, HULL_TOL};

fn rot(seed: u64) -> Rotation {
    Rotation::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn psd(seed: u64, eig: [f64; 3]) -> Matrix3<f64> {
    let q = *rot(seed).matrix();
    let h = q * Matrix3::from_diagonal(&Vector3::from(eig)) * q.transpose();
    (h + h.transpose()) * 0.5
}

fn is_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    (m.transpose() * m - Matrix3::identity()).abs().max() < tol
        && (m.determinant() - 1.0).abs() < tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn exp_log_roundtrip(x in -1.7f64..1.7, y in -1.7f64..1.7, z in -1.7f64..1.7) {
        let v = AxisAngle::new(x, y, z);
        prop_assume!(v.angle() < 3.1);
        let back = log_map(&exp_map(&v));
        prop_assert!((back.0 - v.0).norm() < 1e-9);
    }

    #[test]
    fn projection_lands_on_so3(entries in proptest::array::uniform9(-5.0f64..5.0)) {
        let m = Matrix3::from_row_slice(&entries);
        prop_assume!(m.svd(false, false).singular_values.min() > 1e-3);
        prop_assert!(is_rotation(closest_rotation(&m).matrix(), 1e-9));
    }

    #[test]
    fn weight_spectrum_is_ordered(seed: u64, h in proptest::array::uniform3(0.0f64..50.0)) {
        let [l1, l2, l3] = weight_from_hessian(&psd(seed, h)).unwrap().eigenvalues();
        prop_assert!(l1 >= l2 - 1e-9);
        prop_assert!(l2 >= l3.abs() - 1e-9);
    }

    #[test]
    fn so3_single_term_minimum_is_the_measurement(seed: u64, h in proptest::array::uniform3(0.01f64..50.0)) {
        let m = weight_from_hessian(&psd(seed, h)).unwrap();
        let rt = rot(seed ^ 0x5eed);
        let minima = single_term_minimizers(&m, &rt);
        prop_assert!(minima.so3_min.1.abs() < 1e-9);
        let l3 = m.eigenvalues()[2];
        prop_assert!((minima.o3_min.1 - 2.0 * l3.min(0.0)).abs() < 1e-9);
        // no random rotation does better than the measurement itself
        let other = rot(seed.wrapping_add(1));
        prop_assert!(single_term_value(m.matrix(), rt.matrix(), other.matrix()) >= -1e-9);
    }

    #[test]
    fn reversed_edge_has_same_term(seed: u64, h in proptest::array::uniform3(0.01f64..50.0)) {
        let rt = rot(seed);
        let e = EdgeMeasurement::new(0, 1, rt, psd(seed ^ 1, h)).unwrap();
        let r = e.reversed();
        let (ri, rj) = (rot(seed ^ 2), rot(seed ^ 3));
        let term = |e: &EdgeMeasurement, a: &Rotation, b: &Rotation| {
            let m = e.weight().unwrap();
            -(m.matrix() * e.r_tilde.matrix()).dot(&(a.matrix() * b.matrix().transpose()))
        };
        prop_assert!((term(&e, &ri, &rj) - term(&r, &rj, &ri)).abs() < 1e-9);
    }

    #[test]
    fn hull_is_convex(s1: u64, s2: u64, t in 0.0f64..1.0) {
        let y = rot(s1).matrix() * t + rot(s2).matrix() * (1.0 - t);
        prop_assert!(in_hull(&y, HULL_TOL));
        prop_assert!(!in_hull(&(-y), HULL_TOL) || y.norm() < 1e-6);
    }

    #[test]
    fn svec_smat_roundtrip(d in 1usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(d, d, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
        let s = &a + a.transpose();
        let v = svec(&s);
        prop_assert_eq!(v.len(), d * (d + 1) / 2);
        prop_assert!((smat(&v, d) - &s).abs().max() < 1e-12);
        // svec is an isometry for the trace inner product
        let ip: f64 = v.iter().map(|x| x * x).sum();
        prop_assert!((ip - s.norm_squared()).abs() < 1e-9);
    }

    #[test]
    fn errors_are_gauge_invariant(seed: u64, n in 2usize..6) {
        let gt: Vec<Rotation> = (0..n as u64).map(|k| rot(seed.wrapping_add(k))).collect();
        let est: Vec<Rotation> = (0..n as u64).map(|k| rot(seed.wrapping_add(100 + k))).collect();
        let g = rot(seed ^ 0xabc);
        let moved: Vec<Rotation> = est.iter().map(|r| r.compose(&g)).collect();
        prop_assert!((chordal_error(&gt, &est).unwrap() - chordal_error(&gt, &moved).unwrap()).abs() < 1e-8);
        prop_assert!((rms_angular_error(&gt, &est).unwrap() - rms_angular_error(&gt, &moved).unwrap()).abs() < 1e-6);
        let shifted: Vec<Rotation> = gt.iter().map(|r| r.compose(&g)).collect();
        prop_assert!(chordal_error(&gt, &shifted).unwrap() < 1e-9);
    }
}
