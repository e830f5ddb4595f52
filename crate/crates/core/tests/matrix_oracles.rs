mod common;

use common::*;
use matsq_core::matrix::*;
use matsq_core::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.dim(), m.dim(), |i, j| m.get(i, j))
}

fn spectral_gap_from_identity(m: &Matrix) -> f64 {
    op_norm(&m.sub(&Matrix::identity(m.dim())))
}

fn power_op_norm(a: &Matrix) -> f64 {
    let g = to_na(a).transpose() * to_na(a);
    let mut x = nalgebra::DVector::from_element(a.dim(), 1.0);
    x[0] += 0.37;
    let mut lam = 0.0;
    for _ in 0..100_000 {
        let y = &g * &x;
        let next = x.dot(&y) / x.dot(&x);
        x = y.normalize();
        if (next - lam).abs() <= 1e-16 * next {
            break;
        }
        lam = next;
    }
    lam.sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn eigenvalues_match_nalgebra(seed in any::<u64>(), d in 1usize..=8) {
        let mut r = rng(seed);
        let a = random_spd(&mut r, d, 1e6);
        let mut ours = a.eig().values.clone();
        let mut theirs: Vec<f64> = to_na(a.as_matrix()).symmetric_eigenvalues().iter().copied().collect();
        ours.sort_by(f64::total_cmp);
        theirs.sort_by(f64::total_cmp);
        let scale = theirs.last().unwrap().abs();
        for (x, y) in ours.iter().zip(&theirs) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn roots_reconstruct(seed in any::<u64>(), d in 1usize..=8) {
        let mut r = rng(seed);
        let a = random_spd(&mut r, d, 1e4);
        let s = spd_sqrt(&a).unwrap();
        let norm_a = op_norm(a.as_matrix());
        prop_assert!(op_norm(&s.as_matrix().mul(s.as_matrix()).sub(a.as_matrix())) <= 1e-9 * norm_a);
        let p = spd_inv_sqrt(&a, DEFAULT_COND_CAP).unwrap();
        prop_assert!(spectral_gap_from_identity(&p.as_matrix().mul(a.as_matrix()).mul(p.as_matrix())) <= 1e-8);
        prop_assert!(spectral_gap_from_identity(&p.as_matrix().mul(s.as_matrix())) <= 1e-8);
        // ‖A^{1/2}‖² = ‖A‖
        prop_assert!((op_norm(s.as_matrix()).powi(2) - norm_a).abs() <= 1e-9 * norm_a);
        // PSD result
        prop_assert!(s.eig().min() > 0.0);
    }

    #[test]
    fn op_norm_matches_power_iteration(seed in any::<u64>(), d in 1usize..=8) {
        let mut r = rng(seed);
        let a = gaussian_matrix(&mut r, d);
        let b = gaussian_matrix(&mut r, d);
        let n = op_norm(&a);
        prop_assert!((n - power_op_norm(&a)).abs() <= 1e-9 * n);
        prop_assert!(op_norm(&a.mul(&b)) <= n * op_norm(&b) + 1e-9);
    }

    #[test]
    fn trace_identities(seed in any::<u64>(), d in 1usize..=8) {
        let mut r = rng(seed);
        let a = random_spd(&mut r, d, 1e3);
        let b = random_spd(&mut r, d, 1e3);
        let sum: f64 = a.eig().values.iter().sum();
        prop_assert!((trace(a.as_matrix()) - sum).abs() <= 1e-10 * sum);
        // tr(P A P) with P = B^{-1/2} against an explicit triple loop
        let p = spd_inv_sqrt(&b, DEFAULT_COND_CAP).unwrap();
        let mut direct = 0.0;
        for i in 0..d {
            for k in 0..d {
                for l in 0..d {
                    direct += p.get(i, k) * a.get(k, l) * p.get(l, i);
                }
            }
        }
        let got = a.congruence(p.as_matrix()).trace();
        prop_assert!((got - direct).abs() <= 1e-9 * direct.abs());
    }
}

#[test]
fn hand_values() {
    let d = SymMatrix::from_diag(&[4.0, 9.0]);
    let s = spd_sqrt(&d).unwrap();
    assert_eq!((s.get(0, 0), s.get(1, 1), s.get(0, 1)), (2.0, 3.0, 0.0));
    let p = spd_inv_sqrt(&d, DEFAULT_COND_CAP).unwrap();
    assert!((p.get(0, 0) - 0.5).abs() < 1e-15 && (p.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(op_norm(&Matrix::from_diag(&[2.0, -3.0])), 3.0);
    assert_eq!(trace(&Matrix::from_diag(&[1.0, 2.0, 3.0])), 6.0);
    assert_eq!(trace(&Matrix::identity(5)), 5.0);
    assert_eq!(op_norm(&Matrix::identity(4)), 1.0);
}

#[test]
fn rejections() {
    let m = Matrix::from_row_major(2, &[1.0, 0.5, 0.4, 1.0]).unwrap();
    assert!(matches!(SymMatrix::new(m), Err(Error::NonSymmetric { .. })));
    let indefinite = SymMatrix::from_diag(&[1.0, -0.5]);
    assert!(matches!(spd_sqrt(&indefinite), Err(Error::IndefiniteBeyondTolerance { .. })));
    let singular = SymMatrix::from_diag(&[1.0, 0.0]);
    assert!(matches!(
        spd_inv_sqrt(&singular, DEFAULT_COND_CAP),
        Err(Error::SingularOrIllConditioned { .. })
    ));
    let ill = SymMatrix::from_diag(&[1.0, 1e-11]);
    match spd_inv_sqrt(&ill, DEFAULT_COND_CAP) {
        Err(Error::SingularOrIllConditioned { condition }) => assert!((condition - 1e11).abs() < 1e-3 * 1e11),
        other => panic!("{other:?}"),
    }
    // tiny negative eigenvalue inside the floor is clamped
    let near = SymMatrix::from_diag(&[1.0, -1e-14]);
    assert_eq!(spd_sqrt(&near).unwrap().get(1, 1), 0.0);
}
