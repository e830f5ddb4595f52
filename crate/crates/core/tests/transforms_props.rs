mod common;

use std::sync::Arc;

use common::*;
use matsq_core::filtration::AtomId;
use matsq_core::matrix::{spd_sqrt, Matrix};
use matsq_core::transforms::*;
use matsq_core::{Filtration, MatrixWeight, VectorFunction};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn inner(f: &VectorFunction, g: &VectorFunction) -> f64 {
    let fl = f.filtration();
    (0..fl.num_leaves())
        .map(|s| f.value(s).iter().zip(g.value(s)).map(|(a, b)| a * b).sum::<f64>() * fl.measure(fl.leaf(s)))
        .sum()
}

fn norm_sq(f: &VectorFunction) -> f64 {
    inner(f, f)
}

/// S^V f built from explicit martingale differences and matrix roots.
fn square_oracle(v: &MatrixWeight, f: &VectorFunction, i0: AtomId) -> Vec<f64> {
    let fl = f.filtration();
    let roots: Vec<_> = v.leaf_values().iter().map(|m| spd_sqrt(m).unwrap()).collect();
    let mut acc = vec![0.0; fl.num_leaves()];
    for i in fl.descendants(i0) {
        if fl.is_leaf(i) {
            continue;
        }
        let delta = mart_diff(f, i);
        for slot in fl.leaf_range(i) {
            let y = roots[slot].as_matrix().apply(delta.value(slot));
            acc[slot] += y.iter().map(|x| x * x).sum::<f64>();
        }
    }
    acc.into_iter().map(f64::sqrt).collect()
}

fn instance(seed: u64, d: usize) -> (MatrixWeight, VectorFunction) {
    let mut r = rng(seed);
    let f = random_tree(&mut r, d, 7);
    let v = match r.random_range(0..3) {
        0 => MatrixWeight::identity(f.clone()),
        1 if d == 2 => {
            let a = r.random_range(0.0..1.0);
            rotation_weight(&mut r, &f, a)
        }
        _ => {
            let c = 10f64.powf(r.random_range(0.0..6.0));
            random_weight(&mut r, &f, c)
        }
    };
    let g = random_function(&mut r, &f);
    (v, g)
}

fn inverse(a: &Matrix) -> Matrix {
    let d = a.dim();
    let m = DMatrix::from_fn(d, d, |i, j| a.get(i, j)).try_inverse().unwrap();
    Matrix::from_row_major(d, &m.transpose().as_slice().to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn square_function_matches_explicit_differences(seed in any::<u64>(), d in 1usize..=4) {
        let (v, g) = instance(seed, d);
        let fl = v.filtration().clone();
        let s = square_function(&v, &g, fl.root()).unwrap();
        for (slot, want) in square_oracle(&v, &g, fl.root()).into_iter().enumerate() {
            prop_assert!((s.value(slot) - want).abs() <= 1e-9 * want.max(1e-300));
        }
    }

    #[test]
    fn plain_and_modified_norms_agree(seed in any::<u64>(), d in 1usize..=4) {
        let (v, g) = instance(seed, d);
        let fl = v.filtration().clone();
        let atoms: Vec<AtomId> = fl.atoms().collect();
        let mut r = rng(seed ^ 3);
        for i0 in [fl.root(), atoms[r.random_range(0..atoms.len())]] {
            let s = square_function(&v, &g, i0).unwrap().l2_norm();
            let m = mod_square_function(&v, &g, i0).unwrap().l2_norm();
            prop_assert!((s - m).abs() <= 1e-9 * s, "{} vs {}", s, m);
        }
    }

    #[test]
    fn identity_weight_parseval(seed in any::<u64>(), d in 1usize..=4) {
        let (_, g) = instance(seed, d);
        let fl = g.filtration().clone();
        let id = MatrixWeight::identity(fl.clone());
        let s = square_function(&id, &g, fl.root()).unwrap().l2_norm();
        let e = expectation(&g, fl.root());
        let lhs = s * s + e.iter().map(|x| x * x).sum::<f64>() * fl.measure(fl.root());
        let rhs = g.l2_norm().powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs);
        // the modified function coincides with identity weight
        let m = mod_square_function(&id, &g, fl.root()).unwrap();
        let p = square_function(&id, &g, fl.root()).unwrap();
        for slot in 0..fl.num_leaves() {
            prop_assert!((m.value(slot) - p.value(slot)).abs() <= 1e-12 * p.value(slot).max(1e-300));
        }
    }

    #[test]
    fn congruence_leaves_square_functions_unchanged(seed in any::<u64>(), d in 1usize..=4) {
        let (v, g) = instance(seed, d);
        let fl = v.filtration().clone();
        let mut r = rng(seed ^ 9);
        let a = random_spd(&mut r, d, 10.0).as_matrix().mul(&gram_schmidt(&gaussian_matrix(&mut r, d)));
        let va = v.rescale(&a).unwrap();
        let ga = g.map_constant(&inverse(&a));
        for (x, y) in [
            (square_function(&v, &g, fl.root()).unwrap(), square_function(&va, &ga, fl.root()).unwrap()),
            (mod_square_function(&v, &g, fl.root()).unwrap(), mod_square_function(&va, &ga, fl.root()).unwrap()),
        ] {
            for slot in 0..fl.num_leaves() {
                let (p, q) = (x.value(slot), y.value(slot));
                prop_assert!((p - q).abs() <= 1e-9 * p.max(q).max(1e-300), "{} vs {}", p, q);
            }
        }
    }

    #[test]
    fn martingale_difference_structure(seed in any::<u64>(), d in 1usize..=3) {
        let (_, g) = instance(seed, d);
        let fl = g.filtration().clone();
        let inner_atoms: Vec<AtomId> = fl.atoms().filter(|&a| !fl.is_leaf(a)).collect();
        let diffs: Vec<VectorFunction> = inner_atoms.iter().map(|&i| mart_diff(&g, i)).collect();
        let total = norm_sq(&g);
        // telescoping: Σ Δ_I f + 𝐄_{I₀} f = f
        let e0 = expectation(&g, fl.root());
        for slot in 0..fl.num_leaves() {
            for k in 0..d {
                let sum: f64 = e0[k] + diffs.iter().map(|x| x.value(slot)[k]).sum::<f64>();
                prop_assert!((sum - g.value(slot)[k]).abs() <= 1e-10 * total.sqrt().max(1.0));
            }
        }
        for (n, &i) in inner_atoms.iter().enumerate() {
            // mean zero on I, constant on children, zero off I
            let mean = expectation(&diffs[n], i);
            prop_assert!(mean.iter().all(|x| x.abs() <= 1e-12 * total.sqrt().max(1.0)));
            for &c in fl.children(i) {
                let first = diffs[n].value(fl.leaf_range(c).start).to_vec();
                for slot in fl.leaf_range(c) {
                    prop_assert_eq!(diffs[n].value(slot), &first[..]);
                }
            }
            for slot in 0..fl.num_leaves() {
                if !fl.leaf_range(i).contains(&slot) {
                    prop_assert!(diffs[n].value(slot).iter().all(|&x| x == 0.0));
                }
            }
            if fl.children(i).len() == 1 {
                prop_assert!(diffs[n].values().iter().all(|&x| x == 0.0));
            }
        }
        // orthogonality of distinct differences
        for a in 0..inner_atoms.len() {
            for b in a + 1..inner_atoms.len().min(a + 40) {
                prop_assert!(inner(&diffs[a], &diffs[b]).abs() <= 1e-10 * total);
            }
        }
    }

    #[test]
    fn norms_and_localization(seed in any::<u64>(), d in 1usize..=4) {
        let (v, g) = instance(seed, d);
        let fl = v.filtration().clone();
        let roots: Vec<_> = v.leaf_values().iter().map(|m| spd_sqrt(m).unwrap()).collect();
        let rooted = VectorFunction::from_fn(fl.clone(), |s| roots[s].as_matrix().apply(g.value(s))).unwrap();
        let w = weighted_l2_norm(&v, &g).unwrap();
        prop_assert!((w - rooted.l2_norm()).abs() <= 1e-10 * w);
        let direct: f64 = (0..fl.num_leaves()).map(|s| g.value(s).iter().map(|x| x * x).sum::<f64>() * fl.measure(fl.leaf(s))).sum();
        prop_assert!((g.l2_norm().powi(2) - direct).abs() <= 1e-12 * direct);

        let atoms: Vec<AtomId> = fl.atoms().collect();
        let i0 = atoms[(seed as usize) % atoms.len()];
        let inside = localize(&g, i0);
        let outside = VectorFunction::new(fl.clone(), g.values().iter().zip(inside.values()).map(|(a, b)| a - b).collect()).unwrap();
        let parts = inside.l2_norm().powi(2) + outside.l2_norm().powi(2);
        prop_assert!((parts - g.l2_norm().powi(2)).abs() <= 1e-12 * parts);
        let e = expectation(&g, i0);
        let oracle: Vec<f64> = (0..d)
            .map(|k| fl.leaf_range(i0).map(|s| g.value(s)[k] * fl.measure(fl.leaf(s))).sum::<f64>() / fl.measure(i0))
            .collect();
        for k in 0..d {
            prop_assert!((e[k] - oracle[k]).abs() <= 1e-12 * g.l2_norm().max(1.0) / fl.measure(i0).sqrt());
        }
    }
}

#[test]
fn linearity_is_exact_on_dyadic_trees() {
    let fl = Arc::new(Filtration::build_dyadic(6, 1.0).unwrap().with_dimension(2).unwrap());
    let mut r = rng(5);
    let f = VectorFunction::from_fn(fl.clone(), |_| vec![r.random_range(-100..100) as f64, r.random_range(-100..100) as f64]).unwrap();
    let g = VectorFunction::from_fn(fl.clone(), |_| vec![r.random_range(-100..100) as f64, r.random_range(-100..100) as f64]).unwrap();
    let (a, b) = (3.0, -5.0);
    let combo = VectorFunction::new(fl.clone(), f.values().iter().zip(g.values()).map(|(x, y)| a * x + b * y).collect()).unwrap();
    for i in fl.atoms() {
        let lhs = mart_diff(&combo, i);
        let (df, dg) = (mart_diff(&f, i), mart_diff(&g, i));
        for (n, x) in lhs.values().iter().enumerate() {
            assert_eq!(*x, a * df.values()[n] + b * dg.values()[n]);
        }
    }
}

#[test]
fn indicator_norm() {
    let fl = Arc::new(Filtration::build_random(4, 5, 3, 0.3).unwrap().with_dimension(1).unwrap());
    let one = VectorFunction::constant(fl.clone(), &[1.0]).unwrap();
    assert!((one.l2_norm() - fl.measure(fl.root()).sqrt()).abs() < 1e-15);
    assert_eq!(VectorFunction::zeros(fl.clone()).l2_norm(), 0.0);
}
