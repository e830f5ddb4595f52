use std::sync::Arc;

use matsq_core::{Filtration, MatrixWeight, ScalarWeight, SymMatrix, VectorFunction};
use matsq_lab::config::{FiltrationSpec, FunctionSpec, WeightSpec};
use matsq_lab::experiments::{corollary_trial, theorem_trial};
use matsq_lab::generate::{gen_filtration, gen_function, gen_weight};
use proptest::prelude::*;

fn tree(d: usize, seed: u64) -> Arc<Filtration> {
    gen_filtration(
        &FiltrationSpec::Random {
            depth: 4,
            max_children: 3,
            measure_skew: 0.4,
        },
        d,
        seed,
    )
    .unwrap()
}

#[test]
fn identity_weights_haar_function_ratio_is_one() {
    // With U = V = Id, S f = |f| for a step that is constant on the root's
    // children and has mean zero; both characteristics equal 1.
    for seed in 0..6 {
        let f = tree(1 + seed as usize % 3, seed);
        if f.children(f.root()).len() < 2 {
            continue;
        }
        let id = MatrixWeight::identity(f.clone());
        let g = gen_function(&FunctionSpec::Haar, &f, 0).unwrap();
        let r = theorem_trial(&id, &id, &g, 4.0, 2 * f.dimension(), seed).unwrap();
        assert!((r.a2 - 1.0).abs() < 1e-12 && (r.ainf - 1.0).abs() < 1e-12);
        assert!((r.ratio - 1.0).abs() < 1e-12, "{}", r.ratio);
        assert!(r.checks.iter().all(|c| c.ok));
    }
}

#[test]
fn one_dimensional_corollary_by_hand() {
    // w = (1, 3) on two halves, f = (1, -1):
    // ||S^w f||² = ||f||²_{L²(w)} = 2, [w]_{A₂} = 2·(2/3) = 4/3,
    // [w⁻¹]_{A∞} = ((1 + 2/3)/2) / (2/3) = 5/4, ratio = (3/5)^{1/2}.
    let f = Arc::new(Filtration::build_dyadic(1, 1.0).unwrap());
    let w = MatrixWeight::scalar_lift(&ScalarWeight::new(f.clone(), vec![1.0, 3.0]).unwrap()).unwrap();
    let g = VectorFunction::new(f.clone(), vec![1.0, -1.0]).unwrap();
    let r = corollary_trial(&w, &g, 2, 0).unwrap();
    assert!((r.s_norm - 2f64.sqrt()).abs() < 1e-14);
    assert!((r.f_norm_w - 2f64.sqrt()).abs() < 1e-14);
    assert!((r.a2 - 4.0 / 3.0).abs() < 1e-14);
    assert!((r.ainf_inverse - 1.25).abs() < 1e-14);
    assert!((r.ratio - 0.6f64.sqrt()).abs() < 1e-14);
    assert!(r.substitution_gap <= 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn theorem_ratio_is_scale_invariant(
        seed in 0u64..1000,
        cu in -3.0f64..3.0,
        cv in -3.0f64..3.0,
        cf in -3.0f64..3.0,
    ) {
        let f = tree(2, seed);
        let u = gen_weight(&WeightSpec::RandomSpd { cond_max: 100.0 }, &f, seed + 1).unwrap();
        let v = gen_weight(&WeightSpec::RotationPower { a: 0.5 }, &f, seed + 2).unwrap();
        let g = gen_function(&FunctionSpec::Gaussian { scale: 1.0 }, &f, seed + 3).unwrap();
        let base = theorem_trial(&u, &v, &g, 4.0, 8, seed).unwrap();
        let scale = |w: &MatrixWeight, c: f64| {
            let vals: Vec<SymMatrix> = w.leaf_values().iter().map(|m| m.scale(10f64.powf(c))).collect();
            MatrixWeight::new(f.clone(), vals).unwrap()
        };
        let scaled = theorem_trial(&scale(&u, cu), &scale(&v, cv), &g.scale(10f64.powf(cf)), 4.0, 8, seed).unwrap();
        prop_assert!((base.ratio - scaled.ratio).abs() <= 1e-8 * base.ratio, "{} vs {}", base.ratio, scaled.ratio);
        prop_assert!(scaled.checks.iter().all(|c| c.ok));
    }
}
