#![allow(dead_code)]

use std::sync::Arc;

use matsq_core::{Filtration, Matrix, MatrixWeight, SymMatrix, VectorFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tree(rng: &mut ChaCha8Rng, d: usize, max_depth: u32) -> Arc<Filtration> {
    let depth = rng.random_range(max_depth.div_ceil(2)..=max_depth);
    let kids = rng.random_range(2..=4);
    let skew = rng.random_range(0.1..0.9);
    Arc::new(
        Filtration::build_random(rng.random(), depth, kids, skew)
            .unwrap()
            .with_dimension(d)
            .unwrap(),
    )
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let v: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut *rng)).collect();
    Matrix::from_row_major(d, &v).unwrap()
}

/// Q diag(λ) Qᵀ with log-uniform spectrum in [1, cond].
pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, cond: f64) -> SymMatrix {
    let g = gaussian_matrix(rng, d);
    let q = gram_schmidt(&g);
    let lam: Vec<f64> = (0..d).map(|_| cond.powf(rng.random::<f64>())).collect();
    let m = q.mul(&Matrix::from_diag(&lam)).mul(&q.transpose());
    SymMatrix::new(m.add(&m.transpose()).scale(0.5)).unwrap()
}

pub fn gram_schmidt(g: &Matrix) -> Matrix {
    let d = g.dim();
    let mut q = Matrix::zeros(d);
    for j in 0..d {
        let mut v: Vec<f64> = (0..d).map(|i| g.get(i, j)).collect();
        for k in 0..j {
            let dot: f64 = (0..d).map(|i| v[i] * q.get(i, k)).sum();
            for i in 0..d {
                v[i] -= dot * q.get(i, k);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..d {
            q.set(i, j, v[i] / n);
        }
    }
    q
}

pub fn random_weight(rng: &mut ChaCha8Rng, f: &Arc<Filtration>, cond: f64) -> MatrixWeight {
    let d = f.dimension();
    let leaves = (0..f.num_leaves()).map(|_| random_spd(rng, d, cond)).collect();
    MatrixWeight::new(f.clone(), leaves).unwrap()
}

/// R(θ) diag(m^a, m^{-a}) R(θ)ᵀ with m from the leaf position.
pub fn rotation_weight(rng: &mut ChaCha8Rng, f: &Arc<Filtration>, a: f64) -> MatrixWeight {
    let mut left = 0.0;
    let leaves = f
        .leaves()
        .iter()
        .map(|&l| {
            let mu = f.measure(l);
            let m = (left + 0.5 * mu) / f.measure(f.root()) + 0.01;
            left += mu;
            let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let (c, s) = (th.cos(), th.sin());
            let r = Matrix::from_row_major(2, &[c, -s, s, c]).unwrap();
            let m = r.mul(&Matrix::from_diag(&[m.powf(a), m.powf(-a)])).mul(&r.transpose());
            SymMatrix::new(m.add(&m.transpose()).scale(0.5)).unwrap()
        })
        .collect();
    MatrixWeight::new(f.clone(), leaves).unwrap()
}

pub fn random_function(rng: &mut ChaCha8Rng, f: &Arc<Filtration>) -> VectorFunction {
    let d = f.dimension();
    let spiky = rng.random_bool(0.3);
    VectorFunction::from_fn(f.clone(), |_| {
        let scale = if spiky && rng.random_bool(0.1) { 50.0 } else { 1.0 };
        (0..d).map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut *rng)).collect()
    })
    .unwrap()
}
