//! Parallel (global rayon pool) against single-thread execution of the
//! data-parallel kernels. Build with `--no-default-features` for the plain
//! sequential code path.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use matsq_core::kernel::embedding_norm;
use matsq_core::matrix::{Matrix, SymMatrix};
use matsq_core::par;
use matsq_core::sparse::{build_sparse_family, construct_family};
use matsq_core::transforms::{mod_square_function, square_function};
use matsq_core::weights::a_infty_matrix;
use matsq_core::{Filtration, MatrixWeight, VectorFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn setup(depth: u32, d: usize) -> (MatrixWeight, VectorFunction) {
    let f = Arc::new(
        Filtration::build_random(17, depth, 3, 0.4)
            .unwrap()
            .with_dimension(d)
            .unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let leaves = (0..f.num_leaves())
        .map(|_| {
            let g: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = Matrix::from_row_major(d, &g).unwrap();
            let m = g.mul(&g.transpose()).add(&Matrix::identity(d).scale(0.1));
            SymMatrix::new(m).unwrap()
        })
        .collect();
    let v = MatrixWeight::new(f.clone(), leaves).unwrap();
    let g = VectorFunction::from_fn(f.clone(), |_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    (v, g)
}

fn both<F: Fn() + Sync + Send>(c: &mut Criterion, group: &str, label: &str, f: F) {
    let mut g = c.benchmark_group(group);
    g.sample_size(10);
    g.bench_function(BenchmarkId::new("parallel", label), |b| b.iter(&f));
    g.bench_function(BenchmarkId::new("sequential", label), |b| b.iter(|| par::sequential(&f)));
    g.finish();
}

fn benches(c: &mut Criterion) {
    let (v, g) = setup(8, 3);
    let root = v.filtration().root();
    let label = format!("leaves={}", v.filtration().num_leaves());
    both(c, "a_infty_matrix", &label, || {
        a_infty_matrix(&v, 64, 1).unwrap();
    });
    both(c, "square_functions", &label, || {
        square_function(&v, &g, root).unwrap();
        mod_square_function(&v, &g, root).unwrap();
    });
    both(c, "sparse_construction", &label, || {
        build_sparse_family(&v, &g, root, 1.0).unwrap();
    });
    let fam = construct_family(&v, &g, root, 1.0).unwrap();
    both(c, "embedding_norm", &format!("members={}", fam.len()), || {
        embedding_norm(&v, &fam, 2, 3).unwrap();
    });
}

criterion_group!(kernels, benches);
criterion_main!(kernels);
