//! Seeded generators for filtrations, weights and test functions.

use std::path::Path;
use std::sync::Arc;

use matsq_core::{Filtration, Matrix, MatrixWeight, SymMatrix, VectorFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::{ConfigError, FiltrationSpec, FunctionSpec, WeightSpec};

/// Lower clamp for the position parameter of `rotation_power`, keeping
/// leaf condition numbers at most 1e8.
pub const POSITION_FLOOR: f64 = 1e-4;

/// Independent seed for stream `tag` of trial `trial`.
pub fn sub_seed(base: u64, trial: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(trial.wrapping_mul(16).wrapping_add(tag));
    rng.random()
}

fn config_err(e: impl std::fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn load_filtration(path: &Path) -> anyhow::Result<Filtration> {
    Filtration::from_json(&read(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn load_weight(f: &Arc<Filtration>, path: &Path) -> anyhow::Result<MatrixWeight> {
    MatrixWeight::from_json(f.clone(), &read(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn load_function(f: &Arc<Filtration>, path: &Path) -> anyhow::Result<VectorFunction> {
    VectorFunction::from_json(f.clone(), &read(path)?).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn gen_filtration(spec: &FiltrationSpec, d: usize, seed: u64) -> anyhow::Result<Arc<Filtration>> {
    let f = match spec {
        FiltrationSpec::Random {
            depth,
            max_children,
            measure_skew,
        } => Filtration::build_random(seed, *depth, *max_children, *measure_skew).map_err(config_err)?,
        FiltrationSpec::Dyadic { depth } => Filtration::build_dyadic(*depth, 1.0).map_err(config_err)?,
        FiltrationSpec::File { path } => load_filtration(path)?,
    };
    Ok(Arc::new(f.with_dimension(d).map_err(config_err)?))
}

/// Haar-distributed orthogonal matrix via Gram–Schmidt on a Gaussian matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    loop {
        let g: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let mut q = Matrix::zeros(d);
        let mut ok = true;
        for j in 0..d {
            let mut v: Vec<f64> = (0..d).map(|i| g[i * d + j]).collect();
            for k in 0..j {
                let dot: f64 = (0..d).map(|i| v[i] * q.get(i, k)).sum();
                for (i, x) in v.iter_mut().enumerate() {
                    *x -= dot * q.get(i, k);
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n < 1e-8 {
                ok = false;
                break;
            }
            for (i, x) in v.iter().enumerate() {
                q.set(i, j, x / n);
            }
        }
        if ok {
            return q;
        }
    }
}

fn conjugated(q: &Matrix, diag: &[f64]) -> SymMatrix {
    let m = q.mul(&Matrix::from_diag(diag)).mul(&q.transpose());
    SymMatrix::new(m.add(&m.transpose()).scale(0.5)).expect("symmetrized")
}

pub fn random_spd(rng: &mut ChaCha8Rng, d: usize, cond_max: f64) -> SymMatrix {
    let q = random_orthogonal(rng, d);
    let lam: Vec<f64> = (0..d).map(|_| cond_max.powf(rng.random::<f64>())).collect();
    conjugated(&q, &lam)
}

/// Leaf midpoints, as fractions of the root measure, in slot order.
pub fn leaf_positions(f: &Filtration) -> Vec<f64> {
    let total = f.measure(f.root());
    let mut left = 0.0;
    f.leaves()
        .iter()
        .map(|&l| {
            let mu = f.measure(l);
            let x = (left + 0.5 * mu) / total;
            left += mu;
            x
        })
        .collect()
}

/// Weight for the U role. `Dual` and `File` with a mismatched tree are
/// configuration errors.
pub fn gen_weight(spec: &WeightSpec, f: &Arc<Filtration>, seed: u64) -> anyhow::Result<MatrixWeight> {
    let d = f.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = f.num_leaves();
    let w = match spec {
        WeightSpec::Identity => MatrixWeight::identity(f.clone()),
        WeightSpec::RandomSpd { cond_max } => {
            let leaves = (0..n).map(|_| random_spd(&mut rng, d, *cond_max)).collect();
            MatrixWeight::new(f.clone(), leaves)?
        }
        WeightSpec::RotationPower { a } => {
            if d != 2 {
                return Err(config_err("rotation_power requires d = 2"));
            }
            let leaves = leaf_positions(f)
                .into_iter()
                .map(|x| {
                    let m = x.max(POSITION_FLOOR);
                    let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    let (c, s) = (th.cos(), th.sin());
                    let r = Matrix::from_row_major(2, &[c, -s, s, c]).expect("2x2");
                    conjugated(&r, &[m.powf(*a), m.powf(-*a)])
                })
                .collect();
            MatrixWeight::new(f.clone(), leaves)?
        }
        WeightSpec::ScalarLift { spread } => {
            let vals: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-*spread..=*spread))).collect();
            MatrixWeight::scalar_lift(&matsq_core::ScalarWeight::new(f.clone(), vals)?)?
        }
        WeightSpec::Inverse { of } => gen_weight(of, f, seed)?.invert_leaves()?,
        WeightSpec::Dual => return Err(config_err("`dual` needs a U weight")),
        WeightSpec::File { path } => load_weight(f, path)?,
    };
    Ok(w)
}

/// Weight for the V role; `Dual` is the leafwise inverse of `u`.
pub fn gen_v_weight(spec: &WeightSpec, u: &MatrixWeight, seed: u64) -> anyhow::Result<MatrixWeight> {
    match spec {
        WeightSpec::Dual => Ok(u.invert_leaves()?),
        other => gen_weight(other, u.filtration(), seed),
    }
}

pub fn gen_function(spec: &FunctionSpec, f: &Arc<Filtration>, seed: u64) -> anyhow::Result<VectorFunction> {
    let d = f.dimension();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let g = match spec {
        FunctionSpec::Gaussian { scale } => {
            VectorFunction::from_fn(f.clone(), |_| (0..d).map(|_| scale * normal(&mut rng)).collect())?
        }
        FunctionSpec::Spiky { fraction, height } => VectorFunction::from_fn(f.clone(), |_| {
            let s = if rng.random_bool(*fraction) { *height } else { 1.0 };
            (0..d).map(|_| s * normal(&mut rng)).collect()
        })?,
        FunctionSpec::Haar => {
            let root = f.root();
            let kids = f.children(root);
            let first = f.leaf_range(kids[0]);
            let m0 = f.measure(kids[0]);
            let rest = f.measure(root) - m0;
            // A single-child root has no mean-zero step; fall back to zero.
            let low = if rest > 0.0 && kids.len() > 1 { -m0 / rest } else { 0.0 };
            let high = if kids.len() > 1 { 1.0 } else { 0.0 };
            VectorFunction::from_fn(f.clone(), |slot| {
                let mut v = vec![0.0; d];
                v[0] = if first.contains(&slot) { high } else { low };
                v
            })?
        }
        FunctionSpec::Constant { value } => VectorFunction::constant(f.clone(), value)?,
        FunctionSpec::File { path } => load_function(f, path)?,
    };
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use matsq_core::transforms::expectation;

    fn tree(d: usize) -> Arc<Filtration> {
        gen_filtration(
            &FiltrationSpec::Random {
                depth: 4,
                max_children: 3,
                measure_skew: 0.5,
            },
            d,
            7,
        )
        .unwrap()
    }

    #[test]
    fn generators_are_deterministic() {
        let f = tree(2);
        for spec in [
            WeightSpec::RandomSpd { cond_max: 100.0 },
            WeightSpec::RotationPower { a: 0.7 },
            WeightSpec::ScalarLift { spread: 1.0 },
        ] {
            assert_eq!(
                gen_weight(&spec, &f, 3).unwrap().to_json(),
                gen_weight(&spec, &f, 3).unwrap().to_json()
            );
        }
        let s = FunctionSpec::Spiky {
            fraction: 0.2,
            height: 10.0,
        };
        assert_eq!(gen_function(&s, &f, 5).unwrap().values(), gen_function(&s, &f, 5).unwrap().values());
        assert_ne!(sub_seed(1, 0, 0), sub_seed(1, 1, 0));
        assert_ne!(sub_seed(1, 0, 0), sub_seed(1, 0, 1));
    }

    #[test]
    fn random_spd_respects_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..=4 {
            let m = random_spd(&mut rng, d, 1e3);
            let e = m.eig();
            assert!(e.min() >= 1.0 - 1e-9 && e.max() <= 1e3 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn rotation_power_spectrum_matches_position() {
        let f = tree(2);
        let w = gen_weight(&WeightSpec::RotationPower { a: 0.5 }, &f, 9).unwrap();
        for (slot, x) in leaf_positions(&f).into_iter().enumerate() {
            let e = w.leaf_value(slot).eig();
            let m = x.max(POSITION_FLOOR);
            assert!((e.min() - m.sqrt().min(m.sqrt().recip())).abs() < 1e-9);
            assert!((e.max() * e.min() - 1.0).abs() < 1e-9);
        }
        let zero = gen_weight(&WeightSpec::RotationPower { a: 0.0 }, &f, 9).unwrap();
        for m in zero.leaf_values() {
            assert!((m.get(0, 0) - 1.0).abs() < 1e-12 && m.get(0, 1).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_has_mean_zero() {
        let f = tree(3);
        let g = gen_function(&FunctionSpec::Haar, &f, 0).unwrap();
        assert!(expectation(&g, f.root()).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn inverse_and_dual_agree() {
        let f = tree(2);
        let spec = WeightSpec::RandomSpd { cond_max: 50.0 };
        let u = gen_weight(&spec, &f, 4).unwrap();
        let a = gen_weight(&WeightSpec::Inverse { of: Box::new(spec) }, &f, 4).unwrap();
        let b = gen_v_weight(&WeightSpec::Dual, &u, 99).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
