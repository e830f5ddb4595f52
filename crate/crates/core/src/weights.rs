//! Matrix and scalar weights on a filtration, their atom averages, and the
//! martingale A₂ / A∞ characteristics.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{AtomId, Filtration};
use crate::matrix::{op_norm, Matrix, SymMatrix, DEFAULT_COND_CAP};
use crate::par;
use crate::transforms::ScalarFunction;

/// A leaf-constant field of symmetric positive definite matrices.
#[derive(Debug, Clone)]
pub struct MatrixWeight {
    filtration: Arc<Filtration>,
    leaf_values: Vec<SymMatrix>,
    averages: OnceLock<Vec<SymMatrix>>,
}

impl PartialEq for MatrixWeight {
    fn eq(&self, other: &Self) -> bool {
        self.filtration.fingerprint() == other.filtration.fingerprint()
            && self.leaf_values == other.leaf_values
    }
}

/// Check that `m` is positive definite with condition number ≤ `cond_cap`;
/// returns the minimum eigenvalue on failure.
fn leaf_ok(m: &SymMatrix, cond_cap: f64) -> std::result::Result<(), f64> {
    let eig = m.eig();
    let (lo, hi) = (eig.min(), eig.max());
    if lo > 0.0 && hi / lo <= cond_cap {
        Ok(())
    } else {
        Err(lo)
    }
}

impl MatrixWeight {
    /// Validates that every leaf value is SPD with condition ≤ 1e10 and that
    /// the dimension matches the filtration.
    pub fn new(filtration: Arc<Filtration>, leaf_values: Vec<SymMatrix>) -> Result<Self> {
        if leaf_values.len() != filtration.num_leaves() {
            return Err(Error::DimensionMismatch {
                expected: filtration.num_leaves(),
                found: leaf_values.len(),
            });
        }
        let d = filtration.dimension();
        for (slot, m) in leaf_values.iter().enumerate() {
            if m.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.dim(),
                });
            }
            if let Err(min_eigenvalue) = leaf_ok(m, DEFAULT_COND_CAP) {
                return Err(Error::NonPositiveLeaf {
                    leaf: filtration.label(filtration.leaf(slot)).to_string(),
                    min_eigenvalue,
                });
            }
        }
        Ok(MatrixWeight {
            filtration,
            leaf_values,
            averages: OnceLock::new(),
        })
    }

    pub fn constant(filtration: Arc<Filtration>, value: SymMatrix) -> Result<Self> {
        let n = filtration.num_leaves();
        Self::new(filtration, vec![value; n])
    }

    pub fn identity(filtration: Arc<Filtration>) -> Self {
        let d = filtration.dimension();
        Self::constant(filtration, SymMatrix::identity(d)).expect("identity is SPD")
    }

    /// `c · I` at each leaf.
    pub fn scalar_lift(w: &ScalarWeight) -> Result<Self> {
        let d = w.filtration.dimension();
        let vals = w
            .leaf_values
            .iter()
            .map(|&c| SymMatrix::identity(d).scale(c))
            .collect();
        Self::new(w.filtration.clone(), vals)
    }

    #[inline]
    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.filtration.dimension()
    }

    #[inline]
    pub fn leaf_value(&self, slot: usize) -> &SymMatrix {
        &self.leaf_values[slot]
    }

    pub fn leaf_values(&self) -> &[SymMatrix] {
        &self.leaf_values
    }

    /// ⟨W⟩_I by direct summation over the leaves of `I`.
    pub fn average(&self, atom: AtomId) -> SymMatrix {
        let f = &self.filtration;
        let mut acc = SymMatrix::zeros(self.d());
        for slot in f.leaf_range(atom) {
            acc.add_scaled(&self.leaf_values[slot], f.measure(f.leaf(slot)));
        }
        acc.scale(1.0 / f.measure(atom))
    }

    /// ⟨W⟩_I for every atom, indexed by preorder position. Computed once,
    /// bottom-up through the tower property.
    pub fn averages(&self) -> &[SymMatrix] {
        self.averages.get_or_init(|| {
            let f = &self.filtration;
            let n = f.len();
            let mut mass = vec![SymMatrix::zeros(self.d()); n];
            for i in (0..n).rev() {
                let a = AtomId(i);
                if f.is_leaf(a) {
                    let slot = f.leaf_range(a).start;
                    mass[i] = self.leaf_values[slot].scale(f.measure(a));
                } else {
                    let mut acc = SymMatrix::zeros(self.d());
                    for &c in f.children(a) {
                        acc.add_scaled(&mass[c.0], 1.0);
                    }
                    mass[i] = acc;
                }
            }
            mass.iter()
                .enumerate()
                .map(|(i, m)| m.scale(1.0 / f.measure(AtomId(i))))
                .collect()
        })
    }

    /// Pointwise inverse, leaf by leaf.
    pub fn invert_leaves(&self) -> Result<Self> {
        let inv = self
            .leaf_values
            .iter()
            .map(|m| m.inverse(DEFAULT_COND_CAP))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.filtration.clone(), inv)
    }

    /// Pointwise principal square roots.
    pub fn leaf_sqrt(&self) -> Vec<SymMatrix> {
        self.leaf_values
            .iter()
            .map(|m| m.sqrt().expect("validated SPD leaf"))
            .collect()
    }

    /// Leafwise congruence `Aᵀ W A` by a constant invertible matrix.
    pub fn rescale(&self, a: &Matrix) -> Result<Self> {
        if a.dim() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found: a.dim(),
            });
        }
        let gram = SymMatrix::new(a.transpose().mul(a))?.eig();
        let cond = (gram.max() / gram.min()).sqrt();
        if !(gram.min() > 0.0 && cond <= DEFAULT_COND_CAP) {
            return Err(Error::SingularOrIllConditioned {
                condition: if gram.min() > 0.0 { cond } else { f64::INFINITY },
            });
        }
        let vals = self.leaf_values.iter().map(|w| w.congruence(a)).collect();
        Self::new(self.filtration.clone(), vals)
    }

    pub fn to_file(&self) -> WeightFile {
        let f = &self.filtration;
        WeightFile {
            filtration_id: f.fingerprint().to_string(),
            d: self.d(),
            leaves: self
                .leaf_values
                .iter()
                .enumerate()
                .map(|(slot, m)| LeafMatrix {
                    id: f.label(f.leaf(slot)).to_string(),
                    matrix: m.as_matrix().row_major().to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("weight serializes")
    }

    pub fn from_json(filtration: Arc<Filtration>, text: &str) -> Result<Self> {
        let file: WeightFile = serde_json::from_str(text)?;
        Self::from_file(filtration, file)
    }

    pub fn from_file(filtration: Arc<Filtration>, file: WeightFile) -> Result<Self> {
        if file.filtration_id != filtration.fingerprint() {
            return Err(Error::Format(format!(
                "weight references filtration {}, loaded {}",
                file.filtration_id,
                filtration.fingerprint()
            )));
        }
        if file.d != filtration.dimension() {
            return Err(Error::DimensionMismatch {
                expected: filtration.dimension(),
                found: file.d,
            });
        }
        let mut slots: Vec<Option<SymMatrix>> = vec![None; filtration.num_leaves()];
        for leaf in &file.leaves {
            let atom = filtration.atom_by_id(&leaf.id)?;
            if !filtration.is_leaf(atom) {
                return Err(Error::Format(format!("`{}` is not a leaf", leaf.id)));
            }
            let slot = filtration.leaf_range(atom).start;
            let m = SymMatrix::from_row_major(file.d, &leaf.matrix)
                .map_err(|e| Error::Format(format!("leaf `{}`: {e}", leaf.id)))?;
            if slots[slot].replace(m).is_some() {
                return Err(Error::Format(format!("leaf `{}` listed twice", leaf.id)));
            }
        }
        let vals = slots
            .into_iter()
            .enumerate()
            .map(|(slot, m)| {
                m.ok_or_else(|| {
                    Error::Format(format!(
                        "leaf `{}` missing",
                        filtration.label(filtration.leaf(slot))
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(filtration, vals)
    }
}

/// On-disk matrix weight.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightFile {
    pub filtration_id: String,
    pub d: usize,
    pub leaves: Vec<LeafMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LeafMatrix {
    pub id: String,
    pub matrix: Vec<f64>,
}

/// A leaf-constant positive scalar weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarWeight {
    filtration: Arc<Filtration>,
    leaf_values: Vec<f64>,
}

impl ScalarWeight {
    pub fn new(filtration: Arc<Filtration>, leaf_values: Vec<f64>) -> Result<Self> {
        if leaf_values.len() != filtration.num_leaves() {
            return Err(Error::DimensionMismatch {
                expected: filtration.num_leaves(),
                found: leaf_values.len(),
            });
        }
        if let Some(slot) = leaf_values.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::NonPositiveLeaf {
                leaf: filtration.label(filtration.leaf(slot)).to_string(),
                min_eigenvalue: leaf_values[slot],
            });
        }
        Ok(ScalarWeight {
            filtration,
            leaf_values,
        })
    }

    #[inline]
    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    pub fn leaf_values(&self) -> &[f64] {
        &self.leaf_values
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::new(
            self.filtration.clone(),
            self.leaf_values.iter().map(|x| x * c).collect(),
        )
    }

    /// ⟨w⟩_I.
    pub fn average(&self, atom: AtomId) -> f64 {
        let f = &self.filtration;
        let s: f64 = f
            .leaf_range(atom)
            .map(|slot| self.leaf_values[slot] * f.measure(f.leaf(slot)))
            .sum();
        s / f.measure(atom)
    }
}

/// Supremum of a characteristic over atoms, with where it is attained.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CharacteristicReport {
    pub value: f64,
    pub witness_atom: String,
    #[serde(skip)]
    pub witness: AtomId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_direction: Option<Vec<f64>>,
    /// Set when `value` is only a lower estimate of the true supremum.
    pub lower_bound: bool,
}

/// Pick the maximum of per-atom values; ties go to the smallest
/// `(rank, id)`.
fn argmax_atom(f: &Filtration, values: &[f64]) -> (f64, AtomId) {
    let mut best = (values[0], AtomId(0));
    for (i, &v) in values.iter().enumerate().skip(1) {
        let a = AtomId(i);
        if v > best.0 || (v == best.0 && f.order_key(a) < f.order_key(best.1)) {
            best = (v, a);
        }
    }
    best
}

fn same_filtration(a: &Filtration, b: &Filtration) -> Result<()> {
    if a.fingerprint() != b.fingerprint() {
        return Err(Error::FiltrationMismatch);
    }
    Ok(())
}

/// [W, V]_{A₂} = sup over atoms of ‖⟨W⟩_I^{1/2} ⟨V⟩_I^{1/2}‖².
pub fn a2_two_weight(w: &MatrixWeight, v: &MatrixWeight) -> Result<CharacteristicReport> {
    same_filtration(&w.filtration, &v.filtration)?;
    let (wa, va) = (w.averages(), v.averages());
    let vals = par::map_range(wa.len(), |i| -> Result<f64> {
        let ws = wa[i].sqrt()?;
        let vs = va[i].sqrt()?;
        let n = op_norm(&ws.as_matrix().mul(vs.as_matrix()));
        Ok(n * n)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (value, witness) = argmax_atom(&w.filtration, &vals);
    Ok(CharacteristicReport {
        value,
        witness_atom: w.filtration.label(witness).to_string(),
        witness,
        witness_direction: None,
        lower_bound: false,
    })
}

/// [W]_{A₂} with the pointwise inverse taken leafwise.
pub fn a2(w: &MatrixWeight) -> Result<CharacteristicReport> {
    a2_two_weight(w, &w.invert_leaves()?)
}

/// Atom averages of a leaf-constant scalar field (preorder-indexed).
pub(crate) fn scalar_atom_averages(f: &Filtration, leaf_values: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut mass = vec![0.0; n];
    for i in (0..n).rev() {
        let a = AtomId(i);
        mass[i] = if f.is_leaf(a) {
            leaf_values[f.leaf_range(a).start] * f.measure(a)
        } else {
            f.children(a).iter().map(|c| mass[c.0]).sum()
        };
    }
    mass.iter()
        .enumerate()
        .map(|(i, m)| m / f.measure(AtomId(i)))
        .collect()
}

/// M_I w: at each leaf L ⊆ I the largest |⟨w⟩_{I'}| over L ⊆ I' ⊆ I; zero
/// outside I.
pub fn maximal_localized(w: &ScalarWeight, atom: AtomId) -> ScalarFunction {
    let f = &w.filtration;
    let avg = scalar_atom_averages(f, &w.leaf_values);
    let mut out = vec![0.0; f.num_leaves()];
    let range = f.subtree(atom);
    let mut run = vec![0.0_f64; range.len()];
    for i in range.clone() {
        let a = AtomId(i);
        let above = if i == atom.0 {
            0.0
        } else {
            run[f.parent(a).expect("non-root").0 - range.start]
        };
        run[i - range.start] = above.max(avg[i].abs());
        if f.is_leaf(a) {
            out[f.leaf_range(a).start] = run[i - range.start];
        }
    }
    ScalarFunction::from_values(f.clone(), out).expect("finite maximal function")
}

/// ⟨M_I w⟩_I / ⟨w⟩_I for every atom I. `avg` holds the atom averages of the
/// leaf field. Both numerator and denominator are plain sums over the same
/// leaves in the same order, so the ratio is never below 1 for positive
/// weights.
fn a_infty_per_atom(f: &Filtration, leaf_values: &[f64], avg: &[f64]) -> Vec<f64> {
    par::map_range(f.len(), |i| {
        let range = f.subtree(AtomId(i));
        let mut run = vec![0.0_f64; range.len()];
        let (mut num, mut den) = (0.0, 0.0);
        for j in range.clone() {
            let a = AtomId(j);
            let above = if j == i {
                0.0
            } else {
                run[f.parent(a).expect("non-root").0 - range.start]
            };
            let m = above.max(avg[j].abs());
            run[j - range.start] = m;
            if f.is_leaf(a) {
                let mu = f.measure(a);
                num += m * mu;
                den += leaf_values[f.leaf_range(a).start] * mu;
            }
        }
        num / den
    })
}

fn a_infty_leaf_field(f: &Filtration, leaf_values: &[f64]) -> (f64, AtomId) {
    let avg = scalar_atom_averages(f, leaf_values);
    let ratios = a_infty_per_atom(f, leaf_values, &avg);
    argmax_atom(f, &ratios)
}

/// [w]_{A∞} = sup over atoms of ⟨M_I w⟩_I / ⟨w⟩_I.
pub fn a_infty_scalar(w: &ScalarWeight) -> CharacteristicReport {
    let (value, witness) = a_infty_leaf_field(&w.filtration, &w.leaf_values);
    CharacteristicReport {
        value,
        witness_atom: w.filtration.label(witness).to_string(),
        witness,
        witness_direction: None,
        lower_bound: false,
    }
}

fn check_unit(e: &[f64], d: usize) -> Result<()> {
    if e.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: e.len(),
        });
    }
    let n2: f64 = e.iter().map(|x| x * x).sum();
    if n2 == 0.0 || !n2.is_finite() {
        return Err(Error::InvalidParameter("zero direction".into()));
    }
    if (n2.sqrt() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "direction has norm {} (expected 1)",
            n2.sqrt()
        )));
    }
    Ok(())
}

/// w_e(x) = (W(x) e, e) for a unit vector e.
pub fn direction_weight(w: &MatrixWeight, e: &[f64]) -> Result<ScalarWeight> {
    check_unit(e, w.d())?;
    ScalarWeight::new(
        w.filtration.clone(),
        w.leaf_values.iter().map(|m| m.quad_form(e)).collect(),
    )
}

/// The deterministic direction set scanned by [`a_infty_matrix`]: the
/// canonical basis, the eigenvectors of every atom average, then
/// `n_random` seeded Gaussian directions normalized to the sphere.
pub fn direction_set(w: &MatrixWeight, n_random: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = w.d();
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            e
        })
        .collect();
    for avg in w.averages() {
        let eig = avg.eig();
        for k in 0..d {
            dirs.push(normalize(eig.vector(k)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added = 0;
    while added < n_random {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-20 {
            dirs.push(normalize(v));
            added += 1;
        }
    }
    dirs
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Lower estimate of [W]_{A∞} = sup_e [w_e]_{A∞} over the directions of
/// [`direction_set`]. Requires `n_directions ≥ 2d`.
pub fn a_infty_matrix(w: &MatrixWeight, n_directions: usize, seed: u64) -> Result<CharacteristicReport> {
    if n_directions < 2 * w.d() {
        return Err(Error::InvalidParameter(format!(
            "n_directions {n_directions} < 2d = {}",
            2 * w.d()
        )));
    }
    Ok(a_infty_over(w, &direction_set(w, n_directions, seed)))
}

/// Maximum of [w_e]_{A∞} over an explicit direction list.
pub fn a_infty_over(w: &MatrixWeight, dirs: &[Vec<f64>]) -> CharacteristicReport {
    let f = &w.filtration;
    let per_dir = par::map(dirs, |e| {
        let vals: Vec<f64> = w.leaf_values.iter().map(|m| m.quad_form(e)).collect();
        a_infty_leaf_field(f, &vals)
    });
    let mut best = 0usize;
    for (k, &(v, a)) in per_dir.iter().enumerate().skip(1) {
        let (bv, ba) = per_dir[best];
        if v > bv || (v == bv && f.order_key(a) < f.order_key(ba)) {
            best = k;
        }
    }
    let (value, witness) = per_dir[best];
    CharacteristicReport {
        value,
        witness_atom: f.label(witness).to_string(),
        witness,
        witness_direction: Some(dirs[best].clone()),
        lower_bound: true,
    }
}

/// u = tr Ũ with Ũ = ⟨U⟩_J^{-1/2} U ⟨U⟩_J^{-1/2}, evaluated on every leaf.
pub fn trace_weight(u: &MatrixWeight, j: AtomId) -> Result<ScalarWeight> {
    let inv = u.averages()[j.0]
        .inv_sqrt(DEFAULT_COND_CAP)
        .map_err(|e| Error::NonPdAverage {
            atom: u.filtration.label(j).to_string(),
            source: Box::new(e),
        })?;
    let vals = u
        .leaf_values
        .iter()
        .map(|m| m.congruence(inv.as_matrix()).trace())
        .collect();
    ScalarWeight::new(u.filtration.clone(), vals)
}
