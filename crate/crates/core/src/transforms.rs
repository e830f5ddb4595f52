//! Leaf-constant functions, martingale averages and differences, and the
//! weighted square functions S^V and S̃^V.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{AtomId, Filtration};
use crate::matrix::SymMatrix;
use crate::par;
use crate::sum::{csum, Accum};
use crate::weights::MatrixWeight;

/// An ℝ^d-valued function constant on each leaf. Values are stored flat,
/// `d` entries per leaf slot.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFunction {
    filtration: Arc<Filtration>,
    d: usize,
    values: Vec<f64>,
}

/// A real-valued function constant on each leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFunction {
    filtration: Arc<Filtration>,
    values: Vec<f64>,
}

impl VectorFunction {
    pub fn new(filtration: Arc<Filtration>, values: Vec<f64>) -> Result<Self> {
        let d = filtration.dimension();
        if values.len() != d * filtration.num_leaves() {
            return Err(Error::DimensionMismatch {
                expected: d * filtration.num_leaves(),
                found: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite function value".into()));
        }
        Ok(VectorFunction {
            filtration,
            d,
            values,
        })
    }

    pub fn zeros(filtration: Arc<Filtration>) -> Self {
        let n = filtration.dimension() * filtration.num_leaves();
        Self::new(filtration, vec![0.0; n]).expect("zeros are valid")
    }

    pub fn constant(filtration: Arc<Filtration>, c: &[f64]) -> Result<Self> {
        let n = filtration.num_leaves();
        Self::new(filtration, c.iter().copied().cycle().take(c.len() * n).collect())
    }

    /// Build from a per-leaf-slot closure.
    pub fn from_fn(filtration: Arc<Filtration>, mut g: impl FnMut(usize) -> Vec<f64>) -> Result<Self> {
        let n = filtration.num_leaves();
        let mut values = Vec::with_capacity(n * filtration.dimension());
        for slot in 0..n {
            values.extend(g(slot));
        }
        Self::new(filtration, values)
    }

    #[inline]
    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn value(&self, slot: usize) -> &[f64] {
        &self.values[slot * self.d..(slot + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self, c: f64) -> Self {
        VectorFunction {
            filtration: self.filtration.clone(),
            d: self.d,
            values: self.values.iter().map(|x| x * c).collect(),
        }
    }

    /// Apply a matrix at each leaf: `x ↦ M_L x`.
    pub fn map_leafwise(&self, mats: &[SymMatrix]) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for (slot, m) in mats.iter().enumerate() {
            m.as_matrix()
                .apply_into(self.value(slot), &mut values[slot * self.d..(slot + 1) * self.d]);
        }
        VectorFunction {
            filtration: self.filtration.clone(),
            d: self.d,
            values,
        }
    }

    /// Apply one constant matrix everywhere.
    pub fn map_constant(&self, m: &crate::matrix::Matrix) -> Self {
        let mut values = vec![0.0; self.values.len()];
        for slot in 0..self.filtration.num_leaves() {
            m.apply_into(self.value(slot), &mut values[slot * self.d..(slot + 1) * self.d]);
        }
        VectorFunction {
            filtration: self.filtration.clone(),
            d: self.d,
            values,
        }
    }

    /// ⟨f⟩_I for every atom, flat (`d` per atom, preorder).
    pub fn atom_averages(&self) -> Vec<f64> {
        let f = &self.filtration;
        let d = self.d;
        let n = f.len();
        let mut mass = vec![0.0; n * d];
        for i in (0..n).rev() {
            let a = AtomId(i);
            if f.is_leaf(a) {
                let mu = f.measure(a);
                let v = self.value(f.leaf_range(a).start);
                for k in 0..d {
                    mass[i * d + k] = v[k] * mu;
                }
            } else {
                for k in 0..d {
                    mass[i * d + k] = csum(f.children(a).iter().map(|c| mass[c.0 * d + k]));
                }
            }
        }
        for i in 0..n {
            let mu = f.measure(AtomId(i));
            mass[i * d..(i + 1) * d].iter_mut().for_each(|x| *x /= mu);
        }
        mass
    }

    /// Pointwise Euclidean norm ‖f(x)‖.
    pub fn pointwise_norm(&self) -> ScalarFunction {
        let vals = (0..self.filtration.num_leaves())
            .map(|s| self.value(s).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        ScalarFunction::from_values(self.filtration.clone(), vals).expect("finite")
    }

    /// ( Σ_L ‖f(L)‖² |L| )^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        let f = &self.filtration;
        csum((0..f.num_leaves()).map(|s| {
            let n2: f64 = self.value(s).iter().map(|x| x * x).sum();
            n2 * f.measure(f.leaf(s))
        }))
        .sqrt()
    }

    pub fn to_file(&self) -> FunctionFile {
        let f = &self.filtration;
        FunctionFile {
            filtration_id: f.fingerprint().to_string(),
            d: self.d,
            leaves: (0..f.num_leaves())
                .map(|s| LeafVector {
                    id: f.label(f.leaf(s)).to_string(),
                    vector: self.value(s).to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("function serializes")
    }

    pub fn from_json(filtration: Arc<Filtration>, text: &str) -> Result<Self> {
        let file: FunctionFile = serde_json::from_str(text)?;
        Self::from_file(filtration, file)
    }

    pub fn from_file(filtration: Arc<Filtration>, file: FunctionFile) -> Result<Self> {
        if file.filtration_id != filtration.fingerprint() {
            return Err(Error::Format(format!(
                "function references filtration {}, loaded {}",
                file.filtration_id,
                filtration.fingerprint()
            )));
        }
        let d = filtration.dimension();
        if file.d != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: file.d,
            });
        }
        let mut values = vec![f64::NAN; d * filtration.num_leaves()];
        let mut seen = vec![false; filtration.num_leaves()];
        for leaf in &file.leaves {
            let atom = filtration.atom_by_id(&leaf.id)?;
            if !filtration.is_leaf(atom) {
                return Err(Error::Format(format!("`{}` is not a leaf", leaf.id)));
            }
            if leaf.vector.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: leaf.vector.len(),
                });
            }
            let slot = filtration.leaf_range(atom).start;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Format(format!("leaf `{}` listed twice", leaf.id)));
            }
            values[slot * d..(slot + 1) * d].copy_from_slice(&leaf.vector);
        }
        if let Some(slot) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!(
                "leaf `{}` missing",
                filtration.label(filtration.leaf(slot))
            )));
        }
        Self::new(filtration, values)
    }
}

/// On-disk vector function.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FunctionFile {
    pub filtration_id: String,
    pub d: usize,
    pub leaves: Vec<LeafVector>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LeafVector {
    pub id: String,
    pub vector: Vec<f64>,
}

impl ScalarFunction {
    pub fn from_values(filtration: Arc<Filtration>, values: Vec<f64>) -> Result<Self> {
        if values.len() != filtration.num_leaves() {
            return Err(Error::DimensionMismatch {
                expected: filtration.num_leaves(),
                found: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite function value".into()));
        }
        Ok(ScalarFunction { filtration, values })
    }

    #[inline]
    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, slot: usize) -> f64 {
        self.values[slot]
    }

    /// ( Σ_L g(L)² |L| )^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        let f = &self.filtration;
        csum(
            self.values
                .iter()
                .enumerate()
                .map(|(s, g)| g * g * f.measure(f.leaf(s))),
        )
        .sqrt()
    }

    /// CSV dump: `leaf_id,rank,measure,value`.
    pub fn to_csv(&self) -> String {
        let f = &self.filtration;
        let mut out = String::from("leaf_id,rank,measure,value\n");
        for (s, v) in self.values.iter().enumerate() {
            let a = f.leaf(s);
            let _ = writeln!(out, "{},{},{},{}", f.label(a), f.rank(a), f.measure(a), v);
        }
        out
    }
}

impl VectorFunction {
    /// CSV dump: `leaf_id,rank,measure,value_0,…,value_{d-1}`.
    pub fn to_csv(&self) -> String {
        let f = &self.filtration;
        let mut out = String::from("leaf_id,rank,measure");
        for k in 0..self.d {
            let _ = write!(out, ",value_{k}");
        }
        out.push('\n');
        for s in 0..f.num_leaves() {
            let a = f.leaf(s);
            let _ = write!(out, "{},{},{}", f.label(a), f.rank(a), f.measure(a));
            for x in self.value(s) {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }
}

fn check_pair(v: &MatrixWeight, f: &VectorFunction) -> Result<()> {
    if v.filtration().fingerprint() != f.filtration().fingerprint() {
        return Err(Error::FiltrationMismatch);
    }
    if v.d() != f.d() {
        return Err(Error::DimensionMismatch {
            expected: v.d(),
            found: f.d(),
        });
    }
    Ok(())
}

/// The value of 𝐄_I f on I, i.e. ⟨f⟩_I, by direct summation over leaves.
pub fn expectation(f: &VectorFunction, atom: AtomId) -> Vec<f64> {
    let fl = f.filtration();
    let mut acc = vec![Accum::new(); f.d()];
    for slot in fl.leaf_range(atom) {
        let mu = fl.measure(fl.leaf(slot));
        for (a, x) in acc.iter_mut().zip(f.value(slot)) {
            a.add(x * mu);
        }
    }
    let m = fl.measure(atom);
    acc.iter().map(|a| a.value() / m).collect()
}

/// Δ_I f = Σ_{I'∈ch I} 𝐄_{I'} f − 𝐄_I f, supported on I. Zero for leaves
/// and for single-child atoms.
pub fn mart_diff(f: &VectorFunction, atom: AtomId) -> VectorFunction {
    let fl = f.filtration();
    let d = f.d();
    let mut out = vec![0.0; f.values().len()];
    if fl.children(atom).len() > 1 {
        let parent = expectation(f, atom);
        for &c in fl.children(atom) {
            let ec = expectation(f, c);
            for slot in fl.leaf_range(c) {
                for k in 0..d {
                    out[slot * d + k] = ec[k] - parent[k];
                }
            }
        }
    }
    VectorFunction::new(fl.clone(), out).expect("finite difference")
}

/// Walk the ancestor chain of leaf `slot` up to `top`, yielding
/// `(child, parent)` edges.
fn edges_to(fl: &Filtration, slot: usize, top: AtomId) -> impl Iterator<Item = (AtomId, AtomId)> + '_ {
    let mut cur = fl.leaf(slot);
    std::iter::from_fn(move || {
        if cur == top {
            return None;
        }
        let p = fl.parent(cur)?;
        let edge = (cur, p);
        cur = p;
        Some(edge)
    })
}

/// Shared evaluation of both square functions; `weight_at(child, slot)`
/// selects the matrix applied to the difference on that edge.
fn square_like(
    v: &MatrixWeight,
    f: &VectorFunction,
    i0: AtomId,
    weight_at: impl Fn(AtomId, usize) -> SymMatrix + Sync + Send,
) -> Result<ScalarFunction> {
    check_pair(v, f)?;
    let fl = f.filtration();
    let d = f.d();
    let avg = f.atom_averages();
    let range = fl.leaf_range(i0);
    let vals = par::map_range(fl.num_leaves(), |slot| {
        if !range.contains(&slot) {
            return 0.0;
        }
        let mut acc = Accum::new();
        let mut delta = vec![0.0; d];
        for (child, parent) in edges_to(fl, slot, i0) {
            if fl.children(parent).len() < 2 {
                continue;
            }
            for k in 0..d {
                delta[k] = avg[child.0 * d + k] - avg[parent.0 * d + k];
            }
            acc.add(weight_at(child, slot).quad_form(&delta));
        }
        acc.value().max(0.0).sqrt()
    });
    ScalarFunction::from_values(fl.clone(), vals)
}

/// S^V_{I₀} f at each leaf: ( Σ_{I∈𝒟(I₀)} ‖V(x)^{1/2} Δ_I f(x)‖² )^{1/2},
/// zero outside I₀. ‖V^{1/2}y‖² is evaluated as the quadratic form yᵀVy.
pub fn square_function(v: &MatrixWeight, f: &VectorFunction, i0: AtomId) -> Result<ScalarFunction> {
    square_like(v, f, i0, |_, slot| *v.leaf_value(slot))
}

/// S̃^V_{I₀} f at each leaf: the child average ⟨V⟩_{I'} replaces V(x) on the
/// child I' ∋ x.
pub fn mod_square_function(v: &MatrixWeight, f: &VectorFunction, i0: AtomId) -> Result<ScalarFunction> {
    check_pair(v, f)?;
    let avgs = v.averages();
    square_like(v, f, i0, |child, _| avgs[child.0])
}

/// ‖f‖_{L²(W)} = ( Σ_L (W_L f_L, f_L) |L| )^{1/2}.
pub fn weighted_l2_norm(w: &MatrixWeight, f: &VectorFunction) -> Result<f64> {
    check_pair(w, f)?;
    let fl = f.filtration();
    Ok(csum((0..fl.num_leaves()).map(|s| w.leaf_value(s).quad_form(f.value(s)) * fl.measure(fl.leaf(s))))
        .max(0.0)
        .sqrt())
}

/// Zero outside I₀, unchanged inside.
pub fn localize(f: &VectorFunction, i0: AtomId) -> VectorFunction {
    let fl = f.filtration();
    let d = f.d();
    let range = fl.leaf_range(i0);
    let mut values = vec![0.0; f.values().len()];
    values[range.start * d..range.end * d].copy_from_slice(&f.values()[range.start * d..range.end * d]);
    VectorFunction::new(fl.clone(), values).expect("finite")
}
