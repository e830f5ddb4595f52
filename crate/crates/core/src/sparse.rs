//! Sparse families, the sparse averaging square functions 𝒜^V and 𝒜^V_mod,
//! and the stopping-time construction that dominates S̃^V by them.
//!
//! At each member I the construction rescales so that ⟨Ṽ⟩_I = Id
//! (Ṽ = ⟨V⟩_I^{-1/2} V ⟨V⟩_I^{-1/2}, f̃ = ⟨V⟩_I^{1/2} f) and stops at the
//! maximal J ⊊ I where any of the following holds:
//!
//! * (S1) Σ_{I ⊇ A ⊋ J} ‖Δ_A f̃ (J)‖² > C² ⟨‖f̃‖⟩_I²
//! * (S2) tr ⟨Ṽ⟩_J > C d
//! * (S3) ⟨‖f̃‖⟩_J > C ⟨‖f̃‖⟩_I
//!
//! No explicit weak-type constant is available, so C starts at `C0` and is
//! doubled until the stopped atoms cover at most half of I. Off the stopped
//! atoms S̃² ≤ C³d⟨‖f̃‖⟩_I², and on a stopped J the three grouped terms give
//! S̃ ≤ (2C³d)^{1/2}·√3·(𝒜^V f + 𝒜^V_mod f) pointwise, where the correction
//! term of 𝒜^V_mod is attached to each (member, stopping child) pair.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::{AtomId, Filtration};
use crate::matrix::{SymMatrix, DEFAULT_COND_CAP};
use crate::par;
use crate::sum::csum;
use crate::transforms::{localize, mod_square_function, ScalarFunction, VectorFunction};
use crate::weights::{scalar_atom_averages, MatrixWeight, ScalarWeight};

/// Sparseness level guaranteed by [`build_sparse_family`].
pub const CONSTRUCTION_EPS: f64 = 0.5;

/// Default initial stopping constant.
pub const DEFAULT_C0: f64 = 4.0;

/// Cap on constant doublings per member; reaching it means the stopped
/// measure never dropped, which cannot happen for valid input.
const MAX_DOUBLINGS: u32 = 200;

/// A family ℱ ⊆ 𝒟(I₀) containing I₀, with its ℱ-tree structure.
#[derive(Debug, Clone)]
pub struct SparseFamily {
    filtration: Arc<Filtration>,
    root: AtomId,
    /// Members in preorder; `members[0] == root`.
    members: Vec<AtomId>,
    eps: f64,
    /// Index (into `members`) of the ℱ-parent; `None` for the root.
    parent: Vec<Option<usize>>,
    /// chℱ(I): maximal members strictly below I, in preorder.
    children: Vec<Vec<usize>>,
    /// Stopping constant used at each member, when produced by the
    /// construction.
    constants: Option<Vec<f64>>,
}

impl PartialEq for SparseFamily {
    fn eq(&self, other: &Self) -> bool {
        self.filtration.fingerprint() == other.filtration.fingerprint()
            && self.members == other.members
            && self.eps == other.eps
    }
}

impl SparseFamily {
    /// Build a family from member atoms. `root` must be a member and every
    /// member must lie in 𝒟(root).
    pub fn new(filtration: Arc<Filtration>, root: AtomId, members: &[AtomId], eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps {eps} outside (0,1]")));
        }
        let mut ms: Vec<AtomId> = members.to_vec();
        ms.sort();
        ms.dedup();
        if ms.first() != Some(&root) {
            return Err(Error::InvalidParameter(format!(
                "family must contain its root `{}` and nothing outside it",
                filtration.label(root)
            )));
        }
        if let Some(&bad) = ms.iter().find(|&&m| m.index() >= filtration.len() || !filtration.contains(root, m)) {
            return Err(Error::InvalidParameter(format!(
                "member `{}` lies outside the root",
                filtration.label(bad)
            )));
        }
        // Preorder stack walk assigns ℱ-parents.
        let mut parent = vec![None; ms.len()];
        let mut children = vec![Vec::new(); ms.len()];
        let mut stack: Vec<usize> = Vec::new();
        for (k, &m) in ms.iter().enumerate() {
            while let Some(&top) = stack.last() {
                if filtration.contains(ms[top], m) {
                    break;
                }
                stack.pop();
            }
            if let Some(&top) = stack.last() {
                parent[k] = Some(top);
                children[top].push(k);
            }
            stack.push(k);
        }
        Ok(SparseFamily {
            filtration,
            root,
            members: ms,
            eps,
            parent,
            children,
            constants: None,
        })
    }

    #[inline]
    pub fn filtration(&self) -> &Arc<Filtration> {
        &self.filtration
    }

    #[inline]
    pub fn root(&self) -> AtomId {
        self.root
    }

    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Members in preorder.
    pub fn members(&self) -> &[AtomId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Position of `atom` among the members.
    pub fn position(&self, atom: AtomId) -> Option<usize> {
        self.members.binary_search(&atom).ok()
    }

    pub fn contains(&self, atom: AtomId) -> bool {
        self.position(atom).is_some()
    }

    /// chℱ of the member at position `k`.
    pub fn stopping_children(&self, k: usize) -> impl Iterator<Item = AtomId> + '_ {
        self.children[k].iter().map(|&c| self.members[c])
    }

    /// ℱ-parent of the member at position `k`.
    pub fn family_parent(&self, k: usize) -> Option<AtomId> {
        self.parent[k].map(|p| self.members[p])
    }

    /// ℱ(J): members contained in `j`, in preorder.
    pub fn members_below(&self, j: AtomId) -> &[AtomId] {
        let range = self.filtration.subtree(j);
        let lo = self.members.partition_point(|m| m.index() < range.start);
        let hi = self.members.partition_point(|m| m.index() < range.end);
        &self.members[lo..hi]
    }

    /// Stopping constants per member, when produced by the construction.
    pub fn stopping_constants(&self) -> Option<&[f64]> {
        self.constants.as_deref()
    }

    /// Largest stopping constant, if recorded.
    pub fn max_stopping_constant(&self) -> Option<f64> {
        self.constants
            .as_ref()
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Fraction Σ_{J∈chℱ(I)} |J| / |I| for each member.
    pub fn stopped_fractions(&self) -> Vec<f64> {
        (0..self.members.len())
            .map(|k| {
                let stopped = csum(self.stopping_children(k).map(|j| self.filtration.measure(j)));
                stopped / self.filtration.measure(self.members[k])
            })
            .collect()
    }

    pub fn to_file(&self) -> SparseFamilyFile {
        SparseFamilyFile {
            filtration_id: self.filtration.fingerprint().to_string(),
            eps: self.eps,
            members: self
                .members
                .iter()
                .map(|&m| self.filtration.label(m).to_string())
                .collect(),
            stopping_constant: self.max_stopping_constant(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("family serializes")
    }

    pub fn from_json(filtration: Arc<Filtration>, text: &str) -> Result<Self> {
        let file: SparseFamilyFile = serde_json::from_str(text)?;
        if file.filtration_id != filtration.fingerprint() {
            return Err(Error::Format(format!(
                "family references filtration {}, loaded {}",
                file.filtration_id,
                filtration.fingerprint()
            )));
        }
        let members = file
            .members
            .iter()
            .map(|id| filtration.atom_by_id(id))
            .collect::<Result<Vec<_>>>()?;
        let root = *members
            .iter()
            .min()
            .ok_or_else(|| Error::Format("empty family".into()))?;
        Self::new(filtration, root, &members, file.eps)
    }
}

/// On-disk sparse family.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SparseFamilyFile {
    pub filtration_id: String,
    pub eps: f64,
    pub members: Vec<String>,
    pub stopping_constant: Option<f64>,
}

/// The first member whose stopping children exceed `eps·|I|`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SparsenessViolation {
    pub atom: String,
    pub stopped_measure: f64,
    pub measure: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SparsenessAudit {
    pub sparse: bool,
    pub first_violation: Option<SparsenessViolation>,
}

/// Whether Σ_{I'∈chℱ(I)} |I'| ≤ eps·|I| for every member I.
pub fn is_sparse(family: &SparseFamily, eps: f64) -> SparsenessAudit {
    let fl = &family.filtration;
    for k in 0..family.members.len() {
        let stopped = csum(family.stopping_children(k).map(|j| fl.measure(j)));
        let measure = fl.measure(family.members[k]);
        if stopped > eps * measure {
            return SparsenessAudit {
                sparse: false,
                first_violation: Some(SparsenessViolation {
                    atom: fl.label(family.members[k]).to_string(),
                    stopped_measure: stopped,
                    measure,
                }),
            };
        }
    }
    SparsenessAudit {
        sparse: true,
        first_violation: None,
    }
}

fn check_inputs(v: &MatrixWeight, family: &SparseFamily, f: &VectorFunction) -> Result<()> {
    let fp = family.filtration.fingerprint();
    if v.filtration().fingerprint() != fp || f.filtration().fingerprint() != fp {
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

/// ⟨‖A^{1/2} f‖⟩_I with ‖A^{1/2}y‖ = (yᵀAy)^{1/2}.
fn weighted_mean_norm(fl: &Filtration, f: &VectorFunction, a: &SymMatrix, atom: AtomId) -> f64 {
    let s = csum(
        fl.leaf_range(atom)
            .map(|slot| a.quad_form(f.value(slot)).max(0.0).sqrt() * fl.measure(fl.leaf(slot))),
    );
    s / fl.measure(atom)
}

/// m_I = ⟨‖⟨V⟩_I^{1/2} f‖⟩_I for every member, in member order.
pub fn member_means(v: &MatrixWeight, family: &SparseFamily, f: &VectorFunction) -> Result<Vec<f64>> {
    check_inputs(v, family, f)?;
    let avgs = v.averages();
    let fl = &family.filtration;
    Ok(par::map(&family.members, |&m| weighted_mean_norm(fl, f, &avgs[m.index()], m)))
}

/// Sum per-atom contributions down every root-to-leaf path and take square
/// roots at the leaves.
fn leaf_root_of_path_sums(fl: &Arc<Filtration>, atom_vals: &[f64]) -> ScalarFunction {
    let n = fl.len();
    let mut pre = vec![0.0; n];
    let mut out = vec![0.0; fl.num_leaves()];
    for i in 0..n {
        let a = AtomId(i);
        let above = fl.parent(a).map_or(0.0, |p| pre[p.index()]);
        pre[i] = above + atom_vals[i];
        if fl.is_leaf(a) {
            out[fl.leaf_range(a).start] = pre[i].sqrt();
        }
    }
    ScalarFunction::from_values(fl.clone(), out).expect("finite")
}

/// 𝒜^V_ℱ f(x) = ( Σ_{I∈ℱ, x∈I} ⟨‖⟨V⟩_I^{1/2} f‖⟩_I² )^{1/2}.
pub fn sparse_avg_sq(v: &MatrixWeight, family: &SparseFamily, f: &VectorFunction) -> Result<ScalarFunction> {
    let means = member_means(v, family, f)?;
    let mut vals = vec![0.0; family.filtration.len()];
    for (&m, mean) in family.members.iter().zip(&means) {
        vals[m.index()] += mean * mean;
    }
    Ok(leaf_root_of_path_sums(&family.filtration, &vals))
}

/// How the correction term of 𝒜^V_mod is indexed below each member I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModIndexing {
    /// One term per stopping child J ∈ chℱ(I), supported on J. This is the
    /// indexing produced by the pointwise decomposition.
    #[default]
    StoppingChildren,
    /// One term per filtration child I' ∈ ch I, supported on I'.
    FiltrationChildren,
}

/// The atoms carrying correction terms below the member at position `k`.
fn mod_targets(family: &SparseFamily, k: usize, indexing: ModIndexing) -> Vec<AtomId> {
    match indexing {
        ModIndexing::StoppingChildren => family.stopping_children(k).collect(),
        ModIndexing::FiltrationChildren => family.filtration.children(family.members[k]).to_vec(),
    }
}

/// One correction term F_I of 𝒜^V_mod: its per-child factors
/// ‖⟨V⟩_I^{-1/2}⟨V⟩_J^{1/2}‖² and the member mean m_I.
#[derive(Debug, Clone)]
pub struct ModTerm {
    pub member: AtomId,
    pub mean: f64,
    pub factors: Vec<(AtomId, f64)>,
}

impl ModTerm {
    /// ‖F_I‖_{L¹} = m_I² Σ_J ‖⟨V⟩_I^{-1/2}⟨V⟩_J^{1/2}‖² |J|.
    pub fn l1_norm(&self, fl: &Filtration) -> f64 {
        self.mean * self.mean * csum(self.factors.iter().map(|&(j, c)| c * fl.measure(j)))
    }
}

/// All correction terms of 𝒜^V_mod, in member order.
pub fn mod_terms(
    v: &MatrixWeight,
    family: &SparseFamily,
    f: &VectorFunction,
    indexing: ModIndexing,
) -> Result<Vec<ModTerm>> {
    let means = member_means(v, family, f)?;
    let avgs = v.averages();
    let fl = &family.filtration;
    par::map_range(family.members.len(), |k| {
        let member = family.members[k];
        let targets = mod_targets(family, k, indexing);
        let factors = if targets.is_empty() {
            Vec::new()
        } else {
            let inv = avgs[member.index()]
                .inv_sqrt(DEFAULT_COND_CAP)
                .map_err(|e| Error::NonPdAverage {
                    atom: fl.label(member).to_string(),
                    source: Box::new(e),
                })?;
            // ‖P A^{1/2}‖² = λ_max(P A P) for symmetric P.
            targets
                .into_iter()
                .map(|j| (j, avgs[j.index()].congruence(inv.as_matrix()).eig().max().max(0.0)))
                .collect()
        };
        Ok(ModTerm {
            member,
            mean: means[k],
            factors,
        })
    })
    .into_iter()
    .collect()
}

/// 𝒜^V_mod f with the default (stopping-children) indexing.
pub fn sparse_mod_sq(v: &MatrixWeight, family: &SparseFamily, f: &VectorFunction) -> Result<ScalarFunction> {
    sparse_mod_sq_with(v, family, f, ModIndexing::StoppingChildren)
}

/// 𝒜^V_mod f(x) = ( Σ_{I∈ℱ} Σ_{J} m_I² ‖⟨V⟩_I^{-1/2}⟨V⟩_J^{1/2}‖² 𝟏_J(x) )^{1/2}.
pub fn sparse_mod_sq_with(
    v: &MatrixWeight,
    family: &SparseFamily,
    f: &VectorFunction,
    indexing: ModIndexing,
) -> Result<ScalarFunction> {
    let terms = mod_terms(v, family, f, indexing)?;
    let mut vals = vec![0.0; family.filtration.len()];
    for t in &terms {
        let m2 = t.mean * t.mean;
        for &(j, c) in &t.factors {
            vals[j.index()] += m2 * c;
        }
    }
    Ok(leaf_root_of_path_sums(&family.filtration, &vals))
}

/// Everything the three stopping conditions need below one member I,
/// indexed by offset into the preorder subtree of I.
#[derive(Debug, Clone)]
pub struct StoppingScan {
    fl: Arc<Filtration>,
    top: AtomId,
    d: usize,
    /// ⟨‖f̃‖⟩_I.
    pub mean_top: f64,
    /// Σ_{I ⊇ A ⊋ J} ‖Δ_A f̃(J)‖² per J.
    accumulated: Vec<f64>,
    /// tr ⟨Ṽ⟩_J per J.
    traces: Vec<f64>,
    /// ⟨‖f̃‖⟩_J per J.
    means: Vec<f64>,
}

impl StoppingScan {
    /// Rescale at `top` and tabulate the stopping quantities. `favg` holds
    /// the atom averages of `f`.
    pub fn new(v: &MatrixWeight, f: &VectorFunction, favg: &[f64], top: AtomId) -> Result<Self> {
        let fl = f.filtration().clone();
        let d = f.d();
        let vavg = v.averages();
        let (root, inv_root) = vavg[top.index()]
            .sqrt_pair(DEFAULT_COND_CAP)
            .map_err(|e| Error::NonPdAverage {
                atom: fl.label(top).to_string(),
                source: Box::new(e),
            })?;
        let range = fl.subtree(top);
        let base = range.start;
        let n = range.len();

        // ⟨‖f̃‖⟩ bottom-up with f̃ = ⟨V⟩_I^{1/2} f.
        let mut mass = vec![0.0; n];
        let mut tmp = vec![0.0; d];
        for i in range.clone().rev() {
            let a = AtomId(i);
            mass[i - base] = if fl.is_leaf(a) {
                root.as_matrix().apply_into(f.value(fl.leaf_range(a).start), &mut tmp);
                tmp.iter().map(|x| x * x).sum::<f64>().sqrt() * fl.measure(a)
            } else {
                csum(fl.children(a).iter().map(|c| mass[c.index() - base]))
            };
        }
        let means: Vec<f64> = mass
            .iter()
            .enumerate()
            .map(|(k, m)| m / fl.measure(AtomId(base + k)))
            .collect();

        // Accumulated squared differences, top-down.
        let mut accumulated = vec![0.0; n];
        let mut delta = vec![0.0; d];
        for i in range.clone().skip(1) {
            let a = AtomId(i);
            let p = fl.parent(a).expect("non-top atom has a parent");
            let step = if fl.children(p).len() < 2 {
                0.0
            } else {
                for k in 0..d {
                    delta[k] = favg[i * d + k] - favg[p.index() * d + k];
                }
                root.quad_form(&delta)
            };
            accumulated[i - base] = accumulated[p.index() - base] + step;
        }

        let traces = range
            .clone()
            .map(|i| vavg[i].congruence(inv_root.as_matrix()).trace())
            .collect();

        Ok(StoppingScan {
            fl,
            top,
            d,
            mean_top: means[0],
            accumulated,
            traces,
            means,
        })
    }

    /// Whether (S1), (S2) or (S3) holds at `j` (strictly below the top).
    pub fn fires(&self, j: AtomId, c: f64) -> bool {
        let k = j.index() - self.top.index();
        let m = self.mean_top;
        self.accumulated[k] > c * c * m * m
            || self.traces[k] > c * self.d as f64
            || self.means[k] > c * m
    }

    /// The maximal atoms strictly below the top at which some condition
    /// holds, in preorder.
    pub fn stopping_set(&self, c: f64) -> Vec<AtomId> {
        let range = self.fl.subtree(self.top);
        let mut out = Vec::new();
        let mut i = range.start + 1;
        while i < range.end {
            let a = AtomId(i);
            if self.fires(a, c) {
                out.push(a);
                i = self.fl.subtree(a).end;
            } else {
                i += 1;
            }
        }
        out
    }

    /// Smallest `c0·2^k` whose stopping set covers at most half the top.
    pub fn select(&self, c0: f64) -> Result<(f64, Vec<AtomId>)> {
        let half = 0.5 * self.fl.measure(self.top);
        let mut c = c0;
        for _ in 0..=MAX_DOUBLINGS {
            let stops = self.stopping_set(c);
            let stopped = csum(stops.iter().map(|&j| self.fl.measure(j)));
            if stopped <= half {
                return Ok((c, stops));
            }
            c *= 2.0;
        }
        Err(Error::Internal(format!(
            "stopping constant diverged at atom `{}`",
            self.fl.label(self.top)
        )))
    }
}

/// Output of the constructive sparse domination.
#[derive(Debug, Clone, Serialize)]
pub struct DominationCertificate {
    #[serde(skip)]
    pub family: SparseFamily,
    /// K(C,d) = (2C³d)^{1/2}·√3 with C the largest stopping constant.
    pub constant_pointwise: f64,
    pub stopping_constant: f64,
    /// max over leaves of S̃^V f / (𝒜^V f + 𝒜^V_mod f), with 0/0 = 0.
    pub max_ratio_pointwise: f64,
    pub witness_leaf: String,
    /// ‖F_I‖_{L¹} / (d ⟨‖⟨V⟩_I^{1/2} f‖⟩_I² |I|) per member (0 when f ≡ 0 on I).
    pub per_term_l1_ratios: Vec<f64>,
    pub stopped_fractions: Vec<f64>,
    pub members: usize,
}

/// Pointwise constant tracked by the construction.
pub fn pointwise_constant(c: f64, d: usize) -> f64 {
    (2.0 * c * c * c * d as f64).sqrt() * 3f64.sqrt()
}

/// Run the stopping-time construction from `i0` and certify the pointwise
/// domination S̃^V f ≤ K(C,d)(𝒜^V f + 𝒜^V_mod f). The function is restricted
/// to `i0` first.
pub fn build_sparse_family(v: &MatrixWeight, f: &VectorFunction, i0: AtomId, c0: f64) -> Result<DominationCertificate> {
    let family = construct_family(v, f, i0, c0)?;
    certify(v, f, family)
}

/// The stopping-time family alone, with per-member constants recorded.
pub fn construct_family(v: &MatrixWeight, f: &VectorFunction, i0: AtomId, c0: f64) -> Result<SparseFamily> {
    if !(c0 >= 1.0 && c0.is_finite()) {
        return Err(Error::InvalidParameter(format!("C0 = {c0} must be ≥ 1")));
    }
    if v.filtration().fingerprint() != f.filtration().fingerprint() {
        return Err(Error::FiltrationMismatch);
    }
    if v.d() != f.d() {
        return Err(Error::DimensionMismatch {
            expected: v.d(),
            found: f.d(),
        });
    }
    let fl = f.filtration().clone();
    let f = localize(f, i0);
    let favg = f.atom_averages();

    let mut members = Vec::new();
    let mut constants = Vec::new();
    let mut frontier = vec![i0];
    while !frontier.is_empty() {
        if members.len() > fl.len() {
            return Err(Error::Internal("stopping recursion exceeded the atom count".into()));
        }
        let level = par::map(&frontier, |&top| -> Result<(f64, Vec<AtomId>)> {
            StoppingScan::new(v, &f, &favg, top)?.select(c0)
        });
        let mut next = Vec::new();
        for (&top, res) in frontier.iter().zip(level) {
            let (c, stops) = res?;
            members.push(top);
            constants.push(c);
            next.extend(stops);
        }
        frontier = next;
    }

    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by_key(|&k| members[k]);
    let sorted: Vec<AtomId> = order.iter().map(|&k| members[k]).collect();
    let mut family = SparseFamily::new(fl, i0, &sorted, CONSTRUCTION_EPS)?;
    family.constants = Some(order.iter().map(|&k| constants[k]).collect());
    Ok(family)
}

/// Verify the pointwise certificate for a constructed family.
pub fn certify(v: &MatrixWeight, f: &VectorFunction, family: SparseFamily) -> Result<DominationCertificate> {
    let fl = family.filtration.clone();
    let i0 = family.root;
    let f = localize(f, i0);
    let d = f.d();
    let c = family
        .max_stopping_constant()
        .ok_or_else(|| Error::InvalidParameter("family carries no stopping constants".into()))?;
    let k_const = pointwise_constant(c, d);

    let s = mod_square_function(v, &f, i0)?;
    let a = sparse_avg_sq(v, &family, &f)?;
    let am = sparse_mod_sq(v, &family, &f)?;

    let mut max_ratio = 0.0_f64;
    let mut witness = fl.leaf(fl.leaf_range(i0).start);
    for slot in fl.leaf_range(i0) {
        let num = s.value(slot);
        let den = a.value(slot) + am.value(slot);
        let ratio = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            f64::INFINITY
        } else {
            num / den
        };
        if ratio > max_ratio {
            max_ratio = ratio;
            witness = fl.leaf(slot);
        }
    }
    if max_ratio > k_const {
        return Err(Error::CertificateViolation {
            leaf: fl.label(witness).to_string(),
            ratio: max_ratio,
            constant: k_const,
        });
    }

    let terms = mod_terms(v, &family, &f, ModIndexing::StoppingChildren)?;
    let per_term_l1_ratios = terms
        .iter()
        .map(|t| {
            let bound = d as f64 * t.mean * t.mean * fl.measure(t.member);
            if bound == 0.0 {
                0.0
            } else {
                t.l1_norm(&fl) / bound
            }
        })
        .collect();

    Ok(DominationCertificate {
        constant_pointwise: k_const,
        stopping_constant: c,
        max_ratio_pointwise: max_ratio,
        witness_leaf: fl.label(witness).to_string(),
        per_term_l1_ratios,
        stopped_fractions: family.stopped_fractions(),
        members: family.len(),
        family,
    })
}

/// Both sides of the sparse-sum maximal bound at member `j`:
/// Σ_{I∈ℱ(J)} ⟨u⟩_I|I| and ⟨M_J u⟩_J |J| = ∫_J M_J u.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SparseSumBound {
    pub sparse_sum: f64,
    pub maximal_mass: f64,
}

pub fn sparse_sum_bound(family: &SparseFamily, j: AtomId, u: &ScalarWeight) -> Result<SparseSumBound> {
    let fl = &family.filtration;
    if u.filtration().fingerprint() != fl.fingerprint() {
        return Err(Error::FiltrationMismatch);
    }
    let avg = scalar_atom_averages(fl, u.leaf_values());
    let sparse_sum = csum(family.members_below(j).iter().map(|&i| avg[i.index()] * fl.measure(i)));
    let m = crate::weights::maximal_localized(u, j);
    let maximal_mass = csum(fl.leaf_range(j).map(|slot| m.value(slot) * fl.measure(fl.leaf(slot))));
    Ok(SparseSumBound {
        sparse_sum,
        maximal_mass,
    })
}
