//! Finite atomic filtrations represented as rooted trees of atoms.
//!
//! Atoms are stored in depth-first preorder, so the descendants of any atom
//! form a contiguous index range and the leaves below it form a contiguous
//! range of leaf slots. Every leaf-constant field in the crate is a flat
//! array indexed by leaf slot.
//!
//! A set that persists across generations is one single-child node per
//! generation; the martingale difference over such an atom vanishes.

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::sum::csum;

/// Relative tolerance for the partition check on float-generated trees.
pub const PARTITION_TOL: f64 = 1e-12;

/// Handle to an atom of a particular [`Filtration`]: its preorder index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AtomId(pub(crate) usize);

impl AtomId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub id: String,
    pub rank: u32,
    pub measure: f64,
    pub parent: Option<AtomId>,
    pub children: Vec<AtomId>,
    /// One past the last preorder index of the subtree.
    subtree_end: usize,
    /// Leaf slots covered by this atom.
    leaf_lo: usize,
    leaf_hi: usize,
}

impl Atom {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// A finite atomic filtration localized to its root atom.
#[derive(Debug, Clone)]
pub struct Filtration {
    atoms: Vec<Atom>,
    leaves: Vec<AtomId>,
    index: HashMap<String, AtomId>,
    dimension: usize,
    depth: u32,
    fingerprint: String,
}

impl PartialEq for Filtration {
    fn eq(&self, other: &Self) -> bool {
        self.dimension == other.dimension && self.atoms == other.atoms
    }
}

/// One node of a tree under construction, in preorder.
struct Proto {
    id: String,
    rank: u32,
    measure: f64,
    parent: Option<usize>,
    children: Vec<usize>,
}

impl Filtration {
    /// Complete binary tree of the given depth; children carry half the
    /// parent measure, so all partition sums are exact.
    pub fn build_dyadic(depth: u32, root_measure: f64) -> Result<Self> {
        Self::build_regular(2, depth, root_measure)
    }

    /// Complete `branching`-ary tree with equal splits.
    pub fn build_regular(branching: usize, depth: u32, root_measure: f64) -> Result<Self> {
        if branching == 0 {
            return Err(Error::InvalidParameter("branching must be ≥ 1".into()));
        }
        check_measure(root_measure)?;
        let total = (0..=depth).try_fold(0usize, |acc, r| {
            branching
                .checked_pow(r)
                .and_then(|n| acc.checked_add(n))
        });
        match total {
            Some(n) if n <= 1 << 24 => {}
            _ => return Err(Error::InvalidParameter("tree too large".into())),
        }
        let share = 1.0 / branching as f64;
        let mut protos = Vec::new();
        grow(&mut protos, "0".into(), 0, root_measure, None, &mut |rank, _| {
            if rank >= depth {
                Vec::new()
            } else {
                vec![share; branching]
            }
        });
        Self::assemble(protos, 1)
    }

    /// Seeded non-homogeneous tree. Every non-leaf gets `1..=max_children`
    /// children (so single-child links occur), with child-measure fractions
    /// drawn from a skewed simplex whose minimum fraction is at least
    /// `measure_skew / max_children`. All leaves sit at rank `depth`.
    pub fn build_random(seed: u64, depth: u32, max_children: usize, measure_skew: f64) -> Result<Self> {
        if depth < 1 {
            return Err(Error::InvalidParameter("depth must be ≥ 1".into()));
        }
        if max_children < 1 {
            return Err(Error::InvalidParameter("max_children must be ≥ 1".into()));
        }
        if !(measure_skew > 0.0 && measure_skew < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "measure_skew {measure_skew} outside (0,1)"
            )));
        }
        if (max_children as f64).powi(depth as i32) > (1u64 << 24) as f64 {
            return Err(Error::InvalidParameter("tree too large".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let floor = measure_skew / max_children as f64;
        let mut protos = Vec::new();
        grow(&mut protos, "0".into(), 0, 1.0, None, &mut |rank, _| {
            if rank >= depth {
                return Vec::new();
            }
            let k = rng.random_range(1..=max_children);
            let raw: Vec<f64> = (0..k)
                .map(|_| {
                    let u: f64 = rng.random_range(f64::EPSILON..1.0);
                    let e = -u.ln();
                    e * e
                })
                .collect();
            let total: f64 = raw.iter().sum();
            let free = 1.0 - k as f64 * floor;
            raw.iter().map(|g| floor + free * g / total).collect()
        });
        Self::assemble(protos, 1)
    }

    /// Same tree carrying a different vector dimension.
    pub fn with_dimension(mut self, dimension: usize) -> Result<Self> {
        if dimension == 0 || dimension > crate::matrix::MAX_DIM {
            return Err(Error::InvalidParameter(format!(
                "dimension {dimension} outside 1..={}",
                crate::matrix::MAX_DIM
            )));
        }
        self.dimension = dimension;
        self.fingerprint = fingerprint(&self.to_file());
        Ok(self)
    }

    fn assemble(protos: Vec<Proto>, dimension: usize) -> Result<Self> {
        let n = protos.len();
        let mut atoms: Vec<Atom> = protos
            .into_iter()
            .map(|p| Atom {
                id: p.id,
                rank: p.rank,
                measure: p.measure,
                parent: p.parent.map(AtomId),
                children: p.children.into_iter().map(AtomId).collect(),
                subtree_end: 0,
                leaf_lo: 0,
                leaf_hi: 0,
            })
            .collect();

        // Preorder: subtree ends and leaf ranges by a reverse sweep.
        let mut leaves = Vec::new();
        for i in 0..n {
            if atoms[i].children.is_empty() {
                atoms[i].leaf_lo = leaves.len();
                leaves.push(AtomId(i));
            }
        }
        for i in (0..n).rev() {
            if atoms[i].children.is_empty() {
                atoms[i].subtree_end = i + 1;
                atoms[i].leaf_hi = atoms[i].leaf_lo + 1;
            } else {
                let first = atoms[i].children[0].0;
                let last = atoms[i].children[atoms[i].children.len() - 1].0;
                atoms[i].subtree_end = atoms[last].subtree_end;
                atoms[i].leaf_lo = atoms[first].leaf_lo;
                atoms[i].leaf_hi = atoms[last].leaf_hi;
            }
        }
        let depth = atoms.iter().map(|a| a.rank).max().unwrap_or(0);
        let index = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (a.id.clone(), AtomId(i)))
            .collect();
        let mut f = Filtration {
            atoms,
            leaves,
            index,
            dimension,
            depth,
            fingerprint: String::new(),
        };
        f.validate()?;
        f.fingerprint = fingerprint(&f.to_file());
        Ok(f)
    }

    fn validate(&self) -> Result<()> {
        for a in &self.atoms {
            if !(a.measure > 0.0 && a.measure.is_finite()) {
                return Err(Error::MalformedFiltration {
                    atom: a.id.clone(),
                    reason: format!("measure {} is not positive", a.measure),
                });
            }
            if a.children.is_empty() {
                continue;
            }
            for &c in &a.children {
                if self.atoms[c.0].rank != a.rank + 1 {
                    return Err(Error::MalformedFiltration {
                        atom: self.atoms[c.0].id.clone(),
                        reason: format!("rank {} but parent rank {}", self.atoms[c.0].rank, a.rank),
                    });
                }
            }
            let sum = csum(a.children.iter().map(|&c| self.atoms[c.0].measure));
            if (sum - a.measure).abs() > PARTITION_TOL * a.measure {
                return Err(Error::MalformedFiltration {
                    atom: a.id.clone(),
                    reason: format!("children measures sum to {sum}, parent measure {}", a.measure),
                });
            }
        }
        Ok(())
    }

    #[inline]
    pub fn root(&self) -> AtomId {
        AtomId(0)
    }

    #[inline]
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Maximum rank.
    #[inline]
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Content hash identifying this filtration in companion files.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    #[inline]
    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    #[inline]
    pub fn atom(&self, a: AtomId) -> &Atom {
        &self.atoms[a.0]
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = AtomId> + '_ {
        (0..self.atoms.len()).map(AtomId)
    }

    #[inline]
    pub fn measure(&self, a: AtomId) -> f64 {
        self.atoms[a.0].measure
    }

    #[inline]
    pub fn rank(&self, a: AtomId) -> u32 {
        self.atoms[a.0].rank
    }

    #[inline]
    pub fn parent(&self, a: AtomId) -> Option<AtomId> {
        self.atoms[a.0].parent
    }

    #[inline]
    pub fn children(&self, a: AtomId) -> &[AtomId] {
        &self.atoms[a.0].children
    }

    #[inline]
    pub fn is_leaf(&self, a: AtomId) -> bool {
        self.atoms[a.0].children.is_empty()
    }

    pub fn label(&self, a: AtomId) -> &str {
        &self.atoms[a.0].id
    }

    /// Look up an atom by its string id.
    pub fn atom_by_id(&self, id: &str) -> Result<AtomId> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownAtom(id.to_string()))
    }

    /// Leaves in slot order.
    pub fn leaves(&self) -> &[AtomId] {
        &self.leaves
    }

    /// Leaf in slot `slot`.
    #[inline]
    pub fn leaf(&self, slot: usize) -> AtomId {
        self.leaves[slot]
    }

    /// Leaf slots under `a`.
    #[inline]
    pub fn leaf_range(&self, a: AtomId) -> Range<usize> {
        let at = &self.atoms[a.0];
        at.leaf_lo..at.leaf_hi
    }

    /// Preorder index range of the subtree rooted at `a` (inclusive of `a`).
    #[inline]
    pub fn subtree(&self, a: AtomId) -> Range<usize> {
        a.0..self.atoms[a.0].subtree_end
    }

    /// Whether `inner ⊆ outer` as atoms: set inclusion with `rk inner ≥ rk outer`.
    #[inline]
    pub fn contains(&self, outer: AtomId, inner: AtomId) -> bool {
        self.subtree(outer).contains(&inner.0)
    }

    /// 𝒟(I): all atoms below `a`, inclusive, ordered by rank then id.
    pub fn descendants(&self, a: AtomId) -> Vec<AtomId> {
        let mut out: Vec<AtomId> = self.subtree(a).map(AtomId).collect();
        out.sort_by(|&x, &y| self.order_key(x).cmp(&self.order_key(y)));
        out
    }

    /// Canonical `(rank, id)` ordering key used for tie-breaking.
    pub fn order_key(&self, a: AtomId) -> (u32, &str) {
        (self.atoms[a.0].rank, self.atoms[a.0].id.as_str())
    }

    /// Ancestors of `a` from `a` up to and including `top`, or `None` if
    /// `a` is not below `top`.
    pub fn chain(&self, a: AtomId, top: AtomId) -> Option<Vec<AtomId>> {
        if !self.contains(top, a) {
            return None;
        }
        let mut out = vec![a];
        let mut cur = a;
        while cur != top {
            cur = self.atoms[cur.0].parent?;
            out.push(cur);
        }
        Some(out)
    }

    pub fn to_file(&self) -> FiltrationFile {
        FiltrationFile {
            dimension: self.dimension,
            root: self.atoms[0].id.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomRecord {
                    id: a.id.clone(),
                    parent: a.parent.map(|p| self.atoms[p.0].id.clone()),
                    rank: a.rank,
                    measure: a.measure,
                    children: a.children.iter().map(|c| self.atoms[c.0].id.clone()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("filtration serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FiltrationFile = serde_json::from_str(text)?;
        Self::from_file(file)
    }

    pub fn from_file(file: FiltrationFile) -> Result<Self> {
        if file.dimension == 0 || file.dimension > crate::matrix::MAX_DIM {
            return Err(Error::Format(format!("dimension {} unsupported", file.dimension)));
        }
        let mut by_id: HashMap<&str, &AtomRecord> = HashMap::new();
        for rec in &file.atoms {
            if by_id.insert(rec.id.as_str(), rec).is_some() {
                return Err(Error::MalformedFiltration {
                    atom: rec.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        let root = *by_id.get(file.root.as_str()).ok_or_else(|| Error::MalformedFiltration {
            atom: file.root.clone(),
            reason: "root not listed".into(),
        })?;
        if root.parent.is_some() {
            return Err(Error::MalformedFiltration {
                atom: root.id.clone(),
                reason: "root has a parent".into(),
            });
        }
        for rec in &file.atoms {
            if rec.id != file.root && rec.parent.is_none() {
                return Err(Error::MalformedFiltration {
                    atom: rec.id.clone(),
                    reason: "second parentless atom".into(),
                });
            }
            for c in &rec.children {
                let child = by_id.get(c.as_str()).ok_or_else(|| Error::MalformedFiltration {
                    atom: rec.id.clone(),
                    reason: format!("unknown child `{c}`"),
                })?;
                if child.parent.as_deref() != Some(rec.id.as_str()) {
                    return Err(Error::MalformedFiltration {
                        atom: c.clone(),
                        reason: format!("parent field disagrees with `{}`", rec.id),
                    });
                }
            }
            if let Some(p) = &rec.parent {
                let parent = by_id.get(p.as_str()).ok_or_else(|| Error::MalformedFiltration {
                    atom: rec.id.clone(),
                    reason: format!("unknown parent `{p}`"),
                })?;
                if !parent.children.iter().any(|c| c == &rec.id) {
                    return Err(Error::MalformedFiltration {
                        atom: rec.id.clone(),
                        reason: format!("not listed among children of `{p}`"),
                    });
                }
            }
        }

        // Rebuild preorder from the root; anything unreached is disconnected.
        let mut protos: Vec<Proto> = Vec::with_capacity(file.atoms.len());
        let mut seen: HashSet<&str> = HashSet::new();
        let mut stack: Vec<(&AtomRecord, Option<usize>)> = vec![(root, None)];
        while let Some((rec, parent)) = stack.pop() {
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::MalformedFiltration {
                    atom: rec.id.clone(),
                    reason: "cycle".into(),
                });
            }
            let idx = protos.len();
            protos.push(Proto {
                id: rec.id.clone(),
                rank: rec.rank,
                measure: rec.measure,
                parent,
                children: Vec::new(),
            });
            if let Some(p) = parent {
                protos[p].children.push(idx);
            }
            for c in rec.children.iter().rev() {
                stack.push((by_id[c.as_str()], Some(idx)));
            }
        }
        if protos.len() != file.atoms.len() {
            let orphan = file
                .atoms
                .iter()
                .find(|r| !seen.contains(r.id.as_str()))
                .map(|r| r.id.clone())
                .unwrap_or_default();
            return Err(Error::MalformedFiltration {
                atom: orphan,
                reason: "not reachable from the root".into(),
            });
        }
        Self::assemble(protos, file.dimension)
    }
}

fn check_measure(m: f64) -> Result<()> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("measure {m} must be positive")));
    }
    Ok(())
}

/// Depth-first growth. `split(rank, measure)` returns child fractions; the
/// last child takes the remainder so the partition closes to one rounding.
fn grow(
    out: &mut Vec<Proto>,
    id: String,
    rank: u32,
    measure: f64,
    parent: Option<usize>,
    split: &mut dyn FnMut(u32, f64) -> Vec<f64>,
) {
    let idx = out.len();
    out.push(Proto {
        id: id.clone(),
        rank,
        measure,
        parent,
        children: Vec::new(),
    });
    if let Some(p) = parent {
        out[p].children.push(idx);
    }
    let fractions = split(rank, measure);
    let k = fractions.len();
    let mut used = 0.0;
    for (i, frac) in fractions.into_iter().enumerate() {
        let m = if i + 1 == k { measure - used } else { measure * frac };
        used += m;
        grow(out, format!("{id}.{i}"), rank + 1, m, Some(idx), split);
    }
}

fn fingerprint(file: &FiltrationFile) -> String {
    let canonical = serde_json::to_vec(file).expect("filtration serializes");
    let digest = Sha256::digest(&canonical);
    hex::encode(&digest[..8])
}

/// On-disk filtration record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FiltrationFile {
    pub dimension: usize,
    pub root: String,
    pub atoms: Vec<AtomRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AtomRecord {
    pub id: String,
    pub parent: Option<String>,
    pub rank: u32,
    pub measure: f64,
    pub children: Vec<String>,
}
