//! The embedding kernel t_{I,J} on a sparse family, the iterated-kernel
//! test on finite measure spaces, and the exact norm
//! of the embedding f ↦ (⟨‖⟨U⟩_I^{-1/2}U^{1/2}‖ |f|⟩_I)_{I∈ℱ} into ℓ²(|I|).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::filtration::AtomId;
use crate::matrix::{op_norm, SymMatrix, DEFAULT_COND_CAP};
use crate::par;
use crate::sparse::SparseFamily;
use crate::sum::csum;
use crate::transforms::ScalarFunction;
use crate::weights::{a_infty_matrix, MatrixWeight};

/// A nonnegative kernel on finitely many weighted points.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelInstance {
    ids: Vec<String>,
    masses: Vec<f64>,
    /// Row-major `k[s * n + t] = k(s, t)`.
    k: Vec<f64>,
}

impl KernelInstance {
    pub fn new(ids: Vec<String>, masses: Vec<f64>, k: Vec<f64>) -> Result<Self> {
        let n = ids.len();
        if masses.len() != n || k.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: k.len(),
            });
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidParameter(format!("mass {m} is not positive")));
        }
        if let Some(x) = k.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(Error::InvalidParameter(format!("kernel entry {x} is not finite and nonnegative")));
        }
        Ok(KernelInstance { ids, masses, k })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.k[s * self.len() + t]
    }

    /// Nonzero entries as `s_id,t_id,mass_s,mass_t,k_st`.
    pub fn to_csv(&self) -> String {
        let n = self.len();
        let mut out = String::from("s_id,t_id,mass_s,mass_t,k_st\n");
        for s in 0..n {
            for t in 0..n {
                let v = self.get(s, t);
                if v != 0.0 {
                    out.push_str(&format!(
                        "{},{},{:e},{:e},{:e}\n",
                        self.ids[s], self.ids[t], self.masses[s], self.masses[t], v
                    ));
                }
            }
        }
        out
    }

    /// The matrix √μ_s (k(s,t)+k(t,s))/2 √μ_t of the symmetrized form.
    fn symmetrized_form(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |s, t| {
            (self.masses[s] * self.masses[t]).sqrt() * 0.5 * (self.get(s, t) + self.get(t, s))
        })
    }
}

fn serialize_extended<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_none()
    }
}

/// Outcome of the iterated-kernel test.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct VSReport {
    /// Smallest C with Σ_s k(s,x)k(s,t)μ(s) ≤ C[k(x,t)+k(t,x)] for all x,t;
    /// `null` in JSON when infinite.
    #[serde(serialize_with = "serialize_extended")]
    pub iterated_constant: f64,
    /// Pair attaining the iterated constant.
    pub witness: Option<(String, String)>,
    /// Top eigenvalue of the symmetrized form on ℓ²(μ).
    pub form_norm: f64,
    pub bound_ok: bool,
    pub points: usize,
}

/// Tolerance added to 2C in the bound check.
pub const VS_SLACK: f64 = 1e-9;

/// Largest eigenvalue of a symmetric dense matrix.
fn top_eigenvalue(m: DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Run the iterated-kernel test by exhaustive scan over point pairs.
pub fn vs_check(kernel: &KernelInstance) -> VSReport {
    let n = kernel.len();
    // Column-major copy so that k(·, x) is contiguous.
    let cols: Vec<f64> = (0..n)
        .flat_map(|x| (0..n).map(move |s| (s, x)))
        .map(|(s, x)| kernel.get(s, x) * kernel.masses[s].sqrt())
        .collect();
    let rows = par::map_range(n, |x| {
        let cx = &cols[x * n..(x + 1) * n];
        let mut best = (0.0_f64, None::<usize>);
        for t in 0..n {
            let ct = &cols[t * n..(t + 1) * n];
            let num = csum(cx.iter().zip(ct).map(|(a, b)| a * b));
            if num == 0.0 {
                continue;
            }
            let den = kernel.get(x, t) + kernel.get(t, x);
            let ratio = if den == 0.0 { f64::INFINITY } else { num / den };
            if ratio > best.0 {
                best = (ratio, Some(t));
                if ratio.is_infinite() {
                    break;
                }
            }
        }
        best
    });
    let mut iterated = 0.0_f64;
    let mut witness = None;
    for (x, (r, t)) in rows.into_iter().enumerate() {
        if r > iterated {
            iterated = r;
            witness = t.map(|t| (kernel.ids[x].clone(), kernel.ids[t].clone()));
        }
    }
    let form_norm = top_eigenvalue(kernel.symmetrized_form()).max(0.0);
    VSReport {
        iterated_constant: iterated,
        witness,
        form_norm,
        bound_ok: form_norm <= 2.0 * iterated + VS_SLACK,
        points: n,
    }
}

fn pd_average(u: &MatrixWeight, atom: AtomId) -> Result<SymMatrix> {
    let avg = u.averages()[atom.index()];
    avg.inv_sqrt(DEFAULT_COND_CAP).map_err(|e| Error::NonPdAverage {
        atom: u.filtration().label(atom).to_string(),
        source: Box::new(e),
    })
}

/// ‖⟨U⟩_J^{-1/2} A ⟨U⟩_J^{-1/2}‖^{1/2} = ‖⟨U⟩_J^{-1/2} A^{1/2}‖ for PSD `A`.
fn relative_norm(inv_sqrt_j: &SymMatrix, a: &SymMatrix) -> f64 {
    a.congruence(inv_sqrt_j.as_matrix()).eig().max().max(0.0).sqrt()
}

/// t_{I,J} = |J|^{-1}‖⟨U⟩_J^{-1/2}⟨U⟩_I^{1/2}‖ for I ⊆ J, else 0.
pub fn t_coeff(u: &MatrixWeight, i: AtomId, j: AtomId) -> Result<f64> {
    let fl = u.filtration();
    if !fl.contains(j, i) {
        return Ok(0.0);
    }
    let inv = pd_average(u, j)?;
    Ok(relative_norm(&inv, &u.averages()[i.index()]) / fl.measure(j))
}

/// The t-kernel on the members of `family`, masses |I|, k(I,J) = t_{I,J}.
pub fn build_embedding_kernel(u: &MatrixWeight, family: &SparseFamily) -> Result<KernelInstance> {
    let fl = family.filtration();
    if u.filtration().fingerprint() != fl.fingerprint() {
        return Err(Error::FiltrationMismatch);
    }
    let members = family.members();
    let n = members.len();
    let avgs = u.averages();
    let invs = par::map(members, |&m| pd_average(u, m))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    // Column J: t_{I,J} for I ∈ ℱ(J).
    let cols = par::map_range(n, |jk| {
        let j = members[jk];
        let below = family.members_below(j);
        let base = family.position(j).expect("member");
        let mj = fl.measure(j);
        below
            .iter()
            .enumerate()
            .map(|(off, &i)| (base + off, relative_norm(&invs[jk], &avgs[i.index()]) / mj))
            .collect::<Vec<_>>()
    });
    let mut k = vec![0.0; n * n];
    for (jk, col) in cols.into_iter().enumerate() {
        for (ik, t) in col {
            k[ik * n + jk] = t;
        }
    }
    KernelInstance::new(
        members.iter().map(|&m| fl.label(m).to_string()).collect(),
        members.iter().map(|&m| fl.measure(m)).collect(),
        k,
    )
}

/// Max over J ⊆ K in ℱ of Σ_{I∈ℱ(J)} t_{I,J}t_{I,K}|I| / (2d·a·t_{J,K}).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct VinSenReport {
    pub max_ratio: f64,
    pub witness: (String, String),
    pub a_inf: f64,
    pub pairs: usize,
    /// Direction-refinement retries performed before reporting.
    pub retries: u32,
}

/// Acceptance threshold on the ratio.
pub const VIN_SEN_TOL: f64 = 1e-6;

/// Check the iterated t-kernel bound against `a_inf` on every nested pair.
pub fn check_vin_sen(u: &MatrixWeight, family: &SparseFamily, a_inf: f64) -> Result<VinSenReport> {
    if !(a_inf.is_finite() && a_inf > 0.0) {
        return Err(Error::InvalidParameter(format!("a_inf = {a_inf} must be positive")));
    }
    let kernel = build_embedding_kernel(u, family)?;
    let fl = family.filtration();
    let members = family.members();
    let n = members.len();
    let scale = 2.0 * u.d() as f64 * a_inf;
    // Row for each J: best over K ⊇ J.
    let rows = par::map_range(n, |jk| {
        let j = members[jk];
        let lo = jk;
        let hi = lo + family.members_below(j).len();
        let mut best = (f64::NEG_INFINITY, jk, 0usize);
        let mut pairs = 0usize;
        for kk in 0..n {
            if !fl.contains(members[kk], j) {
                continue;
            }
            pairs += 1;
            let lhs = csum((lo..hi).map(|ik| kernel.get(ik, jk) * kernel.get(ik, kk) * kernel.masses[ik]));
            let ratio = lhs / (scale * kernel.get(jk, kk));
            if ratio > best.0 {
                best = (ratio, jk, kk);
            }
        }
        (best, pairs)
    });
    let mut best = (f64::NEG_INFINITY, 0, 0);
    let mut pairs = 0;
    for (b, p) in rows {
        pairs += p;
        if b.0 > best.0 {
            best = b;
        }
    }
    Ok(VinSenReport {
        max_ratio: best.0,
        witness: (kernel.ids[best.1].clone(), kernel.ids[best.2].clone()),
        a_inf,
        pairs,
        retries: 0,
    })
}

/// Maximum number of direction-refinement retries.
pub const MAX_REFINEMENTS: u32 = 4;

/// Estimate the A∞ characteristic (eigenvector directions included) and run
/// [`check_vin_sen`]; while the ratio exceeds 1 + tol, double the random
/// directions under a fresh seed and keep the larger estimate.
pub fn check_vin_sen_refined(
    u: &MatrixWeight,
    family: &SparseFamily,
    n_directions: usize,
    seed: u64,
) -> Result<VinSenReport> {
    let mut n = n_directions;
    let mut a = a_infty_matrix(u, n, seed)?.value;
    let mut report = check_vin_sen(u, family, a)?;
    let mut retries = 0;
    while report.max_ratio > 1.0 + VIN_SEN_TOL && retries < MAX_REFINEMENTS {
        retries += 1;
        n *= 2;
        a = a.max(a_infty_matrix(u, n, seed.wrapping_add(retries as u64))?.value);
        report = check_vin_sen(u, family, a)?;
    }
    report.retries = retries;
    Ok(report)
}

/// g_I(L) = ‖⟨U⟩_I^{-1/2} U_L^{1/2}‖ on the leaves of each member, in member
/// order and leaf-slot order.
fn member_profiles(u: &MatrixWeight, family: &SparseFamily) -> Result<Vec<Vec<f64>>> {
    let fl = family.filtration();
    if u.filtration().fingerprint() != fl.fingerprint() {
        return Err(Error::FiltrationMismatch);
    }
    let roots = u.leaf_sqrt();
    par::map(family.members(), |&m| {
        let inv = pd_average(u, m)?;
        Ok(fl
            .leaf_range(m)
            .map(|slot| op_norm(&inv.as_matrix().mul(roots[slot].as_matrix())))
            .collect())
    })
    .into_iter()
    .collect()
}

/// Σ_{I∈ℱ} ⟨g_I |f|⟩_I² |I| for a scalar function `f`.
pub fn embedding_form(u: &MatrixWeight, family: &SparseFamily, f: &ScalarFunction) -> Result<f64> {
    let fl = family.filtration();
    if f.filtration().fingerprint() != fl.fingerprint() {
        return Err(Error::FiltrationMismatch);
    }
    let profiles = member_profiles(u, family)?;
    Ok(csum(family.members().iter().zip(&profiles).map(|(&m, g)| {
        let s = csum(
            fl.leaf_range(m)
                .zip(g)
                .map(|(slot, gi)| gi * f.value(slot).abs() * fl.measure(fl.leaf(slot))),
        );
        s * s / fl.measure(m)
    })))
}

/// Exact norm of the embedding form and an independent power-iteration
/// estimate of the same quantity.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct EmbeddingNorm {
    pub exact: f64,
    pub power_estimate: f64,
}

const POWER_MAX_ITERS: usize = 20_000;
const POWER_TOL: f64 = 1e-15;

/// sup over ‖f‖_{L²} = 1 of [`embedding_form`]: the top eigenvalue of the
/// Gram matrix G = BBᵀ, B_{I,L} = |I|^{-1/2}|L|^{1/2} g_I(L). `trials`
/// seeded positive starts drive the power-iteration cross-check.
pub fn embedding_norm(u: &MatrixWeight, family: &SparseFamily, trials: usize, seed: u64) -> Result<EmbeddingNorm> {
    let fl = family.filtration();
    let profiles = member_profiles(u, family)?;
    let members = family.members();
    let n = members.len();
    // Sparse rows of B over leaf slots.
    let rows: Vec<(usize, Vec<f64>)> = members
        .iter()
        .zip(&profiles)
        .map(|(&m, g)| {
            let w = fl.measure(m).sqrt().recip();
            let r = fl.leaf_range(m);
            let start = r.start;
            (start, r.zip(g).map(|(slot, gi)| w * fl.measure(fl.leaf(slot)).sqrt() * gi).collect())
        })
        .collect();
    let gram_entries = par::map_range(n, |a| {
        let (sa, ra) = &rows[a];
        (0..n)
            .map(|b| {
                let (sb, rb) = &rows[b];
                let lo = (*sa).max(*sb);
                let hi = (sa + ra.len()).min(sb + rb.len());
                if lo >= hi {
                    0.0
                } else {
                    csum((lo..hi).map(|s| ra[s - sa] * rb[s - sb]))
                }
            })
            .collect::<Vec<_>>()
    });
    let gram = DMatrix::from_fn(n, n, |a, b| gram_entries[a][b]);
    let exact = top_eigenvalue(gram.clone()).max(0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..trials.max(1))
        .map(|_| (0..n).map(|_| rng.random_range(0.5..1.5)).collect())
        .collect();
    let power_estimate = par::map(&starts, |x0| power_iteration(&gram, x0))
        .into_iter()
        .fold(0.0_f64, f64::max);
    Ok(EmbeddingNorm { exact, power_estimate })
}

fn power_iteration(g: &DMatrix<f64>, x0: &[f64]) -> f64 {
    let mut x = nalgebra::DVector::from_column_slice(x0);
    x /= x.norm();
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let y = g * &x;
        let next = x.dot(&y);
        let ny = y.norm();
        if ny == 0.0 {
            return 0.0;
        }
        x = y / ny;
        if (next - lambda).abs() <= POWER_TOL * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}
