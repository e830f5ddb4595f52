//! Per-trial experiments. Every trial records the quantities it computed and
//! a list of inequality checks; a failed check is an assertion failure.

use std::sync::Arc;

use matsq_core::kernel::{build_embedding_kernel, check_vin_sen_refined, embedding_form, embedding_norm, vs_check};
use matsq_core::matrix::DEFAULT_COND_CAP;
use matsq_core::sparse::{
    build_sparse_family, is_sparse, member_means, mod_terms, sparse_avg_sq, sparse_mod_sq, ModIndexing,
};
use matsq_core::transforms::{mod_square_function, square_function, weighted_l2_norm};
use matsq_core::weights::{a2_two_weight, a_infty_matrix, a_infty_scalar, trace_weight};
use matsq_core::{par, Filtration, KernelInstance, MatrixWeight, SparseFamily, VectorFunction};
use serde::Serialize;

use crate::config::{ConfigError, ExperimentConfig};
use crate::output::num;
use crate::generate::{gen_filtration, gen_function, gen_v_weight, gen_weight, sub_seed};

/// Relative slack on inequality checks: lhs ≤ rhs + SLACK·max(1, |rhs|).
pub const SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

impl Check {
    /// lhs ≤ rhs up to [`SLACK`].
    pub fn le(name: &'static str, lhs: f64, rhs: f64) -> Check {
        let ok = lhs <= rhs + SLACK * rhs.abs().max(1.0);
        Check { name, lhs, rhs, ok }
    }

    /// lhs ≤ rhs with no slack (rhs already is the tolerance).
    pub fn strict(name: &'static str, lhs: f64, rhs: f64) -> Check {
        Check {
            name,
            lhs,
            rhs,
            ok: lhs <= rhs,
        }
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// One trial's generated objects.
#[derive(Debug, Clone)]
pub struct TrialInputs {
    pub filtration: Arc<Filtration>,
    pub u: MatrixWeight,
    pub v: MatrixWeight,
    pub f: VectorFunction,
}

pub const TAG_FILTRATION: u64 = 0;
pub const TAG_U: u64 = 1;
pub const TAG_V: u64 = 2;
pub const TAG_F: u64 = 3;
pub const TAG_DIRECTIONS: u64 = 4;
pub const TAG_POWER: u64 = 5;

pub fn trial_inputs(cfg: &ExperimentConfig, trial: usize) -> anyhow::Result<TrialInputs> {
    let t = trial as u64;
    let filtration = gen_filtration(&cfg.filtration, cfg.d, sub_seed(cfg.seed, t, TAG_FILTRATION))?;
    let u = gen_weight(&cfg.u_weight, &filtration, sub_seed(cfg.seed, t, TAG_U))?;
    let v = gen_v_weight(&cfg.v_weight, &u, sub_seed(cfg.seed, t, TAG_V))?;
    let f = gen_function(&cfg.function, &filtration, sub_seed(cfg.seed, t, TAG_F))?;
    Ok(TrialInputs { filtration, u, v, f })
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome<R> {
    pub trial: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<R>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub trait Report {
    fn checks(&self) -> &[Check];
    fn csv_header() -> &'static [&'static str];
    fn csv_row(&self) -> Vec<String>;
}

impl<R: Report> TrialOutcome<R> {
    pub fn passed(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.checks().iter().all(|c| c.ok))
    }

    pub fn failed_checks(&self) -> Vec<&'static str> {
        self.report
            .as_ref()
            .map(|r| r.checks().iter().filter(|c| !c.ok).map(|c| c.name).collect())
            .unwrap_or_default()
    }
}

/// Run `trials` trials in parallel, sorted by id. Configuration errors abort
/// the whole run; anything else is recorded on its trial.
pub fn run_trials<R: Send>(
    cfg: &ExperimentConfig,
    body: impl Fn(&ExperimentConfig, usize, TrialInputs) -> anyhow::Result<R> + Sync + Send,
) -> anyhow::Result<Vec<TrialOutcome<R>>> {
    let results = par::map_range(cfg.trials, |t| {
        let inputs = match trial_inputs(cfg, t) {
            Ok(i) => i,
            Err(e) if e.downcast_ref::<ConfigError>().is_some() => return Err(e),
            Err(e) => return Ok(failed(t, e)),
        };
        Ok(match body(cfg, t, inputs) {
            Ok(r) => TrialOutcome {
                trial: t,
                report: Some(r),
                error: None,
            },
            Err(e) => failed(t, e),
        })
    });
    results.into_iter().collect()
}

fn failed<R>(trial: usize, e: anyhow::Error) -> TrialOutcome<R> {
    TrialOutcome {
        trial,
        report: None,
        error: Some(format!("{e:#}")),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// ‖S^V g‖ and ‖S̃^V g‖ over the whole tree.
pub fn square_norms(v: &MatrixWeight, g: &VectorFunction) -> anyhow::Result<(f64, f64)> {
    let root = g.filtration().root();
    let s = square_function(v, g, root)?.l2_norm();
    let sm = mod_square_function(v, g, root)?.l2_norm();
    Ok((s, sm))
}

/// ‖S^V(U^{1/2} f)‖ / ([U,V]_{A₂}[U]_{A∞} )^{1/2}‖f‖, 0 when the numerator vanishes.
pub fn theorem_ratio(s_norm: f64, a2: f64, ainf: f64, f_norm: f64) -> f64 {
    if s_norm == 0.0 {
        0.0
    } else {
        s_norm / ((a2 * ainf).sqrt() * f_norm)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremReport {
    pub leaves: usize,
    pub d: usize,
    pub a2: f64,
    pub ainf: f64,
    pub f_norm: f64,
    pub s_norm: f64,
    pub s_mod_norm: f64,
    pub lemma_gap: f64,
    pub ratio: f64,
    pub members: usize,
    pub stopping_constant: f64,
    pub k_pointwise: f64,
    pub cert_ratio: f64,
    /// ‖𝒜^V g‖², ‖𝒜^V_mod g‖² with g = U^{1/2} f.
    pub avg_sq: f64,
    pub mod_sq: f64,
    /// Σ ‖⟨V⟩^{1/2}⟨U⟩^{1/2}‖² n_I² |I| and Σ n_I² |I|, n_I = ⟨‖⟨U⟩_I^{-1/2} g‖⟩_I.
    pub cs_middle: f64,
    pub reduced: f64,
    /// Σ ⟨g_I |f|⟩_I² |I|.
    pub scalar_form: f64,
    pub embedding_exact: f64,
    pub embedding_power: f64,
    pub t_form: f64,
    /// `None` when the iterated constant is infinite.
    pub t_iterated: Option<f64>,
    pub vin_sen: f64,
    pub vin_sen_retries: u32,
    /// [tr Ũ]_{A∞} / [U]_{A∞} estimate on the root; reported, not asserted.
    pub trace_ratio: f64,
    pub chain_bound: f64,
    pub checks: Vec<Check>,
}

impl Report for TheoremReport {
    fn checks(&self) -> &[Check] {
        &self.checks
    }

    fn csv_header() -> &'static [&'static str] {
        &[
            "trial", "ratio", "a2", "ainf", "f_norm", "s_norm", "lemma_gap", "members", "stopping_constant",
            "k_pointwise", "cert_ratio", "avg_sq", "mod_sq", "reduced", "embedding_exact", "t_form", "t_iterated",
            "vin_sen", "trace_ratio", "chain_bound", "checks_ok", "error",
        ]
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            num(self.ratio),
            num(self.a2),
            num(self.ainf),
            num(self.f_norm),
            num(self.s_norm),
            num(self.lemma_gap),
            self.members.to_string(),
            num(self.stopping_constant),
            num(self.k_pointwise),
            num(self.cert_ratio),
            num(self.avg_sq),
            num(self.mod_sq),
            num(self.reduced),
            num(self.embedding_exact),
            num(self.t_form),
            fmt_opt(self.t_iterated),
            num(self.vin_sen),
            num(self.trace_ratio),
            num(self.chain_bound),
            self.checks.iter().all(|c| c.ok).to_string(),
        ]
    }
}

/// Two-weight square function trial for (U, V, f) with every intermediate
/// inequality of the proof chain checked on the instance.
pub fn theorem_trial(
    u: &MatrixWeight,
    v: &MatrixWeight,
    f: &VectorFunction,
    c0: f64,
    n_directions: usize,
    seed: u64,
) -> anyhow::Result<TheoremReport> {
    let fl = f.filtration().clone();
    let d = f.d();
    let root = fl.root();
    let g = f.map_leafwise(&u.leaf_sqrt());
    let (s_norm, s_mod_norm) = square_norms(v, &g)?;
    let lemma_gap = rel_gap(s_norm, s_mod_norm);
    let a2 = a2_two_weight(u, v)?.value;
    let f_norm = f.l2_norm();

    let cert = build_sparse_family(v, &g, root, c0)?;
    let fam = &cert.family;
    let k = cert.constant_pointwise;
    let means = member_means(v, fam, &g)?;
    let avg_sq = matsq_core::sum::csum(fam.members().iter().zip(&means).map(|(&m, x)| x * x * fl.measure(m)));
    let mod_sq = sparse_mod_sq(v, fam, &g)?.l2_norm().powi(2);

    // Cauchy–Schwarz and the two-weight step, member by member.
    let terms = par::map(fam.members(), |&m| -> anyhow::Result<(f64, f64)> {
        let ua = u.average(m);
        let inv = ua.inverse(DEFAULT_COND_CAP)?;
        let coupling = v.average(m).congruence(ua.sqrt()?.as_matrix()).eig().max();
        let n = matsq_core::sum::csum(
            fl.leaf_range(m)
                .map(|s| inv.quad_form(g.value(s)).max(0.0).sqrt() * fl.measure(fl.leaf(s))),
        ) / fl.measure(m);
        Ok((coupling * n * n * fl.measure(m), n * n * fl.measure(m)))
    });
    let terms = terms.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let cs_middle = matsq_core::sum::csum(terms.iter().map(|t| t.0));
    let reduced = matsq_core::sum::csum(terms.iter().map(|t| t.1));

    let scalar_form = embedding_form(u, fam, &f.pointwise_norm())?;
    let emb = embedding_norm(u, fam, 4, seed ^ TAG_POWER)?;
    let kernel = build_embedding_kernel(u, fam)?;
    let vs = vs_check(&kernel);
    let vin = check_vin_sen_refined(u, fam, n_directions, seed)?;
    let ainf = vin.a_inf;
    let ratio = theorem_ratio(s_norm, a2, ainf, f_norm);
    let trace_ratio = a_infty_scalar(&trace_weight(u, root)?).value / ainf;
    let dd = d as f64;
    let chain_bound = k * (1.0 + dd.sqrt()) * (a2 * emb.exact).sqrt() * f_norm;

    let mut checks = vec![
        Check::strict("lemma_norm_identity", lemma_gap, SLACK),
        Check::strict("pointwise_domination", cert.max_ratio_pointwise, k),
        Check::strict("half_sparse", f64::from(u8::from(!is_sparse(fam, 0.5).sparse)), 0.0),
        Check::le("mod_vs_avg", mod_sq, dd * avg_sq),
        Check::le("transfer_norms", s_mod_norm, k * (avg_sq.sqrt() + mod_sq.sqrt())),
        Check::le("cauchy_schwarz", avg_sq, cs_middle),
        Check::le("two_weight_step", cs_middle, a2 * reduced),
        Check::le("pointwise_reduction", reduced, scalar_form),
        Check::le("embedding_bound", scalar_form, emb.exact * f_norm * f_norm),
        Check::le("power_below_exact", emb.power_estimate, emb.exact),
        Check::le("gram_vs_kernel", emb.exact, 2.0 * dd * vs.form_norm),
        Check::strict("vin_sen", vin.max_ratio, 1.0 + matsq_core::kernel::VIN_SEN_TOL),
        Check::le("theorem_chain", s_norm, chain_bound),
    ];
    if vs.iterated_constant.is_finite() {
        checks.push(Check::le("kernel_form", vs.form_norm, 2.0 * vs.iterated_constant));
        checks.push(Check::le(
            "iterated_vs_ainf",
            vs.iterated_constant,
            2.0 * dd * ainf * vin.max_ratio,
        ));
    }
    Ok(TheoremReport {
        leaves: fl.num_leaves(),
        d,
        a2,
        ainf,
        f_norm,
        s_norm,
        s_mod_norm,
        lemma_gap,
        ratio,
        members: fam.len(),
        stopping_constant: cert.stopping_constant,
        k_pointwise: k,
        cert_ratio: cert.max_ratio_pointwise,
        avg_sq,
        mod_sq,
        cs_middle,
        reduced,
        scalar_form,
        embedding_exact: emb.exact,
        embedding_power: emb.power_estimate,
        t_form: vs.form_norm,
        t_iterated: vs.iterated_constant.is_finite().then_some(vs.iterated_constant),
        vin_sen: vin.max_ratio,
        vin_sen_retries: vin.retries,
        trace_ratio,
        chain_bound,
        checks,
    })
}

pub fn run_theorem1(cfg: &ExperimentConfig) -> anyhow::Result<Vec<TrialOutcome<TheoremReport>>> {
    run_trials(cfg, |cfg, t, i| {
        theorem_trial(&i.u, &i.v, &i.f, cfg.c0, cfg.n_directions, sub_seed(cfg.seed, t as u64, TAG_DIRECTIONS))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CorollaryReport {
    /// [W]_{A₂} and the lower estimate of [W⁻¹]_{A∞}.
    pub a2: f64,
    pub ainf_inverse: f64,
    pub f_norm_w: f64,
    pub s_norm: f64,
    pub ratio: f64,
    pub substituted_ratio: f64,
    pub substitution_gap: f64,
    pub checks: Vec<Check>,
}

impl Report for CorollaryReport {
    fn checks(&self) -> &[Check] {
        &self.checks
    }

    fn csv_header() -> &'static [&'static str] {
        &[
            "trial", "ratio", "a2", "ainf", "f_norm", "s_norm", "substituted_ratio", "substitution_gap", "checks_ok",
            "error",
        ]
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            num(self.ratio),
            num(self.a2),
            num(self.ainf_inverse),
            num(self.f_norm_w),
            num(self.s_norm),
            num(self.substituted_ratio),
            num(self.substitution_gap),
            self.checks.iter().all(|c| c.ok).to_string(),
        ]
    }
}

/// One-weight ratio ‖S^W f‖ / ([W]_{A₂}[W⁻¹]_{A∞})^{1/2}‖f‖_{L²(W)}, and the
/// same number through the two-weight form with V = W, U = W⁻¹, W^{1/2}f.
pub fn corollary_trial(
    w: &MatrixWeight,
    f: &VectorFunction,
    n_directions: usize,
    seed: u64,
) -> anyhow::Result<CorollaryReport> {
    let root = f.filtration().root();
    let s_norm = square_function(w, f, root)?.l2_norm();
    let a2 = matsq_core::weights::a2(w)?.value;
    let w_inv = w.invert_leaves()?;
    let ainf_inverse = a_infty_matrix(&w_inv, n_directions, seed)?.value;
    let f_norm_w = weighted_l2_norm(w, f)?;
    let ratio = theorem_ratio(s_norm, a2, ainf_inverse, f_norm_w);

    let h = f.map_leafwise(&w.leaf_sqrt());
    let g = h.map_leafwise(&w_inv.leaf_sqrt());
    let s2 = square_function(w, &g, root)?.l2_norm();
    let a2_two = a2_two_weight(&w_inv, w)?.value;
    let substituted_ratio = theorem_ratio(s2, a2_two, ainf_inverse, h.l2_norm());
    // The ratio is scale-free; a floor of 1 keeps rounding-level ratios
    // (constant f, where S f is noise) from producing 0/0-type gaps.
    let substitution_gap = (ratio - substituted_ratio).abs() / ratio.abs().max(substituted_ratio.abs()).max(1.0);
    Ok(CorollaryReport {
        a2,
        ainf_inverse,
        f_norm_w,
        s_norm,
        ratio,
        substituted_ratio,
        substitution_gap,
        checks: vec![
            Check::strict("substitution", substitution_gap, SLACK),
            Check::strict("finite_ratio", f64::from(u8::from(!ratio.is_finite())), 0.0),
        ],
    })
}

pub fn run_corollary(cfg: &ExperimentConfig) -> anyhow::Result<Vec<TrialOutcome<CorollaryReport>>> {
    run_trials(cfg, |cfg, t, i| {
        corollary_trial(&i.u, &i.f, cfg.n_directions, sub_seed(cfg.seed, t as u64, TAG_DIRECTIONS))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SparseReport {
    pub members: usize,
    pub stopping_constant: f64,
    pub k_pointwise: f64,
    pub cert_ratio: f64,
    pub max_l1_ratio: f64,
    pub max_stopped_fraction: f64,
    pub audit_eps: f64,
    pub audit_sparse: bool,
    pub avg_sq: f64,
    pub mod_sq: f64,
    #[serde(skip)]
    pub family: Option<SparseFamily>,
    pub checks: Vec<Check>,
}

impl Report for SparseReport {
    fn checks(&self) -> &[Check] {
        &self.checks
    }

    fn csv_header() -> &'static [&'static str] {
        &[
            "trial", "members", "stopping_constant", "k_pointwise", "cert_ratio", "max_l1_ratio",
            "max_stopped_fraction", "audit_sparse", "avg_sq", "mod_sq", "checks_ok", "error",
        ]
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            self.members.to_string(),
            num(self.stopping_constant),
            num(self.k_pointwise),
            num(self.cert_ratio),
            num(self.max_l1_ratio),
            num(self.max_stopped_fraction),
            self.audit_sparse.to_string(),
            num(self.avg_sq),
            num(self.mod_sq),
            self.checks.iter().all(|c| c.ok).to_string(),
        ]
    }
}

/// Sparse domination of S^V f from the root, audited at `audit_eps`.
pub fn sparse_trial(v: &MatrixWeight, f: &VectorFunction, c0: f64, audit_eps: f64) -> anyhow::Result<SparseReport> {
    let fl = f.filtration();
    let cert = build_sparse_family(v, f, fl.root(), c0)?;
    let fam = &cert.family;
    let means = member_means(v, fam, f)?;
    let avg_sq = matsq_core::sum::csum(fam.members().iter().zip(&means).map(|(&m, x)| x * x * fl.measure(m)));
    let mod_sq = sparse_mod_sq(v, fam, f)?.l2_norm().powi(2);
    let audit = is_sparse(fam, audit_eps);
    let max_l1_ratio = cert.per_term_l1_ratios.iter().copied().fold(0.0, f64::max);
    let max_stopped_fraction = cert.stopped_fractions.iter().copied().fold(0.0, f64::max);
    // Second routes: pointwise square integrals against per-term masses.
    let avg_pointwise = sparse_avg_sq(v, fam, f)?.l2_norm().powi(2);
    let mod_terms_total =
        matsq_core::sum::csum(mod_terms(v, fam, f, ModIndexing::StoppingChildren)?.iter().map(|t| t.l1_norm(fl)));
    let checks = vec![
        Check::strict("avg_two_routes", rel_gap(avg_sq, avg_pointwise), SLACK),
        Check::strict("mod_two_routes", rel_gap(mod_sq, mod_terms_total), SLACK),
        Check::strict("half_sparse", max_stopped_fraction, 0.5),
        Check::strict("pointwise_domination", cert.max_ratio_pointwise, cert.constant_pointwise),
        Check::le("mod_vs_avg", mod_sq, f.d() as f64 * avg_sq),
        Check::le("term_l1", max_l1_ratio, 1.0),
    ];
    Ok(SparseReport {
        members: fam.len(),
        stopping_constant: cert.stopping_constant,
        k_pointwise: cert.constant_pointwise,
        cert_ratio: cert.max_ratio_pointwise,
        max_l1_ratio,
        max_stopped_fraction,
        audit_eps,
        audit_sparse: audit.sparse,
        avg_sq,
        mod_sq,
        family: Some(cert.family),
        checks,
    })
}

pub fn run_sparse(cfg: &ExperimentConfig) -> anyhow::Result<Vec<TrialOutcome<SparseReport>>> {
    run_trials(cfg, |cfg, _, i| sparse_trial(&i.v, &i.f, cfg.c0, cfg.audit_eps))
}

#[derive(Debug, Clone, Serialize)]
pub struct VsReport {
    pub points: usize,
    pub iterated_constant: Option<f64>,
    pub form_norm: f64,
    pub vin_sen: f64,
    pub vin_sen_retries: u32,
    pub a_inf: f64,
    pub embedding_exact: f64,
    pub embedding_power: f64,
    #[serde(skip)]
    pub kernel: Option<KernelInstance>,
    pub checks: Vec<Check>,
}

impl Report for VsReport {
    fn checks(&self) -> &[Check] {
        &self.checks
    }

    fn csv_header() -> &'static [&'static str] {
        &[
            "trial", "points", "iterated_constant", "form_norm", "vin_sen", "a_inf", "embedding_exact",
            "embedding_power", "checks_ok", "error",
        ]
    }

    fn csv_row(&self) -> Vec<String> {
        vec![
            self.points.to_string(),
            fmt_opt(self.iterated_constant),
            num(self.form_norm),
            num(self.vin_sen),
            num(self.a_inf),
            num(self.embedding_exact),
            num(self.embedding_power),
            self.checks.iter().all(|c| c.ok).to_string(),
        ]
    }
}

/// Iterated-kernel test on the t-kernel of the family built for
/// S^V(U^{1/2} f).
pub fn vs_trial(
    u: &MatrixWeight,
    v: &MatrixWeight,
    f: &VectorFunction,
    c0: f64,
    n_directions: usize,
    seed: u64,
) -> anyhow::Result<VsReport> {
    let g = f.map_leafwise(&u.leaf_sqrt());
    let fam = matsq_core::sparse::construct_family(v, &g, f.filtration().root(), c0)?;
    let kernel = build_embedding_kernel(u, &fam)?;
    let vs = vs_check(&kernel);
    let vin = check_vin_sen_refined(u, &fam, n_directions, seed)?;
    let emb = embedding_norm(u, &fam, 4, seed ^ TAG_POWER)?;
    let dd = u.d() as f64;
    let mut checks = vec![
        Check::strict("vin_sen", vin.max_ratio, 1.0 + matsq_core::kernel::VIN_SEN_TOL),
        Check::le("gram_vs_kernel", emb.exact, 2.0 * dd * vs.form_norm),
        Check::le("power_below_exact", emb.power_estimate, emb.exact),
    ];
    if vs.iterated_constant.is_finite() {
        checks.push(Check::strict("kernel_form", f64::from(u8::from(!vs.bound_ok)), 0.0));
    }
    Ok(VsReport {
        points: kernel.len(),
        iterated_constant: vs.iterated_constant.is_finite().then_some(vs.iterated_constant),
        form_norm: vs.form_norm,
        vin_sen: vin.max_ratio,
        vin_sen_retries: vin.retries,
        a_inf: vin.a_inf,
        embedding_exact: emb.exact,
        embedding_power: emb.power_estimate,
        kernel: Some(kernel),
        checks,
    })
}

pub fn run_vs(cfg: &ExperimentConfig) -> anyhow::Result<Vec<TrialOutcome<VsReport>>> {
    run_trials(cfg, |cfg, t, i| {
        vs_trial(&i.u, &i.v, &i.f, cfg.c0, cfg.n_directions, sub_seed(cfg.seed, t as u64, TAG_DIRECTIONS))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FiltrationSpec, FunctionSpec, WeightSpec};

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            filtration: FiltrationSpec::Random {
                depth: 4,
                max_children: 3,
                measure_skew: 0.5,
            },
            trials: 4,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn theorem_trials_pass_all_checks() {
        let out = run_theorem1(&small_cfg()).unwrap();
        assert_eq!(out.len(), 4);
        for (i, o) in out.iter().enumerate() {
            assert_eq!(o.trial, i);
            assert!(o.passed(), "{:?} {:?}", o.error, o.failed_checks());
        }
    }

    #[test]
    fn other_runs_pass() {
        let cfg = small_cfg();
        assert!(run_corollary(&cfg).unwrap().iter().all(|o| o.passed()));
        assert!(run_sparse(&cfg).unwrap().iter().all(|o| o.passed()));
        assert!(run_vs(&cfg).unwrap().iter().all(|o| o.passed()));
    }

    #[test]
    fn identity_weights_constant_function_ratio_zero() {
        let cfg = ExperimentConfig {
            u_weight: WeightSpec::Identity,
            v_weight: WeightSpec::Identity,
            function: FunctionSpec::Constant { value: vec![1.0, -2.0] },
            ..small_cfg()
        };
        for o in run_theorem1(&cfg).unwrap() {
            let r = o.report.unwrap();
            assert!(r.ratio.abs() < 1e-12, "{}", r.ratio);
        }
    }

    #[test]
    fn check_slack_is_relative() {
        assert!(Check::le("x", 1e6 * (1.0 + 5e-10), 1e6).ok);
        assert!(!Check::le("x", 1e6 * (1.0 + 5e-9), 1e6).ok);
        assert!(Check::le("x", 1e-10, 0.0).ok);
        assert!(!Check::strict("x", 1e-10, 0.0).ok);
    }
}
