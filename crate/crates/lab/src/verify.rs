//! The `verify-all` sweep: seven suites, one per acceptance criterion, plus
//! deterministic artefacts for the byte-identity check.

use std::sync::Arc;
use std::time::{Duration, Instant};

use matsq_core::kernel::{build_embedding_kernel, check_vin_sen_refined, vs_check};
use matsq_core::sparse::{construct_family, sparse_sum_bound};
use matsq_core::transforms::expectation;
use matsq_core::{par, Filtration, KernelInstance, MatrixWeight, ScalarWeight, VectorFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, FiltrationSpec, FunctionSpec, WeightSpec};
use crate::experiments::{
    corollary_trial, square_norms, theorem_trial, Check, CorollaryReport, Report, TheoremReport, TrialOutcome, SLACK, TAG_DIRECTIONS, TAG_F, TAG_U,
    TAG_V,
};
use crate::generate::{gen_filtration, gen_function, gen_v_weight, gen_weight, sub_seed};
use crate::output::{num, write};

pub const LEMMA_TRIALS: usize = 1000;
pub const SPARSE_TRIALS: usize = 500;
pub const KERNEL_TRIALS: usize = 1000;
pub const VIN_SEN_TRIALS: usize = 300;
pub const IDENTITY_TRIALS: usize = 100;
pub const SUM_FAMILIES: usize = 40;
pub const SUM_WEIGHTS: usize = 100;
pub const STRESS_EXPONENTS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
pub const STRESS_TRIALS_PER_EXPONENT: usize = 20;
/// Stress trees are redrawn until they have at most this many leaves.
pub const STRESS_MAX_LEAVES: usize = 800;
pub const STRESS_DEPTH: u32 = 8;

/// Suite-level seeds are separated by these stream offsets.
const SUITE_STREAM: u64 = 1 << 20;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub criterion: u8,
    pub name: &'static str,
    pub trials: usize,
    /// Worst observed value of the suite's metric, and the bound it must stay under.
    pub worst: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// One stress-sweep instance: the two-weight trial for (U, U⁻¹) and the
/// one-weight trial for W = U.
#[derive(Debug, Clone)]
pub struct StressRow {
    pub exponent: f64,
    pub theorem: TrialOutcome<TheoremReport>,
    pub corollary: Result<CorollaryReport, String>,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub stress: Vec<StressRow>,
    pub elapsed: Duration,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn suite(&self, criterion: u8) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.criterion == criterion)
    }

    /// `criteria.csv`: one row per suite, no timings.
    pub fn criteria_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["criterion", "name", "trials", "worst", "threshold", "passed", "detail"])?;
        for s in &self.suites {
            w.write_record([
                s.criterion.to_string(),
                s.name.to_string(),
                s.trials.to_string(),
                num(s.worst),
                num(s.threshold),
                s.passed.to_string(),
                s.detail.clone(),
            ])?;
        }
        Ok(w.into_inner()?)
    }

    /// `aggregate.csv`: the stress sweep, one row per trial.
    pub fn aggregate_csv(&self) -> anyhow::Result<Vec<u8>> {
        let mut header = vec!["exponent", "corollary_ratio", "substitution_gap"];
        header.extend(TheoremReport::csv_header());
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header)?;
        for r in &self.stress {
            let mut row = vec![num(r.exponent)];
            match &r.corollary {
                Ok(c) => row.extend([num(c.ratio), num(c.substitution_gap)]),
                Err(_) => row.extend([String::new(), String::new()]),
            }
            row.push(r.theorem.trial.to_string());
            match &r.theorem.report {
                Some(t) => {
                    row.extend(t.csv_row());
                    row.push(String::new());
                }
                None => {
                    row.resize(header.len() - 1, String::new());
                    row.push(r.theorem.error.clone().unwrap_or_default());
                }
            }
            w.write_record(&row)?;
        }
        Ok(w.into_inner()?)
    }

    pub fn summary_table(&self) -> String {
        let mut s = String::from("crit  suite                  trials  worst          bound          result  time\n");
        for r in &self.suites {
            s.push_str(&format!(
                "{:<5} {:<22} {:>6}  {:<13.6e}  {:<13.6e}  {:<6}  {:.1}s\n",
                r.criterion,
                r.name,
                r.trials,
                r.worst,
                r.threshold,
                if r.passed { "PASS" } else { "FAIL" },
                r.elapsed.as_secs_f64()
            ));
        }
        s.push_str(&format!("total {:.1}s\n", self.elapsed.as_secs_f64()));
        s
    }
}

fn timed(f: impl FnOnce() -> anyhow::Result<SuiteResult>) -> anyhow::Result<SuiteResult> {
    let t = Instant::now();
    let mut r = f()?;
    r.elapsed = t.elapsed();
    Ok(r)
}

fn fold_max(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, f64::max)
}

/// Weight generator cycled by trial index; rotation_power only where d = 2.
pub fn weight_kind(i: usize, d: usize) -> WeightSpec {
    match i % 5 {
        0 => WeightSpec::Identity,
        1 => WeightSpec::RandomSpd { cond_max: 1e4 },
        2 if d == 2 => WeightSpec::RotationPower { a: 0.7 },
        2 => WeightSpec::RandomSpd { cond_max: 1e2 },
        3 => WeightSpec::ScalarLift { spread: 2.0 },
        _ => WeightSpec::Inverse {
            of: Box::new(WeightSpec::RandomSpd { cond_max: 1e3 }),
        },
    }
}

pub fn function_kind(i: usize, d: usize) -> FunctionSpec {
    match i % 4 {
        0 => FunctionSpec::Gaussian { scale: 1.0 },
        1 => FunctionSpec::Spiky {
            fraction: 0.1,
            height: 50.0,
        },
        2 => FunctionSpec::Haar,
        _ => FunctionSpec::Constant {
            value: (0..d).map(|k| 1.0 - k as f64 * 0.5).collect(),
        },
    }
}

/// A random tree of rank ≤ `max_depth`, kept under a few thousand leaves.
fn random_tree(rng: &mut ChaCha8Rng, d: usize, max_depth: u32) -> anyhow::Result<Arc<Filtration>> {
    let depth = rng.random_range(1..=max_depth);
    let max_children = if depth <= 5 { rng.random_range(2..=4) } else { rng.random_range(2..=3) };
    let spec = FiltrationSpec::Random {
        depth,
        max_children,
        measure_skew: rng.random_range(0.1..0.9),
    };
    gen_filtration(&spec, d, rng.random())
}

struct Instance {
    u: MatrixWeight,
    v: MatrixWeight,
    f: VectorFunction,
}

fn instance(seed: u64, suite: u64, t: usize, max_depth: u32) -> anyhow::Result<Instance> {
    let s = |tag| sub_seed(seed, suite * SUITE_STREAM + t as u64, tag);
    let mut rng = ChaCha8Rng::seed_from_u64(s(0));
    let d = 1 + t % 4;
    let fl = random_tree(&mut rng, d, max_depth)?;
    let u = gen_weight(&weight_kind(t, d), &fl, s(TAG_U))?;
    let v_spec = if t.is_multiple_of(3) { WeightSpec::Dual } else { weight_kind(t / 5 + 1, d) };
    let v = gen_v_weight(&v_spec, &u, s(TAG_V))?;
    let f = gen_function(&function_kind(t / 2, d), &fl, s(TAG_F))?;
    Ok(Instance { u, v, f })
}

/// Criteria 1 and 6: the S̃/S norm identity and Parseval for V = Id.
fn lemma_and_parseval(cfg: &ExperimentConfig) -> anyhow::Result<(SuiteResult, SuiteResult)> {
    let start = Instant::now();
    let rows = par::map_range(LEMMA_TRIALS, |t| -> anyhow::Result<(f64, f64)> {
        let i = instance(cfg.seed, 1, t, 8)?;
        let (s, sm) = square_norms(&i.v, &i.f)?;
        let lemma = if s > 0.0 {
            (s - sm).abs() / s
        } else if sm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let fl = i.f.filtration();
        let id = MatrixWeight::identity(fl.clone());
        let (s_id, _) = square_norms(&id, &i.f)?;
        let mean = expectation(&i.f, fl.root());
        let f2 = i.f.l2_norm().powi(2);
        let rhs = f2 - mean.iter().map(|x| x * x).sum::<f64>() * fl.measure(fl.root());
        let parseval = if f2 == 0.0 { 0.0 } else { (s_id * s_id - rhs).abs() / f2 };
        Ok((lemma, parseval))
    });
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let elapsed = start.elapsed();
    let lemma = fold_max(rows.iter().map(|r| r.0));
    let parseval = fold_max(rows.iter().map(|r| r.1));
    Ok((
        SuiteResult {
            criterion: 1,
            name: "lemma_norm_identity",
            trials: rows.len(),
            worst: lemma,
            threshold: SLACK,
            passed: lemma <= SLACK,
            detail: "relative gap | ||S~f|| - ||Sf|| |".into(),
            elapsed,
        },
        SuiteResult {
            criterion: 6,
            name: "parseval",
            trials: rows.len(),
            worst: parseval,
            threshold: SLACK,
            passed: parseval <= SLACK,
            detail: "| ||S^Id f||^2 - ||f - <f>||^2 | / ||f||^2".into(),
            elapsed,
        },
    ))
}

/// Criterion 2: half-sparseness, pointwise constant and ‖𝒜_mod‖² ≤ d‖𝒜‖².
fn sparse_suite(cfg: &ExperimentConfig) -> anyhow::Result<SuiteResult> {
    let rows = par::map_range(SPARSE_TRIALS, |t| -> anyhow::Result<(Vec<Check>, f64)> {
        let i = instance(cfg.seed, 2, t, 8)?;
        let r = crate::experiments::sparse_trial(&i.v, &i.f, cfg.c0, 0.5)?;
        Ok((r.checks, r.cert_ratio / r.k_pointwise))
    });
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let failures: Vec<String> = rows
        .iter()
        .enumerate()
        .flat_map(|(t, (c, _))| c.iter().filter(|c| !c.ok).map(move |c| format!("{t}:{}", c.name)))
        .collect();
    Ok(SuiteResult {
        criterion: 2,
        name: "sparse_domination",
        trials: rows.len(),
        worst: fold_max(rows.iter().map(|r| r.1)),
        threshold: 1.0,
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            "worst = max pointwise ratio / K".into()
        } else {
            failures.join(" ")
        },
        elapsed: Duration::ZERO,
    })
}

/// Dense kernel with log-normal entries; its iterated constant is finite.
pub fn random_dense_kernel(rng: &mut ChaCha8Rng) -> KernelInstance {
    let n = rng.random_range(2..=30);
    let ids = (0..n).map(|i| format!("p{i}")).collect();
    let masses = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let k = (0..n * n)
        .map(|_| {
            let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut *rng);
            (1.5 * z).exp()
        })
        .collect();
    KernelInstance::new(ids, masses, k).expect("valid kernel")
}

/// Criterion 3: form ≤ 2C + 1e-9 on kernels with finite iterated constant.
fn kernel_suite(cfg: &ExperimentConfig) -> anyhow::Result<SuiteResult> {
    let rows = par::map_range(KERNEL_TRIALS, |t| -> anyhow::Result<Option<f64>> {
        let kernel = if t % 2 == 0 {
            random_dense_kernel(&mut ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 3 * SUITE_STREAM + t as u64, 0)))
        } else {
            let i = instance(cfg.seed, 3, t, 6)?;
            let g = i.f.map_leafwise(&i.u.leaf_sqrt());
            let fam = construct_family(&i.v, &g, g.filtration().root(), cfg.c0)?;
            build_embedding_kernel(&i.u, &fam)?
        };
        let vs = vs_check(&kernel);
        Ok(vs.iterated_constant.is_finite().then(|| {
            if vs.iterated_constant > 0.0 {
                vs.form_norm / (2.0 * vs.iterated_constant + matsq_core::kernel::VS_SLACK)
            } else {
                // Zero kernel: the bound reads form ≤ 1e-9.
                vs.form_norm / matsq_core::kernel::VS_SLACK
            }
        }))
    });
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let finite: Vec<f64> = rows.iter().flatten().copied().collect();
    let worst = fold_max(finite.iter().copied());
    Ok(SuiteResult {
        criterion: 3,
        name: "iterated_kernel",
        trials: finite.len(),
        worst,
        threshold: 1.0,
        passed: worst <= 1.0 && finite.len() >= KERNEL_TRIALS * 9 / 10,
        detail: format!(
            "worst = form / (2C + 1e-9); {} of {} kernels had finite C",
            finite.len(),
            rows.len()
        ),
        elapsed: Duration::ZERO,
    })
}

/// Criterion 4: the iterated t-kernel bound, and ≤ 1/d for U = Id.
fn vin_sen_suite(cfg: &ExperimentConfig) -> anyhow::Result<SuiteResult> {
    let rows = par::map_range(VIN_SEN_TRIALS + IDENTITY_TRIALS, |t| -> anyhow::Result<(f64, f64)> {
        let seed = sub_seed(cfg.seed, 4 * SUITE_STREAM + t as u64, TAG_DIRECTIONS);
        let mut i = instance(cfg.seed, 4, t, 7)?;
        let identity = t >= VIN_SEN_TRIALS;
        if identity {
            i.u = MatrixWeight::identity(i.f.filtration().clone());
        }
        let g = i.f.map_leafwise(&i.u.leaf_sqrt());
        let fam = construct_family(&i.v, &g, g.filtration().root(), cfg.c0)?;
        let r = check_vin_sen_refined(&i.u, &fam, cfg.n_directions, seed)?;
        let bound = if identity {
            (1.0 / i.u.d() as f64) * (1.0 + SLACK)
        } else {
            1.0 + matsq_core::kernel::VIN_SEN_TOL
        };
        Ok((r.max_ratio, r.max_ratio / bound))
    });
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let worst = fold_max(rows.iter().map(|r| r.1));
    let general = fold_max(rows[..VIN_SEN_TRIALS].iter().map(|r| r.0));
    let ident = fold_max(rows[VIN_SEN_TRIALS..].iter().map(|r| r.0));
    Ok(SuiteResult {
        criterion: 4,
        name: "vin_sen",
        trials: rows.len(),
        worst,
        threshold: 1.0,
        passed: worst <= 1.0,
        detail: format!("worst = ratio / bound; max ratio {general:.6} general, {ident:.6} identity"),
        elapsed: Duration::ZERO,
    })
}

/// Criterion 5: Σ_{I∈ℱ(J)} ⟨u⟩_I|I| ≤ 2∫_J M_J u for every member and many u.
fn sparse_sum_suite(cfg: &ExperimentConfig) -> anyhow::Result<SuiteResult> {
    let rows = par::map_range(SUM_FAMILIES, |t| -> anyhow::Result<(usize, f64)> {
        let i = instance(cfg.seed, 5, t, 8)?;
        let fl = i.f.filtration().clone();
        let fam = construct_family(&i.v, &i.f, fl.root(), cfg.c0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 5 * SUITE_STREAM + t as u64, 9));
        let mut worst = 0.0_f64;
        let mut count = 0;
        for &j in fam.members() {
            for _ in 0..SUM_WEIGHTS {
                let spread = rng.random_range(0.0..3.0);
                let vals = (0..fl.num_leaves()).map(|_| 10f64.powf(rng.random_range(-spread..=spread))).collect();
                let u = ScalarWeight::new(fl.clone(), vals)?;
                let b = sparse_sum_bound(&fam, j, &u)?;
                let bound = 2.0 * b.maximal_mass;
                worst = worst.max(b.sparse_sum / (bound + SLACK * bound.max(1.0)));
                count += 1;
            }
        }
        Ok((count, worst))
    });
    let rows = rows.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let worst = fold_max(rows.iter().map(|r| r.1));
    Ok(SuiteResult {
        criterion: 5,
        name: "sparse_sum",
        trials: rows.iter().map(|r| r.0).sum(),
        worst,
        threshold: 1.0,
        passed: worst <= 1.0,
        detail: "worst = sum / (2 max-mass + slack), every member x 100 weights".into(),
        elapsed: Duration::ZERO,
    })
}

/// Criterion 7: rotation-power sweep at fixed depth with every chain check.
fn stress_suite(cfg: &ExperimentConfig) -> anyhow::Result<(SuiteResult, Vec<StressRow>)> {
    let jobs: Vec<(usize, f64, usize)> = STRESS_EXPONENTS
        .iter()
        .enumerate()
        .flat_map(|(k, &a)| (0..STRESS_TRIALS_PER_EXPONENT).map(move |t| (k, a, t)))
        .collect();
    let stress = par::map(&jobs, |&(k, a, t)| -> anyhow::Result<StressRow> {
        let trial = k * STRESS_TRIALS_PER_EXPONENT + t;
        let s = |tag| sub_seed(cfg.seed, 7 * SUITE_STREAM + trial as u64, tag);
        let spec = FiltrationSpec::Random {
            depth: STRESS_DEPTH,
            max_children: 3,
            measure_skew: 0.5,
        };
        let mut draw = s(0);
        let fl = loop {
            let fl = gen_filtration(&spec, 2, draw)?;
            if fl.num_leaves() <= STRESS_MAX_LEAVES {
                break fl;
            }
            draw = sub_seed(draw, 0, 0);
        };
        let u = gen_weight(&WeightSpec::RotationPower { a }, &fl, s(TAG_U))?;
        let v = u.invert_leaves()?;
        let f = gen_function(&function_kind(t, 2), &fl, s(TAG_F))?;
        let theorem = match theorem_trial(&u, &v, &f, cfg.c0, cfg.n_directions, s(TAG_DIRECTIONS)) {
            Ok(r) => TrialOutcome {
                trial,
                report: Some(r),
                error: None,
            },
            Err(e) => TrialOutcome {
                trial,
                report: None,
                error: Some(format!("{e:#}")),
            },
        };
        let corollary = corollary_trial(&u, &f, cfg.n_directions, s(TAG_DIRECTIONS)).map_err(|e| format!("{e:#}"));
        Ok(StressRow {
            exponent: a,
            theorem,
            corollary,
        })
    });
    let stress = stress.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let mut bad = Vec::new();
    let mut per_a = Vec::new();
    for &a in &STRESS_EXPONENTS {
        let rows = stress.iter().filter(|r| r.exponent == a);
        let ratios = rows.clone().filter_map(|r| r.theorem.report.as_ref().map(|t| t.ratio));
        let one_weight = rows.filter_map(|r| r.corollary.as_ref().ok().map(|c| c.ratio));
        per_a.push(format!("a={a}:{:.4}/{:.4}", fold_max(ratios), fold_max(one_weight)));
    }
    for r in &stress {
        let t = r.theorem.trial;
        match &r.theorem.report {
            None => bad.push(format!("{t}:error")),
            Some(rep) => {
                if !rep.ratio.is_finite() {
                    bad.push(format!("{t}:ratio"));
                }
                bad.extend(rep.checks().iter().filter(|c| !c.ok).map(|c| format!("{t}:{}", c.name)));
            }
        }
        match &r.corollary {
            Err(_) => bad.push(format!("{t}:corollary_error")),
            Ok(c) => bad.extend(c.checks.iter().filter(|c| !c.ok).map(|c| format!("{t}:corollary_{}", c.name))),
        }
    }
    let worst = fold_max(
        stress
            .iter()
            .filter_map(|r| r.theorem.report.as_ref())
            .map(|t| t.s_norm / t.chain_bound),
    );
    Ok((
        SuiteResult {
            criterion: 7,
            name: "rotation_stress",
            trials: stress.len(),
            worst,
            threshold: 1.0,
            passed: bad.is_empty(),
            detail: if bad.is_empty() {
                format!("worst = ||S|| / chain bound; max two-weight/one-weight ratio {}", per_a.join(" "))
            } else {
                bad.join(" ")
            },
            elapsed: Duration::ZERO,
        },
        stress,
    ))
}

/// Run all suites. Artefacts go to `cfg.out_dir` when `write_files` is set.
pub fn verify_all(cfg: &ExperimentConfig, write_files: bool) -> anyhow::Result<VerifyReport> {
    let start = Instant::now();
    let (lemma, parseval) = lemma_and_parseval(cfg)?;
    let mut suites = vec![lemma];
    suites.push(timed(|| sparse_suite(cfg))?);
    suites.push(timed(|| kernel_suite(cfg))?);
    suites.push(timed(|| vin_sen_suite(cfg))?);
    suites.push(timed(|| sparse_sum_suite(cfg))?);
    suites.push(parseval);
    let t = Instant::now();
    let (mut stress_result, stress) = stress_suite(cfg)?;
    stress_result.elapsed = t.elapsed();
    suites.push(stress_result);
    let report = VerifyReport {
        suites,
        stress,
        elapsed: start.elapsed(),
    };
    if write_files {
        let out = &cfg.out_dir;
        write(&out.join("aggregate.csv"), report.aggregate_csv()?)?;
        write(&out.join("criteria.csv"), report.criteria_csv()?)?;
        for r in &report.stress {
            write(
                &out.join("trials").join(format!("stress_{:04}.json", r.theorem.trial)),
                serde_json::to_string_pretty(&r.theorem)?,
            )?;
        }
    }
    Ok(report)
}
