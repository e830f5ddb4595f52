//! Acceptance suite: one PASS/FAIL line per criterion. Runs the default
//! `verify-all` configuration twice, plus once on a single thread.

use std::process::ExitCode;
use std::time::Duration;

use matsq_core::par;
use matsq_lab::config::ExperimentConfig;
use matsq_lab::verify::{verify_all, VerifyReport};

const LEMMA_BUDGET: Duration = Duration::from_secs(60);
const VERIFY_BUDGET: Duration = Duration::from_secs(300);

const TITLES: [&str; 7] = [
    "norm identity ||S~f|| = ||Sf|| (1e-9 relative, <= 60 s)",
    "sparse certificate: half-sparse, pointwise <= K, ||A_mod||^2 <= d||A||^2",
    "iterated kernel: form <= 2C + 1e-9",
    "iterated t-kernel ratio <= 1 + 1e-6, identity <= 1/d",
    "sparse-sum maximal bound <= 2 max-mass + 1e-9",
    "identity-weight Parseval (1e-9 relative)",
    "rotation-power stress: finite ratios, chain inequalities, verify-all <= 5 min",
];

fn run(dir: &std::path::Path) -> VerifyReport {
    let cfg = ExperimentConfig {
        out_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    verify_all(&cfg, true).expect("verify-all runs")
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("tempdir");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    let first = run(&a);
    run(&b);
    let _ = par::sequential(|| run(&c));

    let mut all = true;
    for (k, title) in TITLES.iter().enumerate() {
        let criterion = k as u8 + 1;
        let s = first.suite(criterion).expect("suite present");
        let mut ok = s.passed;
        let mut note = format!("worst {:e} vs {:e}; {} trials; {}", s.worst, s.threshold, s.trials, s.detail);
        if criterion == 1 {
            ok &= s.elapsed <= LEMMA_BUDGET;
            note.push_str(&format!("; {:.1} s", s.elapsed.as_secs_f64()));
        }
        if criterion == 7 {
            ok &= first.elapsed <= VERIFY_BUDGET;
            note.push_str(&format!("; verify-all {:.1} s", first.elapsed.as_secs_f64()));
        }
        println!("criterion {criterion} {}: {title} [{note}]", if ok { "PASS" } else { "FAIL" });
        all &= ok;
    }

    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).expect("artefact written");
    let identical = ["aggregate.csv", "criteria.csv"]
        .iter()
        .all(|f| read(&a, f) == read(&b, f) && read(&a, f) == read(&c, f));
    println!(
        "criterion 8 {}: byte-identical aggregate CSV across repeated and single-threaded runs",
        if identical { "PASS" } else { "FAIL" }
    );
    all &= identical;

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
