//! Writing run artefacts: aggregate CSV, per-trial JSON, extra files.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::experiments::{Report, TrialOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub trials: usize,
    pub passed: usize,
    pub failed: usize,
    pub errored: usize,
}

impl RunSummary {
    pub fn ok(&self) -> bool {
        self.failed == 0 && self.errored == 0
    }
}

pub fn summarize<R: Report>(outcomes: &[TrialOutcome<R>]) -> RunSummary {
    let mut s = RunSummary {
        trials: outcomes.len(),
        ..RunSummary::default()
    };
    for o in outcomes {
        if o.error.is_some() {
            s.errored += 1;
        } else if o.passed() {
            s.passed += 1;
        } else {
            s.failed += 1;
        }
    }
    s
}

/// Aggregate CSV, one row per trial; errored trials leave the numeric
/// columns empty.
pub fn csv_bytes<R: Report>(outcomes: &[TrialOutcome<R>]) -> anyhow::Result<Vec<u8>> {
    let header = R::csv_header();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for o in outcomes {
        let mut row = vec![o.trial.to_string()];
        match &o.report {
            Some(r) => {
                row.extend(r.csv_row());
                row.push(String::new());
            }
            None => {
                row.resize(header.len() - 1, String::new());
                row.push(o.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

/// Shortest round-trip text for a float; scientific outside [1e-4, 1e15).
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !x.is_finite() {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Write `<name>.csv`, `trials/<name>_NNNN.json` and any per-trial extras
/// (file name, contents) under `out`.
pub fn write_run<R: Report + Serialize>(
    out: &Path,
    name: &str,
    outcomes: &[TrialOutcome<R>],
    extras: impl Fn(&R) -> Vec<(String, String)>,
) -> anyhow::Result<RunSummary> {
    write(&out.join(format!("{name}.csv")), csv_bytes(outcomes)?)?;
    for o in outcomes {
        let json = serde_json::to_string_pretty(o)?;
        write(&out.join("trials").join(format!("{name}_{:04}.json", o.trial)), json)?;
        if let Some(r) = &o.report {
            for (file, body) in extras(r) {
                write(&out.join("trials").join(format!("{name}_{:04}_{file}", o.trial)), body)?;
            }
        }
    }
    let summary = summarize(outcomes);
    write(
        &out.join(format!("{name}_summary.json")),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn print_summary<R: Report>(name: &str, outcomes: &[TrialOutcome<R>], summary: &RunSummary) {
    println!(
        "{name}: {} trials, {} passed, {} failed, {} errored",
        summary.trials, summary.passed, summary.failed, summary.errored
    );
    for o in outcomes {
        if let Some(e) = &o.error {
            println!("  trial {}: error: {e}", o.trial);
        } else if !o.passed() {
            println!("  trial {}: failed {}", o.trial, o.failed_checks().join(", "));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{Check, Report};

    #[derive(Serialize)]
    struct Dummy(f64);

    impl Report for Dummy {
        fn checks(&self) -> &[Check] {
            &[]
        }
        fn csv_header() -> &'static [&'static str] {
            &["trial", "x", "error"]
        }
        fn csv_row(&self) -> Vec<String> {
            vec![self.0.to_string()]
        }
    }

    #[test]
    fn csv_has_one_row_per_trial() {
        let outcomes = vec![
            TrialOutcome {
                trial: 0,
                report: Some(Dummy(0.5)),
                error: None,
            },
            TrialOutcome {
                trial: 1,
                report: None,
                error: Some("bad, leaf".into()),
            },
        ];
        let text = String::from_utf8(csv_bytes(&outcomes).unwrap()).unwrap();
        assert_eq!(text, "trial,x,error\n0,0.5,\n1,,\"bad, leaf\"\n");
        let s = summarize(&outcomes);
        assert_eq!((s.passed, s.errored, s.ok()), (1, 1, false));
    }

    #[test]
    fn num_round_trips() {
        for x in [0.0, 1.5, -2.25e-17, 3.0e20, 1e-4, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(3.3e-16), "3.3e-16");
        assert_eq!(num(0.5), "0.5");
    }

    #[test]
    fn empty_run_gives_header_only() {
        let text = String::from_utf8(csv_bytes::<Dummy>(&[]).unwrap()).unwrap();
        assert_eq!(text, "trial,x,error\n");
        assert!(summarize::<Dummy>(&[]).ok());
    }
}
