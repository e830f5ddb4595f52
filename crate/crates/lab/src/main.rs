use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use matsq_core::{Filtration, MatrixWeight};
use matsq_lab::config::{ConfigError, ExperimentConfig};
use matsq_lab::experiments::{self, Report, TrialOutcome, TAG_F, TAG_FILTRATION, TAG_U, TAG_V};
use matsq_lab::generate::{self, sub_seed};
use matsq_lab::output::{print_summary, write, write_run, RunSummary};
use matsq_lab::verify::verify_all;
use serde::Serialize;

const EXIT_ASSERTION: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "matsq", version, about = "Matrix-weighted square function experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON); built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the data-parallel core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the filtration of trial 0 as filtration.json.
    GenFiltration(Common),
    /// Write the U and V weights of trial 0 (weight_u.json, weight_v.json).
    GenWeight(Common),
    /// Write the test function of trial 0 as function.json and function.csv.
    GenFunction(Common),
    /// Two-weight square function trials with the full inequality chain.
    RunTheorem1(Common),
    /// One-weight trials and the substitution identity.
    RunCorollary(Common),
    /// Sparse domination trials; families are saved per trial.
    RunSparse(Common),
    /// Iterated-kernel trials; kernels are saved per trial as CSV.
    RunVs(Common),
    /// Every acceptance suite with the configured seed.
    VerifyAll(Common),
    /// Check filtration, weight and function files for consistency.
    Validate {
        #[arg(long)]
        filtration: PathBuf,
        #[arg(long)]
        weight: Vec<PathBuf>,
        #[arg(long)]
        function: Vec<PathBuf>,
    },
}

fn load_config(c: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    if let Some(j) = c.jobs {
        if j == 0 {
            return Err(ConfigError("--jobs must be at least 1".into()).into());
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| ConfigError(e.to_string()))?;
    }
    Ok(cfg)
}

fn finish<R: Report + Serialize>(
    cfg: &ExperimentConfig,
    name: &str,
    outcomes: &[TrialOutcome<R>],
    extras: impl Fn(&R) -> Vec<(String, String)>,
) -> anyhow::Result<RunSummary> {
    let summary = write_run(&cfg.out_dir, name, outcomes, extras)?;
    print_summary(name, outcomes, &summary);
    println!("wrote {}", cfg.out_dir.join(format!("{name}.csv")).display());
    Ok(summary)
}

fn trial0(cfg: &ExperimentConfig) -> anyhow::Result<(Arc<Filtration>, MatrixWeight)> {
    let fl = generate::gen_filtration(&cfg.filtration, cfg.d, sub_seed(cfg.seed, 0, TAG_FILTRATION))?;
    let u = generate::gen_weight(&cfg.u_weight, &fl, sub_seed(cfg.seed, 0, TAG_U))?;
    Ok((fl, u))
}

fn validate(filtration: &Path, weights: &[PathBuf], functions: &[PathBuf]) -> anyhow::Result<()> {
    let fl = Arc::new(generate::load_filtration(filtration)?);
    println!(
        "filtration {}: {} atoms, {} leaves, depth {}, d = {}",
        fl.fingerprint(),
        fl.len(),
        fl.num_leaves(),
        fl.depth(),
        fl.dimension()
    );
    for p in weights {
        let w = generate::load_weight(&fl, p)?;
        let a2 = matsq_core::weights::a2(&w).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?;
        println!("weight {}: ok, [W]_A2 = {}", p.display(), a2.value);
    }
    for p in functions {
        let f = generate::load_function(&fl, p)?;
        println!("function {}: ok, L2 norm {}", p.display(), f.l2_norm());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::GenFiltration(c) => {
            let cfg = load_config(&c)?;
            let (fl, _) = trial0(&cfg)?;
            let path = cfg.out_dir.join("filtration.json");
            write(&path, fl.to_json())?;
            println!("wrote {} ({} leaves)", path.display(), fl.num_leaves());
        }
        Command::GenWeight(c) => {
            let cfg = load_config(&c)?;
            let (fl, u) = trial0(&cfg)?;
            let v = generate::gen_v_weight(&cfg.v_weight, &u, sub_seed(cfg.seed, 0, TAG_V))?;
            write(&cfg.out_dir.join("filtration.json"), fl.to_json())?;
            write(&cfg.out_dir.join("weight_u.json"), u.to_json())?;
            write(&cfg.out_dir.join("weight_v.json"), v.to_json())?;
            println!("wrote weights under {}", cfg.out_dir.display());
        }
        Command::GenFunction(c) => {
            let cfg = load_config(&c)?;
            let (fl, _) = trial0(&cfg)?;
            let f = generate::gen_function(&cfg.function, &fl, sub_seed(cfg.seed, 0, TAG_F))?;
            write(&cfg.out_dir.join("filtration.json"), fl.to_json())?;
            write(&cfg.out_dir.join("function.json"), f.to_json())?;
            write(&cfg.out_dir.join("function.csv"), f.to_csv())?;
            println!("wrote function under {}", cfg.out_dir.display());
        }
        Command::RunTheorem1(c) => {
            let cfg = load_config(&c)?;
            return Ok(finish(&cfg, "theorem1", &experiments::run_theorem1(&cfg)?, |_| vec![])?.ok());
        }
        Command::RunCorollary(c) => {
            let cfg = load_config(&c)?;
            return Ok(finish(&cfg, "corollary", &experiments::run_corollary(&cfg)?, |_| vec![])?.ok());
        }
        Command::RunSparse(c) => {
            let cfg = load_config(&c)?;
            let out = experiments::run_sparse(&cfg)?;
            let summary = finish(&cfg, "sparse", &out, |r| {
                r.family.iter().map(|f| ("family.json".to_string(), f.to_json())).collect()
            })?;
            let unsparse = out.iter().filter_map(|o| o.report.as_ref()).filter(|r| !r.audit_sparse).count();
            println!("audit at eps = {}: {unsparse} families not sparse", cfg.audit_eps);
            return Ok(summary.ok() && unsparse == 0);
        }
        Command::RunVs(c) => {
            let cfg = load_config(&c)?;
            let out = experiments::run_vs(&cfg)?;
            return Ok(finish(&cfg, "vs", &out, |r| {
                r.kernel.iter().map(|k| ("kernel.csv".to_string(), k.to_csv())).collect()
            })?
            .ok());
        }
        Command::VerifyAll(c) => {
            let cfg = load_config(&c)?;
            let report = verify_all(&cfg, true)?;
            print!("{}", report.summary_table());
            println!("wrote {}", cfg.out_dir.join("aggregate.csv").display());
            return Ok(report.passed());
        }
        Command::Validate {
            filtration,
            weight,
            function,
        } => validate(&filtration, &weight, &function)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
