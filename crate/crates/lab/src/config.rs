//! Experiment configuration: the JSON document every subcommand reads.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Raised for anything wrong with the configuration or its referenced files.
/// The CLI maps it to exit code 3.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FiltrationSpec {
    Random {
        depth: u32,
        max_children: usize,
        measure_skew: f64,
    },
    Dyadic {
        depth: u32,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Identity,
    /// Q diag(λ) Qᵀ per leaf, Q Haar-orthogonal, log λ uniform on [0, log cond_max].
    RandomSpd { cond_max: f64 },
    /// d = 2 only: R(θ_L) diag(m_L^a, m_L^{-a}) R(θ_L)ᵀ.
    RotationPower { a: f64 },
    /// w · Id with log₁₀ w uniform on [−spread, spread].
    ScalarLift { spread: f64 },
    /// Leafwise inverse of another generated weight.
    Inverse { of: Box<WeightSpec> },
    /// Leafwise inverse of the U weight of the same trial (V only).
    Dual,
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// Independent N(0, scale²) entries.
    Gaussian { scale: f64 },
    /// Gaussian background with a fraction of leaves multiplied by `height`.
    Spiky { fraction: f64, height: f64 },
    /// e₁ times a mean-zero step across the first child of the root.
    Haar,
    Constant { value: Vec<f64> },
    File { path: PathBuf },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub filtration: FiltrationSpec,
    pub d: usize,
    pub u_weight: WeightSpec,
    pub v_weight: WeightSpec,
    pub function: FunctionSpec,
    pub trials: usize,
    pub c0: f64,
    pub n_directions: usize,
    pub out_dir: PathBuf,
    #[serde(default = "default_audit_eps")]
    pub audit_eps: f64,
}

fn default_audit_eps() -> f64 {
    0.5
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            seed: 20_240_611,
            filtration: FiltrationSpec::Random {
                depth: 6,
                max_children: 3,
                measure_skew: 0.5,
            },
            d: 2,
            u_weight: WeightSpec::RotationPower { a: 0.6 },
            v_weight: WeightSpec::Dual,
            function: FunctionSpec::Spiky {
                fraction: 0.1,
                height: 20.0,
            },
            trials: 100,
            c0: 4.0,
            n_directions: 16,
            out_dir: PathBuf::from("matsq-out"),
            audit_eps: 0.5,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.d == 0 || self.d > matsq_core::matrix::MAX_DIM {
            return Err(bad(format!("d = {} outside 1..=8", self.d)));
        }
        match &self.filtration {
            FiltrationSpec::Random {
                depth,
                max_children,
                measure_skew,
            } => {
                if *depth < 1 || *max_children < 1 || !(*measure_skew > 0.0 && *measure_skew < 1.0) {
                    return Err(bad("random filtration needs depth ≥ 1, max_children ≥ 1, skew in (0,1)"));
                }
            }
            FiltrationSpec::Dyadic { depth } => {
                if *depth > 20 {
                    return Err(bad("dyadic depth above 20"));
                }
            }
            FiltrationSpec::File { path } => require_file(path)?,
        }
        self.check_weight(&self.u_weight, false)?;
        self.check_weight(&self.v_weight, true)?;
        match &self.function {
            FunctionSpec::Gaussian { scale } if !(scale.is_finite() && *scale > 0.0) => {
                return Err(bad("gaussian scale must be positive"))
            }
            FunctionSpec::Spiky { fraction, height }
                if !((0.0..=1.0).contains(fraction) && height.is_finite() && *height > 0.0) =>
            {
                return Err(bad("spiky needs fraction in [0,1] and positive height"))
            }
            FunctionSpec::Constant { value } if value.len() != self.d => {
                return Err(bad(format!("constant function has length {}, d = {}", value.len(), self.d)))
            }
            FunctionSpec::File { path } => require_file(path)?,
            _ => {}
        }
        if !(self.c0.is_finite() && self.c0 >= 1.0) {
            return Err(bad(format!("c0 = {} must be ≥ 1", self.c0)));
        }
        if self.n_directions < 2 * self.d {
            return Err(bad(format!("n_directions {} < 2d", self.n_directions)));
        }
        if !(self.audit_eps > 0.0 && self.audit_eps <= 1.0) {
            return Err(bad(format!("audit_eps {} outside (0,1]", self.audit_eps)));
        }
        Ok(())
    }

    fn check_weight(&self, w: &WeightSpec, is_v: bool) -> anyhow::Result<()> {
        match w {
            WeightSpec::RandomSpd { cond_max } if !(cond_max.is_finite() && *cond_max >= 1.0 && *cond_max <= 1e10) => {
                Err(bad(format!("cond_max {cond_max} outside [1, 1e10]")))
            }
            WeightSpec::RotationPower { a } => {
                if self.d != 2 {
                    Err(bad("rotation_power requires d = 2"))
                } else if !(a.is_finite() && *a >= 0.0 && *a <= 1.0) {
                    Err(bad(format!("rotation_power exponent {a} outside [0,1]")))
                } else {
                    Ok(())
                }
            }
            WeightSpec::ScalarLift { spread } if !(spread.is_finite() && *spread >= 0.0 && *spread <= 4.0) => {
                Err(bad(format!("scalar_lift spread {spread} outside [0,4]")))
            }
            WeightSpec::Inverse { of } => self.check_weight(of, false),
            WeightSpec::Dual if !is_v => Err(bad("`dual` is only valid for v_weight")),
            WeightSpec::File { path } => require_file(path),
            _ => Ok(()),
        }
    }
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(bad(format!("referenced file {} does not exist", path.display())))
    }
}
