//! Job parameters: one flat set of keys shared by the config file and the
//! command-line flags (`extra_starts` in a file is `--extra-starts` on the
//! command line).

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use gclosure::bounds::Classification;
use gclosure::tensor::SymTensor2;
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

pub const SCHEMA_VERSION: u32 = 1;

/// Which mixture a mechanical command works on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Elastic phase and void; loads are stresses.
    Porous,
    /// Elastic phase and rigid inclusions; loads are strains.
    Rigid,
}

/// Expected membership verdict; a mismatch exits with status 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
pub enum Expect {
    #[value(name = "Infeasible")]
    Infeasible,
    #[value(name = "Boundary")]
    Boundary,
    #[value(name = "Interior")]
    Interior,
}

impl Expect {
    pub fn matches(self, c: Classification) -> bool {
        matches!(
            (self, c),
            (Expect::Infeasible, Classification::Infeasible)
                | (Expect::Boundary, Classification::Boundary)
                | (Expect::Interior, Classification::Interior)
        )
    }
}

/// Every key a job may carry. Which keys a command accepts is checked
/// separately; everything is optional here so files and flags can be merged.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Schema version of a config file (only 1 exists).
    #[arg(skip)]
    pub schema_version: Option<u32>,
    /// Subcommand a config file was written for; must match the one invoked.
    #[arg(skip)]
    pub command: Option<String>,

    /// Lamé modulus λ of phase 1 (positive).
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Shear modulus μ of phase 1 (positive).
    #[arg(long, allow_hyphen_values = true)]
    pub mu: Option<f64>,
    /// Conductivity of phase 1.
    #[arg(long, allow_hyphen_values = true)]
    pub k1: Option<f64>,
    /// Conductivity of phase 2.
    #[arg(long, allow_hyphen_values = true)]
    pub k2: Option<f64>,
    /// Volume fraction of phase 1.
    #[arg(long, allow_hyphen_values = true)]
    pub f: Option<f64>,
    /// Area budget of the shielding problem.
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<f64>,

    /// Average stress: 6 Mandel components or 9 row-major entries.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub stress: Option<Vec<f64>>,
    /// Average strain: 6 Mandel components or 9 row-major entries.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub strain: Option<Vec<f64>>,
    /// Components along the hyperplane (5 values).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub perp: Option<Vec<f64>>,

    #[arg(long, value_enum)]
    pub setting: Option<Setting>,
    /// Modulus ratio of the surrogate phase 2.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<f64>,
    /// Ladder of δ values (sweeps) or certified slacks (convergence runs).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub deltas: Option<Vec<f64>>,
    /// Laminate rank, 1 to 3.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Energy evaluations per optimization.
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub extra_starts: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub step_tol: Option<f64>,
    /// Relative tolerance (membership) or deviation threshold (convergence).
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub expect: Option<Expect>,

    /// Average current (2 or 3 components).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q: Option<Vec<f64>>,
    /// Average temperature gradient (2 or 3 components).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub e: Option<Vec<f64>>,

    /// Width of the shielding domain.
    #[arg(long, allow_hyphen_values = true)]
    pub w: Option<f64>,
    /// Window height on the right edge.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub n2: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,

    /// Shield report (or bare solution) to read.
    #[arg(long)]
    pub solution: Option<PathBuf>,
    /// JSON report destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV destination (a file, or a directory for grid exports).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn object(p: &Params) -> Map<String, Value> {
    match serde_json::to_value(p) {
        Ok(Value::Object(m)) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => unreachable!("Params serializes to an object"),
    }
}

impl Params {
    /// Keys that are set.
    pub fn keys(&self) -> Vec<String> {
        object(self).into_iter().map(|(k, _)| k).collect()
    }

    /// `self` with every key set in `over` replaced.
    pub fn merged(&self, over: &Params) -> Params {
        let mut base = object(self);
        base.extend(object(over));
        serde_json::from_value(Value::Object(base)).expect("merge of valid params")
    }

    /// The non-null keys only, suitable for writing back as a config file.
    pub fn to_value(&self) -> Value {
        Value::Object(object(self))
    }

    pub fn load(path: &Path) -> Result<Params, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))
    }
}

pub fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T, Failure> {
    v.clone().ok_or_else(|| Failure::Input(format!("missing required key `{key}`")))
}

/// 6 Mandel components, or a 3×3 row-major matrix that must be symmetric.
pub fn tensor(v: &[f64], key: &str) -> Result<SymTensor2, Failure> {
    match v.len() {
        6 => {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Failure::Input(format!("`{key}` has non-finite entries")));
            }
            Ok(SymTensor2::from_mandel([v[0], v[1], v[2], v[3], v[4], v[5]]))
        }
        9 => SymTensor2::from_matrix(&Matrix3::from_row_slice(v))
            .map_err(|e| Failure::Input(format!("`{key}`: {e}"))),
        n => Err(Failure::Input(format!(
            "`{key}` needs 6 Mandel components or 9 matrix entries, got {n}"
        ))),
    }
}

pub fn tensor_key(v: &Option<Vec<f64>>, key: &str) -> Result<SymTensor2, Failure> {
    tensor(&need(v, key)?, key)
}

pub fn perp(v: &Option<Vec<f64>>) -> Result<[f64; 5], Failure> {
    match v {
        None => Ok([0.0; 5]),
        Some(v) => <[f64; 5]>::try_from(v.as_slice())
            .map_err(|_| Failure::Input(format!("`perp` needs 5 components, got {}", v.len()))),
    }
}
