//! Batch front end for the `gclosure` library.
//!
//! Every subcommand takes its keys from an optional `--config` JSON file and
//! from flags, flags winning. The JSON report it writes carries the merged
//! keys under `inputs`, so a report's `inputs` object is itself a valid config
//! for the same command.
//!
//! Exit status: 0 ok, 2 invalid input, 3 infeasible (including a membership
//! verdict other than `expect`), 4 non-convergence.

pub mod commands;
pub mod params;
pub mod report;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use params::Params;

#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Input(String),
    Infeasible(String),
    NonConvergence(String),
    Io(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::NonConvergence(_) => 4,
            Failure::Io(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "invalid input: {m}"),
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::NonConvergence(m) => write!(f, "not converged: {m}"),
            Failure::Io(m) => write!(f, "i/o: {m}"),
        }
    }
}

impl From<gclosure::Error> for Failure {
    fn from(e: gclosure::Error) -> Self {
        use gclosure::Error as E;
        match e {
            E::Infeasible(m) => Failure::Infeasible(m),
            E::InvalidInput(m) => Failure::Input(m),
            E::NonConvergence { .. } => Failure::NonConvergence(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "gclosure", version, about = "Energy bounds and weak G-closure tools for two-phase composites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON config; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: Params,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimal complementary energy of an elastic/void mixture.
    BoundStress(Common),
    /// Optimal elastic energy of an elastic/rigid mixture.
    BoundStrain(Common),
    /// Classify an (average stress, average strain) pair.
    Membership(Common),
    /// Pair on the bound hyperplane (strain for porous, stress for rigid).
    BoundaryStrain(Common),
    /// Best rank-1..3 laminate for one load.
    LaminateOpt(Common),
    /// Laminate optimum along a ladder of δ values.
    DeltaSweep(Common),
    /// Run the block-inverse convergence chain on a synthetic family.
    VerifyConvergence(Common),
    /// Wiener means and sphere membership for a conducting pair.
    ThermalBounds(Common),
    /// Simple laminate attaining a boundary (current, gradient) pair.
    ThermalLaminate(Common),
    /// Relaxed shield design with an insulating phase.
    Shield(Common),
    /// Temperature field of a shield solution.
    Temperature(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    BoundStress,
    BoundStrain,
    Membership,
    BoundaryStrain,
    LaminateOpt,
    DeltaSweep,
    VerifyConvergence,
    ThermalBounds,
    ThermalLaminate,
    Shield,
    Temperature,
}

pub const KINDS: [Kind; 11] = [
    Kind::BoundStress,
    Kind::BoundStrain,
    Kind::Membership,
    Kind::BoundaryStrain,
    Kind::LaminateOpt,
    Kind::DeltaSweep,
    Kind::VerifyConvergence,
    Kind::ThermalBounds,
    Kind::ThermalLaminate,
    Kind::Shield,
    Kind::Temperature,
];

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::BoundStress => "bound-stress",
            Kind::BoundStrain => "bound-strain",
            Kind::Membership => "membership",
            Kind::BoundaryStrain => "boundary-strain",
            Kind::LaminateOpt => "laminate-opt",
            Kind::DeltaSweep => "delta-sweep",
            Kind::VerifyConvergence => "verify-convergence",
            Kind::ThermalBounds => "thermal-bounds",
            Kind::ThermalLaminate => "thermal-laminate",
            Kind::Shield => "shield",
            Kind::Temperature => "temperature",
        }
    }

    pub fn from_name(s: &str) -> Option<Kind> {
        KINDS.into_iter().find(|k| k.name() == s)
    }

    /// Keys the command reads, besides `schema_version`, `command` and `out`.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Kind::BoundStress => &["lambda", "mu", "f", "stress"],
            Kind::BoundStrain => &["lambda", "mu", "f", "strain"],
            Kind::Membership => &["setting", "lambda", "mu", "f", "stress", "strain", "tol", "expect"],
            Kind::BoundaryStrain => &["setting", "lambda", "mu", "f", "stress", "strain", "perp"],
            Kind::LaminateOpt => &[
                "setting", "lambda", "mu", "f", "stress", "strain", "delta", "rank", "budget",
                "extra_starts", "step_tol",
            ],
            Kind::DeltaSweep => &[
                "setting", "lambda", "mu", "f", "stress", "strain", "deltas", "rank", "budget",
                "extra_starts", "step_tol", "csv",
            ],
            Kind::VerifyConvergence => &[
                "setting", "lambda", "mu", "f", "stress", "strain", "perp", "deltas", "seed", "tol", "csv",
            ],
            Kind::ThermalBounds => &["k1", "k2", "f", "q", "e", "tol", "expect"],
            Kind::ThermalLaminate => &["k1", "k2", "f", "q", "e", "tol"],
            Kind::Shield => &["w", "a", "n1", "n2", "p", "k1", "max_iter", "rel_tol", "window", "csv"],
            Kind::Temperature => &["solution", "csv"],
        }
    }

    /// Rejects keys the command does not read and a mismatched header.
    pub fn check_keys(self, p: &Params) -> Result<(), Failure> {
        if let Some(v) = p.schema_version {
            if v != params::SCHEMA_VERSION {
                return Err(Failure::Input(format!(
                    "schema_version {v} is not supported (expected {})",
                    params::SCHEMA_VERSION
                )));
            }
        }
        if let Some(c) = &p.command {
            if c != self.name() {
                return Err(Failure::Input(format!("config is for `{c}`, not `{}`", self.name())));
            }
        }
        let extra: Vec<String> = p
            .keys()
            .into_iter()
            .filter(|k| !matches!(k.as_str(), "schema_version" | "command" | "out"))
            .filter(|k| !self.keys().contains(&k.as_str()))
            .collect();
        if extra.is_empty() {
            Ok(())
        } else {
            Err(Failure::Input(format!(
                "`{}` does not take {}",
                self.name(),
                extra.iter().map(|k| format!("`{k}`")).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

impl Command {
    pub fn split(self) -> (Kind, Common) {
        match self {
            Command::BoundStress(c) => (Kind::BoundStress, c),
            Command::BoundStrain(c) => (Kind::BoundStrain, c),
            Command::Membership(c) => (Kind::Membership, c),
            Command::BoundaryStrain(c) => (Kind::BoundaryStrain, c),
            Command::LaminateOpt(c) => (Kind::LaminateOpt, c),
            Command::DeltaSweep(c) => (Kind::DeltaSweep, c),
            Command::VerifyConvergence(c) => (Kind::VerifyConvergence, c),
            Command::ThermalBounds(c) => (Kind::ThermalBounds, c),
            Command::ThermalLaminate(c) => (Kind::ThermalLaminate, c),
            Command::Shield(c) => (Kind::Shield, c),
            Command::Temperature(c) => (Kind::Temperature, c),
        }
    }
}

/// Parses, runs and writes the report; returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let (kind, common) = cli.command.split();
    match run_job(kind, &common) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("gclosure {}: {e}", kind.name());
            e.code()
        }
    }
}

fn run_job(kind: Kind, common: &Common) -> Result<(), Failure> {
    let base = match &common.config {
        Some(path) => Params::load(path)?,
        None => Params::default(),
    };
    let mut inputs = base.merged(&common.params);
    kind.check_keys(&inputs)?;
    inputs.schema_version = Some(params::SCHEMA_VERSION);
    inputs.command = Some(kind.name().to_string());
    let outcome = commands::execute(kind, &inputs)?;
    let text = report::render(kind, &inputs, &outcome.result);
    report::emit(kind, &inputs, &text)?;
    for (path, body) in &outcome.files {
        report::write_file(path, body)?;
    }
    match outcome.status {
        Some(f) => Err(f),
        None => Ok(()),
    }
}
