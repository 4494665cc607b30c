//! Command-line front end for the `qmarkov` library.

pub mod commands;
pub mod model;
pub mod report;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use commands::{MonteCarlo, ObservableChoice, Output, PauliName};
use model::load_model;

#[derive(Debug, Parser)]
#[command(name = "qmarkov", version, about = "Parameter estimation for quantum Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the JSON report, or the CSV table for grid and curve commands, to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Plain output: no ANSI colors on the diagnostic stream.
    #[arg(long, global = true)]
    pub plain: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model file (JSON).
    pub model: PathBuf,
    /// Set the working point to theta0 = arccos(C), overriding the file.
    #[arg(long, value_name = "C", allow_negative_numbers = true)]
    pub cos_theta0: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ObservableArgs {
    /// Pauli observable measured on each outgoing atom.
    #[arg(long, value_enum, conflicts_with_all = ["nx", "ny", "nz"])]
    pub observable: Option<PauliName>,
    /// Bloch direction, x component (missing components are 0).
    #[arg(long, allow_negative_numbers = true)]
    pub nx: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub ny: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub nz: Option<f64>,
}

impl ObservableArgs {
    /// σx unless a Pauli name or a direction is given.
    pub fn choice(&self) -> ObservableChoice {
        match (self.observable, self.nx, self.ny, self.nz) {
            (Some(p), ..) => ObservableChoice::Pauli(p),
            (None, None, None, None) => ObservableChoice::Pauli(PauliName::X),
            (None, x, y, z) => ObservableChoice::Direction([x.unwrap_or(0.0), y.unwrap_or(0.0), z.unwrap_or(0.0)]),
        }
    }
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    /// Master seed; trajectory i uses stream i of this seed.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Atoms per trajectory.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub trajectories: usize,
    /// Local parameter: the chain runs at theta0 + u/sqrt(n).
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub u: f64,
}

impl From<&MonteCarloArgs> for MonteCarlo {
    fn from(a: &MonteCarloArgs) -> Self {
        MonteCarlo {
            seed: a.seed,
            n: a.n,
            trajectories: a.trajectories,
            u: a.u,
        }
    }
}

#[derive(Debug, Args)]
pub struct PairArgs {
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub u: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub v: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Spectrum of the transition map, mixing and the stationary state.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Quantum Fisher information per atom of the output state.
    Qfi {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Drift, asymptotic variance and classical Fisher information of one observable.
    Cfi {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        observable: ObservableArgs,
    },
    /// Classical Fisher information over Bloch directions, as a CSV surface.
    ScanObservables {
        #[command(flatten)]
        model: ModelArgs,
        /// Points per axis of the (n_y, n_z) grid.
        #[arg(long, default_value_t = 41)]
        n: usize,
    },
    /// Time averages of the measured observable along simulated trajectories.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        observable: ObservableArgs,
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
    /// Mean square error of the estimator that inverts the stationary mean.
    Estimate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        observable: ObservableArgs,
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
    /// Normal-law check of the fluctuations of the time average.
    Clt {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        observable: ObservableArgs,
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
    /// Overlaps of output states at local parameters u and v against their Gaussian limit.
    Lan {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pair: PairArgs,
        /// A single chain length instead of the default table.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Finite-n quantum Fisher information F(n) as a CSV curve.
    QfiCurve {
        #[command(flatten)]
        model: ModelArgs,
        /// Largest chain length.
        #[arg(long, default_value_t = 12)]
        n: usize,
    },
    /// Overlaps and reduced dynamics at coupling u/n against their unitary limits.
    Nonergodic {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pair: PairArgs,
        /// A single chain length instead of the default table.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Iterated perturbed maps T(n)^n against their exponential limit.
    PerturbCheck {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pair: PairArgs,
    },
}

impl Command {
    fn model_args(&self) -> &ModelArgs {
        match self {
            Command::Analyze { model }
            | Command::Qfi { model }
            | Command::Cfi { model, .. }
            | Command::ScanObservables { model, .. }
            | Command::Simulate { model, .. }
            | Command::Estimate { model, .. }
            | Command::Clt { model, .. }
            | Command::Lan { model, .. }
            | Command::QfiCurve { model, .. }
            | Command::Nonergodic { model, .. }
            | Command::PerturbCheck { model, .. } => model,
        }
    }
}

/// Loads the model and runs the command.
pub fn dispatch(command: &Command) -> Result<Output> {
    let args = command.model_args();
    let loaded = load_model(&args.model, args.cos_theta0)?;
    let mut output = match command {
        Command::Analyze { .. } => commands::analyze(&loaded)?,
        Command::Qfi { .. } => commands::qfi(&loaded)?,
        Command::Cfi { observable, .. } => commands::cfi(&loaded, observable.choice())?,
        Command::ScanObservables { n, .. } => commands::scan_observables(&loaded, *n)?,
        Command::Simulate { observable, mc, .. } => commands::simulate(&loaded, observable.choice(), mc.into())?,
        Command::Estimate { observable, mc, .. } => commands::estimate(&loaded, observable.choice(), mc.into())?,
        Command::Clt { observable, mc, .. } => commands::clt(&loaded, observable.choice(), mc.into())?,
        Command::Lan { pair, n, .. } => commands::lan(&loaded, pair.u, pair.v, *n)?,
        Command::QfiCurve { n, .. } => commands::qfi_curve(&loaded, *n)?,
        Command::Nonergodic { pair, n, .. } => commands::nonergodic(&loaded, pair.u, pair.v, *n)?,
        Command::PerturbCheck { pair, .. } => commands::perturb_check(&loaded, pair.u, pair.v)?,
    };
    if let Some(c) = args.cos_theta0 {
        if loaded.file.theta0().is_some() {
            output
                .report
                .warn(format!("theta0 from the model file overridden by --cos-theta0 {c}"));
        }
    }
    Ok(output)
}
