//! Single-binary front end: define systems, run normalization experiments,
//! trajectory simulations, resonance-measure studies and desingularization
//! comparisons. Emits CSV/JSON artifacts only; plotting stays outside.
//!
//! Exit codes: 0 success, 2 config/IO, 3 mathematical-hypothesis failure,
//! 4 numerical failure. On error a machine-readable JSON object is printed
//! to stdout.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Hypothesis,
    Numerical,
}

impl ErrorKind {
    fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Hypothesis => 3,
            ErrorKind::Numerical => 4,
        }
    }

    fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "ConfigError",
            ErrorKind::Hypothesis => "HypothesisViolated",
            ErrorKind::Numerical => "NumericalError",
        }
    }
}

impl CliError {
    pub fn config(msg: impl ToString) -> Self {
        CliError {
            kind: ErrorKind::Config,
            message: msg.to_string(),
        }
    }

    pub fn hypothesis(msg: impl ToString) -> Self {
        CliError {
            kind: ErrorKind::Hypothesis,
            message: msg.to_string(),
        }
    }
}

impl From<bmkam::Error> for CliError {
    fn from(e: bmkam::Error) -> Self {
        use bmkam::Error::*;
        let kind = match e {
            HypothesisViolated(_) | NonResonanceViolated(_) | NotInSurvivingSet(_) => {
                ErrorKind::Hypothesis
            }
            DenominatorZero(_) | CrossedCriticalSet(_) | StepTooLarge { .. }
            | SmallDivisor { .. } | LieSeriesDiverges { .. } | CapExceeded { .. }
            | DivergenceDetected(_) => ErrorKind::Numerical,
            OrderMismatch { .. } | InvalidParams(_) | EmptyShrunkDomain | DegenerateMode
            | BadInnerSpec(_) | NotSimple(_) | BranchCrossing(_) => ErrorKind::Config,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "bmkam",
    about = "Hamiltonian dynamics and KAM experiments on b^m-symplectic action-angle charts",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a trajectory and emit CSV plot data.
    Simulate {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the normalization iteration and report surviving tori.
    Kam {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
        /// Enforce the analytic smallness hypotheses instead of warning.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        quiet: bool,
    },
    /// Monte-Carlo survey of the Diophantine surviving set and resonance
    /// zones.
    Resonances {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
        /// Override the seed recorded in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare a simple b^m system against its desingularization.
    Desing {
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: String,
        /// Override the seed recorded in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { config, out, quiet } => {
            let cfg: config::SimulateConfig = config::read_config(&config)?;
            commands::cmd_simulate(&cfg, &out, quiet)
        }
        Command::Kam {
            config,
            out,
            strict,
            quiet,
        } => {
            let cfg: config::KamConfig = config::read_config(&config)?;
            commands::cmd_kam(&cfg, &out, strict, quiet)
        }
        Command::Resonances {
            config,
            out,
            seed,
            quiet,
        } => {
            let cfg: config::ResonancesConfig = config::read_config(&config)?;
            commands::cmd_resonances(&cfg, &out, seed, quiet)
        }
        Command::Desing {
            config,
            out,
            seed,
            quiet,
        } => {
            let cfg: config::DesingConfig = config::read_config(&config)?;
            commands::cmd_desing(&cfg, &out, seed, quiet)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            let doc = serde_json::json!({
                "schema_version": config::SCHEMA_VERSION,
                "error": { "kind": e.kind.name(), "message": e.message },
            });
            println!("{}", serde_json::to_string(&doc).unwrap());
            std::process::exit(e.kind.exit_code());
        }
    }
}
