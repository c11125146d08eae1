use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use nonlocality_core::comm::PROTOCOL_SCHEMA_VERSION;
use nonlocality_core::corrmodel::PROBLEM_SCHEMA_VERSION;
use nonlocality_core::ghz::CountMode;
use nonlocality_core::lhv::Objective;

mod commands;
mod config;
mod output;

use config::{ConfigFile, FlagOverrides, RunConfig, OUT_DIR_ENV};
use output::{emit, CliError, CliResult, Exit, Outcome};

/// Rectangle bounds, exact local-model oracles and broadcast protocols for
/// multiparty correlation problems.
#[derive(Debug, Parser)]
#[command(name = "nonlocality")]
struct Cli {
    /// TOML config with the same keys as the global flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Largest promise set or rectangle to enumerate.
    #[arg(long, global = true)]
    scan_limit: Option<u128>,

    /// Node budget for the rectangle search.
    #[arg(long, global = true)]
    max_nodes: Option<u64>,

    /// Strategy budget for the local-model solver.
    #[arg(long, global = true)]
    max_strategies: Option<u128>,

    /// Comparison tolerance for probabilities.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    /// Directory for relative output paths.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Efficiency and communication bounds for GHZ problems.
    #[command(subcommand)]
    Bounds(BoundsCmd),
    /// Exact largest monochromatic rectangle.
    Rect {
        /// Problem file or `ghz:<n>,<l>`.
        #[arg(long)]
        problem: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Local hidden-variable models with no-click outcomes.
    #[command(subcommand)]
    Lhv(LhvCmd),
    /// GHZ phase problem.
    #[command(subcommand)]
    Ghz(GhzCmd),
    /// Broadcast protocols.
    #[command(subcommand)]
    Comm(CommCmd),
    /// Check the reference n = 8 and n = 12 values.
    Reproduce {
        #[arg(long)]
        mode: Option<CountMode>,
        /// Additional party counts, checked against 8/n.
        #[arg(long = "n-extra")]
        n_extra: Vec<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Exact rectangle, local-model optimum and bound on one GHZ instance.
    Crosscheck {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: u32,
        #[arg(long, default_value = "avg")]
        objective: Objective,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Same as `bounds sweep`.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
enum BoundsCmd {
    Ghz {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: Option<u32>,
        #[arg(long)]
        mode: Option<CountMode>,
        /// Optimize over l (implied when --l is absent).
        #[arg(long)]
        optimize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    n_min: usize,
    #[arg(long)]
    n_max: usize,
    #[arg(long)]
    mode: Option<CountMode>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum LhvCmd {
    /// Maximal all-click probability over error-free models.
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long, default_value = "avg")]
        objective: Objective,
        /// Certify the optimum in exact rational arithmetic.
        #[arg(long)]
        rational_check: bool,
        /// Include the optimal mixture.
        #[arg(long)]
        distribution: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum GhzCmd {
    /// Output probabilities for one input.
    Prob {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: u32,
        /// Comma-separated input, e.g. `1,3`.
        #[arg(long)]
        x: String,
        /// Single comma-separated output.
        #[arg(long)]
        a: Option<String>,
        /// Also evaluate the state-vector simulation.
        #[arg(long)]
        oracle: bool,
    },
    /// Write the problem file.
    Export {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check normalization and promise consistency of a problem.
    Validate {
        #[arg(long)]
        problem: String,
    },
}

#[derive(Debug, Subcommand)]
enum CommCmd {
    /// Check admissibility and exact reproduction.
    Verify {
        #[arg(long)]
        protocol: PathBuf,
        /// Problem file or `ghz:<n>,<l>`; inferred for GHZ shapes.
        #[arg(long)]
        problem: Option<String>,
        /// Compare distributions as exact rationals.
        #[arg(long)]
        exact: bool,
    },
    /// Build the detector model that selects a conversation up front.
    Transform {
        #[arg(long)]
        protocol: PathBuf,
        #[arg(long)]
        problem: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the broadcast protocol for a GHZ problem.
    GhzProtocol {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        l: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn version() -> String {
    format!(
        "{} (problem schema {PROBLEM_SCHEMA_VERSION}, protocol schema {PROTOCOL_SCHEMA_VERSION})",
        env!("CARGO_PKG_VERSION")
    )
}

fn run(cli: Cli) -> CliResult<Outcome> {
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path).map_err(CliError::usage)?,
        None => ConfigFile::default(),
    };
    let flags = FlagOverrides {
        scan_limit: cli.scan_limit,
        max_nodes: cli.max_nodes,
        max_strategies: cli.max_strategies,
        tolerance: cli.tolerance,
        out_dir: cli.out_dir,
    };
    let env_dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let cfg = RunConfig::resolve(file, flags, env_dir).map_err(CliError::usage)?;
    let paper = |m| cfg.mode_or(m, CountMode::Paper);

    let (outcome, out) = match cli.command {
        Command::Bounds(BoundsCmd::Ghz {
            n,
            l,
            mode,
            optimize,
            out,
        }) => (commands::bounds_ghz(n, l, paper(mode), optimize)?, out),
        Command::Bounds(BoundsCmd::Sweep(a)) | Command::Sweep(a) => {
            (commands::bounds_sweep(a.n_min, a.n_max, paper(a.mode))?, a.out)
        }
        Command::Rect { problem, out } => (commands::rect(&problem, &cfg)?, out),
        Command::Lhv(LhvCmd::Solve {
            problem,
            objective,
            rational_check,
            distribution,
            out,
        }) => (
            commands::lhv_solve(&problem, objective, rational_check, distribution, &cfg)?,
            out,
        ),
        Command::Ghz(GhzCmd::Prob { n, l, x, a, oracle }) => {
            let x = commands::parse_vector(&x)?;
            let a = a.as_deref().map(commands::parse_vector).transpose()?;
            (commands::ghz_prob(n, l, &x, a.as_deref(), oracle)?, None)
        }
        Command::Ghz(GhzCmd::Export { n, l, out }) => (commands::ghz_export(n, l, &cfg.output_path(&out))?, None),
        Command::Ghz(GhzCmd::Validate { problem }) => (commands::validate(&problem, &cfg)?, None),
        Command::Comm(CommCmd::Verify {
            protocol,
            problem,
            exact,
        }) => (commands::comm_verify(&protocol, problem.as_deref(), exact, &cfg)?, None),
        Command::Comm(CommCmd::Transform { protocol, problem, out }) => {
            (commands::comm_transform(&protocol, problem.as_deref(), &cfg)?, out)
        }
        Command::Comm(CommCmd::GhzProtocol { n, l, out }) => {
            (commands::comm_ghz_protocol(n, l, &cfg.output_path(&out))?, None)
        }
        Command::Reproduce { mode, n_extra, json } => (commands::reproduce(paper(mode), &n_extra, json)?, None),
        Command::Crosscheck { n, l, objective, out } => (commands::crosscheck(n, l, objective, &cfg)?, out),
    };
    let out = out.map(|p| cfg.output_path(&p));
    emit(&outcome.text, out.as_deref())?;
    Ok(outcome)
}

fn main() -> ExitCode {
    let version: &'static str = Box::leak(version().into_boxed_str());
    let matches = Cli::command().version(version).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(o) if o.passed => ExitCode::from(Exit::Ok as u8),
        Ok(_) => {
            eprintln!("check failed");
            ExitCode::from(Exit::Assertion as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit as u8)
        }
    }
}
