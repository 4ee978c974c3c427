use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use adjset::apps::CapacityMode;
use adjset_cli::commands::{self, CliError, CliResult, ReserveDemo, SolverFlags};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Robust control with decision-dependent uncertainty sets.
///
/// Exit codes: 0 ok, 1 verification failed, 2 invalid input, 3 solver
/// failure, 4 unsupported cone (no capable backend), 5 disturbance outside
/// the set.
#[derive(Parser)]
#[command(name = "adjset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolverArgs {
    /// Solver feasibility / gap tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Backend id (`builtin`, or `external` with --bridge-command).
    #[arg(long)]
    backend: Option<String>,
    /// Command of an SDP-capable external backend, called as
    /// `CMD.. program.json result.json`.
    #[arg(long)]
    bridge_command: Option<String>,
}

impl SolverArgs {
    fn flags(&self) -> SolverFlags {
        SolverFlags {
            tol: self.tol,
            backend: self.backend.clone(),
            bridge_command: self.bridge_command.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and print the result JSON.
    Solve {
        problem: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Also write the result JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Certify a result against its problem file.
    Verify {
        result: PathBuf,
        problem: PathBuf,
        #[arg(long, default_value_t = 1000)]
        probes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Constraint violation tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Evaluate a stored policy at a disturbance sequence.
    Evaluate {
        /// Policy file, or a result file with a `policy` entry.
        policy: PathBuf,
        /// Comma-separated disturbance sequence.
        #[arg(
            long,
            allow_hyphen_values = true,
            conflicts_with = "w_file",
            required_unless_present = "w_file"
        )]
        w: Option<String>,
        /// File holding the disturbance sequence (JSON array or numbers).
        #[arg(long)]
        w_file: Option<PathBuf>,
    },
    /// Reproduce the experiment data.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Capacity {
    Symmetric,
    Asymmetric,
    PositiveOnly,
    NegativeOnly,
}

impl From<Capacity> for CapacityMode {
    fn from(c: Capacity) -> Self {
        match c {
            Capacity::Symmetric => CapacityMode::Symmetric,
            Capacity::Asymmetric => CapacityMode::Asymmetric,
            Capacity::PositiveOnly => CapacityMode::PositiveOnly,
            Capacity::NegativeOnly => CapacityMode::NegativeOnly,
        }
    }
}

#[derive(Subcommand)]
enum Demo {
    /// Largest tolerable disturbance sets of the planar system.
    Robustness {
        #[command(flatten)]
        solver: SolverArgs,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reserve capacities and bid curve of the building surrogate.
    Reserve {
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// `hour,price` CSV; defaults to the bundled weekday prices.
        #[arg(long)]
        prices: Option<PathBuf>,
        /// Comma-separated reserve prices.
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "symmetric")]
        capacity: Capacity,
        /// Solve the grid sequentially.
        #[arg(long)]
        sequential: bool,
    },
}

fn run(cli: Cli) -> CliResult<(String, i32)> {
    match cli.command {
        Command::Solve {
            problem,
            solver,
            out,
        } => commands::cmd_solve(&problem, &solver.flags(), out.as_deref()),
        Command::Verify {
            result,
            problem,
            probes,
            seed,
            tol,
        } => commands::cmd_verify(&result, &problem, probes, seed, tol),
        Command::Evaluate { policy, w, w_file } => {
            let text = match (w, w_file) {
                (Some(w), _) => w,
                (None, Some(f)) => std::fs::read_to_string(&f)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", f.display())))?,
                (None, None) => return Err(CliError::Usage("need --w or --w-file".into())),
            };
            commands::cmd_evaluate(&policy, &commands::parse_vector(&text)?)
        }
        Command::Demo { which } => match which {
            Demo::Robustness { solver, out } => {
                commands::cmd_demo_robustness(&solver.flags(), out.as_deref())
            }
            Demo::Reserve {
                solver,
                out,
                prices,
                lambdas,
                capacity,
                sequential,
            } => commands::cmd_demo_reserve(
                &ReserveDemo {
                    prices: prices.as_deref(),
                    lambdas,
                    capacity: capacity.into(),
                    sequential,
                },
                &solver.flags(),
                out.as_deref(),
            ),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                commands::EXIT_INPUT
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok((json, code)) => {
            // A closed pipe downstream is not an error of ours.
            let _ = writeln!(std::io::stdout(), "{json}");
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
