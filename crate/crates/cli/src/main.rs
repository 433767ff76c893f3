use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qnewton_cli::{cmd_bench, cmd_rate, cmd_run, cmd_solve_poly, init_logging, SolvePolyArgs};

#[derive(Parser)]
#[command(
    name = "qnewton",
    version,
    about = "Saddle-avoiding Newton-type optimizers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization described by a JSON config and emit its trace.
    Run { config: PathBuf },
    /// Find real roots of a polynomial system by multi-start minimization.
    SolvePoly {
        system: PathBuf,
        /// Read complex polynomials and solve for real and imaginary parts.
        #[arg(long)]
        complex: bool,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        /// Bounds applied to every coordinate of a start.
        #[arg(long = "box", num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
        bounds: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run many random starts and summarize terminal points.
    Bench {
        config: PathBuf,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Estimate the convergence order of a trace.
    Rate {
        trace: PathBuf,
        /// Limit point; defaults to the final iterate.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        target: Option<Vec<f64>>,
    },
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let stderr = io::stderr();
    let (mut out, mut err) = (stdout.lock(), stderr.lock());
    let code = match cli.command {
        Command::Run { config } => cmd_run(&config, &mut out, &mut err),
        Command::SolvePoly {
            system,
            complex,
            starts,
            bounds,
            seed,
        } => {
            let mut args = SolvePolyArgs {
                complex,
                starts,
                seed,
                ..SolvePolyArgs::default()
            };
            if let Some(b) = bounds {
                args.bounds = (b[0], b[1]);
            }
            cmd_solve_poly(&system, &args, &mut out, &mut err)
        }
        Command::Bench { config, jobs } => cmd_bench(&config, jobs, &mut out, &mut err),
        Command::Rate { trace, target } => cmd_rate(&trace, target.as_deref(), &mut out, &mut err),
    };
    ExitCode::from(code as u8)
}
