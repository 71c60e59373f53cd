use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::LevelFilter;

use ismf::cli::{self, Options};

#[derive(Parser)]
#[command(name = "ismf", version, about = "Advected Landau-Lifshitz solvers and estimate checks")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Tolerance override, e.g. `envelope=1e-2`; repeatable.
    #[arg(long = "tol-override", value_name = "KEY=VAL", global = true)]
    tol_override: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured scheme and check its estimates.
    Run,
    /// Run the cross-product of the sweep lists and tabulate convergence.
    Sweep,
    /// Integrate the flow map and check the gauge witnesses.
    Gauge,
    /// Re-check the reports of an existing run directory.
    Verify { dir: Option<PathBuf> },
}

fn init_logging() {
    let level = match std::env::var("ISMF_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Error,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Info,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
}

fn main() -> ExitCode {
    init_logging();
    let args = Args::parse();
    if let Some(n) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let opts = Options { config: args.config, out: args.out, tol_overrides: args.tol_override };
    let mut stdout = std::io::stdout().lock();
    let code = match args.command {
        Command::Run => cli::cmd_run(&opts, &mut stdout),
        Command::Sweep => cli::cmd_sweep(&opts, &mut stdout),
        Command::Gauge => cli::cmd_gauge(&opts, &mut stdout),
        Command::Verify { dir } => cli::cmd_verify(&opts, dir.as_deref(), &mut stdout),
    };
    ExitCode::from(code as u8)
}
