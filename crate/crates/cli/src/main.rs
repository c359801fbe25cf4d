//! `gwf`: batch front end for simulating and checking Galton-Watson forests.
//!
//! Every subcommand writes `<out>/<command>.json` (the resolved config and
//! the result) and `<out>/<command>.meta.json` (timings and thread count),
//! plus optional CSV traces. Exit status: 0 pass, 2 test failure, 1 error.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "gwf",
    version,
    about = "Leafed and multitype Galton-Watson forests"
)]
struct Cli {
    /// Output directory for reports and traces.
    #[arg(long, global = true, env = "GWF_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Worker threads for replicate simulations (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a leafed forest and export its exploration processes.
    SampleLeafed(commands::SampleLeafed),
    /// Sample a multitype forest.
    SampleMultitype(commands::SampleMultitype),
    /// Reduce a multitype forest to a leafed forest.
    Reduce(commands::Reduce),
    /// Truncated mean matrix, Perron vectors, spine kernel and eta^2.
    Spectral(commands::Spectral),
    /// Many-to-one check: forest side against spine side.
    VerifyMto(commands::VerifyMto),
    /// Half-normal test of a rescaled height marginal.
    VerifyScaling(commands::VerifyScaling),
    /// n P(h_max >= n) over a list of n.
    Survival(commands::Survival),
    /// Foster-Lyapunov drift check of the spine chain.
    DriftCheck(commands::DriftCheck),
    /// Exact chain limit, spectral closed forms and survival constants for
    /// the lamination law.
    Laminations(commands::Laminations),
}

/// Options shared by every subcommand.
#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct Common {
    /// Master seed; every random stream derives from it.
    #[arg(long)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = report::Context::new(cli.out, cli.threads);
    let outcome = match &cli.command {
        Command::SampleLeafed(a) => commands::sample_leafed(&ctx, a),
        Command::SampleMultitype(a) => commands::sample_multitype(&ctx, a),
        Command::Reduce(a) => commands::reduce(&ctx, a),
        Command::Spectral(a) => commands::spectral(&ctx, a),
        Command::VerifyMto(a) => commands::verify_mto(&ctx, a),
        Command::VerifyScaling(a) => commands::verify_scaling(&ctx, a),
        Command::Survival(a) => commands::survival(&ctx, a),
        Command::DriftCheck(a) => commands::drift_check(&ctx, a),
        Command::Laminations(a) => commands::laminations(&ctx, a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
