//! `vetobargain`: run the solvers from a TOML experiment file.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::VerificationFailed;
use crate::config::{Config, Format};
use crate::output::Emitter;

#[derive(Parser, Debug)]
#[command(
    name = "vetobargain",
    version,
    about = "Sequential veto bargaining experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output formats; overrides `output.formats`.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<Format>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal interval delegation and the full-delegation benchmark.
    Static,
    /// Two-type thresholds, region and payoffs.
    TwoType {
        /// Emit this many seeded equilibrium traces.
        #[arg(long)]
        simulate: Option<usize>,
    },
    /// Skimming equilibrium for each δ in `delta_list`.
    Skim,
    /// Leapfrogging construction for each δ in `delta_list`.
    Leapfrog,
    /// ε-equilibrium certificate for an encoded profile.
    Verify,
    /// Payoff against its benchmark across `delta_list`.
    Sweep,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return 3;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<vetobargain::Error>() {
            return match e {
                vetobargain::Error::Consistency(_) => 3,
                e if e.is_gate() => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let Some(path) = &cli.config else {
        anyhow::bail!("--config <path> is required");
    };
    let mut cfg = Config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = cli.out {
        cfg.output.dir = d;
    }
    if let Some(f) = cli.format {
        cfg.output.formats = f;
    }
    let digest = cfg.digest()?;
    let mut out = Emitter::new(&cfg.output.dir, &cfg.output.formats, &digest)?;
    let result = match cli.command {
        Command::Static => commands::run_static(&cfg, &mut out),
        Command::TwoType { simulate } => commands::run_two_type(&cfg, simulate, &mut out),
        Command::Skim => commands::run_skim(&cfg, &mut out),
        Command::Leapfrog => commands::run_leapfrog(&cfg, &mut out),
        Command::Verify => commands::run_verify(&cfg, &mut out),
        Command::Sweep => commands::run_sweep(&cfg, &mut out),
    };
    for p in out.written() {
        eprintln!("wrote {}", p.display());
    }
    result
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
