use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jumpgame::commands::{self, Overrides, Run};

#[derive(Parser)]
#[command(
    name = "jumpgame",
    version,
    about = "Insurer/bank game on a regime-switching jump-diffusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form multipliers, coefficient tables and equilibrium controls.
    Solve(Common),
    /// Simulate paths under the equilibrium controls.
    Simulate(Common),
    /// Run every equilibrium check and write a full report.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Path count override.
    #[arg(long)]
    paths: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (Command::Solve(c) | Command::Simulate(c) | Command::Verify(c)) = &cli.command;
    let overrides = Overrides {
        out: c.out.clone(),
        seed: c.seed,
        paths: c.paths,
    };
    let result = Run::prepare(&c.config, &overrides).and_then(|run| {
        let report = match cli.command {
            Command::Solve(_) => commands::solve(&run)?,
            Command::Simulate(_) => commands::simulate(&run)?,
            Command::Verify(_) => commands::verify(&run)?,
        };
        Ok((run, report))
    });
    match result {
        Ok((run, report)) => {
            let verdict = match report.get("passed").and_then(|v| v.as_bool()) {
                Some(true) => " (passed)",
                Some(false) => " (FAILED)",
                None => "",
            };
            eprintln!("wrote {}{verdict}", run.out.path().display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
