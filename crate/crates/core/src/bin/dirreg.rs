use clap::{Parser, Subcommand};
use dirreg::cli::{list_builtins, run_file, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

/// Directional Hölder metric regularity experiments.
///
/// Exit codes: 0 all analyses ok, 1 input or schema error, 2 some analysis
/// inconclusive, 3 a violation was found.
#[derive(Parser)]
#[command(name = "dirreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print or write its JSON report.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides every sample count.
        #[arg(long)]
        samples: Option<usize>,
        /// Report path; stdout when absent and the scenario names none.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-sample CSV path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Suppress the summary on stderr.
        #[arg(long, short)]
        quiet: bool,
    },
    /// List builtin maps, sets, programs and analysis kinds.
    ListBuiltins,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match cli.command {
        Command::Run {
            scenario,
            seed,
            samples,
            out,
            csv,
            quiet,
        } => {
            let opts = RunOptions { seed, samples };
            let code = run_file(&scenario, &opts, out.as_deref(), csv.as_deref(), quiet);
            ExitCode::from(code as u8)
        }
        Command::ListBuiltins => {
            print!("{}", list_builtins());
            ExitCode::SUCCESS
        }
    }
}
