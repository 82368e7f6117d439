use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rpluw::config::render_scenario;
use rpluw::sim::Scenario;
use rpluw_cli::{load_plan, load_scenario, run_checked, run_experiments, write_atomic, CliError, EXIT_OK};

#[derive(Parser)]
#[command(name = "rpluw", version, about = "Underwater RPL simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its metrics report as JSON.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every point of a plan under every seed.
    Sweep {
        plan: PathBuf,
        /// Replace the plan's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding the plan's `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parallel runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check a scenario file and print it with defaults filled in.
    Validate { scenario: PathBuf },
    /// Run one scenario and emit the full event trace.
    Trace {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn with_seed(mut s: Scenario, seed: Option<u64>) -> Scenario {
    if let Some(seed) = seed {
        s.seed = seed;
    }
    s
}

fn emit(out: Option<PathBuf>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => write_atomic(&path, bytes).map_err(|e| CliError::io(&path, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Run(e.to_string())),
    }
}

fn real_main(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run { scenario, seed, out } => {
            let s = with_seed(load_scenario(&scenario)?, seed);
            let run = run_checked(&s).map_err(CliError::Run)?;
            let mut json = serde_json::to_vec_pretty(&run.report).map_err(|e| CliError::Run(e.to_string()))?;
            json.push(b'\n');
            emit(out, &json)?;
            Ok(EXIT_OK)
        }
        Command::Sweep { plan, seed, out, jobs } => {
            let mut plan = load_plan(&plan)?;
            if let Some(seed) = seed {
                plan.seeds = vec![seed];
            }
            if let Some(dir) = out {
                plan.output_dir = dir;
            }
            let summary = run_experiments(&plan, jobs)?;
            eprintln!(
                "{} runs ok, {} failed; aggregate at {}",
                summary.run_files.len(),
                summary.failures.len(),
                summary.aggregate_csv.display()
            );
            for f in &summary.failures {
                eprintln!("failed: point {} ({}) seed {}: {}", f.point, f.sweep, f.seed, f.error);
            }
            Ok(summary.exit_code())
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            print!("{}", render_scenario(&s));
            Ok(EXIT_OK)
        }
        Command::Trace { scenario, seed, out } => {
            let s = with_seed(load_scenario(&scenario)?, seed);
            let run = run_checked(&s).map_err(CliError::Run)?;
            emit(out, run.trace_text().as_bytes())?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
