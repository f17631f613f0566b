use clap::{Parser, Subcommand};
use kerrcomb_cli::report::{Report, Status};
use kerrcomb_cli::run::run_scenario;
use kerrcomb_cli::scenario::Scenario;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "kerrcomb",
    version,
    about = "Kerr comb quantum-noise scenario runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSVs plus report.json into <out>/<name>.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for frequency sweeps (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Parse and check a scenario without computing anything.
    Validate { scenario: PathBuf },
    /// Pretty-print the report of a finished run.
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            seed,
            threads,
        } => {
            let mut s = match Scenario::load(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            let dir = out.join(&s.name);
            match run_scenario(&s, &dir, rayon::current_num_threads()) {
                Ok(report) => {
                    print!("{}", report.render());
                    println!("output: {}", dir.display());
                    if report.status == Status::Ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Validate { scenario } => match Scenario::load(&scenario) {
            Ok(s) => {
                let runs = s.sweep.as_ref().map_or(1, |sw| sw.values.len());
                let products: Vec<&str> = s.outputs.iter().map(|p| p.name()).collect();
                println!(
                    "ok: {} [{}] products [{}], {} run(s)",
                    s.name,
                    s.mode,
                    products.join(", "),
                    runs
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Report { run_dir } => match Report::load(&run_dir) {
            Ok(r) => {
                print!("{}", r.render());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
    }
}
