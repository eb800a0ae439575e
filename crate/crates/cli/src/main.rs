use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thzqi_cli::scenario::{bundled, NoiseMode, Scenario, BUNDLED};
use thzqi_cli::{run_text, RunOptions};

#[derive(Parser)]
#[command(name = "thzqi", version, about = "Terahertz imaging with undetected photons: simulation and distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts and manifest.
    Run {
        /// Bundled scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        /// Output directory; defaults to <out-root>/<scenario name>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = "THZQI_OUT_ROOT", default_value = "thzqi-out")]
        out_root: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        qmc_samples: Option<usize>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum)]
        noise: Option<NoiseMode>,
    },
    /// List the bundled scenarios.
    List,
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
        Command::List => {
            for b in BUNDLED {
                let s = Scenario::parse(b.text).expect("bundled scenarios validate");
                println!("{:<22} {:<10} {}", s.name, s.figure, s.description);
            }
            ExitCode::SUCCESS
        }
        Command::Run { scenario, out, out_root, seed, qmc_samples, threads, noise } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot configure {n} threads: {e}");
                    return ExitCode::from(1);
                }
            }
            let (label, text, base) = match bundled(&scenario) {
                Some(b) => (b.name.to_string(), b.text.to_string(), None),
                None => match std::fs::read_to_string(&scenario) {
                    Ok(t) => (scenario.clone(), t, Path::new(&scenario).parent().map(Path::to_path_buf)),
                    Err(e) => {
                        eprintln!("error: {scenario}: {e} (not a bundled scenario or readable file)");
                        return ExitCode::from(1);
                    }
                },
            };
            let name = match Scenario::parse(&text) {
                Ok(s) => s.name,
                Err(problems) => {
                    for p in problems {
                        eprintln!("{label}: {p}");
                    }
                    return ExitCode::from(1);
                }
            };
            let out_dir = out.unwrap_or_else(|| out_root.join(&name));
            let opts = RunOptions { seed, qmc_samples, noise };
            match run_text(&text, base.as_deref(), &out_dir, &opts) {
                Ok(outcome) => {
                    println!(
                        "{}: {} artifacts in {}",
                        name,
                        outcome.manifest.artifacts.len(),
                        outcome.out_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{label}: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
