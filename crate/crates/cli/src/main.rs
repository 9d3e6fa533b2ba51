use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hamsim::experiment::{default_config_text, load_config, parse_config, run, Overrides, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "hamsim", version, about = "Optimize brickwall circuits for Ising time evolution and compare them with Trotter formulas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Check a config file and list every problem found.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// Refit power laws to existing result CSVs.
    Fit {
        /// A config of kind `fit`.
        #[arg(long, value_name = "PATH", conflicts_with = "input", required_unless_present = "input")]
        config: Option<PathBuf>,
        /// CSV files to fit with default settings.
        #[arg(long, value_name = "CSV", num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
        #[arg(long, value_name = "N", default_value_t = 1)]
        threads: usize,
    },
    /// Print a config with every key at its default value.
    Info,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Replaces the config's seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "N", default_value_t = 1)]
    threads: usize,
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run(a) => {
            let cfg = load_config(&a.config, &Overrides { seed: a.seed })?;
            std::fs::create_dir_all(&a.out)?;
            let out = run(&cfg, &RunOptions { out_dir: a.out, threads: a.threads, base_dir: config_dir(&a.config) })?;
            for f in out.files {
                println!("{}", f.display());
            }
        }
        Command::Validate { config, seed } => {
            load_config(&config, &Overrides { seed })?;
            println!("ok");
        }
        Command::Fit { config, input, out, threads } => {
            let (cfg, base_dir) = match config {
                Some(path) => {
                    let cfg = load_config(&path, &Overrides::default())?;
                    (cfg, config_dir(&path))
                }
                None => {
                    let list: Vec<String> = input.iter().map(|p| p.display().to_string()).collect();
                    let text = format!("[experiment]\nkind = fit\n[fit]\ninput = {}\n", list.join(", "));
                    (parse_config(&text, &Overrides::default()).map_err(RunError::Config)?, PathBuf::from("."))
                }
            };
            std::fs::create_dir_all(&out)?;
            let done = run(&cfg, &RunOptions { out_dir: out, threads, base_dir })?;
            for f in done.files {
                println!("{}", f.display());
            }
        }
        Command::Info => print!("{}", default_config_text()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hamsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
