//! `arbor`: simulate surveys, run the pipeline and score field maps.
//!
//! Exit status is 0 on success, 1 for bad input or configuration and 2 when
//! a numerical invariant breaks mid-run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arbor_eval::commands;
use arbor_eval::{EvalError, PipelineConfig, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arbor", version, about = "Orchard tree survey from LiDAR, RGN camera and GNSS logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set association.th_p=0.6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let base = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        base.with_overrides(&self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic survey into a log directory.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the pipeline and write the report, field map and timing.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Log directory to replay; without it the survey is simulated in memory.
        #[arg(long)]
        logs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the accuracy tables of a field map.
    Eval {
        #[arg(long)]
        field_map: PathBuf,
    },
    /// Simulate into `<out>/logs`, replay them and print the report.
    All {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_and_print(config: &PipelineConfig, logs: Option<&Path>, out: &Path) -> Result<()> {
    let (run, report) = commands::run(config, logs, out)?;
    print!("{}", report.to_text());
    if let Some(s) = report.mean_latency_s {
        println!("\nmean latency: {:.2} ms over {} scans", s * 1e3, run.scans());
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let s = commands::simulate(&config.load()?, &out)?;
            println!("wrote {} scans, {} frames and {} trees to {}", s.scans, s.frames, s.trees, out.display());
            Ok(())
        }
        Command::Run { config, logs, out } => run_and_print(&config.load()?, logs.as_deref(), &out),
        Command::Eval { field_map } => {
            print!("{}", commands::evaluate(&field_map)?.to_text());
            Ok(())
        }
        Command::All { config, out } => {
            let config = config.load()?;
            let logs = out.join("logs");
            commands::simulate(&config, &logs)?;
            run_and_print(&config, Some(&logs), &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EvalError::exit_code(&e) as u8)
        }
    }
}
