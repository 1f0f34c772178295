use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use vaicam::experiment::{
    read_csv, render_text, reproduce_to_dir, stage_collect, stage_eval_control, stage_eval_ma,
    stage_train, write_csv, ExperimentConfig, Lab, Layout,
};

#[derive(Parser)]
#[command(
    name = "vaicam",
    version,
    about = "Force-tracking experiments with learned transition models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides `experiment.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs/default")]
    out: PathBuf,
    /// Run every parallel section on one thread.
    #[arg(long)]
    single_thread: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Collect and store the training corpora.
    Collect(RunArgs),
    /// Train both approximators from stored corpora.
    Train(RunArgs),
    /// Compare the approximators' force predictions over the test grid.
    EvalMa(RunArgs),
    /// Compare DFC, ORACLE and VAICAM force tracking over the test grid.
    EvalControl(RunArgs),
    /// Print a stored metrics table.
    Report {
        metrics: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run every stage and write a manifest.
    Reproduce(RunArgs),
    /// Print the default configuration.
    DefaultConfig,
}

impl RunArgs {
    fn lab(&self) -> Result<(Lab, u64)> {
        let cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let seed = self.seed.unwrap_or(cfg.experiment.seed);
        Ok((Lab::new(cfg)?, seed))
    }

    fn threads(&self) -> usize {
        if self.single_thread {
            1
        } else {
            0
        }
    }

    /// Runs `f` inside a pool sized per `--single-thread`.
    fn within_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads())
            .build()
            .context("building thread pool")?
            .install(f)
    }
}

fn print_table(path: &Path, format: Format) -> Result<()> {
    let table = read_csv(path).with_context(|| format!("reading {}", path.display()))?;
    match format {
        Format::Text => print!("{}", render_text(&table)?),
        Format::Csv => write_csv(&table, std::io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(a) => {
            let (lab, seed) = a.lab()?;
            let layout = Layout::new(&a.out);
            for p in a.within_pool(|| Ok(stage_collect(&lab, seed, &layout)?))? {
                println!("{}", p.display());
            }
        }
        Command::Train(a) => {
            let (lab, seed) = a.lab()?;
            let layout = Layout::new(&a.out);
            for p in a.within_pool(|| Ok(stage_train(&lab, seed, &layout)?))? {
                println!("{}", p.display());
            }
        }
        Command::EvalMa(a) => {
            let (lab, seed) = a.lab()?;
            let layout = Layout::new(&a.out);
            let table = a.within_pool(|| Ok(stage_eval_ma(&lab, seed, &layout)?))?;
            print!("{}", render_text(&table)?);
        }
        Command::EvalControl(a) => {
            let (lab, seed) = a.lab()?;
            let layout = Layout::new(&a.out);
            let table = a.within_pool(|| Ok(stage_eval_control(&lab, seed, &layout)?))?;
            print!("{}", render_text(&table)?);
        }
        Command::Report { metrics, format } => print_table(&metrics, format)?,
        Command::Reproduce(a) => {
            let (lab, seed) = a.lab()?;
            let layout = Layout::new(&a.out);
            let manifest = reproduce_to_dir(&lab, seed, &layout, a.threads())?;
            for e in [1u8, 2] {
                println!("experiment {e}:");
                print_table(&layout.metrics(e, "csv"), Format::Text)?;
            }
            println!("config hash {}", manifest.config_hash);
        }
        Command::DefaultConfig => print!("{}", ExperimentConfig::default().to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
