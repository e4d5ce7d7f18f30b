use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use coda_pipeline::{ingest, run_pipeline, PipelineConfig};

#[derive(Parser)]
#[command(name = "coda", version, about = "Compositional data analysis pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage and write the report and figures.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check the config and parse the input files without running.
    Validate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Base seed for every stage.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (relative to the working directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Leave out the t-SNE embedding.
    #[arg(long)]
    skip_tsne: bool,
    /// Imputation repetitions.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn load(path: &Path, o: &Overrides) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::load(path)?;
    if let Some(seed) = o.seed {
        config.run.seed = seed;
    }
    if let Some(dir) = &o.out_dir {
        config.output.dir = std::path::absolute(dir).context("resolving --out-dir")?;
    }
    if o.skip_tsne {
        config.tsne.enabled = false;
    }
    if let Some(r) = o.repetitions {
        config.impute.repetitions = r;
    }
    if o.threads.is_some() {
        config.run.threads = o.threads;
    }
    config.validate()?;
    Ok(config)
}

fn run(path: &Path, o: &Overrides) -> Result<bool> {
    let config = load(path, o)?;
    if let Some(t) = config.run.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let outcome = run_pipeline(&config);
    let dir = config.output_dir();
    for stage in &outcome.report.stages {
        let note = stage.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default();
        eprintln!("{:<10} {:?}{note}", stage.name, stage.status);
    }
    match outcome.error {
        None => {
            println!("wrote {}", dir.display());
            Ok(true)
        }
        Some(e) => {
            eprintln!("error: {e}");
            Ok(false)
        }
    }
}

fn validate(path: &Path, o: &Overrides) -> Result<()> {
    let config = load(path, o)?;
    let table = ingest::read_table(&config.table_path(), &config.preprocess)?;
    if let Some(h) = config.history_path() {
        ingest::read_history(&h)?;
    }
    println!(
        "ok: {} entities x {} components, {} missing cells; config hash {}",
        table.nrows(),
        table.nparts(),
        table.mask().total(),
        config.hash()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Validate { config, overrides } => validate(config, overrides).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
