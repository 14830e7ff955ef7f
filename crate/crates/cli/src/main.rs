use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cyberrisk_cli::config::{parse_override, RunConfig};
use cyberrisk_cli::error::CliError;
use cyberrisk_cli::fixture::{write_fixture, FixtureSpec};
use cyberrisk_cli::stages::{self, STAGES};

#[derive(Parser)]
#[command(name = "cyberrisk", version, about = "Text-based cyber-risk scores and asset pricing tests")]
struct Cli {
    /// INI run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `run.workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Rerun stages whose outputs are up to date.
    #[arg(long, global = true)]
    force: bool,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override any config key, e.g. `--set train.epochs=20`.
    #[arg(long = "set", value_parser = parse_override, global = true)]
    overrides: Vec<(String, String)>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse index files and fetch 10-K filings into the cache.
    Ingest,
    /// Clean filings and references into paragraphs.
    Prep,
    /// Train the paragraph-vector model.
    Train,
    /// Score filings against the reference corpus.
    Score,
    /// Quantile sorts, performance and factor-model alphas.
    Sort,
    /// Fama-MacBeth regressions on score-sorted portfolios.
    Fmb,
    /// GRS tests of the configured factor models.
    Grs,
    /// Bayesian factor-model scan.
    Bayes,
    /// Collect the result tables into one report.
    Report,
    /// Every stage in order.
    All,
    /// Write a synthetic offline input tree.
    Fixture {
        dir: PathBuf,
        #[arg(long, default_value_t = 40)]
        firms: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let names: Vec<&str> = match &cli.command {
        Command::Fixture { dir, firms } => {
            let spec = FixtureSpec {
                n_firms: *firms,
                seed: cli.seed.unwrap_or(FixtureSpec::default().seed),
                ..FixtureSpec::default()
            };
            let fx = write_fixture(dir, &spec)?;
            println!("{}", fx.config.display());
            return Ok(());
        }
        Command::Ingest => vec!["ingest"],
        Command::Prep => vec!["prep"],
        Command::Train => vec!["train"],
        Command::Score => vec!["score"],
        Command::Sort => vec!["sort"],
        Command::Fmb => vec!["fmb"],
        Command::Grs => vec!["grs"],
        Command::Bayes => vec!["bayes"],
        Command::Report => vec!["report"],
        Command::All => STAGES.to_vec(),
    };
    let mut overrides = cli.overrides.clone();
    if let Some(s) = cli.seed {
        overrides.push(("run.seed".into(), s.to_string()));
    }
    if let Some(w) = cli.workers {
        overrides.push(("run.workers".into(), w.to_string()));
    }
    let cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    for name in names {
        stages::run(&cfg, name, cli.force)?;
    }
    Ok(())
}
