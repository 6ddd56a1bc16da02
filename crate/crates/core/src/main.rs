use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use movseq::config::{RunConfig, ScopeSelection};
use movseq::pipeline;
use movseq::signal::Direction;
use movseq::Error;

#[derive(Parser)]
#[command(
    name = "movseq",
    version,
    about = "Gait features and NB-vs-B analysis for head-worn IMU recordings"
)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// population, individual or both.
    #[arg(long, global = true)]
    scope: Option<String>,
    /// Comma-separated: accel_x,accel_y,accel_z,rot_y.
    #[arg(long, global = true, value_delimiter = ',')]
    directions: Option<Vec<String>>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort under <out>/cohort.
    Synth,
    /// Slice and featurize session files.
    Featurize {
        /// Session files or directories (default <out>/cohort).
        input: Vec<PathBuf>,
    },
    /// Paired NB-vs-B tests on the feature matrix.
    Wilcoxon,
    /// PCA per scope, direction and condition.
    Pca,
    /// Train and evaluate the MLP classifier.
    Train,
    /// Write report.md from the stage outputs.
    Report,
    /// Every stage in order; synthesizes a cohort when no input is given.
    Run { input: Vec<PathBuf> },
}

fn build_config(cli: &Cli) -> movseq::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = &cli.scope {
        cfg.scope = ScopeSelection::parse(s).ok_or_else(|| Error::Config {
            key: "scope".into(),
            reason: format!("unknown scope {s:?}"),
        })?;
    }
    if let Some(ds) = &cli.directions {
        cfg.directions = ds
            .iter()
            .map(|d| {
                Direction::from_token(d)
                    .or_else(|| Direction::from_label(d))
                    .ok_or_else(|| Error::Config {
                        key: "directions".into(),
                        reason: format!("unknown direction {d:?}"),
                    })
            })
            .collect::<movseq::Result<_>>()?;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    match &cli.command {
        Command::Featurize { input } | Command::Run { input } if !input.is_empty() => cfg.input = input.clone(),
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> movseq::Result<()> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::Synth => {
            let m = pipeline::cmd_synth(&cfg)?;
            eprintln!(
                "wrote {} participants to {}",
                m.profiles.len(),
                cfg.out.join(pipeline::COHORT_DIR).display()
            );
        }
        Command::Featurize { .. } => {
            let s = pipeline::cmd_featurize(&cfg)?;
            eprintln!(
                "featurized {} slices from {} sessions; {} NA entries, {} screened out",
                s.slices,
                s.sessions,
                s.na_entries,
                s.screen.removed.len()
            );
        }
        Command::Wilcoxon => {
            pipeline::cmd_wilcoxon(&cfg)?;
        }
        Command::Pca => {
            pipeline::cmd_pca(&cfg)?;
        }
        Command::Train => {
            pipeline::cmd_train(&cfg)?;
        }
        Command::Report => {
            pipeline::cmd_report(&cfg)?;
        }
        Command::Run { .. } => {
            pipeline::cmd_run(&cfg)?;
            eprintln!("report written to {}", cfg.out.join(pipeline::REPORT).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::FAILURE
        }
    }
}
