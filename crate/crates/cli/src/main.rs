use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rvr_core::config::{ConfigError, RunConfig, Stage, DEFAULT_RUN_TOML};
use rvr_core::pipeline::{PipelineError, Run};

/// Audit generated text for traditional-secular value bias against survey data.
#[derive(Parser)]
#[command(name = "rvr-audit", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file. Built-in defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the commented example configuration.
    Init {
        #[arg(default_value = "rvr.toml")]
        path: PathBuf,
        /// Overwrite an existing file.
        #[arg(long)]
        force: bool,
    },
    /// Check a configuration and report every problem.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Also check what this stage needs (e.g. compare needs a survey file).
        #[arg(long, default_value = "gen-prompts")]
        stage: Stage,
    },
    /// Enumerate personas and render interview prompts.
    GenPrompts(Common),
    /// Collect completions, skipping samples already on disk.
    Collect(Common),
    /// Score premises against the value bank hypotheses.
    Score(Common),
    /// Project scored premises onto the traditional-secular axis.
    Project(Common),
    /// Recode the survey extract.
    IngestWvs(Common),
    /// Group summaries and fixed-effects regression against the survey.
    Compare(Common),
    /// Compare traditional-only, secular-only and combined projections.
    Ablate(Common),
    /// Render figures from a manifest, or the default set.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Every stage in order.
    Run(Common),
}

fn load(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::shipped()),
    }
}

fn open(common: &Common, stage: Stage) -> Result<Run> {
    let run = Run::open(load(common)?, stage)?;
    eprintln!("run directory: {}", run.dir.display());
    Ok(run)
}

fn json(v: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)?)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Init { path, force } => {
            if path.exists() && !force {
                anyhow::bail!("{} exists; pass --force to overwrite", path.display());
            }
            std::fs::write(&path, DEFAULT_RUN_TOML).with_context(|| format!("writing {}", path.display()))?;
            println!("wrote {}", path.display());
        }
        Command::Validate { common, stage } => {
            let cfg = load(&common)?;
            cfg.validate(stage)?;
            let (profiles, prompts) = cfg.grid_size()?;
            println!(
                "ok: {profiles} profiles, {prompts} prompts, {} premises per full collection; run id {}",
                prompts * cfg.llm.sampling.samples_per_prompt as usize,
                cfg.run_id()?
            );
        }
        Command::GenPrompts(c) => {
            let prompts = open(&c, Stage::GenPrompts)?.gen_prompts()?;
            println!("{} prompts", prompts.len());
        }
        Command::Collect(c) => {
            let report = open(&c, Stage::Collect)?.collect()?;
            println!(
                "requested {}, already present {}, written {}, failed {}",
                report.requested,
                report.already_present,
                report.written,
                report.failures.len()
            );
        }
        Command::Score(c) => println!("{}", json(&serde_json::to_value(open(&c, Stage::Score)?.score()?)?)?),
        Command::Project(c) => {
            let n = open(&c, Stage::Project)?.project()?.len();
            println!("{n} projections");
        }
        Command::IngestWvs(c) => println!(
            "{}",
            json(&serde_json::to_value(open(&c, Stage::IngestWvs)?.ingest_wvs()?)?)?
        ),
        Command::Compare(c) => {
            let report = open(&c, Stage::Compare)?.compare()?;
            println!("{:<12} {:>7} {:>7} {:>10}", "nation", "RMSE", "R²", "p");
            for f in &report.per_nation {
                println!(
                    "{:<12} {:>7.3} {:>7.3} {:>10.3e} {}",
                    f.nation,
                    f.rmse,
                    f.r_squared,
                    f.p_value,
                    f.stars()
                );
            }
            let p = &report.pooled;
            println!(
                "pooled: slope {:.4}, R² {:.3} (within {:.3}), RMSE {:.3}, p {:.3e}",
                p.slope, p.r_squared, p.within_r_squared, p.rmse, p.p_value
            );
        }
        Command::Ablate(c) => {
            let report = open(&c, Stage::Ablate)?.ablate()?;
            for s in &report.series {
                println!(
                    "{:<17} n={} mean={:.4} variance={:.4}",
                    s.mode.as_str(),
                    s.stats.n,
                    s.stats.mean,
                    s.variance
                );
            }
        }
        Command::Report { common, manifest } => {
            let run = open(&common, Stage::Report)?;
            for entry in run.report(manifest.as_deref())? {
                println!("{}", run.dir.join(&entry.svg).display());
            }
        }
        Command::Run(c) => {
            let run = open(&c, Stage::All)?;
            run.run_all()?;
            println!("{}", run.dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let invalid = matches!(e.downcast_ref::<ConfigError>(), Some(ConfigError::Invalid(_)))
                || matches!(
                    e.downcast_ref::<PipelineError>(),
                    Some(PipelineError::Config(ConfigError::Invalid(_)))
                );
            eprintln!("error: {e:#}");
            if invalid {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
