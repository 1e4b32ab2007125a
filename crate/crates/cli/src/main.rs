use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qfs_forge_core::rouge::Headline;

mod commands;
mod config;

use commands::CeilingExceeded;
use config::{ConfigError, RunConfig};

/// Build and score query-focused summarization data.
#[derive(Parser)]
#[command(name = "qfs-forge", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the mock backend.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one query per summary sentence.
    Annotate {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Failure audit; defaults next to the output.
        #[arg(long)]
        failures: Option<PathBuf>,
        /// Exit nonzero if the failed share of pairs is above this.
        #[arg(long)]
        failure_ceiling: Option<f64>,
    },
    /// Query-type breakdown of one or more triplet files.
    Classify {
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Length and novel-token statistics of a triplet file.
    Stats {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Row label; defaults to the input file stem.
        #[arg(long)]
        label: Option<String>,
        /// Count distinct novel tokens instead of occurrences.
        #[arg(long)]
        ntp_types: bool,
    },
    /// Rewrite keyword or instruction queries as questions.
    Unify {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// natural | words | phrases | sentence | instruction
        #[arg(long, value_parser = serde_enum::<qfs_forge_core::unify::QueryFormat>)]
        format: Option<qfs_forge_core::unify::QueryFormat>,
        /// generated | template
        #[arg(long, value_parser = serde_enum::<config::UnifyMethod>)]
        method: Option<config::UnifyMethod>,
        /// newts | duc
        #[arg(long, value_parser = serde_enum::<qfs_forge_core::unify::TemplateStyle>)]
        style: Option<qfs_forge_core::unify::TemplateStyle>,
    },
    /// Multi-document summaries under a token budget.
    Compose {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        budget: Option<usize>,
        /// Overlap percentage at or above which a summary is skipped.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// ROUGE-1/2/L of predictions against references.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        references: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        /// f1 | recall
        #[arg(long, value_parser = serde_enum::<Headline>, default_value = "f1")]
        headline: Headline,
    },
}

fn serde_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut cfg = cfg.with_overrides(cli.seed, cli.parallelism)?;
    match cli.command {
        Command::Annotate {
            input,
            output,
            failures,
            failure_ceiling,
        } => commands::annotate(
            &cfg,
            commands::AnnotateArgs {
                input,
                output,
                failures,
                failure_ceiling,
            },
        ),
        Command::Classify { inputs, output } => {
            commands::classify(&cfg, commands::ClassifyArgs { inputs, output })
        }
        Command::Stats {
            input,
            output,
            label,
            ntp_types,
        } => commands::stats(
            &cfg,
            commands::StatsArgs {
                input,
                output,
                label,
                ntp_types,
            },
        ),
        Command::Unify {
            input,
            output,
            format,
            method,
            style,
        } => {
            if let Some(f) = format {
                cfg.unify.format = f;
            }
            if let Some(m) = method {
                cfg.unify.method = m;
            }
            if style.is_some() {
                cfg.unify.style = style;
            }
            commands::unify(&cfg, commands::UnifyArgs { input, output })
        }
        Command::Compose {
            input,
            output,
            budget,
            threshold,
        } => commands::compose(
            &cfg,
            commands::ComposeArgs {
                input,
                output,
                budget,
                threshold,
            },
        ),
        Command::Evaluate {
            predictions,
            references,
            output,
            headline,
        } => commands::evaluate(
            &cfg,
            commands::EvaluateArgs {
                predictions,
                references,
                output,
                headline,
            },
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else if e.downcast_ref::<CeilingExceeded>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
