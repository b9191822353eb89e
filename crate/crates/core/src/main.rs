//! Command-line entry point: run strategies over a dataset, replay reports
//! from transcripts, dump dataset stats, and render prompt stages.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use moot::dataset::{self, DatasetStats};
use moot::prompts::{self, OptionOrder, PromptStage};
use moot::runner::config::{PolicyName, RunConfig, StrategyName};
use moot::runner::report::report_from_dir;
use moot::runner::{execute_run, RunPaths};

#[derive(Parser)]
#[command(name = "moot", version, about = "Debate and self-reflection evaluation harness for ternary cultural-norm scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute (or resume) a run described by a config file.
    Run(RunArgs),
    /// Recompute all reports from a run directory's transcript.
    Report {
        /// Run output directory (containing transcript.jsonl).
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump dataset statistics as a machine-readable table.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        groups: PathBuf,
    },
    /// Render a prompt stage with sentinel or provided bindings.
    RenderPrompt {
        /// Stage id, e.g. single_with_rot, d_judge, sd_choice.
        #[arg(long)]
        stage: String,
        /// Option order for sd_choice: reflect-first or debate-first.
        #[arg(long, default_value = "reflect-first")]
        order: String,
        /// Extra bindings as name=value; may repeat.
        #[arg(long = "bind", value_name = "NAME=VALUE")]
        bindings: Vec<String>,
    },
    /// Check a config file and exit nonzero if invalid.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override strategy.kind.
    #[arg(long)]
    strategy: Option<String>,
    /// Override debate rounds.
    #[arg(long)]
    rounds: Option<u32>,
    /// Override self-reflection iterations.
    #[arg(long)]
    iterations: Option<u32>,
    /// Override adjudication policy: judge, oracle, or random.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    concurrency: Option<usize>,
    /// Override output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep only these countries (comma separated; may repeat).
    #[arg(long = "filter-country", value_delimiter = ',')]
    filter_country: Vec<String>,
    /// Seeded sample of N scenarios after filtering.
    #[arg(long)]
    sample: Option<usize>,
}

fn apply_overrides(config: &mut RunConfig, args: &RunArgs) -> Result<()> {
    if let Some(s) = &args.strategy {
        config.strategy.kind = StrategyName::parse(s)?;
    }
    if let Some(r) = args.rounds {
        config.strategy.rounds = r;
    }
    if let Some(n) = args.iterations {
        config.strategy.iterations = n;
    }
    if let Some(p) = &args.policy {
        config.policy.kind = PolicyName::parse(p)?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(c) = args.concurrency {
        config.concurrency = c;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if !args.filter_country.is_empty() {
        config.filter.countries = args.filter_country.clone();
    }
    if let Some(sample) = args.sample {
        config.filter.sample = sample;
    }
    Ok(())
}

async fn run(args: &RunArgs) -> Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    apply_overrides(&mut config, args)?;
    let summary = execute_run(&config).await?;
    eprintln!(
        "run complete: {} unit(s) total, {} resumed, {} new trace(s), {} new failure(s)",
        summary.total_units, summary.resumed_units, summary.new_traces, summary.new_failures
    );
    let bundle = report_from_dir(&summary.out_dir)?;
    print!("{}", bundle.render_summary());
    eprintln!(
        "transcript: {}",
        RunPaths::new(&summary.out_dir).transcript.display()
    );
    Ok(())
}

fn report(out: &Path) -> Result<()> {
    let bundle = report_from_dir(out)?;
    bundle.write_files(&RunPaths::new(out).report_dir)?;
    print!("{}", bundle.render_summary());
    Ok(())
}

fn stats(dataset_path: &Path, groups: &Path) -> Result<()> {
    let records = dataset::load_dataset(dataset_path, groups)?;
    let stats = DatasetStats::compute(&records);
    print!("{}", stats.render_table());
    Ok(())
}

fn render_prompt(stage: &str, order: &str, binding_args: &[String]) -> Result<()> {
    let stage = PromptStage::from_id(stage)?;
    let mut bindings = prompts::sentinel_bindings();
    for pair in binding_args {
        let Some((name, value)) = pair.split_once('=') else {
            bail!("binding '{pair}' is not NAME=VALUE");
        };
        bindings.insert(name.to_string(), value.to_string());
    }
    let text = if stage == PromptStage::SdChoice {
        let order = match order {
            "reflect-first" => OptionOrder::ReflectFirst,
            "debate-first" => OptionOrder::DebateFirst,
            other => bail!("unknown order '{other}'"),
        };
        prompts::render_choice_prompt(&bindings, order)?
    } else {
        prompts::render(stage, &bindings)?
    };
    println!("{text}");
    Ok(())
}

fn validate_config(path: &Path) -> Result<()> {
    let config = RunConfig::load(path)?;
    config.validate()?;
    println!("config ok: {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome: Result<()> = match &cli.command {
        Command::Run(args) => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .context("tokio runtime")
            .and_then(|rt| rt.block_on(run(args))),
        Command::Report { out } => report(out),
        Command::Stats { dataset, groups } => stats(dataset, groups),
        Command::RenderPrompt {
            stage,
            order,
            bindings,
        } => render_prompt(stage, order, bindings),
        Command::ValidateConfig { config } => validate_config(config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
