use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mitopo_harness::config::{ExperimentConfig, Scenario, PAPER_SCALE_TRIALS};
use mitopo_harness::{mc, output, scenarios};

#[derive(Parser)]
#[command(name = "mitopo", version, about = "Topology-modulation experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write <scenario>.csv and <scenario>.json
    Run(RunArgs),
    /// Parse and check a config, then print the resolved TOML
    Validate(ConfigArgs),
    /// List the available scenarios
    ListScenarios,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config; its `scenario` key selects the experiment
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scenario to use when the config has none (or without a config)
    #[arg(long)]
    scenario: Option<String>,
    /// key=value override; dotted keys, or D=<m> / N0=<W/Hz>
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    /// Use the full 4e6-trial count
    #[arg(long, conflicts_with = "trials")]
    paper_scale: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn resolve(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let fallback = args.scenario.as_deref().map(str::parse::<Scenario>).transpose()?;
    let mut overrides = args.overrides.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("master_seed={s}"));
    }
    if let Some(t) = args.trials {
        overrides.push(format!("trials={t}"));
    }
    if args.paper_scale {
        overrides.push(format!("trials={PAPER_SCALE_TRIALS}"));
    }
    Ok(match &args.config {
        Some(path) => ExperimentConfig::load(path, fallback, &overrides)?,
        None => {
            let s = fallback.ok_or_else(|| anyhow::anyhow!("need --config or --scenario"))?;
            ExperimentConfig::from_defaults(s, &overrides)?
        }
    })
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = resolve(&args.config)?;
    let pool = mc::thread_pool(args.threads)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    log::info!("running {} (config {})", cfg.scenario, &cfg.hash()[..12]);
    let report = pool.install(|| scenarios::run(&cfg))?;
    let written = output::write(
        &args.out,
        &cfg,
        &report,
        pool.current_num_threads(),
        started,
        clock.elapsed().as_secs_f64(),
    )?;
    println!("{} rows -> {}", report.rows, written.csv.display());
    println!("manifest -> {}", written.manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => resolve(args).map(|cfg| {
            print!("{}", cfg.to_toml());
            eprintln!("config ok (hash {})", cfg.hash());
        }),
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<12} {}", s.name(), s.describe());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
