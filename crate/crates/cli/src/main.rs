use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use inertia_cli::commands::{cmd_analyze, cmd_campaign, cmd_detect, cmd_estimate, cmd_simulate};
use inertia_cli::config::{load_scenario, CampaignSpec, InputMode, OutputConfig, RunConfig};
use inertia_cli::follow::{run_follow, FollowOptions};
use inertia_cli::formats::read_ledger;
use log::LevelFilter;

/// Grid inertia monitoring from pumped-storage pump switching-off events.
#[derive(Debug, Parser)]
#[command(name = "psh-inertia", version)]
struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Put events.jsonl, estimates.jsonl and reports/ here instead of the
    /// paths in the config.
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the two-step trigger over stream files and write events.jsonl.
    Detect {
        #[command(flatten)]
        run: RunArgs,
        /// Tail the input files instead of reading them once.
        #[arg(long)]
        follow: bool,
        /// In follow mode, stop after no input has grown for this many seconds.
        #[arg(long)]
        idle_exit: Option<f64>,
        /// In follow mode, polling interval in milliseconds.
        #[arg(long)]
        poll_ms: Option<u64>,
    },
    /// Estimate inertia for each event and write estimates.jsonl.
    Estimate {
        #[command(flatten)]
        run: RunArgs,
        /// Events file; defaults to the configured events output.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run a seeded simulator campaign and write error-rate tables.
    Campaign {
        /// Campaign file (TOML).
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(short, long, default_value = "campaign-out")]
        output_dir: PathBuf,
        /// Master seed, overriding the campaign file.
        #[arg(long)]
        seed: Option<u64>,
        /// Cases per ramp direction, overriding the campaign file.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Compute ledger statistics and write JSON and CSV reports.
    Analyze {
        /// Event ledger (CSV).
        #[arg(short, long)]
        ledger: PathBuf,
        /// Optional run configuration for the [analytics] section.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "reports")]
        output_dir: PathBuf,
        /// Histogram bin width in MW.
        #[arg(long)]
        bin_width_mw: Option<f64>,
    },
    /// Simulate a scenario and export one stream CSV per monitor.
    Simulate {
        /// Scenario file (TOML).
        #[arg(short, long)]
        scenario: PathBuf,
        #[arg(short, long, default_value = "sim-out")]
        output_dir: PathBuf,
        /// Load-noise seed, overriding the scenario file.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load_run(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.output = OutputConfig::under(dir);
    }
    Ok(cfg)
}

fn config_level(command: &Command) -> Option<String> {
    let path = match command {
        Command::Detect { run, .. } | Command::Estimate { run, .. } => Some(&run.config),
        Command::Analyze { config, .. } => config.as_ref(),
        _ => None,
    }?;
    RunConfig::load(path).ok()?.log_level
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        LevelFilter::Error
    } else {
        match cli.verbose {
            0 => config_level(&cli.command)
                .and_then(|l| l.parse().ok())
                .unwrap_or(LevelFilter::Warn),
            1 => LevelFilter::Info,
            2 => LevelFilter::Debug,
            _ => LevelFilter::Trace,
        }
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Detect {
            run,
            follow,
            idle_exit,
            poll_ms,
        } => {
            let mut cfg = load_run(&run)?;
            if follow {
                cfg.input.mode = InputMode::Follow;
            }
            if let Some(s) = idle_exit {
                cfg.input.idle_exit_s = Some(s);
            }
            if let Some(ms) = poll_ms {
                cfg.input.poll_interval_ms = ms;
            }
            let summary = match cfg.input.mode {
                InputMode::Replay => cmd_detect(&cfg)?,
                InputMode::Follow => run_follow(&cfg, FollowOptions::from_config(&cfg))?,
            };
            eprintln!("detect: {summary}");
        }
        Command::Estimate { run, events } => {
            let cfg = load_run(&run)?;
            let events = events.unwrap_or_else(|| cfg.output.events.clone());
            let s = cmd_estimate(&cfg, &events)?;
            eprintln!(
                "estimate: events={} estimated={} skipped={}",
                s.events, s.estimated, s.skipped
            );
        }
        Command::Campaign {
            scenario,
            output_dir,
            seed,
            count,
        } => {
            let mut spec = CampaignSpec::load(&scenario)?;
            if seed.is_some() {
                spec.variations.master_seed = seed;
            }
            if let Some(n) = count {
                spec.variations.count = n;
            }
            let out = cmd_campaign(&spec, &output_dir)?;
            eprintln!("campaign: {} cases -> {}", out.cases.len(), output_dir.display());
            for s in &out.summary {
                eprintln!(
                    "  {:<9} improved {:.2}%  traditional {:.2}%",
                    s.direction.as_str(),
                    100.0 * s.improved_mean_abs_error,
                    100.0 * s.traditional_mean_abs_error
                );
            }
        }
        Command::Analyze {
            ledger,
            config,
            output_dir,
            bin_width_mw,
        } => {
            let mut opts = match &config {
                Some(p) => RunConfig::load(p)?.analytics,
                None => Default::default(),
            };
            if let Some(w) = bin_width_mw {
                opts.bin_width_mw = w;
            }
            let ledger = read_ledger(&ledger)?;
            let s = cmd_analyze(&ledger, &output_dir, &opts)?;
            eprintln!(
                "analyze: {} plants, {} reports skipped -> {}",
                s.plants.len(),
                s.skipped.len(),
                output_dir.display()
            );
        }
        Command::Simulate {
            scenario,
            output_dir,
            seed,
        } => {
            let mut sc = load_scenario(&scenario)?;
            if let Some(seed) = seed {
                sc.noise.seed = seed;
            }
            let paths = cmd_simulate(&sc, &output_dir)
                .with_context(|| format!("simulating {}", scenario.display()))?;
            eprintln!("simulate: wrote {} streams -> {}", paths.len(), output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(&cli);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
