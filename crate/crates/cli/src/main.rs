use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stripe_isac::harness::{self, ExperimentConfig, Preset};

#[derive(Parser)]
#[command(name = "stripe-isac", version, about = "Radio-stripe ISAC scene recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo experiment.
    Run(RunArgs),
    /// Print a preset as a TOML config file.
    Preset {
        #[arg(value_parser = parse_preset)]
        name: Preset,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML config; without it the preset (default: paper) is used as is.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base preset: desk or paper.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "ISAC_WORKERS")]
    workers: Option<usize>,
    /// Master seed.
    #[arg(long, env = "ISAC_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Validate the config, print the sweep plan and exit without writing.
    #[arg(long)]
    dry_run: bool,
    /// Write a JSON grid image per trial.
    #[arg(long)]
    dump_scenes: bool,
    /// Keep the same targets in every trial.
    #[arg(long)]
    fixed_scene: bool,
    /// Record measured wall time in results.csv.
    #[arg(long)]
    timing: bool,
    /// Append per-configuration residuals, norms, precisions and weights to diagnostics.log.
    #[arg(long)]
    trace: bool,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    s.parse().map_err(|e: stripe_isac::Error| e.to_string())
}

fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path, args.preset)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::preset(args.preset.unwrap_or(Preset::Paper)),
    };
    let run = &mut cfg.run;
    if let Some(w) = args.workers {
        run.workers = w;
    }
    if let Some(s) = args.seed {
        run.seed = s;
    }
    if let Some(o) = &args.out {
        run.output_dir = o.clone();
    }
    if let Some(t) = args.trials {
        run.trials = t;
    }
    run.dump_scenes |= args.dump_scenes;
    run.fixed_scene |= args.fixed_scene;
    run.record_wall_time |= args.timing;
    run.trace_residuals |= args.trace;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preset { name } => {
            print!("{}", ExperimentConfig::preset(name).to_toml_string()?);
        }
        Command::Run(args) => {
            let cfg = resolve(&args)?;
            if args.dry_run {
                print!("{}", harness::plan(&cfg));
                return Ok(());
            }
            let files = harness::run_experiment(&cfg)?;
            println!("wrote {}", files.results_csv.display());
            println!("wrote {}", files.summary_json.display());
            if !files.scenes.is_empty() {
                println!("wrote {} scene dumps", files.scenes.len());
            }
        }
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
