use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cogd2d::cli::{
    cmd_analytic, cmd_compare, cmd_simulate, cmd_sweep, load_config, parse_values, LoadedConfig,
    SweepSource,
};
use cogd2d::sim::SimOptions;
use cogd2d::{Result, ScenarioConfig};

/// Analytic and simulated queueing in cache-enabled cognitive D2D networks.
#[derive(Parser)]
#[command(name = "cogd2d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file, or any CSV/JSON artifact of an earlier run.
    /// Defaults to the reference scenario.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Slots per replication.
    #[arg(long)]
    slots: Option<u64>,
    /// Independent replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Leading fraction of slots discarded.
    #[arg(long)]
    warmup: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Analytic,
    Simulation,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Subset split, users-per-BS law, sensing intensities and queue PMFs.
    Analytic(Common),
    /// Slot-level simulation.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Analytic and simulated PMFs side by side with total-variation distances.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Steady fractions over a range of one config field.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        run: RunArgs,
        /// Config field to vary, e.g. `request_rate` or `alpha`.
        #[arg(long)]
        param: String,
        /// `a..b step s`, `a..b:s` or a list such as `0,0.2,0.5`.
        #[arg(long, num_args = 1..)]
        values: Vec<String>,
        #[arg(long, value_enum, default_value_t = Source::Both)]
        source: Source,
    },
}

fn load(path: Option<&Path>) -> Result<LoadedConfig> {
    match path {
        Some(p) => load_config(p),
        None => Ok(LoadedConfig {
            config: ScenarioConfig::reference_defaults(),
            run: None,
        }),
    }
}

fn options(args: &RunArgs, embedded: Option<SimOptions>) -> SimOptions {
    let mut o = embedded.unwrap_or_default();
    if let Some(s) = args.slots {
        o.slots = s;
    }
    if let Some(r) = args.reps {
        o.replications = r;
    }
    if let Some(w) = args.warmup {
        o.warmup_fraction = w;
    }
    o
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::Analytic(c) => {
            let l = load(c.config.as_deref())?;
            cmd_analytic(&l.config, &c.out)
        }
        Command::Simulate { common, run } => {
            let l = load(common.config.as_deref())?;
            cmd_simulate(&l.config, &common.out, &options(&run, l.run))
        }
        Command::Compare { common, run } => {
            let l = load(common.config.as_deref())?;
            cmd_compare(&l.config, &common.out, &options(&run, l.run))
        }
        Command::Sweep {
            common,
            run,
            param,
            values,
            source,
        } => {
            let l = load(common.config.as_deref())?;
            let values = parse_values(&values.join(" "))?;
            let source = match source {
                Source::Analytic => SweepSource::Analytic,
                Source::Simulation => SweepSource::Simulation,
                Source::Both => SweepSource::Both,
            };
            cmd_sweep(
                &l.config,
                &common.out,
                &param,
                &values,
                &options(&run, l.run),
                source,
            )
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
