mod commands;
mod config;

use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::CommonArgs;

#[derive(Parser)]
#[command(name = "coinflow", version, about = "Money exchange with banks on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run: histogram, reserve trajectory and summary
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// flat or hoarder
        #[arg(long)]
        init: Option<String>,
    },
    /// Exact finite-size money distribution
    Exact {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        exact: ExactArgs,
    },
    /// Asymmetric Laplace limit parameters and density
    Laplace {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        laplace: LaplaceArgs,
    },
    /// Integrate the mean-field equations
    Meanfield {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        meanfield: MeanFieldArgs,
    },
    /// Run the self-check battery
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        /// quick or full
        #[arg(long)]
        level: Option<String>,
    },
}

#[derive(Args)]
struct ExactArgs {
    /// series or direct
    #[arg(long)]
    method: Option<String>,
    /// Distribution of one bank's customers (1-based)
    #[arg(long)]
    bank: Option<usize>,
    /// Refuse instances whose estimated cost exceeds this many big-integer operations
    #[arg(long)]
    max_cost: Option<f64>,
}

#[derive(Args)]
struct LaplaceArgs {
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c_min: Option<i64>,
    #[arg(long)]
    c_max: Option<i64>,
}

#[derive(Args)]
struct MeanFieldArgs {
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// reserve:EPSILON or constant:P
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    snapshot_every: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c_min: Option<i64>,
    #[arg(long)]
    c_max: Option<i64>,
}

fn override_with<T: Clone>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Drops a section nobody filled in so it is not written back as an empty table.
fn prune<T: Default + PartialEq>(section: &mut Option<T>) {
    if section.as_ref().is_some_and(|s| *s == T::default()) {
        *section = None;
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(text) = std::env::var("COINFLOW_THREADS") {
        let n: usize = text.parse().with_context(|| format!("COINFLOW_THREADS={text:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate { common, init } => {
            let mut config = common.resolve()?;
            override_with(&mut config.init, init);
            commands::simulate(&config)?;
        }
        Command::Exact { common, exact } => {
            let mut config = common.resolve()?;
            let section = config.exact.get_or_insert_with(Default::default);
            override_with(&mut section.method, exact.method);
            override_with(&mut section.bank, exact.bank);
            override_with(&mut section.max_cost, exact.max_cost);
            prune(&mut config.exact);
            commands::exact(&config)?;
        }
        Command::Laplace { common, laplace } => {
            let mut config = common.resolve()?;
            let section = config.laplace.get_or_insert_with(Default::default);
            override_with(&mut section.temperature, laplace.temperature);
            override_with(&mut section.rho, laplace.rho);
            override_with(&mut section.c_min, laplace.c_min);
            override_with(&mut section.c_max, laplace.c_max);
            prune(&mut config.laplace);
            commands::laplace(&config)?;
        }
        Command::Meanfield { common, meanfield } => {
            let mut config = common.resolve()?;
            let section = config.meanfield.get_or_insert_with(Default::default);
            override_with(&mut section.temperature, meanfield.temperature);
            override_with(&mut section.rho, meanfield.rho);
            override_with(&mut section.policy, meanfield.policy);
            override_with(&mut section.t_end, meanfield.t_end);
            override_with(&mut section.dt, meanfield.dt);
            override_with(&mut section.snapshot_every, meanfield.snapshot_every);
            override_with(&mut section.c_min, meanfield.c_min);
            override_with(&mut section.c_max, meanfield.c_max);
            prune(&mut config.meanfield);
            commands::meanfield(&config)?;
        }
        Command::Verify { common, level } => {
            let mut config = common.resolve()?;
            override_with(&mut config.verify.get_or_insert_with(Default::default).level, level);
            prune(&mut config.verify);
            return commands::verify(&config);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match configure_threads().and_then(|()| dispatch(cli)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
