use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use serde::Serialize;

use coinflow::analysis::exact_to_distribution;
use coinflow::combinatorics::{
    money_distribution_by_lambda, money_distribution_exact, money_pmf_by_lambda, money_pmf_exact, ExactInstance,
};
use coinflow::graph::{assign_banks, build_graph, BankPartition, Graph, GraphSpec, PartitionSpec};
use coinflow::io::{
    distribution_rows, exact_pmf_json, histogram_rows, profile_rows, write_exact_pmf_csv, write_histogram_csv,
    write_json, write_trajectory_csv,
};
use coinflow::laplace::{check_identities, equilibrium_fractions, laplace_params};
use coinflow::meanfield::{default_bounds, integrate, residual, BankPolicy, IntegrateError, MeanFieldState};
use coinflow::verify::{battery, Level};
use coinflow::{run_replicas, SimParams};

use crate::config::{parse_policy, RunConfig};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SAMPLES: u64 = 1_000;
pub const DEFAULT_MAX_COST: f64 = 1e9;
const DEFAULT_OUT: &str = "out";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

/// Fills the defaults that affect results, creates the output directory and
/// records the effective configuration in it as `run.toml`.
fn prepare(config: &RunConfig) -> Result<(RunConfig, PathBuf)> {
    let mut config = config.clone();
    config.seed.get_or_insert(DEFAULT_SEED);
    let out = config.out.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT)).clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("run.toml"), config.to_toml()?)?;
    Ok((config, out))
}

fn population(config: &RunConfig) -> Result<(Graph, BankPartition)> {
    let spec: GraphSpec = config.graph.as_deref().context("no graph given (--graph or `graph` in the config)")?.parse()?;
    let graph = build_graph(&spec)?;
    let banks: PartitionSpec = config.banks.as_deref().unwrap_or("equal:1").parse()?;
    let reserves = config.reserves.clone().context("no reserves given (--reserves or `reserves` in the config)")?;
    let partition = assign_banks(&graph, &banks, reserves)?;
    Ok((graph, partition))
}

fn coins(config: &RunConfig) -> Result<i64> {
    let m = config.coins.context("no coin total given (--coins or `coins` in the config)")?;
    ensure!(m > 0, "coin total must be positive, got {m}");
    Ok(m)
}

/// `(T, rho)` from explicit values, else from `M / N` and `R / M`.
fn temperature_and_rho(config: &RunConfig, temperature: Option<f64>, rho: Option<f64>) -> Result<(f64, f64)> {
    if let (Some(t), Some(r)) = (temperature, rho) {
        return Ok((t, r));
    }
    let m = coins(config)? as f64;
    let t = match temperature {
        Some(t) => t,
        None => {
            let spec: GraphSpec = config.graph.as_deref().context("need --temperature or a graph and coin total")?.parse()?;
            m / build_graph(&spec)?.vertex_count() as f64
        }
    };
    let r = match rho {
        Some(r) => r,
        None => config.reserves.as_ref().context("need --rho or reserves and a coin total")?.iter().sum::<u64>() as f64 / m,
    };
    Ok((t, r))
}

pub fn simulate(config: &RunConfig) -> Result<()> {
    let (config, out) = prepare(config)?;
    let (graph, partition) = population(&config)?;
    let m = coins(&config)?;
    let params = SimParams {
        total_coins: m,
        burn_in_steps: config.burn_in.unwrap_or(100 * m as u64),
        sample_interval: config.interval.unwrap_or(graph.vertex_count() as u64),
        total_samples: config.samples.unwrap_or(DEFAULT_SAMPLES),
        seed: config.seed.unwrap_or(DEFAULT_SEED),
    };
    let replicas = config.replicas.unwrap_or(1);
    info!("simulating {} steps x {replicas} replicas", params.total_steps());
    let report = run_replicas(&graph, &partition, &params, config.init_mode()?, replicas)?;
    info!("finished in {:.1} s", report.wall_clock.as_secs_f64());

    write_json(create(&out, "summary.json")?, &report.summary())?;
    write_histogram_csv(create(&out, "histogram.csv")?, &histogram_rows(&report.histogram))?;
    let mut w = create(&out, "reserves.csv")?;
    writeln!(w, "replica,sample,step,bank,fraction")?;
    for (k, row) in report.reserve_trajectory.iter().enumerate() {
        let (replica, sample) = (k as u64 / params.total_samples, k as u64 % params.total_samples);
        let step = params.burn_in_steps + sample * params.sample_interval;
        for (bank, fraction) in row.iter().enumerate() {
            writeln!(w, "{replica},{sample},{step},{},{fraction}", bank + 1)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn exact(config: &RunConfig) -> Result<()> {
    let (config, out) = prepare(config)?;
    let (_, partition) = population(&config)?;
    let instance = ExactInstance::from_partition(&partition, coins(&config)?)?;
    let section = config.exact.clone().unwrap_or_default();
    let limit = section.max_cost.unwrap_or(DEFAULT_MAX_COST);
    let bank = match section.bank {
        Some(0) => bail!("banks are numbered from 1"),
        Some(j) if j > instance.bank_count() => bail!("bank {j} does not exist ({} banks)", instance.bank_count()),
        other => other.map(|j| j - 1),
    };
    let method = section.method.as_deref().unwrap_or("series");
    let estimate = match method {
        "series" => instance.distribution_cost(),
        "direct" => instance.direct_cost(),
        other => bail!("unknown method {other:?} (expected series or direct)"),
    };
    if estimate > limit {
        bail!("estimated cost {estimate:.3e} operations exceeds the limit {limit:.3e}; raise --max-cost to proceed");
    }
    let pmf = match (method, bank) {
        ("series", None) => money_distribution_exact(&instance)?,
        ("series", Some(j)) => money_pmf_exact(&instance, j)?,
        (_, None) => money_distribution_by_lambda(&instance)?,
        (_, Some(j)) => money_pmf_by_lambda(&instance, j)?,
    };
    write_exact_pmf_csv(create(&out, "pmf.csv")?, &pmf)?;
    write_json(create(&out, "pmf.json")?, &exact_pmf_json(&pmf))?;
    write_histogram_csv(create(&out, "distribution.csv")?, &distribution_rows(&exact_to_distribution(&pmf)))?;
    Ok(())
}

#[derive(Serialize)]
struct LaplaceSummary {
    temperature: f64,
    rho: f64,
    mu: f64,
    a: f64,
    /// `null` when there is no debt.
    b: Option<f64>,
    degenerate: bool,
    u_plus: f64,
    u_minus: f64,
    identity_residuals: [f64; 3],
}

pub fn laplace(config: &RunConfig) -> Result<()> {
    let (config, out) = prepare(config)?;
    let section = config.laplace.clone().unwrap_or_default();
    let (t, rho) = temperature_and_rho(&config, section.temperature, section.rho)?;
    let params = laplace_params(t, rho)?;
    let (u_plus, u_minus) = equilibrium_fractions(rho)?;
    let summary = LaplaceSummary {
        temperature: t,
        rho,
        mu: params.mu,
        a: params.a,
        b: (!params.is_degenerate()).then(|| params.b.value()),
        degenerate: params.is_degenerate(),
        u_plus,
        u_minus,
        identity_residuals: check_identities(&params, t, rho),
    };
    write_json(create(&out, "laplace.json")?, &summary)?;

    let (lo, hi) = default_bounds(t, rho);
    let (lo, hi) = (section.c_min.unwrap_or(lo), section.c_max.unwrap_or(hi));
    ensure!(lo <= hi, "empty range [{lo}, {hi}]");
    let mut w = create(&out, "laplace.csv")?;
    writeln!(w, "c,density")?;
    for c in lo..=hi {
        writeln!(w, "{c},{}", params.pdf(c as f64))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MeanFieldSummary {
    temperature: f64,
    rho: f64,
    banks: usize,
    policy: BankPolicy,
    t_end: f64,
    dt: f64,
    steps: u64,
    c_min: i64,
    c_max: i64,
    max_mass_drift: f64,
    max_mean_drift: f64,
    leaked_mass: f64,
    residual: f64,
    mean: f64,
    ubar: f64,
    p: Vec<f64>,
    beta: Vec<f64>,
    fraction_positive: f64,
    fraction_zero: f64,
    fraction_negative: f64,
}

fn write_terminal(out: &Path, state: &MeanFieldState) -> Result<()> {
    write_histogram_csv(create(out, "terminal.csv")?, &profile_rows(state))?;
    Ok(())
}

pub fn meanfield(config: &RunConfig) -> Result<()> {
    let (config, out) = prepare(config)?;
    let section = config.meanfield.clone().unwrap_or_default();
    let (t, rho) = temperature_and_rho(&config, section.temperature, section.rho)?;
    ensure!(t >= 1.0 && t.fract() == 0.0, "the initial state puts every individual at c = T, so T must be a positive integer (got {t})");
    let banks = match config.banks.as_deref().unwrap_or("equal:1").parse()? {
        PartitionSpec::EqualSplit(k) if k > 0 => k,
        other => bail!("mean-field runs take banks as equal:K with K >= 1, got {other}"),
    };
    let policy = match &section.policy {
        Some(text) => parse_policy(text)?,
        None => BankPolicy::default(),
    };
    let t_end = section.t_end.unwrap_or(50.0 * t * t);
    let dt = section.dt.unwrap_or(match policy {
        BankPolicy::ReserveIndicator { epsilon } => (5.0 * epsilon).min(0.2),
        BankPolicy::Constant { .. } => 0.2,
    });
    let (lo, hi) = default_bounds(t, rho);
    let (lo, hi) = (section.c_min.unwrap_or(lo), section.c_max.unwrap_or(hi));
    ensure!(lo <= 0 && hi >= t as i64, "window [{lo}, {hi}] must contain 0 and T = {t}");

    let start = MeanFieldState::delta(banks, t as i64, rho * t, lo, hi);
    info!("integrating to t = {t_end} with dt = {dt}");
    let trajectory = match integrate(&start, policy, t_end, dt, section.snapshot_every) {
        Ok(tr) => tr,
        Err(IntegrateError::NonFinite { t: at, last_good }) => {
            write_terminal(&out, &last_good)?;
            bail!("integration produced non-finite values at t = {at}; last finite state written to terminal.csv");
        }
        Err(e) => return Err(e.into()),
    };
    write_trajectory_csv(create(&out, "trajectory.csv")?, &trajectory)?;
    let s = &trajectory.terminal;
    write_terminal(&out, s)?;
    let (fraction_positive, fraction_zero, fraction_negative) = s.sign_fractions();
    let summary = MeanFieldSummary {
        temperature: t,
        rho,
        banks,
        policy,
        t_end: trajectory.t_end,
        dt,
        steps: trajectory.steps,
        c_min: lo,
        c_max: hi,
        max_mass_drift: trajectory.max_mass_drift,
        max_mean_drift: trajectory.max_mean_drift,
        leaked_mass: trajectory.leaked_mass,
        residual: residual(s),
        mean: s.mean(),
        ubar: s.ubar(),
        p: s.p.clone(),
        beta: s.beta.clone(),
        fraction_positive,
        fraction_zero,
        fraction_negative,
    };
    write_json(create(&out, "meanfield.json")?, &summary)?;
    Ok(())
}

/// Prints one line per check; `Ok(false)` when any check fails.
pub fn verify(config: &RunConfig) -> Result<bool> {
    let level = match config.verify.as_ref().and_then(|v| v.level.as_deref()).unwrap_or("quick") {
        "quick" => Level::Quick,
        "full" => Level::Full,
        other => bail!("unknown level {other:?} (expected quick or full)"),
    };
    let checks = battery(level, config.seed.unwrap_or(DEFAULT_SEED));
    for check in &checks {
        println!("{}", check.line());
    }
    if config.out.is_some() {
        let (_, out) = prepare(config)?;
        write_json(create(&out, "verify.json")?, &checks)?;
    }
    Ok(checks.iter().all(|c| c.passed))
}
