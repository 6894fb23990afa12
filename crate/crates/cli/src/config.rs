use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use coinflow::dynamics::InitMode;
use coinflow::meanfield::BankPolicy;

/// One experiment manifest. Every field is optional in the file; command-line
/// flags override whatever the file says.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub banks: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reserves: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coins: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meanfield: Option<MeanFieldSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactSection {
    /// `series` (default) or `direct`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    /// 1-based bank index; the whole-population mixture when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_cost: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_min: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_max: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// `reserve:EPSILON` or `constant:P`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_every: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_min: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_max: Option<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// `quick` or `full`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Fills every field set in `flags`, leaving the rest untouched.
    pub fn apply(&mut self, flags: &CommonArgs) {
        fn set<T: Clone>(slot: &mut Option<T>, value: &Option<T>) {
            if value.is_some() {
                slot.clone_from(value);
            }
        }
        set(&mut self.graph, &flags.graph);
        set(&mut self.banks, &flags.banks);
        set(&mut self.reserves, &flags.reserves);
        set(&mut self.coins, &flags.coins);
        set(&mut self.seed, &flags.seed);
        set(&mut self.replicas, &flags.replicas);
        set(&mut self.out, &flags.out);
        set(&mut self.burn_in, &flags.burn_in);
        set(&mut self.samples, &flags.samples);
        set(&mut self.interval, &flags.interval);
    }

    pub fn init_mode(&self) -> Result<InitMode> {
        match self.init.as_deref().unwrap_or("flat") {
            "flat" => Ok(InitMode::Flat),
            "hoarder" => Ok(InitMode::SingleHoarder),
            other => bail!("unknown init mode {other:?} (expected flat or hoarder)"),
        }
    }
}

/// Parses `reserve:EPSILON` or `constant:P`.
pub fn parse_policy(text: &str) -> Result<BankPolicy> {
    let (kind, value) = text.split_once(':').with_context(|| format!("policy {text:?} is not KIND:VALUE"))?;
    let value: f64 = value.parse().with_context(|| format!("bad number in policy {text:?}"))?;
    match kind {
        "reserve" if value > 0.0 => Ok(BankPolicy::ReserveIndicator { epsilon: value }),
        "constant" if (0.0..=1.0).contains(&value) => Ok(BankPolicy::Constant { p: value }),
        "reserve" | "constant" => bail!("policy value out of range in {text:?}"),
        other => bail!("unknown policy {other:?} (expected reserve or constant)"),
    }
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// complete:N, cycle:N, path:N, grid:RxC or file:PATH
    #[arg(long, value_name = "SPEC")]
    pub graph: Option<String>,
    /// equal:K or file:PATH
    #[arg(long, value_name = "SPEC")]
    pub banks: Option<String>,
    /// Total coins M held by the individuals
    #[arg(long, value_name = "M")]
    pub coins: Option<i64>,
    /// Initial bank reserves, comma separated
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub reserves: Option<Vec<u64>>,
    #[arg(long, value_name = "N")]
    pub burn_in: Option<u64>,
    #[arg(long, value_name = "N")]
    pub samples: Option<u64>,
    #[arg(long, value_name = "N")]
    pub interval: Option<u64>,
}

impl CommonArgs {
    /// The config file (if any) with these flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply(self);
        Ok(config)
    }
}
