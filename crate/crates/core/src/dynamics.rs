//! Coin configurations and the one-coin transaction chain with banks.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::graph::{BankPartition, Graph};
use crate::rng::{replica_stream, SimRng};

const AUDIT_PERIOD: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// `M / N` coins each, the first `M mod N` vertices get one more.
    Flat,
    /// Vertex 0 holds everything.
    SingleHoarder,
}

/// Signed coin count per vertex plus the cached reserve of every bank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    coins: Vec<i64>,
    reserves: Vec<i64>,
}

impl Configuration {
    pub fn new(partition: &BankPartition, total_coins: i64, mode: InitMode) -> Result<Self, SimError> {
        if total_coins <= 0 {
            return Err(SimError::NonPositiveCoins(total_coins));
        }
        let n = partition.vertex_count();
        let coins = match mode {
            InitMode::Flat => {
                let base = total_coins / n as i64;
                let extra = (total_coins % n as i64) as usize;
                (0..n).map(|v| base + i64::from(v < extra)).collect()
            }
            InitMode::SingleHoarder => {
                let mut c = vec![0; n];
                c[0] = total_coins;
                c
            }
        };
        Ok(Configuration {
            coins,
            reserves: partition.reserves().iter().map(|&r| r as i64).collect(),
        })
    }

    /// Builds a configuration from explicit coin counts, deriving the reserves.
    /// Returns `None` when some bank has lent more than it holds.
    pub fn from_coins(partition: &BankPartition, coins: Vec<i64>) -> Option<Self> {
        assert_eq!(coins.len(), partition.vertex_count());
        let mut config = Configuration { coins, reserves: Vec::new() };
        config.reserves = (0..partition.bank_count())
            .map(|i| bank_reserve(&config, partition, i).unwrap())
            .collect();
        config.reserves.iter().all(|&b| b >= 0).then_some(config)
    }

    pub fn coins(&self) -> &[i64] {
        &self.coins
    }

    /// Cached reserves `B(i)`.
    pub fn reserves(&self) -> &[i64] {
        &self.reserves
    }

    pub fn total_coins(&self) -> i64 {
        self.coins.iter().sum()
    }

    /// True when every cached reserve matches its recomputation.
    pub fn audit(&self, partition: &BankPartition) -> bool {
        (0..self.reserves.len()).all(|i| bank_reserve(self, partition, i) == Ok(self.reserves[i]))
    }

    /// Applies the transaction along the directed edge `x -> y`. Returns
    /// whether a coin moved; a broke payer whose bank is empty cancels.
    #[inline]
    pub fn transact(&mut self, x: usize, y: usize, partition: &BankPartition) -> bool {
        let i = partition.bank_of(x);
        let cx = self.coins[x];
        if cx > 0 || self.reserves[i] > 0 {
            if cx <= 0 {
                self.reserves[i] -= 1;
            }
            self.coins[x] = cx - 1;
            let cy = self.coins[y];
            if cy < 0 {
                self.reserves[partition.bank_of(y)] += 1;
            }
            self.coins[y] = cy + 1;
            true
        } else {
            false
        }
    }
}

/// Reserve of bank `bank` recomputed from scratch: `R_i` plus the total
/// (negative) holdings of its customers in debt.
pub fn bank_reserve(config: &Configuration, partition: &BankPartition, bank: usize) -> Result<i64, SimError> {
    if bank >= partition.bank_count() {
        return Err(SimError::BankOutOfRange { index: bank, banks: partition.bank_count() });
    }
    let debt: i64 = partition.members(bank).map(|v| config.coins[v].min(0)).sum();
    Ok(partition.reserves()[bank] as i64 + debt)
}

/// One step of the chain: a uniform directed edge, then the transaction.
#[inline]
pub fn step<R: Rng + ?Sized>(
    config: &mut Configuration,
    graph: &Graph,
    partition: &BankPartition,
    rng: &mut R,
) -> bool {
    let (x, y) = graph.sample_directed_edge(rng);
    config.transact(x, y, partition)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimParams {
    pub total_coins: i64,
    pub burn_in_steps: u64,
    pub sample_interval: u64,
    pub total_samples: u64,
    pub seed: u64,
}

impl SimParams {
    /// Default schedule: burn-in of `100 N T = 100 M` steps, one sample per
    /// sweep of `N` steps.
    pub fn with_defaults(vertex_count: usize, total_coins: i64, total_samples: u64, seed: u64) -> Self {
        SimParams {
            total_coins,
            burn_in_steps: 100 * total_coins.max(0) as u64,
            sample_interval: vertex_count as u64,
            total_samples,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.total_coins <= 0 {
            return Err(SimError::NonPositiveCoins(self.total_coins));
        }
        if self.sample_interval == 0 {
            return Err(SimError::ZeroCount("sample_interval"));
        }
        if self.total_samples == 0 {
            return Err(SimError::ZeroCount("total_samples"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> u64 {
        self.burn_in_steps + (self.total_samples - 1) * self.sample_interval
    }
}

/// Hook called at every sampling round.
pub trait Observer {
    fn observe(&mut self, step: u64, config: &Configuration);
}

impl<F: FnMut(u64, &Configuration)> Observer for F {
    fn observe(&mut self, step: u64, config: &Configuration) {
        self(step, config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub vertex_count: usize,
    pub bank_sizes: Vec<u64>,
    pub bank_reserves: Vec<u64>,
    pub params: SimParams,
    pub replicas: u64,
    /// Coin count -> number of (vertex, sample) pairs holding it.
    pub histogram: BTreeMap<i64, u64>,
    /// Per sample, per bank: `B(i) / R` (0 when `R = 0`).
    pub reserve_trajectory: Vec<Vec<f64>>,
    pub executed: u64,
    pub canceled: u64,
    pub steps: u64,
    #[serde(skip)]
    pub wall_clock: Duration,
}

// wall-clock time is the only nondeterministic field
impl PartialEq for SimReport {
    fn eq(&self, other: &Self) -> bool {
        self.vertex_count == other.vertex_count
            && self.bank_sizes == other.bank_sizes
            && self.bank_reserves == other.bank_reserves
            && self.params == other.params
            && self.replicas == other.replicas
            && self.histogram == other.histogram
            && self.reserve_trajectory == other.reserve_trajectory
            && self.executed == other.executed
            && self.canceled == other.canceled
            && self.steps == other.steps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub vertex_count: usize,
    pub bank_sizes: Vec<u64>,
    pub bank_reserves: Vec<u64>,
    pub total_coins: i64,
    pub seed: u64,
    pub replicas: u64,
    pub burn_in_steps: u64,
    pub sample_interval: u64,
    pub total_samples: u64,
    pub steps: u64,
    pub canceled_fraction: f64,
    pub mean_coins: f64,
    pub mean_reserve_fraction: Vec<f64>,
    pub bank_available_fraction: Vec<f64>,
    pub fraction_positive: f64,
    pub fraction_zero: f64,
    pub fraction_negative: f64,
}

impl SimReport {
    pub fn histogram_total(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn canceled_fraction(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.canceled as f64 / self.steps as f64
        }
    }

    pub fn mean_coins(&self) -> f64 {
        let total = self.histogram_total() as f64;
        self.histogram.iter().map(|(&c, &n)| c as f64 * n as f64).sum::<f64>() / total
    }

    /// Time-averaged `B(i) / R` per bank.
    pub fn mean_reserve_fraction(&self) -> Vec<f64> {
        let k = self.bank_sizes.len();
        let mut acc = vec![0.0; k];
        for row in &self.reserve_trajectory {
            for (a, b) in acc.iter_mut().zip(row) {
                *a += b;
            }
        }
        let n = self.reserve_trajectory.len().max(1) as f64;
        acc.into_iter().map(|a| a / n).collect()
    }

    /// Per bank, fraction of samples at which the bank could lend (`B(i) > 0`).
    pub fn bank_available_fraction(&self) -> Vec<f64> {
        let k = self.bank_sizes.len();
        let mut acc = vec![0u64; k];
        for row in &self.reserve_trajectory {
            for (a, &b) in acc.iter_mut().zip(row) {
                *a += u64::from(b > 0.0);
            }
        }
        let n = self.reserve_trajectory.len().max(1) as f64;
        acc.into_iter().map(|a| a as f64 / n).collect()
    }

    /// Fractions of vertex samples with `c > 0`, `c = 0`, `c < 0`.
    pub fn sign_fractions(&self) -> (f64, f64, f64) {
        let total = self.histogram_total() as f64;
        let mut pos = 0u64;
        let mut neg = 0u64;
        for (&c, &n) in &self.histogram {
            if c > 0 {
                pos += n;
            } else if c < 0 {
                neg += n;
            }
        }
        let zero = self.histogram.get(&0).copied().unwrap_or(0);
        (pos as f64 / total, zero as f64 / total, neg as f64 / total)
    }

    pub fn summary(&self) -> SimSummary {
        let (fraction_positive, fraction_zero, fraction_negative) = self.sign_fractions();
        SimSummary {
            vertex_count: self.vertex_count,
            bank_sizes: self.bank_sizes.clone(),
            bank_reserves: self.bank_reserves.clone(),
            total_coins: self.params.total_coins,
            seed: self.params.seed,
            replicas: self.replicas,
            burn_in_steps: self.params.burn_in_steps,
            sample_interval: self.params.sample_interval,
            total_samples: self.params.total_samples,
            steps: self.steps,
            canceled_fraction: self.canceled_fraction(),
            mean_coins: self.mean_coins(),
            mean_reserve_fraction: self.mean_reserve_fraction(),
            bank_available_fraction: self.bank_available_fraction(),
            fraction_positive,
            fraction_zero,
            fraction_negative,
        }
    }

    /// Merges replica reports in the given (replica index) order.
    pub fn merge(reports: Vec<SimReport>) -> Option<SimReport> {
        let mut iter = reports.into_iter();
        let mut merged = iter.next()?;
        for r in iter {
            for (c, n) in r.histogram {
                *merged.histogram.entry(c).or_insert(0) += n;
            }
            merged.reserve_trajectory.extend(r.reserve_trajectory);
            merged.executed += r.executed;
            merged.canceled += r.canceled;
            merged.steps += r.steps;
            merged.replicas += r.replicas;
            merged.wall_clock = merged.wall_clock.max(r.wall_clock);
        }
        Some(merged)
    }
}

struct Counters {
    executed: u64,
    canceled: u64,
    steps: u64,
}

#[inline]
fn advance(
    config: &mut Configuration,
    graph: &Graph,
    partition: &BankPartition,
    rng: &mut SimRng,
    steps: u64,
    counters: &mut Counters,
) {
    let mut executed = 0u64;
    for _ in 0..steps {
        executed += u64::from(step(config, graph, partition, rng));
        #[cfg(debug_assertions)]
        {
            if (counters.steps + 1) % AUDIT_PERIOD == 0 {
                assert!(config.audit(partition), "cached bank reserves drifted");
            }
            counters.steps += 1;
        }
    }
    #[cfg(not(debug_assertions))]
    {
        counters.steps += steps;
    }
    counters.executed += executed;
    counters.canceled += steps - executed;
}

/// Runs burn-in then `total_samples` sampling rounds `sample_interval` steps
/// apart, using replica stream 0 of `params.seed`.
pub fn run(
    config: &mut Configuration,
    graph: &Graph,
    partition: &BankPartition,
    params: &SimParams,
    observers: &mut [&mut dyn Observer],
) -> Result<SimReport, SimError> {
    run_stream(config, graph, partition, params, 0, observers)
}

fn run_stream(
    config: &mut Configuration,
    graph: &Graph,
    partition: &BankPartition,
    params: &SimParams,
    replica: u64,
    observers: &mut [&mut dyn Observer],
) -> Result<SimReport, SimError> {
    params.validate()?;
    if graph.edge_count() == 0 {
        return Err(SimError::NoEdges);
    }
    assert_eq!(graph.vertex_count(), partition.vertex_count(), "graph and partition disagree on N");
    assert_eq!(config.total_coins(), params.total_coins, "configuration does not hold M coins");

    let started = Instant::now();
    let mut rng = replica_stream(params.seed, replica);
    let max_debt = partition.reserves().iter().copied().max().unwrap_or(0) as i64;
    let top = params.total_coins + partition.total_reserve() as i64;
    let mut dense = vec![0u64; (top + max_debt + 1) as usize];
    let total_reserve = partition.total_reserve() as f64;
    let mut trajectory = Vec::with_capacity(params.total_samples as usize);
    let mut counters = Counters { executed: 0, canceled: 0, steps: 0 };

    advance(config, graph, partition, &mut rng, params.burn_in_steps, &mut counters);
    for sample in 0..params.total_samples {
        if sample > 0 {
            advance(config, graph, partition, &mut rng, params.sample_interval, &mut counters);
        }
        for &c in config.coins() {
            dense[(c + max_debt) as usize] += 1;
        }
        trajectory.push(
            config
                .reserves()
                .iter()
                .map(|&b| if total_reserve > 0.0 { b as f64 / total_reserve } else { 0.0 })
                .collect(),
        );
        for obs in observers.iter_mut() {
            obs.observe(counters.steps, config);
        }
    }

    let histogram = dense
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(i, &n)| (i as i64 - max_debt, n))
        .collect();
    Ok(SimReport {
        vertex_count: graph.vertex_count(),
        bank_sizes: partition.bank_sizes().to_vec(),
        bank_reserves: partition.reserves().to_vec(),
        params: *params,
        replicas: 1,
        histogram,
        reserve_trajectory: trajectory,
        executed: counters.executed,
        canceled: counters.canceled,
        steps: counters.steps,
        wall_clock: started.elapsed(),
    })
}

/// Runs `replicas` independent chains (replica `r` uses stream `r` of the
/// seed) concurrently and merges their reports in replica order.
pub fn run_replicas(
    graph: &Graph,
    partition: &BankPartition,
    params: &SimParams,
    mode: InitMode,
    replicas: u64,
) -> Result<SimReport, SimError> {
    if replicas == 0 {
        return Err(SimError::NoReplicas);
    }
    let reports = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut config = Configuration::new(partition, params.total_coins, mode)?;
            run_stream(&mut config, graph, partition, params, r, &mut [])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimReport::merge(reports).expect("at least one replica"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{assign_banks, build_graph, GraphSpec, PartitionSpec};
    use proptest::prelude::*;

    fn single_bank(n: usize, reserve: u64) -> (Graph, BankPartition) {
        let g = build_graph(&GraphSpec::Complete(n)).unwrap();
        let p = assign_banks(&g, &PartitionSpec::EqualSplit(1), vec![reserve]).unwrap();
        (g, p)
    }

    #[test]
    fn flat_init() {
        let (_, p) = single_bank(4, 2);
        let c = Configuration::new(&p, 8, InitMode::Flat).unwrap();
        assert_eq!(c.coins(), &[2, 2, 2, 2]);
        assert_eq!(c.reserves(), &[2]);
        let (_, p3) = single_bank(3, 0);
        assert_eq!(Configuration::new(&p3, 7, InitMode::Flat).unwrap().coins(), &[3, 2, 2]);
        assert_eq!(Configuration::new(&p3, 5, InitMode::SingleHoarder).unwrap().coins(), &[5, 0, 0]);
        assert_eq!(Configuration::new(&p3, 0, InitMode::Flat), Err(SimError::NonPositiveCoins(0)));
    }

    #[test]
    fn kernel_traces() {
        let (_, p) = single_bank(2, 1);
        let mut c = Configuration::from_coins(&p, vec![1, 0]).unwrap();
        let mut d = c.clone();
        assert!(c.transact(0, 1, &p));
        assert_eq!((c.coins(), c.reserves()), (&[0, 1][..], &[1][..]));
        assert!(d.transact(1, 0, &p));
        assert_eq!((d.coins(), d.reserves()), (&[2, -1][..], &[0][..]));

        // payer broke and bank empty: canceled
        let mut e = d.clone();
        assert!(!e.transact(1, 0, &p));
        assert_eq!(e, d);
        // receiver in debt repays the bank
        assert!(d.transact(0, 1, &p));
        assert_eq!((d.coins(), d.reserves()), (&[1, 0][..], &[1][..]));
    }

    #[test]
    fn zero_coin_payer_borrows() {
        let (_, p) = single_bank(2, 3);
        let mut c = Configuration::from_coins(&p, vec![0, 1]).unwrap();
        assert!(c.transact(0, 1, &p));
        assert_eq!(c.coins(), &[-1, 2]);
        assert_eq!(c.reserves(), &[2]);
    }

    #[test]
    fn bank_reserve_recomputes() {
        let (_, p) = single_bank(2, 1);
        let c = Configuration::from_coins(&p, vec![2, -1]).unwrap();
        assert_eq!(bank_reserve(&c, &p, 0), Ok(0));
        let c = Configuration::from_coins(&p, vec![1, 0]).unwrap();
        assert_eq!(bank_reserve(&c, &p, 0), Ok(1));
        let (_, p4) = single_bank(4, 5);
        let c = Configuration::new(&p4, 8, InitMode::Flat).unwrap();
        assert_eq!(bank_reserve(&c, &p4, 0), Ok(5));
        assert_eq!(bank_reserve(&c, &p4, 1), Err(SimError::BankOutOfRange { index: 1, banks: 1 }));
        assert!(Configuration::from_coins(&p, vec![3, -2]).is_none());
    }

    #[test]
    fn histogram_total_counts_vertex_samples() {
        let (g, p) = single_bank(4, 2);
        let mut c = Configuration::new(&p, 8, InitMode::Flat).unwrap();
        let params = SimParams { total_coins: 8, burn_in_steps: 50, sample_interval: 3, total_samples: 10, seed: 1 };
        let report = run(&mut c, &g, &p, &params, &mut []).unwrap();
        assert_eq!(report.histogram_total(), 40);
        assert_eq!(report.executed + report.canceled, report.steps);
        assert_eq!(report.steps, params.total_steps());
        assert_eq!(report.reserve_trajectory.len(), 10);
        assert!((report.mean_coins() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_report() {
        let g = build_graph(&GraphSpec::Cycle(6)).unwrap();
        let p = assign_banks(&g, &PartitionSpec::EqualSplit(2), vec![2, 1]).unwrap();
        let params = SimParams { total_coins: 9, burn_in_steps: 100, sample_interval: 6, total_samples: 200, seed: 42 };
        let a = run_replicas(&g, &p, &params, InitMode::Flat, 3).unwrap();
        let b = run_replicas(&g, &p, &params, InitMode::Flat, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.histogram_total(), 3 * 200 * 6);
        let c = run_replicas(&g, &p, &SimParams { seed: 43, ..params }, InitMode::Flat, 3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn observers_see_every_round() {
        let (g, p) = single_bank(3, 1);
        let mut c = Configuration::new(&p, 3, InitMode::Flat).unwrap();
        let params = SimParams { total_coins: 3, burn_in_steps: 0, sample_interval: 2, total_samples: 5, seed: 0 };
        let mut seen = Vec::new();
        let mut obs = |s: u64, _: &Configuration| seen.push(s);
        run(&mut c, &g, &p, &params, &mut [&mut obs]).unwrap();
        assert_eq!(seen, vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn rejects_edgeless_graph() {
        let (g, p) = single_bank(1, 0);
        let mut c = Configuration::new(&p, 2, InitMode::Flat).unwrap();
        let params = SimParams::with_defaults(1, 2, 1, 0);
        assert_eq!(run(&mut c, &g, &p, &params, &mut []).unwrap_err(), SimError::NoEdges);
    }

    proptest! {
        #[test]
        fn steps_conserve_coins_and_move_one_coin_along_an_edge(
            seed in any::<u64>(),
            n in 2usize..7,
            coins in 1i64..12,
            r0 in 0u64..4,
            r1 in 0u64..4,
            cycle in any::<bool>(),
        ) {
            let spec = if cycle && n >= 3 { GraphSpec::Cycle(n) } else { GraphSpec::Complete(n) };
            let g = build_graph(&spec).unwrap();
            let k = if n % 2 == 0 { 2 } else { 1 };
            let reserves = if k == 2 { vec![r0, r1] } else { vec![r0] };
            let p = assign_banks(&g, &PartitionSpec::EqualSplit(k), reserves).unwrap();
            let total = coins + p.total_reserve() as i64;
            let mut c = Configuration::new(&p, coins, InitMode::SingleHoarder).unwrap();
            let mut rng = replica_stream(seed, 0);
            for _ in 0..300 {
                let before = c.clone();
                step(&mut c, &g, &p, &mut rng);
                prop_assert_eq!(c.total_coins(), coins);
                let held: i64 = c.coins().iter().map(|&x| x.max(0)).sum();
                prop_assert_eq!(held + c.reserves().iter().sum::<i64>(), total);
                prop_assert!(c.audit(&p));
                prop_assert!(c.reserves().iter().all(|&b| b >= 0));
                let changed: Vec<usize> = (0..n).filter(|&v| c.coins()[v] != before.coins()[v]).collect();
                match changed.as_slice() {
                    [] => {}
                    [u, v] => {
                        prop_assert!(g.has_edge(*u, *v));
                        prop_assert_eq!((c.coins()[*u] - before.coins()[*u]).abs(), 1);
                        prop_assert_eq!(c.coins()[*u] - before.coins()[*u], before.coins()[*v] - c.coins()[*v]);
                    }
                    other => prop_assert!(false, "{} coordinates changed", other.len()),
                }
                for (x, &cx) in c.coins().iter().enumerate() {
                    let ri = p.reserves()[p.bank_of(x)] as i64;
                    prop_assert!(-ri <= cx && cx <= total);
                }
            }
        }
    }
}
