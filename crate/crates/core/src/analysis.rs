//! Exact checks on small instances and comparisons between distributions.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_bigint::BigInt;
use num_rational::{BigRational, Rational64};
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{ratio_to_f64, ExactInstance, ExactPMF};
use crate::dynamics::{Configuration, Observer, SimReport};
use crate::error::AnalysisError;
use crate::graph::{BankPartition, Graph};
use crate::laplace::{DebtRate, LaplaceParams};

/// Default cap on the number of states [`StateSet::enumerate`] will build.
pub const STATE_LIMIT: f64 = 1e7;

/// Every admissible coin vector for a partition and coin total, in
/// lexicographic order. Bank reserves are implied by the coin vector.
#[derive(Debug, Clone)]
pub struct StateSet {
    bank_of: Vec<usize>,
    reserves: Vec<i64>,
    total_coins: i64,
    states: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
}

impl StateSet {
    pub fn enumerate(partition: &BankPartition, total_coins: i64) -> Result<Self, AnalysisError> {
        Self::enumerate_with_limit(partition, total_coins, STATE_LIMIT)
    }

    pub fn enumerate_with_limit(partition: &BankPartition, total_coins: i64, limit: f64) -> Result<Self, AnalysisError> {
        let total_reserve = partition.total_reserve() as f64;
        let candidates: f64 = (0..partition.vertex_count())
            .map(|v| total_coins as f64 + total_reserve + partition.reserves()[partition.bank_of(v)] as f64 + 1.0)
            .product();
        if candidates > limit {
            return Err(AnalysisError::TooManyStates { estimate: candidates, limit });
        }
        let bank_of: Vec<usize> = (0..partition.vertex_count()).map(|v| partition.bank_of(v)).collect();
        let reserves: Vec<i64> = partition.reserves().iter().map(|&r| r as i64).collect();
        let mut search = Search {
            bank_of: &bank_of,
            total_coins,
            total_reserve: reserves.iter().sum(),
            remaining: reserves.clone(),
            current: Vec::with_capacity(bank_of.len()),
            out: Vec::new(),
        };
        search.descend(0, 0);
        let mut states = search.out;
        states.sort();
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(StateSet { bank_of, reserves, total_coins, states, index })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    pub fn index_of(&self, coins: &[i64]) -> Option<usize> {
        self.index.get(coins).copied()
    }

    pub fn total_coins(&self) -> i64 {
        self.total_coins
    }

    /// `B(i) = R_i - debt_i` for every bank.
    pub fn bank_reserves(&self, coins: &[i64]) -> Vec<i64> {
        let mut b = self.reserves.clone();
        for (v, &c) in coins.iter().enumerate() {
            if c < 0 {
                b[self.bank_of[v]] += c;
            }
        }
        b
    }

    fn matches(&self, partition: &BankPartition) -> bool {
        self.bank_of.len() == partition.vertex_count()
            && self.bank_of.iter().enumerate().all(|(v, &b)| partition.bank_of(v) == b)
            && self.reserves.iter().zip(partition.reserves()).all(|(&a, &b)| a == b as i64)
    }

    /// Law of the coins of a uniform vertex under the uniform law on states,
    /// optionally restricted to the customers of one bank.
    pub fn marginal(&self, bank: Option<usize>) -> ExactPMF {
        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        let mut total = 0u64;
        for s in &self.states {
            for (v, &c) in s.iter().enumerate() {
                if bank.is_none_or(|b| self.bank_of[v] == b) {
                    *counts.entry(c).or_default() += 1;
                    total += 1;
                }
            }
        }
        let denom = BigInt::from(total);
        ExactPMF::from_masses(
            counts.into_iter().map(|(c, n)| (c, BigRational::new(BigInt::from(n), denom.clone()))).collect(),
        )
    }
}

/// Layout with the customers of each bank on consecutive vertices.
pub fn contiguous_partition(instance: &ExactInstance) -> BankPartition {
    let bank_of = instance
        .bank_sizes()
        .iter()
        .enumerate()
        .flat_map(|(i, &n)| std::iter::repeat_n(i, n as usize))
        .collect();
    BankPartition::from_assignment(bank_of, instance.reserves().to_vec()).expect("instance banks are non-empty")
}

/// [`StateSet::enumerate`] on the [`contiguous_partition`] of `instance`.
pub fn enumerate_states(instance: &ExactInstance) -> Result<StateSet, AnalysisError> {
    StateSet::enumerate(&contiguous_partition(instance), instance.total_coins())
}

struct Search<'a> {
    bank_of: &'a [usize],
    total_coins: i64,
    total_reserve: i64,
    remaining: Vec<i64>,
    current: Vec<i64>,
    out: Vec<Vec<i64>>,
}

impl Search<'_> {
    // positive holdings equal M + debt, so never exceed M + R
    fn descend(&mut self, v: usize, positive: i64) {
        if v == self.bank_of.len() {
            if self.current.iter().sum::<i64>() == self.total_coins {
                self.out.push(self.current.clone());
            }
            return;
        }
        let bank = self.bank_of[v];
        let cap = self.total_coins + self.total_reserve - positive;
        for c in -self.remaining[bank]..=cap {
            if c < 0 {
                self.remaining[bank] += c;
            }
            self.current.push(c);
            self.descend(v + 1, positive + c.max(0));
            self.current.pop();
            if c < 0 {
                self.remaining[bank] -= c;
            }
        }
    }
}

/// Sparse transition matrix on a [`StateSet`] with exact entries.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    rows: Vec<Vec<(usize, Rational64)>>,
}

/// Structural checks on a [`TransitionMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixChecks {
    pub states: usize,
    pub rows_stochastic: bool,
    pub columns_stochastic: bool,
    pub uniform_stationary: bool,
    pub irreducible: bool,
    pub has_self_loop: bool,
}

impl MatrixChecks {
    pub fn all_pass(&self) -> bool {
        self.rows_stochastic && self.columns_stochastic && self.uniform_stationary && self.irreducible && self.has_self_loop
    }
}

/// Builds the one-step kernel: each of the `2|E|` directed edges `x -> y` is
/// picked with probability `1 / 2|E|` and moves a coin when `x` holds one or
/// its bank can lend; the rest of the mass stays on the diagonal.
pub fn transition_matrix(
    graph: &Graph,
    partition: &BankPartition,
    states: &StateSet,
) -> Result<TransitionMatrix, AnalysisError> {
    if !states.matches(partition) || graph.vertex_count() != partition.vertex_count() {
        return Err(AnalysisError::LayoutMismatch);
    }
    let directed = 2 * graph.edge_count() as i64;
    let unit = Rational64::new(1, directed);
    let mut rows = Vec::with_capacity(states.len());
    for (i, s) in states.states().iter().enumerate() {
        let reserves = states.bank_reserves(s);
        let mut row: BTreeMap<usize, Rational64> = BTreeMap::new();
        let mut moved = Rational64::zero();
        for (x, y) in graph.directed_edges() {
            if s[x] > 0 || reserves[partition.bank_of(x)] > 0 {
                let mut t = s.clone();
                t[x] -= 1;
                t[y] += 1;
                let j = states.index_of(&t).ok_or(AnalysisError::StateNotFound(t))?;
                *row.entry(j).or_insert_with(Rational64::zero) += unit;
                moved += unit;
            }
        }
        let stay = Rational64::one() - moved;
        if !stay.is_zero() {
            *row.entry(i).or_insert_with(Rational64::zero) += stay;
        }
        rows.push(row.into_iter().collect());
    }
    Ok(TransitionMatrix { rows })
}

impl TransitionMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, Rational64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> Rational64 {
        self.rows[i].iter().find(|(k, _)| *k == j).map(|(_, p)| *p).unwrap_or_else(Rational64::zero)
    }

    pub fn column_sums(&self) -> Vec<Rational64> {
        let mut sums = vec![Rational64::zero(); self.rows.len()];
        for row in &self.rows {
            for &(j, p) in row {
                sums[j] += p;
            }
        }
        sums
    }

    /// `pi P` for a row vector `pi`.
    pub fn left_multiply(&self, pi: &[Rational64]) -> Vec<Rational64> {
        let mut out = vec![Rational64::zero(); self.rows.len()];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                out[j] += pi[i] * p;
            }
        }
        out
    }

    fn reaches_all(&self, forward: bool) -> bool {
        let n = self.rows.len();
        if n == 0 {
            return true;
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                if !p.is_zero() {
                    if forward { adj[i].push(j) } else { adj[j].push(i) }
                }
            }
        }
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn checks(&self) -> MatrixChecks {
        let n = self.rows.len();
        let one = Rational64::one();
        let rows_stochastic = self.rows.iter().all(|r| r.iter().map(|&(_, p)| p).sum::<Rational64>() == one);
        let columns_stochastic = self.column_sums().iter().all(|s| *s == one);
        let uniform = vec![Rational64::new(1, n.max(1) as i64); n];
        let uniform_stationary = self.left_multiply(&uniform) == uniform;
        MatrixChecks {
            states: n,
            rows_stochastic,
            columns_stochastic,
            uniform_stationary,
            irreducible: self.reaches_all(true) && self.reaches_all(false),
            has_self_loop: (0..n).any(|i| !self.entry(i, i).is_zero()),
        }
    }
}

/// Probability masses on integer coin values.
pub type Distribution = BTreeMap<i64, f64>;

/// Counts per coin value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<i64, u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn fractions(&self) -> Result<Distribution, AnalysisError> {
        normalize_histogram(&self.counts)
    }
}

pub fn empirical_histogram(report: &SimReport) -> Result<Histogram, AnalysisError> {
    if report.histogram_total() == 0 {
        return Err(AnalysisError::EmptyHistogram);
    }
    Ok(Histogram { counts: report.histogram.clone() })
}

const NORMALISATION_TOLERANCE: f64 = 1e-9;

pub fn normalize_histogram(hist: &BTreeMap<i64, u64>) -> Result<Distribution, AnalysisError> {
    let total: u64 = hist.values().sum();
    if total == 0 {
        return Err(AnalysisError::EmptyHistogram);
    }
    Ok(hist.iter().map(|(&c, &n)| (c, n as f64 / total as f64)).collect())
}

fn check_normalised(p: &Distribution) -> Result<(), AnalysisError> {
    let total: f64 = p.values().sum();
    if (total - 1.0).abs() > NORMALISATION_TOLERANCE {
        return Err(AnalysisError::NotNormalised(total));
    }
    Ok(())
}

/// `(1/2) sum_c |p(c) - q(c)|` over the union of supports.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> Result<f64, AnalysisError> {
    check_normalised(p)?;
    check_normalised(q)?;
    let mut sum = 0.0;
    for (c, &pc) in p {
        sum += (pc - q.get(c).copied().unwrap_or(0.0)).abs();
    }
    for (c, &qc) in q {
        if !p.contains_key(c) {
            sum += qc;
        }
    }
    Ok(sum / 2.0)
}

/// Largest gap between the two cumulative distribution functions.
pub fn ks_distance(p: &Distribution, q: &Distribution) -> Result<f64, AnalysisError> {
    check_normalised(p)?;
    check_normalised(q)?;
    let keys: std::collections::BTreeSet<i64> = p.keys().chain(q.keys()).copied().collect();
    let (mut fp, mut fq, mut worst) = (0.0, 0.0, 0.0f64);
    for c in keys {
        fp += p.get(&c).copied().unwrap_or(0.0);
        fq += q.get(&c).copied().unwrap_or(0.0);
        worst = worst.max((fp - fq).abs());
    }
    Ok(worst)
}

pub fn mean_of(p: &Distribution) -> f64 {
    p.iter().map(|(&c, &m)| c as f64 * m).sum()
}

pub fn exact_to_distribution(pmf: &ExactPMF) -> Distribution {
    let total = pmf.total();
    pmf.masses().iter().map(|(&c, m)| (c, ratio_to_f64(&(m / &total)))).collect()
}

/// Laplace density at each integer of `[lo, hi]` widened to the bulk
/// `[-40/b, 40/a]`, renormalised to a probability mass function.
pub fn laplace_masses(params: &LaplaceParams, lo: i64, hi: i64) -> Distribution {
    let bulk_hi = (40.0 / params.a).ceil() as i64;
    let bulk_lo = match params.b {
        DebtRate::Finite(b) => -((40.0 / b).ceil() as i64),
        DebtRate::Infinite => 0,
    };
    let (lo, hi) = (lo.min(bulk_lo), hi.max(bulk_hi));
    let raw: Vec<(i64, f64)> = (lo..=hi).map(|c| (c, params.pdf(c as f64))).filter(|&(_, m)| m > 0.0).collect();
    let total: f64 = raw.iter().map(|&(_, m)| m).sum();
    raw.into_iter().map(|(c, m)| (c, m / total)).collect()
}

#[derive(Debug, Clone)]
pub enum Reference {
    Exact(ExactPMF),
    Laplace(LaplaceParams),
    Table(Distribution),
}

impl Reference {
    /// The reference as masses, covering at least `[lo, hi]` for Laplace.
    pub fn distribution(&self, lo: i64, hi: i64) -> Distribution {
        match self {
            Reference::Exact(pmf) => exact_to_distribution(pmf),
            Reference::Laplace(params) => laplace_masses(params, lo, hi),
            Reference::Table(d) => d.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub tv: f64,
    pub ks: f64,
    pub empirical_mean: f64,
    pub reference_mean: f64,
    pub mean_gap: f64,
    pub samples: u64,
}

pub fn compare_to_reference(hist: &Histogram, reference: &Reference) -> Result<Comparison, AnalysisError> {
    let empirical = hist.fractions()?;
    let lo = *empirical.keys().next().expect("non-empty");
    let hi = *empirical.keys().next_back().expect("non-empty");
    let reference = reference.distribution(lo, hi);
    let empirical_mean = mean_of(&empirical);
    let reference_mean = mean_of(&reference);
    Ok(Comparison {
        tv: tv_distance(&empirical, &reference)?,
        ks: ks_distance(&empirical, &reference)?,
        empirical_mean,
        reference_mean,
        mean_gap: (empirical_mean - reference_mean).abs(),
        samples: hist.total(),
    })
}

/// Observer counting how often each full coin vector is seen.
#[derive(Debug, Default, Clone)]
pub struct StateVisits {
    pub counts: HashMap<Vec<i64>, u64>,
}

impl StateVisits {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    /// Total variation between visit frequencies and the uniform law on `states`.
    pub fn tv_to_uniform(&self, states: &StateSet) -> Result<f64, AnalysisError> {
        let total = self.total();
        if total == 0 {
            return Err(AnalysisError::EmptyHistogram);
        }
        let u = 1.0 / states.len() as f64;
        let mut sum = 0.0;
        for s in states.states() {
            let f = self.counts.get(s).copied().unwrap_or(0) as f64 / total as f64;
            sum += (f - u).abs();
        }
        for (s, &n) in &self.counts {
            if states.index_of(s).is_none() {
                return Err(AnalysisError::StateNotFound(s.clone()));
            }
            let _ = n;
        }
        Ok(sum / 2.0)
    }
}

impl Observer for StateVisits {
    fn observe(&mut self, _step: u64, config: &Configuration) {
        *self.counts.entry(config.coins().to_vec()).or_default() += 1;
    }
}
