//! Exact configuration counts and the exact equilibrium distribution of money.
//!
//! Because the chain is uniform on admissible configurations at equilibrium,
//! the probability that a customer of bank `j` holds `c` coins is a ratio of
//! configuration counts. Counts are arbitrary-precision integers and
//! probabilities exact rationals.

mod binom;
mod series;

use std::collections::{BTreeMap, HashMap};

use log::warn;
use num_bigint::{BigInt, BigUint, Sign};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use binom::{binom, BinomialCache};

use crate::error::ExactError;
use crate::graph::BankPartition;

/// Above this many `(a, b)` terms `lambda_count` logs a cost warning.
pub const LAMBDA_TERM_WARNING: f64 = 1e8;

/// `(N_1..N_K, R_1..R_K, M)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExactInstance {
    bank_sizes: Vec<u64>,
    reserves: Vec<u64>,
    total_coins: i64,
}

impl ExactInstance {
    pub fn new(bank_sizes: Vec<u64>, reserves: Vec<u64>, total_coins: i64) -> Result<Self, ExactError> {
        if bank_sizes.is_empty() {
            return Err(ExactError::NoBanks);
        }
        if bank_sizes.len() != reserves.len() {
            return Err(ExactError::LengthMismatch { sizes: bank_sizes.len(), reserves: reserves.len() });
        }
        if let Some(i) = bank_sizes.iter().position(|&n| n == 0) {
            return Err(ExactError::EmptyBank(i));
        }
        if total_coins <= 0 {
            return Err(ExactError::NonPositiveCoins(total_coins));
        }
        Ok(ExactInstance { bank_sizes, reserves, total_coins })
    }

    /// Sub-instance used in numerators: no validation, `N_i = 0` and any
    /// sign of `M` allowed.
    pub fn unchecked(bank_sizes: Vec<u64>, reserves: Vec<u64>, total_coins: i64) -> Self {
        assert_eq!(bank_sizes.len(), reserves.len());
        ExactInstance { bank_sizes, reserves, total_coins }
    }

    pub fn from_partition(partition: &BankPartition, total_coins: i64) -> Result<Self, ExactError> {
        Self::new(partition.bank_sizes().to_vec(), partition.reserves().to_vec(), total_coins)
    }

    pub fn bank_count(&self) -> usize {
        self.bank_sizes.len()
    }

    pub fn bank_sizes(&self) -> &[u64] {
        &self.bank_sizes
    }

    pub fn reserves(&self) -> &[u64] {
        &self.reserves
    }

    pub fn total_coins(&self) -> i64 {
        self.total_coins
    }

    pub fn vertex_count(&self) -> u64 {
        self.bank_sizes.iter().sum()
    }

    pub fn total_reserve(&self) -> u64 {
        self.reserves.iter().sum()
    }

    /// Money temperature `T = M / N`.
    pub fn temperature(&self) -> f64 {
        self.total_coins as f64 / self.vertex_count() as f64
    }

    /// `rho = R / M`.
    pub fn rho(&self) -> f64 {
        self.total_reserve() as f64 / self.total_coins as f64
    }

    pub fn bank_rho(&self, bank: usize) -> f64 {
        self.reserves[bank] as f64 / self.total_coins as f64
    }

    /// Nominal number of `(a, b)` terms in the direct sum for `Lambda`.
    pub fn lambda_terms(&self) -> f64 {
        self.bank_sizes
            .iter()
            .zip(&self.reserves)
            .map(|(&n, &r)| (n as f64 + 1.0) * (r as f64 + 1.0))
            .product()
    }

    /// Rough number of big-integer operations `money_distribution_exact` needs.
    pub fn distribution_cost(&self) -> f64 {
        let n = self.vertex_count() as f64;
        let r = self.total_reserve() as f64;
        let m = self.total_coins as f64;
        self.bank_sizes
            .iter()
            .zip(&self.reserves)
            .map(|(&nj, &rj)| {
                let (nj, rj) = (nj as f64, rj as f64);
                2.0 * n * (m + r + rj) + rj * rj / 2.0 + rj * nj * nj + (rj + nj) * (r + n)
            })
            .sum()
    }

    /// Nominal `Lambda` terms [`money_pmf_by_lambda`] evaluates for every bank.
    pub fn direct_cost(&self) -> f64 {
        let top = (self.total_coins + self.total_reserve() as i64) as f64;
        self.reserves.iter().map(|&rj| (top + rj as f64 + 1.0) * self.lambda_terms()).sum()
    }

    fn without_customer(&self, bank: usize) -> Self {
        let mut sizes = self.bank_sizes.clone();
        sizes[bank] -= 1;
        ExactInstance { bank_sizes: sizes, reserves: self.reserves.clone(), total_coins: self.total_coins }
    }

    fn check_bank(&self, bank: usize) -> Result<(), ExactError> {
        if bank >= self.bank_count() {
            return Err(ExactError::BankOutOfRange { index: bank, banks: self.bank_count() });
        }
        if self.vertex_count() < 2 {
            return Err(ExactError::TooFewVertices(self.vertex_count()));
        }
        Ok(())
    }
}

/// Number of configurations with `a_i` coins borrowed from bank `i` by
/// exactly `b_i` of its customers.
pub fn phi(borrowed: &[i64], debtors: &[i64], instance: &ExactInstance) -> BigUint {
    assert_eq!(borrowed.len(), instance.bank_count());
    assert_eq!(debtors.len(), instance.bank_count());
    let mut acc = BigUint::one();
    for ((&a, &b), &n) in borrowed.iter().zip(debtors).zip(&instance.bank_sizes) {
        acc *= binom(n as i64, b) * binom(a - 1, b - 1);
        if acc.is_zero() {
            return acc;
        }
    }
    let n = instance.vertex_count() as i64;
    let a: i64 = borrowed.iter().sum();
    let b: i64 = debtors.iter().sum();
    acc * binom(instance.total_coins + a + n - b - 1, n - b - 1)
}

/// Total number of admissible configurations, `Lambda(N, R, M)`, by the
/// direct K-fold sum over borrowed totals and debtor counts.
pub fn lambda_count(instance: &ExactInstance) -> BigUint {
    let terms = instance.lambda_terms();
    if terms > LAMBDA_TERM_WARNING {
        warn!("Lambda sum over {terms:.3e} terms; expect a long computation");
    }
    // only (0, 0) and 1 <= b <= a give nonzero per-bank weights
    let per_bank: Vec<Vec<(i64, i64, BigUint)>> = instance
        .bank_sizes
        .iter()
        .zip(&instance.reserves)
        .map(|(&n, &r)| {
            let mut w = vec![(0, 0, BigUint::one())];
            for a in 1..=r as i64 {
                for b in 1..=a.min(n as i64) {
                    w.push((a, b, binom(n as i64, b) * binom(a - 1, b - 1)));
                }
            }
            w
        })
        .collect();

    let n = instance.vertex_count() as i64;
    let m = instance.total_coins;
    let mut inner: HashMap<(i64, i64), BigUint> = HashMap::new();
    let mut total = BigUint::zero();
    let mut cursor = vec![0usize; per_bank.len()];
    loop {
        let mut weight = BigUint::one();
        let (mut a, mut b) = (0i64, 0i64);
        for (bank, &idx) in per_bank.iter().zip(&cursor) {
            let (ai, bi, ref wi) = bank[idx];
            weight *= wi;
            a += ai;
            b += bi;
        }
        let factor = inner.entry((a, b)).or_insert_with(|| binom(m + a + n - b - 1, n - b - 1));
        if !factor.is_zero() {
            total += weight * &*factor;
        }
        // odometer
        let mut d = 0;
        loop {
            if d == cursor.len() {
                return total;
            }
            cursor[d] += 1;
            if cursor[d] < per_bank[d].len() {
                break;
            }
            cursor[d] = 0;
            d += 1;
        }
    }
}

/// Exact probability mass function over integer coin counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactPMF {
    mass: BTreeMap<i64, BigRational>,
}

impl ExactPMF {
    /// Drops zero masses at both ends of the support.
    pub fn from_masses(mass: BTreeMap<i64, BigRational>) -> Self {
        let mut mass = mass;
        while let Some((&c, v)) = mass.first_key_value() {
            if v.is_zero() { mass.remove(&c); } else { break; }
        }
        while let Some((&c, v)) = mass.last_key_value() {
            if v.is_zero() { mass.remove(&c); } else { break; }
        }
        ExactPMF { mass }
    }

    pub fn mass(&self, c: i64) -> BigRational {
        self.mass.get(&c).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn masses(&self) -> &BTreeMap<i64, BigRational> {
        &self.mass
    }

    pub fn support(&self) -> Option<(i64, i64)> {
        Some((*self.mass.first_key_value()?.0, *self.mass.last_key_value()?.0))
    }

    pub fn total(&self) -> BigRational {
        self.mass.values().fold(BigRational::zero(), |acc, v| acc + v)
    }

    pub fn mean(&self) -> BigRational {
        self.mass
            .iter()
            .fold(BigRational::zero(), |acc, (&c, v)| acc + v * BigRational::from_integer(BigInt::from(c)))
    }

    pub fn to_f64(&self) -> BTreeMap<i64, f64> {
        self.mass.iter().map(|(&c, v)| (c, ratio_to_f64(v))).collect()
    }

    /// `sum_j weights[j] * pmfs[j]`.
    pub fn mixture(parts: &[(BigRational, ExactPMF)]) -> ExactPMF {
        let mut mass: BTreeMap<i64, BigRational> = BTreeMap::new();
        for (w, pmf) in parts {
            for (&c, v) in &pmf.mass {
                let entry = mass.entry(c).or_insert_with(BigRational::zero);
                *entry += w * v;
            }
        }
        ExactPMF::from_masses(mass)
    }
}

pub fn ratio_to_f64(v: &BigRational) -> f64 {
    v.to_f64().unwrap_or_else(|| {
        // scale down huge numerators/denominators before converting
        let shift = v.numer().bits().max(v.denom().bits()).saturating_sub(1000);
        let n = (v.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let d = (v.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

fn to_ratio(num: BigInt, den: &BigInt) -> BigRational {
    BigRational::new(num, den.clone())
}

/// Distribution of the coins held by a customer of bank `bank` (0-based).
///
/// For `c >= 0` the mass is `Lambda(N - e_j, R, M - c) / Lambda(N, R, M)` and
/// for `-R_j <= c < 0` it is `Lambda(N - e_j, R + c e_j, M - c) / Lambda(N, R, M)`.
/// The first formula is applied for every `c` up to `M + R`, beyond `M`
/// included, where it counts configurations in which others are in debt.
pub fn money_pmf_exact(instance: &ExactInstance, bank: usize) -> Result<ExactPMF, ExactError> {
    instance.check_bank(bank)?;
    let k = instance.bank_count();
    let n = instance.vertex_count();
    let m = instance.total_coins;
    let r_j = instance.reserves[bank];

    let polys: Vec<series::Laurent> = (0..k)
        .map(|i| series::bank_polynomial(instance.bank_sizes[i], instance.reserves[i]))
        .collect();
    let rest = series::product(polys.iter().enumerate().filter(|(i, _)| *i != bank).map(|(_, p)| p));
    let all = rest.mul(&polys[bank]);
    let denominator = series::total_count(&all, n, m);
    debug_assert!(denominator > BigInt::zero());

    let mut mass = BTreeMap::new();
    let others = n - 1;
    let reduced = instance.bank_sizes[bank] - 1;

    // debt side: bank j's other customers may borrow only R_j + c
    let rest_series = rest.divide_by_one_minus_z(others, m + r_j as i64);
    let mut own_full = series::Laurent::one();
    series::for_each_cap(reduced, r_j, |cap, own| {
        if cap == r_j {
            own_full = own.clone();
            return;
        }
        let c = cap as i64 - r_j as i64;
        let target = m - c;
        let mut acc = BigInt::zero();
        for e in own.low()..=own.high() {
            if let (Some(a), Some(b)) = (own.coeff(e), rest_series.at(target - e)) {
                if !a.is_zero() && !b.is_zero() {
                    acc += a * b;
                }
            }
        }
        mass.insert(c, to_ratio(acc, &denominator));
    });

    // c >= 0, extended up to M + R
    let held = own_full.mul(&rest);
    let series = held.divide_by_one_minus_z(others, m);
    let top = m - held.low();
    for c in 0..=top {
        let count = series.at(m - c).cloned().unwrap_or_else(BigInt::zero);
        mass.insert(c, to_ratio(count, &denominator));
    }
    Ok(ExactPMF::from_masses(mass))
}

/// Same distribution as [`money_pmf_exact`], evaluated term by term from
/// [`lambda_count`]. Only practical on small instances.
pub fn money_pmf_by_lambda(instance: &ExactInstance, bank: usize) -> Result<ExactPMF, ExactError> {
    instance.check_bank(bank)?;
    let denominator = BigInt::from_biguint(Sign::Plus, lambda_count(instance));
    let reduced = instance.without_customer(bank);
    let r_j = instance.reserves[bank] as i64;
    let top = instance.total_coins + instance.total_reserve() as i64;
    let mut mass = BTreeMap::new();
    for c in -r_j..=top {
        let mut sub = reduced.clone();
        sub.total_coins = instance.total_coins - c;
        if c < 0 {
            sub.reserves[bank] = (r_j + c) as u64;
        }
        let count = BigInt::from_biguint(Sign::Plus, lambda_count(&sub));
        mass.insert(c, to_ratio(count, &denominator));
    }
    Ok(ExactPMF::from_masses(mass))
}

/// Whole-population mixture built from [`money_pmf_by_lambda`].
pub fn money_distribution_by_lambda(instance: &ExactInstance) -> Result<ExactPMF, ExactError> {
    let n = BigInt::from(instance.vertex_count());
    let parts = (0..instance.bank_count())
        .into_par_iter()
        .map(|j| {
            let w = BigRational::new(BigInt::from(instance.bank_sizes[j]), n.clone());
            money_pmf_by_lambda(instance, j).map(|pmf| (w, pmf))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExactPMF::mixture(&parts))
}

/// Fraction of all individuals holding `c` coins: the mixture of the
/// per-bank distributions with weights `N_j / N`.
pub fn money_distribution_exact(instance: &ExactInstance) -> Result<ExactPMF, ExactError> {
    let n = BigInt::from(instance.vertex_count());
    let parts = (0..instance.bank_count())
        .into_par_iter()
        .map(|j| {
            let w = BigRational::new(BigInt::from(instance.bank_sizes[j]), n.clone());
            money_pmf_exact(instance, j).map(|pmf| (w, pmf))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExactPMF::mixture(&parts))
}

/// Like [`money_distribution_exact`] but refuses instances whose estimated
/// cost exceeds `limit` big-integer operations.
pub fn money_distribution_guarded(instance: &ExactInstance, limit: f64) -> Result<ExactPMF, ExactError> {
    let estimate = instance.distribution_cost();
    if estimate > limit {
        return Err(ExactError::TooCostly { estimate, limit });
    }
    money_distribution_exact(instance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(n: &[u64], r: &[u64], m: i64) -> ExactInstance {
        ExactInstance::new(n.to_vec(), r.to_vec(), m).unwrap()
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn phi_hand_expansions() {
        let i = inst(&[2], &[1], 1);
        assert_eq!(phi(&[1], &[1], &i), BigUint::from(2u32));
        assert_eq!(phi(&[0], &[0], &i), BigUint::from(2u32));
        assert_eq!(phi(&[1], &[0], &i), BigUint::zero());
        assert_eq!(phi(&[3], &[0], &inst(&[3], &[4], 2)), BigUint::zero());
    }

    #[test]
    fn lambda_small_cases() {
        assert_eq!(lambda_count(&inst(&[2], &[1], 1)), BigUint::from(4u32));
        assert_eq!(lambda_count(&inst(&[3], &[0], 2)), BigUint::from(6u32));
        assert_eq!(lambda_count(&inst(&[1], &[5], 3)), BigUint::one());
    }

    #[test]
    fn lambda_handles_empty_population_and_negative_coins() {
        assert_eq!(lambda_count(&ExactInstance::unchecked(vec![0], vec![3], 0)), BigUint::one());
        assert_eq!(lambda_count(&ExactInstance::unchecked(vec![0], vec![3], 2)), BigUint::zero());
        // one vertex, cap 2, total -1: only xi = -1
        assert_eq!(lambda_count(&ExactInstance::unchecked(vec![1], vec![2], -1)), BigUint::one());
        assert_eq!(lambda_count(&ExactInstance::unchecked(vec![1], vec![2], -3)), BigUint::zero());
    }

    #[test]
    fn pmf_two_vertices_uniform() {
        let pmf = money_pmf_exact(&inst(&[2], &[1], 1), 0).unwrap();
        assert_eq!(pmf.support(), Some((-1, 2)));
        for c in -1..=2 {
            assert_eq!(pmf.mass(c), q(1, 4));
        }
    }

    #[test]
    fn pmf_stars_and_bars() {
        let pmf = money_pmf_exact(&inst(&[3], &[0], 2), 0).unwrap();
        assert_eq!(pmf.mass(0), q(3, 6));
        assert_eq!(pmf.mass(1), q(2, 6));
        assert_eq!(pmf.mass(2), q(1, 6));
        assert_eq!(pmf.support(), Some((0, 2)));
    }

    #[test]
    fn series_and_direct_routes_agree() {
        for (n, r, m) in [
            (vec![2u64], vec![1u64], 1i64),
            (vec![3], vec![2], 2),
            (vec![2, 2], vec![2, 0], 4),
            (vec![1, 3], vec![2, 1], 3),
            (vec![2, 1], vec![0, 2], 1),
            (vec![1, 1, 2], vec![1, 0, 2], 2),
        ] {
            let i = inst(&n, &r, m);
            for j in 0..i.bank_count() {
                assert_eq!(money_pmf_exact(&i, j).unwrap(), money_pmf_by_lambda(&i, j).unwrap(), "{i:?} bank {j}");
            }
            assert_eq!(money_distribution_exact(&i).unwrap(), money_distribution_by_lambda(&i).unwrap());
            assert!(i.direct_cost() >= i.lambda_terms());
        }
    }

    #[test]
    fn distribution_mean_is_temperature() {
        let i = inst(&[2, 2], &[2, 0], 4);
        let pmf = money_distribution_exact(&i).unwrap();
        assert_eq!(pmf.total(), BigRational::one());
        assert_eq!(pmf.mean(), q(4, 4));
    }

    #[test]
    fn symmetric_banks_match_either_bank() {
        let i = inst(&[2, 2], &[1, 1], 3);
        let mix = money_distribution_exact(&i).unwrap();
        assert_eq!(mix, money_pmf_exact(&i, 0).unwrap());
        assert_eq!(mix, money_pmf_exact(&i, 1).unwrap());
    }

    #[test]
    fn bank_errors() {
        let i = inst(&[2], &[1], 1);
        assert_eq!(money_pmf_exact(&i, 1).unwrap_err(), ExactError::BankOutOfRange { index: 1, banks: 1 });
        let single = inst(&[1], &[1], 1);
        assert_eq!(money_pmf_exact(&single, 0).unwrap_err(), ExactError::TooFewVertices(1));
        assert!(ExactInstance::new(vec![2], vec![1], 0).is_err());
        assert!(ExactInstance::new(vec![2, 0], vec![1, 1], 3).is_err());
    }

    #[test]
    fn singleton_bank_among_several() {
        // N_j = 1 with K > 1: removing the customer empties the bank
        let i = inst(&[1, 2], &[1, 1], 2);
        assert_eq!(money_pmf_exact(&i, 0).unwrap(), money_pmf_by_lambda(&i, 0).unwrap());
    }

    #[test]
    fn guard_reports_cost() {
        let i = inst(&[50, 50], &[8000, 2000], 50_000);
        match money_distribution_guarded(&i, 1e6) {
            Err(ExactError::TooCostly { estimate, .. }) => assert!(estimate > 1e6),
            other => panic!("expected cost error, got {other:?}"),
        }
    }
}
