//! Generating-function evaluation of configuration counts.
//!
//! For one bank with `n` customers and reserve cap `r`, the configurations
//! of its customers weighted by `z^(coins held)` sum to
//!
//! ```text
//! G(z) = sum_{a<=r} sum_{b<=n} C(n,b) C(a-1,b-1) z^(-a) (1-z)^(-(n-b))
//!      = L(z) (1-z)^(-n),   L(z) = sum_{a,b} C(n,b) C(a-1,b-1) z^(-a) (1-z)^b
//! ```
//!
//! and the number of admissible configurations with `m` coins in total is
//! the coefficient of `z^m` in the product over banks. `L` is a Laurent
//! polynomial with exponents in `[-r, n]`, so a whole coin distribution costs
//! a few polynomial products plus `N` prefix-sum passes instead of one
//! K-fold sum per coin value. The binomial convention of the direct sum
//! (`C(-1,-1) = 1`, zero outside `0 <= k <= n`) is exactly what the series
//! expansion produces, including for negative `m`.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{One, Zero};

use super::binom::{binom, pascal_rows};

/// `sum_k coeffs[k] z^(low + k)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Laurent {
    low: i64,
    coeffs: Vec<BigInt>,
}

impl Laurent {
    pub(crate) fn one() -> Self {
        Laurent { low: 0, coeffs: vec![BigInt::one()] }
    }

    pub(crate) fn low(&self) -> i64 {
        self.low
    }

    pub(crate) fn high(&self) -> i64 {
        self.low + self.coeffs.len() as i64 - 1
    }

    pub(crate) fn coeff(&self, e: i64) -> Option<&BigInt> {
        if e < self.low {
            return None;
        }
        self.coeffs.get((e - self.low) as usize)
    }

    pub(crate) fn mul(&self, other: &Laurent) -> Laurent {
        let mut out = vec![BigInt::zero(); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.coeffs.iter().enumerate() {
                if !b.is_zero() {
                    out[i + j] += a * b;
                }
            }
        }
        Laurent { low: self.low + other.low, coeffs: out }
    }

    /// Adds `sum_k terms[k] z^(low + k)` in place, growing the range as needed.
    fn add_block(&mut self, low: i64, terms: Vec<BigInt>) {
        let high = low + terms.len() as i64 - 1;
        if low < self.low {
            let pad = (self.low - low) as usize;
            let mut grown = vec![BigInt::zero(); pad];
            grown.append(&mut self.coeffs);
            self.coeffs = grown;
            self.low = low;
        }
        if high > self.high() {
            self.coeffs.resize((high - self.low + 1) as usize, BigInt::zero());
        }
        let offset = (low - self.low) as usize;
        for (k, t) in terms.into_iter().enumerate() {
            self.coeffs[offset + k] += t;
        }
    }

    /// Coefficients of `self * (1-z)^(-power)` at exponents `low()..=top`.
    pub(crate) fn divide_by_one_minus_z(&self, power: u64, top: i64) -> Series {
        let len = (top - self.low + 1).max(0) as usize;
        let mut values: Vec<BigInt> = (0..len)
            .map(|k| self.coeffs.get(k).cloned().unwrap_or_else(BigInt::zero))
            .collect();
        for _ in 0..power {
            for k in 1..values.len() {
                let (head, tail) = values.split_at_mut(k);
                tail[0] += &head[k - 1];
            }
        }
        Series { low: self.low, values }
    }
}

/// Power-series coefficients on a finite exponent window; zero outside it.
#[derive(Debug, Clone)]
pub(crate) struct Series {
    low: i64,
    values: Vec<BigInt>,
}

impl Series {
    pub(crate) fn at(&self, e: i64) -> Option<&BigInt> {
        if e < self.low {
            return None;
        }
        self.values.get((e - self.low) as usize)
    }
}

/// Walks the bank polynomial `L` for a fixed customer count and every
/// reserve cap `0..=cap`, calling `visit(r, L_r)` in increasing `r`.
pub(crate) fn for_each_cap(customers: u64, cap: u64, mut visit: impl FnMut(u64, &Laurent)) {
    let n = customers as usize;
    let choose_n: Vec<BigUint> = (0..=n).map(|b| binom(n as i64, b as i64)).collect();
    let pascal = pascal_rows(n);
    // lower[k] = C(r - 1, k) for k < n, advanced one row per cap
    let mut lower: Vec<BigUint> = vec![BigUint::zero(); n.max(1)];
    let mut poly = Laurent::one();
    visit(0, &poly);
    for r in 1..=cap {
        // row r - 1 from row r - 2
        if r == 1 {
            lower[0] = BigUint::one();
        } else {
            for k in (1..lower.len()).rev() {
                let prev = lower[k - 1].clone();
                lower[k] += prev;
            }
        }
        let top = n.min(r as usize);
        if top >= 1 {
            // D_r(z) = sum_{b=1}^{top} C(n,b) C(r-1,b-1) (1-z)^b
            let weights: Vec<BigInt> = (1..=top)
                .map(|b| BigInt::from_biguint(Sign::Plus, &choose_n[b] * &lower[b - 1]))
                .collect();
            let mut block = vec![BigInt::zero(); top + 1];
            for (k, slot) in block.iter_mut().enumerate() {
                let mut acc = BigInt::zero();
                for b in k.max(1)..=top {
                    acc += &weights[b - 1] * BigInt::from_biguint(Sign::Plus, pascal[b][k].clone());
                }
                *slot = if k % 2 == 0 { acc } else { -acc };
            }
            poly.add_block(-(r as i64), block);
        }
        visit(r, &poly);
    }
}

pub(crate) fn bank_polynomial(customers: u64, cap: u64) -> Laurent {
    let mut last = Laurent::one();
    for_each_cap(customers, cap, |r, p| {
        if r == cap {
            last = p.clone();
        }
    });
    last
}

pub(crate) fn product<'a>(polys: impl IntoIterator<Item = &'a Laurent>) -> Laurent {
    polys.into_iter().fold(Laurent::one(), |acc, p| acc.mul(p))
}

/// Number of configurations with `coins` in total over `vertices` vertices,
/// given the product `poly` of the bank polynomials.
pub(crate) fn total_count(poly: &Laurent, vertices: u64, coins: i64) -> BigInt {
    if vertices == 0 {
        return poly.coeff(coins).cloned().unwrap_or_else(BigInt::zero);
    }
    let v = vertices as i64;
    let mut acc = BigInt::zero();
    // [z^k] (1-z)^(-v) = C(k + v - 1, v - 1)
    let mut e = poly.high().min(coins);
    if e < poly.low() {
        return acc;
    }
    let mut k = coins - e;
    let mut factor = BigInt::from_biguint(Sign::Plus, binom(k + v - 1, v - 1));
    loop {
        if let Some(c) = poly.coeff(e) {
            if !c.is_zero() {
                acc += c * &factor;
            }
        }
        if e == poly.low() {
            break;
        }
        e -= 1;
        k += 1;
        // C(k + v - 1, v - 1) from C(k + v - 2, v - 1)
        factor = factor * (k + v - 1) / k;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(p: &Laurent) -> Vec<(i64, i64)> {
        (p.low()..=p.high())
            .filter_map(|e| p.coeff(e).filter(|c| !c.is_zero()).map(|c| (e, i64::try_from(c).unwrap())))
            .collect()
    }

    #[test]
    fn single_customer_bank_has_no_debtors() {
        // one customer, b = 1 possible: C(1,1) C(a-1,0) z^(-a) (1-z)
        let p = bank_polynomial(1, 2);
        // 1 + (z^-1 + z^-2)(1 - z) = 1 + z^-2 + z^-1 - z^-1 - 1 = z^-2
        assert_eq!(coeffs(&p), vec![(-2, 1)]);
        assert_eq!(coeffs(&bank_polynomial(0, 5)), vec![(0, 1)]);
    }

    #[test]
    fn count_two_vertices_one_coin_one_reserve() {
        let p = bank_polynomial(2, 1);
        assert_eq!(total_count(&p, 2, 1), BigInt::from(4));
    }

    #[test]
    fn no_reserve_is_stars_and_bars() {
        for n in 1..6u64 {
            let p = bank_polynomial(n, 0);
            for m in 0..8i64 {
                assert_eq!(total_count(&p, n, m), BigInt::from_biguint(Sign::Plus, binom(m + n as i64 - 1, n as i64 - 1)));
            }
        }
    }

    #[test]
    fn prefix_sums_match_binomial_series() {
        let p = Laurent::one();
        let s = p.divide_by_one_minus_z(3, 6);
        for k in 0..=6 {
            assert_eq!(*s.at(k).unwrap(), BigInt::from_biguint(Sign::Plus, binom(k + 2, 2)));
        }
    }
}
