use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

/// Binomial coefficient under the counting convention used throughout:
/// `C(-1, -1) = 1`, `C(n, k) = 0` when `k < 0` or `k > n`, the usual value
/// otherwise. The `(-1, -1)` case takes precedence over the `k < 0` rule.
pub fn binom(n: i64, k: i64) -> BigUint {
    if n == -1 && k == -1 {
        return BigUint::one();
    }
    if k < 0 || k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    let mut acc = BigUint::one();
    for i in 1..=k {
        acc *= n - k + i;
        acc /= i;
    }
    acc
}

/// Memoising wrapper around [`binom`].
#[derive(Debug, Default)]
pub struct BinomialCache {
    memo: HashMap<(i64, i64), BigUint>,
}

impl BinomialCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, n: i64, k: i64) -> &BigUint {
        self.memo.entry((n, k)).or_insert_with(|| binom(n, k))
    }

    pub fn len(&self) -> usize {
        self.memo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.memo.is_empty()
    }
}

/// Rows `0..=n` of Pascal's triangle.
pub(crate) fn pascal_rows(n: usize) -> Vec<Vec<BigUint>> {
    let mut rows: Vec<Vec<BigUint>> = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mut row = Vec::with_capacity(m + 1);
        for k in 0..=m {
            if k == 0 || k == m {
                row.push(BigUint::one());
            } else {
                let prev = &rows[m - 1];
                row.push(&prev[k - 1] + &prev[k]);
            }
        }
        rows.push(row);
    }
    rows
}
