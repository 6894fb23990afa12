//! Hand-derived values and published parameters.

use std::collections::BTreeMap;

use approx::assert_relative_eq;
use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;

use coinflow::analysis::{enumerate_states, transition_matrix, contiguous_partition};
use coinflow::combinatorics::{binom, lambda_count, money_distribution_exact, money_pmf_exact, phi, ExactInstance};
use coinflow::laplace::{check_identities, equilibrium_fractions, laplace_params, laplace_pdf};
use coinflow::meanfield::{residual, stationary_profile};
use coinflow::Graph;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn inst(n: Vec<u64>, r: Vec<u64>, m: i64) -> ExactInstance {
    ExactInstance::new(n, r, m).unwrap()
}

#[test]
fn binomial_convention() {
    assert_eq!(binom(5, 2), BigUint::from(10u8));
    assert_eq!(binom(-1, -1), BigUint::from(1u8));
    for (n, k) in [(-1, 0), (4, -1), (3, 5)] {
        assert_eq!(binom(n, k), BigUint::from(0u8));
    }
}

#[test]
fn phi_terms() {
    let i = inst(vec![2], vec![1], 1);
    assert_eq!(phi(&[1], &[1], &i), BigUint::from(2u8));
    assert_eq!(phi(&[0], &[0], &i), BigUint::from(2u8));
    assert_eq!(phi(&[1], &[0], &i), BigUint::from(0u8));
}

#[test]
fn configuration_counts() {
    assert_eq!(lambda_count(&inst(vec![2], vec![1], 1)), BigUint::from(4u8));
    assert_eq!(lambda_count(&inst(vec![3], vec![0], 2)), BigUint::from(6u8));
    assert_eq!(lambda_count(&ExactInstance::unchecked(vec![1], vec![5], 3)), BigUint::from(1u8));
}

#[test]
fn pmf_examples() {
    let two = money_pmf_exact(&inst(vec![2], vec![1], 1), 0).unwrap();
    let quarter: BTreeMap<i64, BigRational> = (-1..=2).map(|c| (c, q(1, 4))).collect();
    assert_eq!(two.masses(), &quarter);

    let three = money_pmf_exact(&inst(vec![3], vec![0], 2), 0).unwrap();
    let expected: BTreeMap<i64, BigRational> = [(0, q(3, 6)), (1, q(2, 6)), (2, q(1, 6))].into();
    assert_eq!(three.masses(), &expected);

    let asym = money_distribution_exact(&inst(vec![2, 2], vec![2, 0], 4)).unwrap();
    assert_eq!(asym.mean(), q(1, 1));
}

#[test]
fn state_space_examples() {
    let s = enumerate_states(&inst(vec![2], vec![1], 1)).unwrap();
    assert_eq!(s.states(), &[vec![-1, 2], vec![0, 1], vec![1, 0], vec![2, -1]]);
    assert_eq!(enumerate_states(&inst(vec![3], vec![0], 2)).unwrap().len(), 6);
}

#[test]
fn single_edge_kernel() {
    let i = inst(vec![2], vec![1], 1);
    let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
    let s = enumerate_states(&i).unwrap();
    let m = transition_matrix(&g, &contiguous_partition(&i), &s).unwrap();
    let at = |v: [i64; 2]| s.index_of(&v).unwrap();
    let half = num_rational::Rational64::new(1, 2);
    assert_eq!(m.entry(at([1, 0]), at([0, 1])), half);
    assert_eq!(m.entry(at([1, 0]), at([2, -1])), half);
    assert_eq!(m.entry(at([2, -1]), at([1, 0])), half);
    assert_eq!(m.entry(at([2, -1]), at([2, -1])), half);
}

// two identical banks, N = 10^4, M = 5 * 10^6, R = 10^6
#[test]
fn large_population_parameters() {
    let p = laplace_params(500.0, 0.2).unwrap();
    assert_relative_eq!(p.mu, 8.4041e-4, max_relative = 1e-4);
    assert_relative_eq!(p.a, 1.18350e-3, max_relative = 1e-5);
    assert_relative_eq!(p.b.value(), 2.89898e-3, max_relative = 1e-5);
    assert_relative_eq!(laplace_pdf(&p, 1000.0), 2.573e-4, max_relative = 1e-3);
    assert!(check_identities(&p, 500.0, 0.2).iter().all(|&r| r < 1e-12));

    let (up, down) = equilibrium_fractions(0.2).unwrap();
    assert_relative_eq!(up, 0.7101, epsilon = 1e-4);
    assert_relative_eq!(down, 0.2899, epsilon = 1e-4);

    let unit = laplace_params(1.0, 1.0).unwrap();
    assert_relative_eq!(unit.mu, 0.171573, epsilon = 1e-6);
    assert_relative_eq!(unit.a, 0.292893, epsilon = 1e-6);
    assert_relative_eq!(unit.b.value(), 0.414214, epsilon = 1e-6);

    let flat = laplace_params(4.0, 0.0).unwrap();
    assert!(flat.is_degenerate());
    assert_eq!(flat.mu, 0.25);
}

#[test]
fn geometric_fixed_point() {
    let s = stationary_profile(0.5, 0.25, 1.0, -2, 2).unwrap();
    let got: Vec<f64> = (-2..=2).map(|c| s.get(0, c)).collect();
    assert_eq!(got, vec![0.25, 0.5, 1.0, 0.5, 0.25]);
    let wide = stationary_profile(0.8, 0.3, 1.0, -80, 200).unwrap().normalized();
    assert!(residual(&wide) < 1e-12);
}

// asymmetric pair of banks at the scale of the exact overlay, N = 100, M = 5000
#[test]
fn asymmetric_banks_mixture() {
    let i = inst(vec![50, 50], vec![800, 200], 5_000);
    let whole = money_distribution_exact(&i).unwrap();
    let rich = money_pmf_exact(&i, 0).unwrap();
    let poor = money_pmf_exact(&i, 1).unwrap();
    assert_eq!(whole.total(), q(1, 1));
    assert_eq!(whole.mean(), q(50, 1));
    // customers of the richer bank can go deeper into debt
    assert_eq!(rich.support().unwrap().0, -800);
    assert_eq!(poor.support().unwrap().0, -200);
}
