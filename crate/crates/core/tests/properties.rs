use std::collections::HashMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

use coinflow::analysis::{
    compare_to_reference, contiguous_partition, enumerate_states, exact_to_distribution, transition_matrix, Histogram,
    Reference, StateSet,
};
use coinflow::combinatorics::{lambda_count, money_distribution_exact, money_pmf_exact, ExactInstance};
use coinflow::dynamics::{bank_reserve, step};
use coinflow::graph::{assign_banks, build_graph, BankPartition, Graph, GraphSpec, PartitionSpec};
use coinflow::laplace::laplace_params;
use coinflow::meanfield::{stationary_profile, vector_field, MeanFieldState};
use coinflow::rng::replica_stream;
use coinflow::{Configuration, InitMode};

#[test]
fn directed_edges_are_drawn_uniformly() {
    let draws = 1_000_000u64;
    for spec in [GraphSpec::Complete(6), GraphSpec::Cycle(7), GraphSpec::Grid { rows: 2, cols: 3 }] {
        let g = build_graph(&spec).unwrap();
        let mut rng = replica_stream(3, 0);
        let mut counts: HashMap<(usize, usize), u64> = HashMap::new();
        for _ in 0..draws {
            *counts.entry(g.sample_directed_edge(&mut rng)).or_default() += 1;
        }
        let k = 2 * g.edge_count();
        assert_eq!(counts.len(), k, "{spec}");
        let p = 1.0 / k as f64;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (&(x, y), &n) in &counts {
            assert!(g.has_edge(x, y));
            assert!((n as f64 - draws as f64 * p).abs() < 5.0 * sigma, "{spec} edge {x}->{y}: {n}");
        }
    }
}

/// Empirical rows from repeated single steps out of each state agree with
/// the exact matrix within 5 sigma per entry.
fn kernel_matches_matrix(graph: &Graph, partition: &BankPartition, states: &StateSet, trials: u64) {
    let matrix = transition_matrix(graph, partition, states).unwrap();
    let mut rng = replica_stream(17, 0);
    for (i, s) in states.states().iter().enumerate() {
        let mut hits: HashMap<usize, u64> = HashMap::new();
        for _ in 0..trials {
            let mut config = Configuration::from_coins(partition, s.clone()).unwrap();
            step(&mut config, graph, partition, &mut rng);
            *hits.entry(states.index_of(config.coins()).expect("kernel stays in S")).or_default() += 1;
        }
        for &(j, p) in matrix.row(i) {
            let p = *p.numer() as f64 / *p.denom() as f64;
            let n = hits.remove(&j).unwrap_or(0) as f64;
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt().max(1.0);
            assert!((n - trials as f64 * p).abs() < 5.0 * sigma, "state {s:?} -> {j}: {n} vs {p}");
        }
        assert!(hits.is_empty(), "kernel reached states outside the matrix row: {hits:?}");
    }
}

#[test]
fn kernel_frequencies_match_exact_matrix() {
    let two = Graph::from_edges(2, &[(0, 1)]).unwrap();
    let i2 = ExactInstance::new(vec![2], vec![1], 1).unwrap();
    kernel_matches_matrix(&two, &contiguous_partition(&i2), &enumerate_states(&i2).unwrap(), 100_000);

    let path = build_graph(&GraphSpec::Grid { rows: 1, cols: 3 }).unwrap();
    let p = assign_banks(&path, &PartitionSpec::EqualSplit(1), vec![1]).unwrap();
    kernel_matches_matrix(&path, &p, &StateSet::enumerate(&p, 2).unwrap(), 100_000);

    let tri = build_graph(&GraphSpec::Complete(3)).unwrap();
    let p = BankPartition::from_assignment(vec![0, 1, 1], vec![2, 1]).unwrap();
    kernel_matches_matrix(&tri, &p, &StateSet::enumerate(&p, 1).unwrap(), 100_000);
}

#[test]
fn sampling_from_the_reference_converges() {
    let inst = ExactInstance::new(vec![10], vec![10], 50).unwrap();
    let exact = money_distribution_exact(&inst).unwrap();
    let dist = exact_to_distribution(&exact);
    let support: Vec<(i64, f64)> = dist.iter().map(|(&c, &p)| (c, p)).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let mut hist = Histogram::default();
    for _ in 0..1_000_000 {
        let mut u: f64 = rng.gen();
        let mut pick = support.last().unwrap().0;
        for &(c, p) in &support {
            if u < p {
                pick = c;
                break;
            }
            u -= p;
        }
        *hist.counts.entry(pick).or_default() += 1;
    }
    let same = compare_to_reference(&hist, &Reference::Exact(exact)).unwrap();
    assert!(same.tv < 0.01, "{same:?}");
    let wrong = compare_to_reference(&hist, &Reference::Laplace(laplace_params(5.0, 2.0).unwrap())).unwrap();
    assert!(wrong.tv > 0.1, "{wrong:?}");
}

fn small_partition() -> impl Strategy<Value = (usize, Vec<usize>, Vec<u64>)> {
    (2usize..8, 1usize..4).prop_flat_map(|(n, k)| {
        let k = k.min(n);
        (Just(n), proptest::collection::vec(0..k, n), proptest::collection::vec(0u64..6, k)).prop_map(
            move |(n, mut layout, reserves)| {
                // every bank gets at least one customer
                for b in 0..k {
                    layout[b] = b;
                }
                (n, layout, reserves)
            },
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn complete_graphs_are_connected(n in 1usize..120) {
        let g = build_graph(&GraphSpec::Complete(n)).unwrap();
        prop_assert_eq!(g.edge_count(), n * (n - 1) / 2);
        prop_assert!(g.is_complete() || n == 1);
    }

    #[test]
    fn steps_conserve_coins_and_reserves(
        (n, layout, reserves) in small_partition(),
        coins in 1i64..30,
        seed in any::<u64>(),
        cycle in any::<bool>(),
    ) {
        let spec = if cycle && n >= 3 { GraphSpec::Cycle(n) } else { GraphSpec::Complete(n) };
        let g = build_graph(&spec).unwrap();
        let p = BankPartition::from_assignment(layout, reserves).unwrap();
        let total_reserve = p.total_reserve() as i64;
        let mut config = Configuration::new(&p, coins, InitMode::SingleHoarder).unwrap();
        let mut rng = replica_stream(seed, 0);
        for _ in 0..2_000 {
            let before = config.coins().to_vec();
            step(&mut config, &g, &p, &mut rng);
            prop_assert_eq!(config.total_coins(), coins);
            let positive: i64 = config.coins().iter().map(|&c| c.max(0)).sum();
            prop_assert_eq!(positive + config.reserves().iter().sum::<i64>(), coins + total_reserve);
            let changed: Vec<usize> = (0..n).filter(|&v| before[v] != config.coins()[v]).collect();
            prop_assert!(changed.is_empty() || changed.len() == 2);
            if let [u, v] = changed[..] {
                prop_assert!(g.has_edge(u, v));
                prop_assert_eq!((before[u] - config.coins()[u]).abs(), 1);
            }
            for (b, &r) in config.reserves().iter().enumerate() {
                prop_assert!(r >= 0);
                prop_assert_eq!(bank_reserve(&config, &p, b).unwrap(), r);
            }
        }
    }

    #[test]
    fn exact_laws_are_normalised_with_mean_temperature(
        sizes in proptest::collection::vec(1u64..4, 1..3),
        reserve_seed in proptest::collection::vec(0u64..5, 3),
        coins in 1i64..9,
    ) {
        let reserves: Vec<u64> = reserve_seed[..sizes.len()].to_vec();
        let n: u64 = sizes.iter().sum();
        prop_assume!(n >= 2);
        let inst = ExactInstance::new(sizes.clone(), reserves.clone(), coins).unwrap();
        let total_reserve: i64 = reserves.iter().sum::<u64>() as i64;
        let whole = money_distribution_exact(&inst).unwrap();
        prop_assert_eq!(whole.total(), BigRational::from_integer(BigInt::from(1)));
        prop_assert_eq!(whole.mean(), BigRational::new(BigInt::from(coins), BigInt::from(n)));
        for j in 0..sizes.len() {
            let pmf = money_pmf_exact(&inst, j).unwrap();
            let (lo, hi) = pmf.support().unwrap();
            prop_assert!(lo >= -(*reserves.iter().max().unwrap() as i64));
            prop_assert!(lo >= -(reserves[j] as i64));
            prop_assert!(hi <= coins + total_reserve);
        }
    }

    #[test]
    fn enumeration_size_is_lambda(
        sizes in proptest::collection::vec(1u64..3, 1..3),
        reserves in proptest::collection::vec(0u64..3, 2),
        coins in 1i64..5,
    ) {
        let inst = ExactInstance::unchecked(sizes.clone(), reserves[..sizes.len()].to_vec(), coins);
        let states = enumerate_states(&inst).unwrap();
        prop_assert_eq!(lambda_count(&inst), BigUint::from(states.len()));
    }

    #[test]
    fn debt_side_decays_faster(t in 0.5f64..2000.0, rho in 1e-4f64..50.0) {
        let p = laplace_params(t, rho).unwrap();
        prop_assert!(p.b.value() > p.a);
        let unit = laplace_params(1.0, rho).unwrap();
        prop_assert!((p.mu * t - unit.mu).abs() <= 1e-12 * unit.mu);
    }

    #[test]
    fn field_preserves_mass(
        raw in proptest::collection::vec(0.0f64..1.0, 2 * 13),
        p in proptest::collection::vec(0.0f64..=1.0, 2),
    ) {
        let mut s = MeanFieldState::zeros(2, -4, 8);
        for (k, v) in raw.iter().enumerate() {
            s.set(k / 13, -4 + (k % 13) as i64, *v);
        }
        s.p = p;
        let s = s.normalized();
        let sum: f64 = vector_field(&s).iter().sum();
        prop_assert!(sum.abs() < 1e-14);
    }

    #[test]
    fn geometric_profiles_are_fixed_points(ubar in 0.2f64..0.95, frac in 0.05f64..0.95) {
        let p = ubar * frac;
        let s = stationary_profile(ubar, p, 1.0, -400, 400).unwrap().normalized();
        let du = vector_field(&s);
        let interior: f64 = du.iter().map(|d| d.abs()).sum();
        prop_assert!(interior < 1e-12 || s.get(0, 400) > 1e-16 || s.get(0, -400) > 1e-16);
    }
}
