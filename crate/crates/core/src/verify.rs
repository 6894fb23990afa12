//! Self-checks at stated tolerances: exact oracles on tiny instances and
//! desk-scale simulations against the exact and limiting laws.

use std::time::Instant;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    compare_to_reference, empirical_histogram, tv_distance, transition_matrix, Reference, StateSet, StateVisits,
};
use crate::combinatorics::{
    binom, lambda_count, money_distribution_exact, money_pmf_by_lambda, money_pmf_exact, ExactInstance,
};
use crate::dynamics::{run, Configuration, InitMode, Observer, SimParams};
use crate::graph::{assign_banks, build_graph, BankPartition, GraphSpec, PartitionSpec};
use crate::laplace::{check_identities, equilibrium_fractions, laplace_params};
use crate::meanfield::{default_bounds, integrate, profile_from_laplace, residual, BankPolicy, MeanFieldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    /// Exact oracles and closed forms only.
    Quick,
    /// Adds the desk-scale simulations.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {} ({:.1} s): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds,
            self.detail
        )
    }
}

fn timed(id: u8, title: &str, limit_seconds: f64, body: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (ok, mut detail) = body();
    let seconds = start.elapsed().as_secs_f64();
    let in_time = seconds < limit_seconds;
    if !in_time {
        detail.push_str(&format!("; exceeded {limit_seconds} s"));
    }
    Check { id, title: title.to_string(), passed: ok && in_time, detail, seconds }
}

fn simulate(
    spec: &GraphSpec,
    partition: &PartitionSpec,
    reserves: Vec<u64>,
    params: &SimParams,
    observers: &mut [&mut dyn Observer],
) -> crate::dynamics::SimReport {
    let graph = build_graph(spec).expect("valid graph");
    let partition = assign_banks(&graph, partition, reserves).expect("valid partition");
    let mut config = Configuration::new(&partition, params.total_coins, InitMode::Flat).expect("positive coins");
    run(&mut config, &graph, &partition, params, observers).expect("valid parameters")
}

#[derive(Debug, Default)]
struct OracleTally {
    instances: u64,
    matrices: u64,
    count_mismatch: Vec<String>,
    pmf_mismatch: Vec<String>,
    matrix_failure: Vec<String>,
    normalisation_failure: Vec<String>,
    mean_failure: Vec<String>,
    beyond_m: u64,
    beyond_m_mismatch: Vec<String>,
}

/// Every bank layout with bank 0 on vertex 0 and all banks non-empty.
fn layouts(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let total = k.pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let layout: Vec<usize> = (0..n)
            .map(|_| {
                let b = c % k;
                c /= k;
                b
            })
            .collect();
        if layout[0] == 0 && (0..k).all(|b| layout.contains(&b)) {
            out.push(layout);
        }
    }
    out
}

fn reserve_vectors(k: usize, max: u64) -> Vec<Vec<u64>> {
    let mut out = vec![vec![]];
    for _ in 0..k {
        out = out.into_iter().flat_map(|v| (0..=max).map(move |r| [v.clone(), vec![r]].concat())).collect();
    }
    out
}

fn oracle_sweep() -> OracleTally {
    let mut tally = OracleTally::default();
    for n in 2..=4usize {
        let graphs = [
            build_graph(&GraphSpec::Complete(n)).expect("complete graph"),
            build_graph(&GraphSpec::Grid { rows: 1, cols: n }).expect("path graph"),
        ];
        for k in 1..=2usize {
            for layout in layouts(n, k) {
                for reserves in reserve_vectors(k, 2) {
                    let partition = BankPartition::from_assignment(layout.clone(), reserves.clone()).expect("layout");
                    for m in 1..=4i64 {
                        let tag = format!("layout={layout:?} R={reserves:?} M={m}");
                        oracle_instance(&mut tally, &graphs, &partition, m, &tag);
                    }
                }
            }
        }
    }
    tally
}

fn oracle_instance(
    tally: &mut OracleTally,
    graphs: &[crate::graph::Graph],
    partition: &BankPartition,
    m: i64,
    tag: &str,
) {
    tally.instances += 1;
    let instance = ExactInstance::from_partition(partition, m).expect("valid instance");
    let states = StateSet::enumerate(partition, m).expect("tiny instance");
    if lambda_count(&instance) != BigUint::from(states.len()) {
        tally.count_mismatch.push(tag.to_string());
    }
    let whole = money_distribution_exact(&instance).expect("valid instance");
    let mut pmf_ok = whole == states.marginal(None);
    for j in 0..instance.bank_count() {
        let series = money_pmf_exact(&instance, j).expect("bank in range");
        let direct = money_pmf_by_lambda(&instance, j).expect("bank in range");
        pmf_ok &= series == direct && series == states.marginal(Some(j));
    }
    if !pmf_ok {
        tally.pmf_mismatch.push(tag.to_string());
    }
    if whole.total() != BigRational::one() {
        tally.normalisation_failure.push(tag.to_string());
    }
    if whole.mean() != BigRational::new(BigInt::from(m), BigInt::from(instance.vertex_count())) {
        tally.mean_failure.push(tag.to_string());
    }
    if whole.support().is_some_and(|(_, hi)| hi > m) {
        tally.beyond_m += 1;
        if !pmf_ok {
            tally.beyond_m_mismatch.push(tag.to_string());
        }
    }
    for graph in graphs {
        tally.matrices += 1;
        match transition_matrix(graph, partition, &states) {
            Ok(matrix) if matrix.checks().all_pass() => {}
            Ok(matrix) => tally.matrix_failure.push(format!("{tag}: {:?}", matrix.checks())),
            Err(e) => tally.matrix_failure.push(format!("{tag}: {e}")),
        }
    }
}

fn first_few(items: &[String]) -> String {
    items.iter().take(3).cloned().collect::<Vec<_>>().join("; ")
}

/// Exact checks over every instance with `N <= 4`, `M <= 4`, `R_i <= 2`,
/// `K <= 2` on complete and path graphs: counts, distributions and
/// transition matrices (ids 1), normalisation and mean (3), and the
/// coin values above `M` (10).
pub fn oracle_checks() -> Vec<Check> {
    let start = Instant::now();
    let t = oracle_sweep();
    let seconds = start.elapsed().as_secs_f64();
    let in_time = seconds < 60.0;
    let failures = [&t.count_mismatch, &t.pmf_mismatch, &t.matrix_failure];
    let battery_ok = failures.iter().all(|f| f.is_empty()) && in_time;
    let mut detail = format!(
        "{} instances, {} matrices; count mismatches {}, pmf mismatches {}, matrix failures {}",
        t.instances,
        t.matrices,
        t.count_mismatch.len(),
        t.pmf_mismatch.len(),
        t.matrix_failure.len()
    );
    for f in failures {
        if !f.is_empty() {
            detail.push_str(&format!(" [{}]", first_few(f)));
        }
    }
    if !in_time {
        detail.push_str("; exceeded 60 s");
    }
    vec![
        Check { id: 1, title: "oracle battery".into(), passed: battery_ok, detail, seconds },
        Check {
            id: 3,
            title: "exact pmf sums to 1 with mean M/N".into(),
            passed: t.normalisation_failure.is_empty() && t.mean_failure.is_empty(),
            detail: format!(
                "{} instances; normalisation failures {}, mean failures {}",
                t.instances,
                t.normalisation_failure.len(),
                t.mean_failure.len()
            ),
            seconds: 0.0,
        },
        Check {
            id: 10,
            title: "pmf above M matches enumeration".into(),
            passed: t.beyond_m > 0 && t.beyond_m_mismatch.is_empty(),
            detail: format!("{} instances with mass above M, {} mismatches", t.beyond_m, t.beyond_m_mismatch.len()),
            seconds: 0.0,
        },
    ]
}

/// `Lambda((N),(0),M) = C(M+N-1, N-1)` for `1 <= N, M <= 20`.
pub fn stars_and_bars_check() -> Check {
    timed(2, "no-reserve count is stars and bars", f64::INFINITY, || {
        let mut bad = Vec::new();
        for n in 1..=20u64 {
            for m in 1..=20i64 {
                let inst = ExactInstance::unchecked(vec![n], vec![0], m);
                if lambda_count(&inst) != binom(m + n as i64 - 1, n as i64 - 1) {
                    bad.push(format!("N={n} M={m}"));
                }
            }
        }
        (bad.is_empty(), format!("400 instances, {} mismatches {}", bad.len(), first_few(&bad)))
    })
}

/// Path on 3 vertices, `M = 2`, `R = 1`: state frequencies over `10^6`
/// consecutive steps are within TV 0.02 of uniform.
pub fn ergodicity_check(seed: u64) -> Check {
    timed(4, "path(3) visits states uniformly", 30.0, || {
        let spec = GraphSpec::Grid { rows: 1, cols: 3 };
        let graph = build_graph(&spec).expect("path graph");
        let partition = assign_banks(&graph, &PartitionSpec::EqualSplit(1), vec![1]).expect("one bank");
        let states = StateSet::enumerate(&partition, 2).expect("tiny instance");
        let params =
            SimParams { total_coins: 2, burn_in_steps: 1_000, sample_interval: 1, total_samples: 1_000_000, seed };
        let mut visits = StateVisits::default();
        simulate(&spec, &PartitionSpec::EqualSplit(1), vec![1], &params, &mut [&mut visits]);
        match visits.tv_to_uniform(&states) {
            Ok(tv) => (tv < 0.02, format!("{} states, TV to uniform {tv:.4} (< 0.02)", states.len())),
            Err(e) => (false, e.to_string()),
        }
    })
}

/// `complete(100)` and `cycle(100)`, `M = 500`, `R = 100`, `10^7` steps each:
/// histograms within TV 0.03 of each other and of the exact law at `N = 100`,
/// and closer to it than to the exact law of the `N = 10` analogue.
pub fn graph_independence_check(seed: u64) -> Check {
    timed(5, "complete vs cycle money distribution", 300.0, || {
        let exact = money_distribution_exact(&ExactInstance::new(vec![100], vec![100], 500).expect("instance"))
            .expect("exact law");
        let small = money_distribution_exact(&ExactInstance::new(vec![10], vec![10], 50).expect("instance"))
            .expect("exact law");
        // 10^6 burn-in steps plus 90_000 intervals of 100 steps
        let params =
            SimParams { total_coins: 500, burn_in_steps: 1_000_000, sample_interval: 100, total_samples: 90_001, seed };
        let mut hists = Vec::new();
        let mut to_exact = Vec::new();
        let mut to_small = Vec::new();
        for spec in [GraphSpec::Complete(100), GraphSpec::Cycle(100)] {
            let report = simulate(&spec, &PartitionSpec::EqualSplit(1), vec![100], &params, &mut []);
            let hist = empirical_histogram(&report).expect("samples");
            to_exact.push(compare_to_reference(&hist, &Reference::Exact(exact.clone())).expect("comparable").tv);
            to_small.push(compare_to_reference(&hist, &Reference::Exact(small.clone())).expect("comparable").tv);
            hists.push(hist.fractions().expect("samples"));
        }
        let between = tv_distance(&hists[0], &hists[1]).expect("normalised");
        let ok = between < 0.03
            && to_exact.iter().all(|&t| t < 0.03)
            && to_small.iter().zip(&to_exact).all(|(s, e)| s > e);
        (
            ok,
            format!(
                "TV(complete, cycle) {between:.4}; TV to exact N=100 {:.4}/{:.4} (< 0.03); \
                 TV to exact N=10 {:.4}/{:.4} (farther)",
                to_exact[0], to_exact[1], to_small[0], to_small[1]
            ),
        )
    })
}

/// `complete(2000)`, two equal banks, `T = 50`, `rho = 0.2`: histogram within
/// TV 0.05 of the discretised Laplace law, sign fractions within 0.02.
pub fn laplace_fit_check(seed: u64) -> Check {
    timed(6, "reduced-scale Laplace fit", 600.0, || {
        let params = SimParams {
            total_coins: 100_000,
            burn_in_steps: 100_000_000,
            sample_interval: 100_000,
            total_samples: 2_000,
            seed,
        };
        let report =
            simulate(&GraphSpec::Complete(2000), &PartitionSpec::EqualSplit(2), vec![10_000, 10_000], &params, &mut []);
        let laplace = laplace_params(50.0, 0.2).expect("valid parameters");
        let hist = empirical_histogram(&report).expect("samples");
        let cmp = compare_to_reference(&hist, &Reference::Laplace(laplace)).expect("comparable");
        let (up, _, down) = report.sign_fractions();
        let (up_ref, down_ref) = equilibrium_fractions(0.2).expect("valid rho");
        let ok = cmp.tv < 0.05 && (up - up_ref).abs() <= 0.02 && (down - down_ref).abs() <= 0.02;
        (
            ok,
            format!(
                "TV {:.4} (< 0.05), KS {:.4}; u+ {up:.4} vs {up_ref:.4}, u- {down:.4} vs {down_ref:.4} (+-0.02)",
                cmp.tv, cmp.ks
            ),
        )
    })
}

/// The three parameter identities on `T in {1,10,100,1000}`,
/// `rho in {0.01,0.1,0.2,0.5,1,2}` to `1e-12`.
pub fn laplace_identity_check() -> Check {
    timed(7, "Laplace parameter identities", f64::INFINITY, || {
        let mut worst = 0.0f64;
        for t in [1.0, 10.0, 100.0, 1000.0] {
            for rho in [0.01, 0.1, 0.2, 0.5, 1.0, 2.0] {
                let p = laplace_params(t, rho).expect("valid parameters");
                worst = check_identities(&p, t, rho).into_iter().fold(worst, f64::max);
            }
        }
        (worst < 1e-12, format!("worst residual {worst:.3e} (< 1e-12)"))
    })
}

/// One bank, `T = 20`, `rho = 0.5`, `N in {100, 400, 1600}`: the time-averaged
/// `B/R`, averaged over 5 seeds, strictly decreases in `N`.
pub fn drainage_check(seed: u64) -> Check {
    timed(8, "bank reserve fraction falls with N", 600.0, || {
        let mut means = Vec::new();
        for n in [100usize, 400, 1600] {
            let m = 20 * n as i64;
            let mut sum = 0.0;
            for s in 0..5 {
                let params = SimParams {
                    total_coins: m,
                    burn_in_steps: 40_000 * n as u64,
                    sample_interval: 10 * n as u64,
                    total_samples: 2_000,
                    seed: seed + s,
                };
                let report =
                    simulate(&GraphSpec::Complete(n), &PartitionSpec::EqualSplit(1), vec![10 * n as u64], &params, &mut []);
                sum += report.mean_reserve_fraction()[0];
            }
            means.push(sum / 5.0);
        }
        let ok = means.windows(2).all(|w| w[1] < w[0]);
        (ok, format!("mean B/R at N = 100, 400, 1600: {:.5}, {:.5}, {:.5}", means[0], means[1], means[2]))
    })
}

/// Mean-field ODE: conservation along a trajectory from a point mass at `T`,
/// zero field at the geometric fixed point, and a geometric terminal state.
pub fn meanfield_check() -> Check {
    timed(9, "mean-field conservation and fixed point", f64::INFINITY, || {
        let (t, rho) = (5.0, 0.2);
        let (lo, hi) = default_bounds(t, rho);
        let start = MeanFieldState::delta(1, t as i64, rho * t, lo, hi);
        let traj = match integrate(&start, BankPolicy::default(), 1500.0, 0.005, None) {
            Ok(traj) => traj,
            Err(e) => return (false, e.to_string()),
        };
        let laplace = laplace_params(t, rho).expect("valid parameters");
        let fixed = profile_from_laplace(&laplace, lo, hi).expect("decaying profile");
        let fixed_residual = residual(&fixed);
        let spread = ratio_spread(&traj.terminal, &laplace);
        let ok = traj.max_mass_drift < 1e-8 && traj.max_mean_drift < 1e-6 && fixed_residual < 1e-12 && spread < 1e-4;
        (
            ok,
            format!(
                "mass drift {:.1e} (< 1e-8), mean drift {:.1e} (< 1e-6), fixed-point residual {fixed_residual:.1e} \
                 (< 1e-12), terminal ratio spread {spread:.1e} (< 1e-4), leaked {:.1e}",
                traj.max_mass_drift, traj.max_mean_drift, traj.leaked_mass
            ),
        )
    })
}

/// Largest relative deviation of consecutive ratios from their mean on each
/// side, over five decay lengths from the origin.
fn ratio_spread(state: &MeanFieldState, laplace: &crate::laplace::LaplaceParams) -> f64 {
    let profile: std::collections::BTreeMap<i64, f64> = state.profile().into_iter().collect();
    let up_len = (5.0 / laplace.a).ceil() as i64;
    let down_len = (5.0 * laplace.b.recip()).ceil() as i64;
    let up: Vec<f64> = (0..up_len).map(|c| profile[&(c + 1)] / profile[&c]).collect();
    let down: Vec<f64> = (0..down_len).map(|c| profile[&(-c - 1)] / profile[&-c]).collect();
    [up, down]
        .iter()
        .filter(|r| !r.is_empty())
        .map(|r| {
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Runs the checks for `level`, ordered by id.
pub fn battery(level: Level, seed: u64) -> Vec<Check> {
    let mut checks = oracle_checks();
    checks.push(stars_and_bars_check());
    checks.push(ergodicity_check(seed));
    checks.push(laplace_identity_check());
    checks.push(meanfield_check());
    if level == Level::Full {
        checks.push(graph_independence_check(seed));
        checks.push(laplace_fit_check(seed));
        checks.push(drainage_check(seed));
    }
    checks.sort_by_key(|c| c.id);
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts_are_canonical_and_surjective() {
        assert_eq!(layouts(3, 1), vec![vec![0, 0, 0]]);
        assert_eq!(layouts(3, 2).len(), 3);
        assert_eq!(reserve_vectors(2, 2).len(), 9);
    }

    #[test]
    fn quick_closed_form_checks_pass() {
        assert!(stars_and_bars_check().passed);
        assert!(laplace_identity_check().passed);
    }

    #[test]
    fn check_line_format() {
        let c = Check { id: 7, title: "x".into(), passed: false, detail: "d".into(), seconds: 1.25 };
        assert_eq!(c.line(), "FAIL [ 7] x (1.2 s): d");
    }
}
