use proptest::prelude::*;
use proptest::strategy::ValueTree;
use rtleval::metrics::{aggregate_pass_at_k, pass_at_k, MetricsError, ProblemOutcome};

/// Exact fraction of k-subsets of n samples that contain at least one of
/// the first c samples, by listing every subset.
fn enumerate(n: u32, c: u32, k: u32) -> f64 {
    let passing = (1u32 << c) - 1;
    let (mut hit, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() == k {
            total += 1;
            if mask & passing != 0 {
                hit += 1;
            }
        }
    }
    hit as f64 / total as f64
}

/// table[k][c] = exact pass@k for n = 20, built from one pass over all
/// 2^20 subsets: a subset contains one of the first c samples iff its
/// lowest member index is below c.
fn n20_table() -> Vec<Vec<f64>> {
    let n = 20u32;
    let mut hits = vec![vec![0u64; n as usize + 1]; n as usize + 1];
    let mut totals = vec![0u64; n as usize + 1];
    for mask in 1u32..(1 << n) {
        let k = mask.count_ones() as usize;
        totals[k] += 1;
        hits[k][mask.trailing_zeros() as usize + 1] += 1;
    }
    hits.iter()
        .zip(&totals)
        .map(|(row, &t)| {
            let mut acc = 0;
            row.iter()
                .map(|&h| {
                    acc += h;
                    if t == 0 {
                        0.0
                    } else {
                        acc as f64 / t as f64
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn matches_enumeration_up_to_twelve() {
    for n in 1..=12u32 {
        for c in 0..=n {
            for k in 1..=n {
                let got = pass_at_k(n as u64, c as u64, k as u64).unwrap();
                let want = enumerate(n, c, k);
                assert!((got - want).abs() <= 1e-12, "n={n} c={c} k={k}: {got} vs {want}");
            }
        }
    }
}

#[test]
fn analytic_anchors() {
    assert_eq!(pass_at_k(20, 0, 1).unwrap(), 0.0);
    assert_eq!(pass_at_k(20, 20, 5).unwrap(), 1.0);
    assert_eq!(pass_at_k(20, 5, 1).unwrap(), 0.25);
    assert!((pass_at_k(20, 5, 10).unwrap() - (1.0 - 3003.0 / 184756.0)).abs() <= 1e-12);
}

#[test]
fn boundary_law_on_grid() {
    for n in 1..=12u64 {
        for c in 0..=n {
            for k in 1..=n {
                let p = pass_at_k(n, c, k).unwrap();
                assert_eq!(p == 1.0, k > n - c && c >= 1, "n={n} c={c} k={k} p={p}");
            }
        }
    }
}

#[test]
fn domain_errors() {
    assert_eq!(pass_at_k(5, 1, 0), Err(MetricsError::Domain { n: 5, c: 1, k: 0 }));
    assert!(pass_at_k(5, 1, 6).is_err());
    assert!(pass_at_k(5, 6, 1).is_err());
    assert!(pass_at_k(0, 0, 1).is_err());
    assert_eq!(aggregate_pass_at_k(&[], 1), Err(MetricsError::EmptyInput));
    let o = ProblemOutcome { task_id: "a".into(), temperature: 0.2, n: 3, c: 1, circuit_type: None };
    assert!(matches!(aggregate_pass_at_k(&[o], 5), Err(MetricsError::KExceedsN { .. })));
}

#[test]
fn large_n_stays_finite() {
    let p = pass_at_k(200, 3, 100).unwrap();
    assert!(p.is_finite() && (0.0..=1.0).contains(&p));
    let p = pass_at_k(10_000, 5_000, 2).unwrap();
    assert!(p.is_finite() && p > 0.7);
}

fn outcome(i: usize, c: u64) -> ProblemOutcome {
    ProblemOutcome { task_id: format!("p{i:03}"), temperature: 0.2, n: 20, c, circuit_type: None }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pass_at_one_is_c_over_n(n in 1u64..=500, frac in 0.0f64..=1.0) {
        let c = (frac * n as f64).floor() as u64;
        prop_assert_eq!(pass_at_k(n, c, 1).unwrap(), c as f64 / n as f64);
    }

    #[test]
    fn monotone_in_k_and_c(n in 1u64..=60, c in 0u64..=60, k in 1u64..=60) {
        let c = c.min(n);
        let k = k.min(n);
        let p = pass_at_k(n, c, k).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        if k < n {
            prop_assert!(pass_at_k(n, c, k + 1).unwrap() >= p);
        }
        if c < n {
            prop_assert!(pass_at_k(n, c + 1, k).unwrap() >= p);
        }
    }

    #[test]
    fn aggregate_is_permutation_invariant(cs in prop::collection::vec(0u64..=20, 1..30), k in 1u64..=20) {
        let outcomes: Vec<ProblemOutcome> = cs.iter().enumerate().map(|(i, &c)| outcome(i, c)).collect();
        let mut reversed = outcomes.clone();
        reversed.reverse();
        let a = aggregate_pass_at_k(&outcomes, k).unwrap();
        let b = aggregate_pass_at_k(&reversed, k).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn aggregate_of_143_problems_matches_enumeration() {
    let table = n20_table();
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let cs = prop::collection::vec(0u64..=20, 143).new_tree(&mut runner).unwrap().current();
    let outcomes: Vec<ProblemOutcome> = cs.iter().enumerate().map(|(i, &c)| outcome(i, c)).collect();
    for k in [1u64, 5, 10, 20] {
        let want = cs.iter().map(|&c| table[k as usize][c as usize]).sum::<f64>() / cs.len() as f64;
        let got = aggregate_pass_at_k(&outcomes, k).unwrap();
        assert!((got - want).abs() <= 1e-12, "k={k}: {got} vs {want}");
    }
    assert_eq!(aggregate_pass_at_k(&[outcome(0, 1), outcome(1, 15)], 1).unwrap(), 0.4);
}
