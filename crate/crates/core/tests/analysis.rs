mod common;

use osm_core::analysis::{
    bernoullize, is_bernoulli, rule_moments, split_vertex, worst_case_experiment, RuleMoments,
};
use osm_core::evaluation::ocs_guarantee;
use osm_core::instance::{worst_case_eps, worst_case_instance};
use osm_core::scalar::{CompensatedSum, Mass};
use osm_core::BigRational;
use proptest::prelude::*;

/// `(E[y], E[min(y,1)], E[p(y)])` on the worst-case instance by summing
/// over all 2^n realizations.
fn enumerate_worst_case(n: usize, mu: f64) -> (f64, f64, f64) {
    let eps = worst_case_eps(n, mu);
    let q = 1.0 - eps;
    let (mut m, mut f, mut o) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as i32;
        let prob = eps.powi(k) * q.powi(n as i32 - k);
        let y: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| q.powi((n - 1 - i) as i32)).sum();
        m.add(prob * y);
        f.add(prob * y.min(1.0));
        o.add(prob * ocs_guarantee(y));
    }
    (m.value(), f.value(), o.value())
}

#[test]
fn experiment_agrees_with_enumeration() {
    for (n, mu) in [(12, 0.5), (12, 0.9), (16, 0.99), (20, 0.3)] {
        let (m, f, o) = enumerate_worst_case(n, mu);
        assert!((m - mu).abs() < 1e-12, "n={n}: E[y] = {m}");
        let p = worst_case_experiment(n, &[mu], 100_000, 17).unwrap()[0];
        assert!((p.frac_ratio - f / m).abs() < 4.0 * p.stderr_frac + 1e-12, "n={n} mu={mu}: {} vs {}", p.frac_ratio, f / m);
        assert!((p.ocs_ratio - o / m).abs() < 4.0 * p.stderr_ocs + 1e-12);
    }
}

#[test]
fn rule_moments_on_worst_case_match_enumeration() {
    for (n, mu) in [(6, 0.4), (8, 0.95)] {
        let (instance, rule) = worst_case_instance(n, mu).unwrap();
        let RuleMoments { mean, min1, ocs } = rule_moments::<f64>(&instance, &rule).unwrap();
        let (m, f, o) = enumerate_worst_case(n, mu);
        assert!((mean - m).abs() < 1e-12 && (min1 - f).abs() < 1e-12 && (ocs - o).abs() < 1e-12);
    }
}

#[test]
fn experiment_is_reproducible() {
    let grid = [0.2, 0.7];
    assert_eq!(
        worst_case_experiment(200, &grid, 5_000, 4).unwrap(),
        worst_case_experiment(200, &grid, 5_000, 4).unwrap()
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn splitting_keeps_mean_and_lowers_targets(k in 0u64..10_000, num in 1u64..10, pick in 0usize..8) {
        let (instance, rule) = common::rule_instance(k);
        let candidates: Vec<usize> =
            (0..instance.n_online()).filter(|&j| rule.pairs().iter().any(|&(i, _)| i == j)).collect();
        let j = candidates[pick % candidates.len()];
        let a1 = rule.pairs().iter().find(|&&(i, _)| i == j).unwrap().1;
        let Mass::Exact(p1) = instance.arrival(j).mass(a1).clone() else { unreachable!() };
        let eps = p1 * BigRational::new(num.into(), 10u64.into());
        let (split, split_rule) = split_vertex(&instance, &rule, j, &Mass::Exact(eps)).unwrap();
        prop_assert_eq!(split.n_online(), instance.n_online() + 1);
        split.validate().unwrap();
        let before = rule_moments::<BigRational>(&instance, &rule).unwrap();
        let after = rule_moments::<BigRational>(&split, &split_rule).unwrap();
        prop_assert_eq!(&after.mean, &before.mean);
        prop_assert!(after.min1 <= before.min1);
        prop_assert!(after.ocs <= before.ocs + 1e-12);
    }

    #[test]
    fn bernoullize_reaches_bernoulli_form(k in 0u64..10_000) {
        let (instance, rule) = common::rule_instance(k);
        let (b, b_rule) = bernoullize(&instance, &rule).unwrap();
        prop_assert!(is_bernoulli(&b, &b_rule));
        let before = rule_moments::<BigRational>(&instance, &rule).unwrap();
        let after = rule_moments::<BigRational>(&b, &b_rule).unwrap();
        prop_assert_eq!(&after.mean, &before.mean);
        prop_assert!(after.min1 <= before.min1);
    }
}
