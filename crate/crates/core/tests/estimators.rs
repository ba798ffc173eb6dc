mod common;

use std::sync::Arc;

use osm_core::estimators::{
    fully_correlated_fraction, independent_fraction, rule_independent_fraction, windowed_fraction, Estimator,
    EstimatorKind, EstimatorSpec, IndexSelector, DEFAULT_BETA,
};
use osm_core::evaluation::{exact_outcomes, normalize_with_dummy, type_vectors};
use osm_core::oracle::{exact_enumerate, Oracle, PolicyMode};
use osm_core::BigRational;
use proptest::prelude::*;

fn all_kinds(n: usize, iid: bool) -> Vec<EstimatorKind> {
    let mut kinds = vec![
        EstimatorKind::Independent,
        EstimatorKind::FullyCorrelated,
        EstimatorKind::EvenMix,
        EstimatorKind::Subset(IndexSelector::Window(2)),
        EstimatorKind::Subset(common::random_selector(n, 1)),
    ];
    if iid {
        kinds.push(EstimatorKind::WindowedMix { beta: DEFAULT_BETA });
    }
    kinds
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn estimators_are_unbiased_in_f64(k in 0u64..10_000, exchangeable in any::<bool>()) {
        let instance = common::small_instance(k);
        let policy = if exchangeable { PolicyMode::Exchangeable } else { PolicyMode::Canonical };
        let oracle = Oracle::Matching(policy);
        let model = Arc::new(exact_enumerate::<f64>(&instance, &oracle).unwrap());
        let (m, n) = (instance.n_offline(), instance.n_online());
        for kind in all_kinds(n, instance.is_iid()) {
            let est = Estimator::with_model(model.clone(), &EstimatorSpec::new(kind).with_oracle(oracle.clone())).unwrap();
            let outs = exact_outcomes(&est).unwrap();
            for u in 0..m {
                for j in 0..n {
                    let mean: f64 = outs.iter().map(|(p, o)| p * o.x[u][j]).sum();
                    prop_assert!((mean - model.match_probability(u, j)).abs() < 1e-12);
                }
            }
            for (_, o) in &outs {
                for j in 0..n {
                    let column: Vec<f64> = (0..m).map(|u| o.x[u][j]).collect();
                    let normalized = normalize_with_dummy(&column).unwrap();
                    prop_assert!((normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    /// Changing types after arrival j never changes the column of j.
    #[test]
    fn estimators_are_online(k in 0u64..10_000) {
        let instance = common::small_instance(k);
        let (m, n) = (instance.n_offline(), instance.n_online());
        let vectors = type_vectors::<f64>(&instance).unwrap();
        for kind in all_kinds(n, instance.is_iid()) {
            let est = Estimator::<f64>::exact(&instance, &EstimatorSpec::new(kind)).unwrap();
            let outs: Vec<_> = vectors.iter().map(|(t, _)| est.run(t).unwrap()).collect();
            for a in &outs {
                for b in &outs {
                    let shared = a.types.iter().zip(&b.types).take_while(|(x, y)| x == y).count();
                    for j in 0..shared.min(n) {
                        for u in 0..m {
                            prop_assert_eq!(a.x[u][j], b.x[u][j]);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn reduction_identities() {
    for k in 0..20 {
        let instance = common::iid_instance(k);
        let oracle = Oracle::Matching(PolicyMode::Exchangeable);
        let model = Arc::new(exact_enumerate::<BigRational>(&instance, &oracle).unwrap());
        let (m, n) = (instance.n_offline(), instance.n_online());
        let singleton = Estimator::with_model(
            model.clone(),
            &EstimatorSpec::new(EstimatorKind::Subset(IndexSelector::Sets((0..n).map(|j| vec![j]).collect())))
                .with_oracle(oracle.clone()),
        )
        .unwrap();
        for (types, _) in type_vectors::<BigRational>(&instance).unwrap() {
            let subset = singleton.run(&types).unwrap();
            for j in 0..n {
                for u in 0..m {
                    let ind = independent_fraction(&*model, u, j, types[j]).unwrap();
                    let full = fully_correlated_fraction(&*model, u, j, &types[..=j]).unwrap();
                    assert_eq!(windowed_fraction(&*model, u, j, 1, &types[j..=j]).unwrap(), ind);
                    assert_eq!(windowed_fraction(&*model, u, j, j + 1, &types[..=j]).unwrap(), full);
                    assert_eq!(subset.x[u][j], ind);
                }
            }
        }
    }
}

#[test]
fn rule_independent_matches_rule_oracle() {
    for k in 0..30 {
        let (instance, rule) = common::rule_instance(k);
        let model = exact_enumerate::<BigRational>(&instance, &Oracle::Rule(rule.clone())).unwrap();
        let u = rule.offline();
        for j in 0..instance.n_online() {
            for t in instance.supports()[j].iter().copied() {
                let closed: BigRational = rule_independent_fraction(&instance, &rule, j, t);
                assert_eq!(model.cond_match_prob(u, j, &[j], &[t]).unwrap(), closed, "instance {k}");
            }
        }
    }
}

#[test]
fn windowed_mix_rejects_non_iid() {
    let instance = common::small_instance(1);
    assert!(!instance.is_iid());
    let spec = EstimatorSpec::new(EstimatorKind::WindowedMix { beta: DEFAULT_BETA });
    assert!(Estimator::<f64>::exact(&instance, &spec).is_err());
}
