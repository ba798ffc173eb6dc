//! Instance generators shared by the integration tests.
#![allow(dead_code)]

use osm_core::estimators::{IndexSelector, PermutationRule};
use osm_core::instance::{generate_random, Instance, RandomInstanceParams};
use osm_core::seed;
use rand::seq::SliceRandom;
use rand::Rng;

pub const SUITE_SEED: u64 = 20_240_611;

/// Random instance with at most 4 online, 4 offline vertices and 3 types
/// per arrival. Even `k` gives an i.i.d. instance.
pub fn small_instance(k: u64) -> Instance {
    let mut rng = seed::stream(SUITE_SEED, seed::tag("small_instance"), k);
    let iid = k % 2 == 0;
    let params = RandomInstanceParams {
        n_offline: rng.random_range(1..=4),
        n_online: rng.random_range(if iid { 2..=4 } else { 1..=4 }),
        types_per_vertex: rng.random_range(1..=3),
        edge_prob: [0.3, 0.5, 0.7][rng.random_range(0..3)],
        weight_range: if rng.random_bool(0.5) { (1.0, 1.0) } else { (0.5, 3.0) },
        iid,
    };
    generate_random(&params, rng.random()).expect("valid parameters")
}

/// Random i.i.d. instance with at most 4 arrivals.
pub fn iid_instance(k: u64) -> Instance {
    let mut rng = seed::stream(SUITE_SEED, seed::tag("iid_instance"), k);
    let params = RandomInstanceParams {
        n_offline: rng.random_range(1..=3),
        n_online: rng.random_range(2..=4),
        types_per_vertex: rng.random_range(1..=3),
        edge_prob: 0.6,
        weight_range: if rng.random_bool(0.5) { (1.0, 1.0) } else { (0.5, 3.0) },
        iid: true,
    };
    generate_random(&params, rng.random()).expect("valid parameters")
}

/// A permutation rule for offline vertex `u` over the types adjacent to it,
/// in random order. `None` when no type is adjacent.
pub fn random_rule(instance: &Instance, u: usize, k: u64) -> Option<PermutationRule> {
    let mut rng = seed::stream(SUITE_SEED, seed::tag("random_rule"), k);
    let mut pairs: Vec<(usize, usize)> = (0..instance.n_online())
        .flat_map(|j| {
            let d = instance.arrival(j);
            (0..d.len()).filter(move |&t| d.online_type(t).contains(u)).map(move |t| (j, t))
        })
        .collect();
    if pairs.is_empty() {
        return None;
    }
    pairs.shuffle(&mut rng);
    Some(PermutationRule::new(u, pairs))
}

/// Single-offline instance with a rule in which some arrival has at least
/// one rule type.
pub fn rule_instance(k: u64) -> (Instance, PermutationRule) {
    for attempt in 0.. {
        let mut rng = seed::stream(SUITE_SEED, seed::tag("rule_instance"), k * 1000 + attempt);
        let params = RandomInstanceParams {
            n_offline: 1,
            n_online: rng.random_range(1..=3),
            types_per_vertex: rng.random_range(2..=3),
            edge_prob: 0.6,
            weight_range: (1.0, 1.0),
            iid: false,
        };
        let instance = generate_random(&params, rng.random()).expect("valid parameters");
        if let Some(rule) = random_rule(&instance, 0, k * 1000 + attempt) {
            return (instance, rule);
        }
    }
    unreachable!()
}

/// Explicit conditioning sets: a random past subset containing each arrival.
pub fn random_selector(n: usize, k: u64) -> IndexSelector {
    let mut rng = seed::stream(SUITE_SEED, seed::tag("random_selector"), k);
    IndexSelector::Sets(
        (0..n)
            .map(|j| (0..j).filter(|_| rng.random_bool(0.5)).chain(std::iter::once(j)).collect())
            .collect(),
    )
}
