use osm_core::instance::{generate_random, hardness_instance, worst_case_instance, Instance, RandomInstanceParams};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = RandomInstanceParams> {
    (1usize..=5, 1usize..=5, 1usize..=4, 0.0f64..=1.0, any::<bool>(), any::<bool>()).prop_map(
        |(n_offline, n_online, types_per_vertex, edge_prob, iid, weighted)| RandomInstanceParams {
            n_offline,
            n_online,
            types_per_vertex,
            edge_prob,
            weight_range: if weighted { (0.5, 4.0) } else { (1.0, 1.0) },
            iid,
        },
    )
}

proptest! {
    #[test]
    fn generated_instances_validate_and_round_trip(p in params(), seed in any::<u64>()) {
        let instance = generate_random(&p, seed).unwrap();
        instance.validate().unwrap();
        prop_assert_eq!(instance.n_offline(), p.n_offline);
        prop_assert_eq!(instance.n_online(), p.n_online);
        // Independent draws can coincide, so only one direction is guaranteed.
        prop_assert!(!p.iid || instance.is_iid());
        let back = Instance::from_json(&instance.to_json()).unwrap();
        prop_assert_eq!(&back, &instance);
        prop_assert_eq!(generate_random(&p, seed).unwrap(), instance);
    }
}

#[test]
fn fixed_instances_round_trip() {
    let (w, _) = worst_case_instance(50, 0.7).unwrap();
    for instance in [hardness_instance(), w] {
        assert_eq!(Instance::from_json(&instance.to_json()).unwrap(), instance);
    }
}

#[test]
fn invalid_documents_are_rejected() {
    let good = hardness_instance().to_json();
    let unnormalized = good.replacen("1/2", "1/3", 1);
    assert!(Instance::from_json(&unnormalized).is_err());
    let negative = good.replacen("1/2", "-1/2", 1);
    assert!(Instance::from_json(&negative).is_err());
}
