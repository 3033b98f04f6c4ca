use proptest::collection::vec;
use proptest::prelude::*;

use tclose::construct::{anonymize_t_close, class_sizes, kanon_microaggregate, verify_quotas};
use tclose::distance::{ratio_distance, ratio_distance_brute, DiscreteDistribution, ExtendedDistance};
use tclose::dpbridge::{anonymize_dp, dp_to_t_bound, t_to_eps, verify_class_pairs, LaplaceMechanism};
use tclose::model::{equivalence_classes, AttributeSchema, Bounds, Kind, Microdata, Role, Value};
use tclose::oracle::construction_dataset;
use tclose::tcheck::{check_stochastic_t_closeness, check_t_closeness};

fn distribution(weights: &[u32]) -> DiscreteDistribution {
    let alphabet = (0..weights.len()).map(|i| format!("x{i}")).collect();
    let counts: Vec<usize> = weights.iter().map(|&w| w as usize).collect();
    DiscreteDistribution::from_counts(alphabet, &counts).unwrap()
}

/// Weights on a shared alphabet of 1..=12 labels, at least one nonzero per side.
fn weight_pair() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (1usize..=12)
        .prop_flat_map(|n| (vec(0u32..20, n), vec(0u32..20, n)))
        .prop_filter("nonzero", |(a, b)| a.iter().any(|&w| w > 0) && b.iter().any(|&w| w > 0))
}

fn weight_triple() -> impl Strategy<Value = (Vec<u32>, Vec<u32>, Vec<u32>)> {
    (1usize..=8).prop_flat_map(|n| (vec(1u32..20, n), vec(1u32..20, n), vec(1u32..20, n)))
}

/// Table with one categorical QI (class label) and one categorical confidential value.
fn labelled(rows: &[(usize, usize)]) -> Microdata {
    let schema = vec![
        AttributeSchema::new("class", Role::QuasiIdentifier, Kind::Categorical),
        AttributeSchema::new("value", Role::Confidential, Kind::Categorical),
    ];
    let records = rows
        .iter()
        .map(|&(c, v)| vec![Value::Text(format!("c{c}")), Value::Text(format!("v{v}"))])
        .collect();
    Microdata::new(schema, records).unwrap()
}

fn relative_le(a: f64, b: f64) -> bool {
    a <= b * (1.0 + 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn singleton_distance_matches_subsets((a, b) in weight_pair()) {
        let (a, b) = (distribution(&a), distribution(&b));
        let fast = ratio_distance(&a, &b).unwrap();
        let brute = ratio_distance_brute(&a, &b).unwrap();
        match (fast, brute) {
            (ExtendedDistance::Finite(x), ExtendedDistance::Finite(y)) => prop_assert!((x - y).abs() <= 1e-12 * y),
            (x, y) => prop_assert_eq!(x, y),
        }
    }

    #[test]
    fn distance_is_symmetric_and_at_least_one((a, b) in weight_pair()) {
        let (a, b) = (distribution(&a), distribution(&b));
        let d = ratio_distance(&a, &b).unwrap();
        prop_assert_eq!(d, ratio_distance(&b, &a).unwrap());
        prop_assert!(d >= ExtendedDistance::ONE);
        prop_assert_eq!(ratio_distance(&a, &a).unwrap(), ExtendedDistance::ONE);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn distance_chains_multiplicatively((a, b, c) in weight_triple()) {
        let (a, b, c) = (distribution(&a), distribution(&b), distribution(&c));
        let ac = ratio_distance(&a, &c).unwrap().value().unwrap();
        let ab = ratio_distance(&a, &b).unwrap().value().unwrap();
        let bc = ratio_distance(&b, &c).unwrap().value().unwrap();
        prop_assert!(relative_le(ac, ab * bc));
    }

    #[test]
    fn closeness_is_monotone_in_t(rows in vec((0usize..4, 0usize..3), 1..40), t in 1.0f64..4.0, extra in 0.0f64..3.0) {
        let data = labelled(&rows);
        let tight = check_t_closeness(&data, &["value"], t).unwrap();
        let loose = check_t_closeness(&data, &["value"], t + extra).unwrap();
        prop_assert_eq!(tight.achieved_t, loose.achieved_t);
        prop_assert!(!tight.satisfied || loose.satisfied);
        prop_assert_eq!(tight.per_class.len(), equivalence_classes(&data).len());
    }

    #[test]
    fn merged_classes_are_one_close(values in vec(0usize..5, 1..40)) {
        let rows: Vec<(usize, usize)> = values.into_iter().map(|v| (0, v)).collect();
        let report = check_t_closeness(&labelled(&rows), &["value"], 1.0).unwrap();
        prop_assert_eq!(report.achieved_t, ExtendedDistance::ONE);
        prop_assert!(report.satisfied);
    }

    #[test]
    fn pairwise_distance_is_at_most_square_of_table_distance(rows in vec((0usize..4, 0usize..3), 1..40)) {
        let data = labelled(&rows);
        let report = check_t_closeness(&data, &["value"], 1.0).unwrap();
        if let ExtendedDistance::Finite(t) = report.achieved_t {
            let chained = verify_class_pairs(&data, t).unwrap();
            prop_assert!(chained.passed);
            prop_assert!(chained.pairwise_max.within(t * t * (1.0 + 1e-9)));
        }
    }

    #[test]
    fn csv_round_trip(cells in vec((-1e6f64..1e6, "[a-z,\"][a-z ,\"]{0,5}"), 1..20)) {
        let schema = vec![
            AttributeSchema::new("x", Role::QuasiIdentifier, Kind::Numeric),
            AttributeSchema::new("s", Role::Confidential, Kind::Categorical),
        ];
        let records = cells.into_iter().map(|(x, s)| vec![Value::Number(x), Value::Text(s)]).collect();
        let data = Microdata::new(schema.clone(), records).unwrap();
        let text = data.to_csv_string().unwrap();
        prop_assert_eq!(Microdata::read_csv(text.as_bytes(), schema).unwrap(), data);
    }

    #[test]
    fn bound_is_monotone_and_binds_at_smallest_class(sizes in vec(1usize..20, 1..6), e1 in 0.0f64..3.0, de in 0.0f64..3.0) {
        let n: usize = sizes.iter().sum();
        let lo = dp_to_t_bound(n, &sizes, e1).unwrap();
        let hi = dp_to_t_bound(n, &sizes, e1 + de).unwrap();
        prop_assert!(lo.t <= hi.t);
        prop_assert!(lo.t >= 1.0);
        let smallest = *sizes.iter().min().unwrap();
        prop_assert_eq!(hi.class_sizes[hi.binding_class.unwrap()], smallest);
        prop_assert_eq!(dp_to_t_bound(n, &sizes, 0.0).unwrap().t, 1.0);
    }

    #[test]
    fn t_to_eps_is_additive(t1 in 1.0f64..50.0, t2 in 1.0f64..50.0) {
        let sum = t_to_eps(t1).unwrap().epsilon + t_to_eps(t2).unwrap().epsilon;
        let joint = t_to_eps(t1 * t2).unwrap().epsilon;
        prop_assert!((joint - sum).abs() <= 1e-12 * sum.max(1.0));
    }

    #[test]
    fn laplace_ratio_within_e_eps(eps in 0.01f64..5.0, sens in 0.1f64..100.0, c in -100.0f64..100.0, frac in -1.0f64..1.0, z in -40.0f64..40.0) {
        let mech = LaplaceMechanism::new(eps, sens, 0).unwrap();
        let x = c + z * mech.scale;
        let (p, q) = (mech.density(c, x), mech.density(c + frac * sens, x));
        prop_assert!(relative_le(p / q, eps.exp()));
        prop_assert!(relative_le(q / p, eps.exp()));
    }

    #[test]
    fn microaggregation_sizes(n in 1usize..60, k in 1usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let data = construction_dataset(n, seed).unwrap();
        let p = kanon_microaggregate(&data, k).unwrap();
        prop_assert_eq!(p.sizes().iter().sum::<usize>(), n);
        prop_assert!(p.sizes().iter().all(|&s| s >= k && (s < 2 * k || p.classes.len() == 1)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn class_sizes_account_for_every_record(t in 1u32..5, l in 1usize..4, extra in 0usize..50) {
        let b = t as usize + 1;
        let n = b * b * l + extra;
        let sizes = class_sizes(n, t, l).unwrap();
        prop_assert_eq!(sizes.len(), b * l);
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        let ideal = n as f64 / (b * l) as f64;
        prop_assert!(sizes.iter().all(|&e| (e as f64 - ideal).abs() < 1.0));
    }

    #[test]
    fn constructed_releases_are_certified(t in 1u32..6, l in 1usize..3, extra in 0usize..40, seed in any::<u64>()) {
        let b = t as usize + 1;
        // At t = 1 every class must match the table exactly, which needs b^2 l | N.
        let n = if t == 1 { b * b * l * (1 + extra % 5) } else { b * b * l + extra };
        let data = construction_dataset(n, seed).unwrap();
        let release = anonymize_t_close(&data, "value", t, l).unwrap();
        prop_assert!(release.certificate.satisfied);
        prop_assert!(verify_quotas(&release.partition, &release.buckets, t).is_ok());
        let k = release.partition.k;
        prop_assert!(equivalence_classes(&release.data).iter().all(|c| c.size() >= k));
    }

    #[test]
    fn dp_releases_are_stochastically_close(groups in vec(1usize..8, 1..5), eps in 0.05f64..3.0, seed in any::<u64>()) {
        let schema = vec![
            AttributeSchema::new("g", Role::QuasiIdentifier, Kind::Categorical),
            AttributeSchema::new("v", Role::Confidential, Kind::Numeric).with_bounds(Bounds::new(0.0, 10.0).unwrap()),
        ];
        let mut records = Vec::new();
        for (g, &size) in groups.iter().enumerate() {
            for i in 0..size {
                let v = ((seed >> (i % 32)) % 11) as f64;
                records.push(vec![Value::Text(format!("g{g}")), Value::Number(v)]);
            }
        }
        let data = Microdata::new(schema, records).unwrap();
        let k = *groups.iter().min().unwrap();
        let release = anonymize_dp(&data, k, eps, seed).unwrap();
        let view = release.stochastic_view(&data).unwrap();
        let mech = release.mechanism_spec("v").unwrap();
        let report = check_stochastic_t_closeness(&view, &mech, release.certificate.t, 2001).unwrap();
        prop_assert!(report.satisfied, "achieved {} > certificate {}", report.achieved_t, release.certificate.t);
    }
}
