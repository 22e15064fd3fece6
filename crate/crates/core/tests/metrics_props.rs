use hieeg::evalx::{
    aggregate, assign_bin, balanced_accuracy, normalized_accuracy, span_bins_report, EvalRecord, SpanBin, WaySetting,
    DEFAULT_SPAN_BINS, OVERFLOW_LABEL,
};
use hieeg::metalearn::Mode;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn record() -> impl Strategy<Value = EvalRecord> {
    (
        0usize..6,
        prop::sample::select(Mode::ALL.to_vec()),
        prop::sample::select(vec![WaySetting::Variable, WaySetting::Fixed(2), WaySetting::Fixed(6)]),
        2usize..11,
        0u64..10,
        0.0f64..=1.0,
    )
        .prop_map(|(node, mode, setting, way, instance, score)| EvalRecord {
            node: format!("n{node}.n.01"),
            mode,
            setting,
            way,
            instance,
            // span is a property of the node
            span_length: 5 + node * 23,
            score,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalized_accuracy_is_affine_and_increasing(n in 2usize..=50, a in 0.0f64..=1.0, b in 0.0f64..=1.0, t in 0.0f64..=1.0) {
        let f = |x: f64| normalized_accuracy(x, n).unwrap();
        let mix = t * a + (1.0 - t) * b;
        prop_assert!((f(mix) - (t * f(a) + (1.0 - t) * f(b))).abs() <= 1e-12);
        if a < b {
            prop_assert!(f(a) < f(b));
        }
        prop_assert_eq!(f(1.0 / n as f64), 0.0);
        prop_assert_eq!(f(1.0), 100.0);
    }

    #[test]
    fn balanced_accuracy_matches_recall_average(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let mut recalls = Vec::new();
        for c in 0..4 {
            let rows: Vec<&(usize, usize)> = pairs.iter().filter(|p| p.0 == c).collect();
            if !rows.is_empty() {
                recalls.push(rows.iter().filter(|p| p.1 == c).count() as f64 / rows.len() as f64);
            }
        }
        let expected = recalls.iter().sum::<f64>() / recalls.len() as f64;
        prop_assert!((balanced_accuracy(&truth, &pred, 4) - expected).abs() < 1e-12);
    }

    #[test]
    fn aggregate_ignores_record_order(records in prop::collection::vec(record(), 1..80), seed in any::<u64>()) {
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(aggregate(&records).unwrap(), aggregate(&shuffled).unwrap());
    }

    #[test]
    fn every_node_lands_in_exactly_one_bin(records in prop::collection::vec(record(), 1..80), span in 0usize..200) {
        let report = aggregate(&records).unwrap();
        let spans = span_bins_report(&report, &DEFAULT_SPAN_BINS).unwrap();
        let nodes: std::collections::BTreeSet<&str> = report.nodes.iter().map(|n| n.node.as_str()).collect();
        prop_assert_eq!(spans.assignment.len(), nodes.len());
        let binned: usize = spans.rows.iter().map(|r| r.stats.n).sum();
        prop_assert_eq!(binned, report.nodes.len());

        let hits = DEFAULT_SPAN_BINS.iter().filter(|b| b.contains(span)).count();
        prop_assert!(hits <= 1);
        let label = assign_bin(&DEFAULT_SPAN_BINS, span);
        if hits == 0 {
            prop_assert_eq!(label, OVERFLOW_LABEL);
        } else {
            let bin: &SpanBin = DEFAULT_SPAN_BINS.iter().find(|b| b.contains(span)).unwrap();
            prop_assert_eq!(label, bin.label());
        }
    }
}

#[test]
fn normalized_fixed_points_are_exact() {
    for n in 2..=50 {
        assert_eq!(normalized_accuracy(1.0 / n as f64, n).unwrap(), 0.0, "N = {n}");
        assert_eq!(normalized_accuracy(1.0, n).unwrap(), 100.0, "N = {n}");
    }
    assert!(normalized_accuracy(0.5, 1).is_err());
}
