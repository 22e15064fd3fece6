use std::collections::{BTreeMap, BTreeSet};

use hieeg::hierarchy::{build_dag, eligible_nodes, ConceptDag, HypernymRecord};
use hieeg::sampler::{
    sample_episode_traced, sample_eval_suite, ClassPool, Episode, EpisodePlan, SamplerConfig, Split, TrainSampler,
};
use proptest::prelude::*;

/// Two-level random tree: `groups[g]` words under `g{g}`, each word with
/// `sizes` samples, all below a `top` node.
fn world(groups: &[Vec<usize>]) -> (ConceptDag, ClassPool) {
    let mut recs = Vec::new();
    let mut classes = BTreeMap::new();
    for (g, sizes) in groups.iter().enumerate() {
        let parent = format!("g{g}.n.01");
        for (w, &n) in sizes.iter().enumerate() {
            let word = format!("W{g}_{w}");
            recs.push(HypernymRecord::new(&word, &parent, &["entity.n.01", "top.n.01"]));
            classes.insert(word.clone(), (0..n).map(|i| format!("{word}#{i}")).collect());
        }
    }
    let words: BTreeSet<String> = classes.keys().cloned().collect();
    let (dag, _) = build_dag(&recs, &words).unwrap();
    (dag, ClassPool::new(classes).unwrap())
}

fn world_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(1usize..60, 3..14), 1..5)
}

fn check_laws(ep: &Episode, plan: &EpisodePlan, pool: &ClassPool, cfg: &SamplerConfig) {
    let sizes: Vec<usize> = ep.classes.iter().map(|c| pool.size(c).unwrap()).collect();
    // query shots
    let k_q = sizes.iter().map(|n| n / 2).min().unwrap().min(cfg.query_cap);
    assert_eq!(ep.k_q, k_q);
    assert!(ep.k_q <= 10);
    // support budget
    let d: usize = sizes
        .iter()
        .map(|&n| (plan.beta * (n - k_q).min(cfg.support_cap) as f64).ceil() as usize)
        .sum();
    assert_eq!(ep.support_size, d.min(cfg.support_cap));
    assert!(ep.support_size <= 100);
    assert!(plan.beta > 0.0 && plan.beta <= 1.0);
    // softmax ratios and per-class shots
    let total: f64 = plan.ratios.iter().sum();
    assert!((total - 1.0).abs() <= 1e-12, "ratios sum to {total}");
    let spare = (ep.support_size - ep.way()) as f64;
    for ((c, &n), &r) in ep.classes.iter().zip(&sizes).zip(&plan.ratios) {
        let k_sup = ep.shots[c];
        let expected = ((r * spare + 1e-9).floor() as usize + 1).min(n - k_q);
        assert_eq!(k_sup, expected, "shots of {c}");
        assert!(k_sup + k_q <= n);
        assert_eq!(ep.support.iter().filter(|(_, l)| l == c).count(), k_sup);
        assert_eq!(ep.query.iter().filter(|(_, l)| l == c).count(), k_q);
    }
    let sum: usize = ep.shots.values().sum();
    assert!(sum <= ep.support_size + ep.way());
    let s: BTreeSet<&str> = ep.support.iter().map(|(id, _)| id.as_str()).collect();
    let q: BTreeSet<&str> = ep.query.iter().map(|(id, _)| id.as_str()).collect();
    assert_eq!(s.len(), ep.support.len());
    assert_eq!(q.len(), ep.query.len());
    assert!(s.is_disjoint(&q));
    for (id, c) in ep.support.iter().chain(&ep.query) {
        assert!(pool.samples(c).unwrap().binary_search(id).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_episode_obeys_the_laws(groups in world_strategy(), seed in any::<u64>()) {
        let (dag, pool) = world(&groups);
        let cfg = SamplerConfig::default();
        for node in eligible_nodes(&dag, cfg.min_span, &cfg.excluded) {
            for i in 0..5u64 {
                let s = hieeg::seed::derive_seed(seed, &node, i);
                match sample_episode_traced(&dag, &pool, &node, s, &cfg, None) {
                    Ok((ep, plan)) => {
                        prop_assert!(ep.way() >= cfg.min_span.min(dag.span_len(&node)));
                        prop_assert!(ep.way() <= cfg.way_cap);
                        check_laws(&ep, &plan, &pool, &cfg);
                    }
                    Err(e) => prop_assert_eq!(e.kind(), hieeg::ErrorKind::Data),
                }
            }
        }
    }

    #[test]
    fn training_stream_is_globally_disjoint(groups in world_strategy(), seed in any::<u64>()) {
        let (dag, pool) = world(&groups);
        let cfg = SamplerConfig::default();
        let Ok(sampler) = TrainSampler::new(&dag, &pool, seed, &cfg) else {
            return Ok(());
        };
        let mut support = BTreeSet::new();
        let mut query = BTreeSet::new();
        for i in 0..100 {
            if let Ok(ep) = sampler.episode(i) {
                support.extend(ep.support.into_iter().map(|(id, _)| id));
                query.extend(ep.query.into_iter().map(|(id, _)| id));
            }
        }
        prop_assert!(support.is_disjoint(&query));
    }

    #[test]
    fn suites_regenerate_identically(groups in world_strategy(), seed in any::<u64>()) {
        let (dag, pool) = world(&groups);
        let cfg = SamplerConfig::default();
        let a = sample_eval_suite(&dag, &pool, Split::MetaTest, 3, seed, &cfg).unwrap();
        let b = sample_eval_suite(&dag, &pool, Split::MetaTest, 3, seed, &cfg).unwrap();
        prop_assert_eq!(serde_json::to_string(&a.0).unwrap(), serde_json::to_string(&b.0).unwrap());
        prop_assert_eq!(a.1, b.1);
    }
}
