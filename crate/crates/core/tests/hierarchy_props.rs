use std::collections::{BTreeMap, BTreeSet};

use hieeg::hierarchy::{
    build_dag, eligible_nodes, filter_broad_words, prune_to_level, remove_named_nodes, ConceptDag, HypernymRecord,
    NodeKind, SynsetId,
};
use proptest::prelude::*;

/// Synset `s{i}` hangs under `s{parents[i]}`; word `w` is attached to one or
/// two synsets, so a second attachment turns the tree into a DAG.
#[derive(Debug, Clone)]
struct Shape {
    parents: Vec<usize>,
    words: Vec<(usize, Option<usize>)>,
}

fn shape(max_synsets: usize, max_words: usize, multi: bool) -> impl Strategy<Value = Shape> {
    (2..max_synsets).prop_flat_map(move |n| {
        let parents = (1..n).map(|i| 0..i).collect::<Vec<_>>();
        let second = if multi {
            prop::option::weighted(0.2, 0..n).boxed()
        } else {
            Just(None).boxed()
        };
        let words = prop::collection::vec((0..n, second), 1..max_words);
        (parents, words).prop_map(|(p, words)| {
            let mut parents = vec![0];
            parents.extend(p);
            Shape { parents, words }
        })
    })
}

fn synset(i: usize) -> String {
    format!("s{i}.n.01")
}

fn path_to(parents: &[usize], i: usize) -> Vec<String> {
    let mut chain = vec![];
    let mut cur = i;
    while cur != 0 {
        cur = parents[cur];
        chain.push(synset(cur));
    }
    chain.reverse();
    chain
}

fn records(s: &Shape) -> Vec<HypernymRecord> {
    let mut out = Vec::new();
    for (k, (a, b)) in s.words.iter().enumerate() {
        let word = format!("W{k}");
        for node in std::iter::once(*a).chain(b.filter(|b| b != a)) {
            // attaching a word to the root itself would give it an empty path
            let node = node.max(1).min(s.parents.len() - 1);
            let path = path_to(&s.parents, node);
            let refs: Vec<&str> = path.iter().map(String::as_str).collect();
            out.push(HypernymRecord::new(&word, &synset(node), &refs));
        }
    }
    out
}

fn build(s: &Shape) -> (ConceptDag, Vec<HypernymRecord>) {
    let recs = records(s);
    let words: BTreeSet<String> = recs.iter().map(|r| r.word.clone()).collect();
    let (dag, skipped) = build_dag(&recs, &words).unwrap();
    assert!(skipped.is_empty());
    (dag, recs)
}

fn check_structure(dag: &ConceptDag) {
    let order = dag.topological_order();
    assert_eq!(order.len(), dag.len());
    assert_eq!(order[0], dag.root());
    let pos: BTreeMap<&str, usize> = order.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    for (p, c) in dag.edges() {
        assert!(pos[p] < pos[c], "edge {p} -> {c} against topological order");
    }
    for n in dag.node_ids() {
        if n == dag.root() {
            assert!(dag.parents(n).is_empty());
        } else {
            assert!(!dag.parents(n).is_empty(), "{n} is a second root");
        }
        if dag.kind(n) == Some(NodeKind::Leaf) {
            assert!(dag.children(n).is_empty());
        }
    }
}

fn compose(dag: &ConceptDag, h: usize) -> Option<(ConceptDag, BTreeMap<String, String>)> {
    let mut cur = dag.clone();
    let mut map: BTreeMap<String, String> = dag.leaves().iter().map(|l| (l.to_string(), l.to_string())).collect();
    for _ in 0..h {
        let (next, step) = prune_to_level(&cur, 1, &BTreeMap::new()).ok()?;
        for v in map.values_mut() {
            // classes parked on internal nodes keep their label while they survive
            *v = step.get(v).map(String::from).unwrap_or_else(|| v.clone());
        }
        cur = next;
    }
    Some((cur, map))
}

fn node_set(d: &ConceptDag) -> BTreeSet<String> {
    d.node_ids().map(String::from).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn built_dags_are_rooted_and_acyclic(s in shape(25, 60, true)) {
        let (dag, _) = build(&s);
        check_structure(&dag);
        for (p, c) in dag.edges() {
            prop_assert!(dag.span_len(c) <= dag.span_len(p));
        }
        prop_assert_eq!(dag.span_len(dag.root()), dag.leaf_count());
    }

    #[test]
    fn operations_keep_structure(s in shape(25, 60, true), threshold in 1usize..20, victim in 1usize..25) {
        let (dag, _) = build(&s);
        if let Ok((f, removed)) = filter_broad_words(&dag, threshold) {
            check_structure(&f);
            for w in &removed {
                prop_assert!(!f.contains(w));
            }
        }
        let name = synset(victim);
        if dag.contains(&name) {
            if let Ok((r, _)) = remove_named_nodes(&dag, &[SynsetId::from(name.as_str())]) {
                check_structure(&r);
                prop_assert!(!r.contains(&name));
            }
        }
        for h in 0..4 {
            if let Ok((p, _)) = prune_to_level(&dag, h, &BTreeMap::new()) {
                check_structure(&p);
            }
        }
    }

    #[test]
    fn prune_shrinks_and_maps_every_leaf(s in shape(25, 60, true), h in 0usize..4) {
        let (dag, recs) = build(&s);
        let primary = hieeg::hierarchy::primary_paths(&recs);
        if let Ok((p, map)) = prune_to_level(&dag, h, &primary) {
            prop_assert!(p.leaf_count() <= dag.leaf_count());
            for w in dag.leaves() {
                let c = map.get(w).expect("label map is total");
                prop_assert!(p.contains(c));
                prop_assert!(c == w || dag.ancestors(w).contains(c));
                if p.kind(c) == Some(NodeKind::Internal) {
                    // only when no ancestor became a leaf
                    prop_assert!(!dag.ancestors(w).iter().any(|a| p.kind(a) == Some(NodeKind::Leaf)));
                }
            }
        }
        let (p0, m0) = prune_to_level(&dag, 0, &primary).unwrap();
        prop_assert_eq!(&p0, &dag);
        for w in dag.leaves() {
            prop_assert_eq!(m0.get(w), Some(w));
        }
    }

    #[test]
    fn repeated_single_prunes_match_on_trees(s in shape(20, 50, false), h in 1usize..4) {
        let (dag, _) = build(&s);
        let direct = prune_to_level(&dag, h, &BTreeMap::new());
        match (direct, compose(&dag, h)) {
            (Ok((p, m)), Some((q, n))) => {
                prop_assert_eq!(&p, &q);
                prop_assert_eq!(&m.map, &n);
            }
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "direct {:?} vs composed {:?}", a.is_ok(), b.is_some()),
        }
    }

    #[test]
    fn repeated_single_prunes_keep_node_sets_on_dags(s in shape(20, 50, true), h in 1usize..4) {
        let (dag, _) = build(&s);
        if let (Ok((p, _)), Some((q, _))) = (prune_to_level(&dag, h, &BTreeMap::new()), compose(&dag, h)) {
            prop_assert_eq!(node_set(&p), node_set(&q));
        }
    }

    #[test]
    fn eligible_nodes_respect_span_and_exclusions(s in shape(25, 80, true), min_span in 2usize..8, ex in 1usize..25) {
        let (dag, _) = build(&s);
        let excluded = vec![SynsetId::from(synset(ex).as_str())];
        let nodes = eligible_nodes(&dag, min_span, &excluded);
        for n in &nodes {
            prop_assert!(dag.span_len(n) >= min_span);
            prop_assert!(n != dag.root());
            prop_assert!(*n != synset(ex));
            prop_assert_eq!(dag.kind(n), Some(NodeKind::Internal));
        }
        let expected = dag
            .internal_nodes()
            .into_iter()
            .filter(|n| *n != dag.root() && *n != synset(ex) && dag.span_len(n) >= min_span)
            .count();
        prop_assert_eq!(nodes.len(), expected);
    }
}
