use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::dag::{ConceptDag, NodeKind};
use super::{HypernymRecord, SynsetId};
use crate::error::{Error, Result};

/// Builds the DAG for `words`. Words without any record are returned as skipped.
pub fn build_dag(records: &[HypernymRecord], words: &BTreeSet<String>) -> Result<(ConceptDag, Vec<String>)> {
    let mut used: BTreeSet<&HypernymRecord> = BTreeSet::new();
    for r in records.iter().filter(|r| words.contains(&r.word)) {
        if r.path.is_empty() {
            return Err(Error::InvalidArgument(format!("empty hypernym path for `{}`", r.word)));
        }
        used.insert(r);
    }
    let covered: BTreeSet<&str> = used.iter().map(|r| r.word.as_str()).collect();
    let skipped: Vec<String> = words
        .iter()
        .filter(|w| !covered.contains(w.as_str()))
        .cloned()
        .collect();
    if used.is_empty() {
        return Err(Error::EmptySplit(
            "no hypernym records cover the requested words".into(),
        ));
    }

    let roots: BTreeSet<&str> = used.iter().map(|r| r.path[0].as_str()).collect();
    if roots.len() > 1 {
        return Err(Error::MultipleRoots(roots.into_iter().map(String::from).collect()));
    }
    let root = roots.into_iter().next().unwrap_or_default().to_string();

    let mut nodes: BTreeMap<String, NodeKind> = BTreeMap::new();
    let mut edges: BTreeSet<(String, String)> = BTreeSet::new();
    for r in &used {
        for s in r.path.iter().chain(std::iter::once(&r.synset)) {
            nodes.insert(s.as_str().to_string(), NodeKind::Internal);
        }
        let chain: Vec<&str> = r.chain().collect();
        for w in chain.windows(2) {
            edges.insert((w[0].to_string(), w[1].to_string()));
        }
    }
    for w in &covered {
        if nodes.contains_key(*w) {
            return Err(Error::InvalidArgument(format!("word `{w}` collides with a synset id")));
        }
        nodes.insert((*w).to_string(), NodeKind::Leaf);
    }

    let dag = ConceptDag::from_parts(&root, nodes, edges)?;
    Ok((dag, skipped))
}

/// The (parent-span, sibling) pair behind the broad-word metric of one leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BroadWordScore {
    pub word: String,
    pub parent: String,
    pub parent_span: usize,
    pub siblings: usize,
    pub metric: i64,
}

/// Per-leaf broad-word score; for multi-parent leaves the parent with the
/// largest metric is reported (ties broken by parent id).
pub fn broad_word_scores(dag: &ConceptDag) -> Vec<BroadWordScore> {
    let mut out = Vec::new();
    for leaf in dag.leaves() {
        let mut best: Option<BroadWordScore> = None;
        for parent in dag.parents(leaf) {
            let parent_span = dag.span_len(parent);
            let siblings = dag.children(parent).len() - 1;
            let metric = parent_span as i64 - siblings as i64;
            if best.as_ref().is_none_or(|b| metric > b.metric) {
                best = Some(BroadWordScore {
                    word: leaf.to_string(),
                    parent: parent.to_string(),
                    parent_span,
                    siblings,
                    metric,
                });
            }
        }
        out.extend(best);
    }
    out
}

/// Removes leaves whose broad-word metric is at least `threshold`.
pub fn filter_broad_words(dag: &ConceptDag, threshold: usize) -> Result<(ConceptDag, Vec<String>)> {
    let removed: Vec<String> = broad_word_scores(dag)
        .into_iter()
        .filter(|s| s.metric >= threshold as i64)
        .map(|s| s.word)
        .collect();
    if removed.is_empty() {
        return Ok((dag.clone(), removed));
    }
    let idx: BTreeSet<usize> = removed.iter().filter_map(|w| dag.lookup(w)).collect();
    let (out, _) = dag.without(&idx)?;
    Ok((out, removed))
}

/// Deletes named internal nodes; leaves left unreachable are dropped and returned.
pub fn remove_named_nodes(dag: &ConceptDag, ids: &[SynsetId]) -> Result<(ConceptDag, Vec<String>)> {
    let mut idx = BTreeSet::new();
    for id in ids {
        if id.as_str() == dag.root() {
            return Err(Error::RootRemoval(id.to_string()));
        }
        match dag.lookup(id.as_str()) {
            Some(i) => {
                idx.insert(i);
            }
            None => warn!("node `{id}` not present in DAG; ignored"),
        }
    }
    if idx.is_empty() {
        return Ok((dag.clone(), Vec::new()));
    }
    dag.without(&idx)
}

/// Reconstructs a DAG from only `split_words`, re-applying the node discards.
pub fn rebuild_for_split(
    records: &[HypernymRecord],
    split_words: &BTreeSet<String>,
    discarded: &[SynsetId],
) -> Result<ConceptDag> {
    if split_words.is_empty() {
        return Err(Error::EmptySplit("split has no words".into()));
    }
    let (dag, skipped) = build_dag(records, split_words)?;
    if !skipped.is_empty() {
        warn!("{} split words have no hypernym record", skipped.len());
    }
    let (dag, dropped) = remove_named_nodes(&dag, discarded)?;
    if !dropped.is_empty() {
        warn!("{} split words unreachable after node discards", dropped.len());
    }
    Ok(dag)
}

/// Internal, non-root nodes with span at least `min_span` that are not excluded.
pub fn eligible_nodes(dag: &ConceptDag, min_span: usize, excluded: &[SynsetId]) -> Vec<String> {
    let excluded: BTreeSet<&str> = excluded.iter().map(SynsetId::as_str).collect();
    dag.internal_nodes()
        .into_iter()
        .filter(|n| *n != dag.root() && !excluded.contains(n) && dag.span_len(n) >= min_span)
        .map(String::from)
        .collect()
}

/// First-record path (root ... synset) per word; used to disambiguate pruning.
pub fn primary_paths(records: &[HypernymRecord]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in records {
        out.entry(r.word.clone()).or_insert_with(|| {
            r.path
                .iter()
                .chain(std::iter::once(&r.synset))
                .map(|s| s.as_str().to_string())
                .collect()
        });
    }
    out
}

/// Original leaf -> class id after `level` pruning rounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub level: usize,
    pub map: BTreeMap<String, String>,
}

impl LabelMap {
    pub fn identity<'a>(leaves: impl IntoIterator<Item = &'a str>) -> Self {
        LabelMap {
            level: 0,
            map: leaves.into_iter().map(|l| (l.to_string(), l.to_string())).collect(),
        }
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.map.get(word).map(String::as_str)
    }

    pub fn classes(&self) -> BTreeSet<&str> {
        self.map.values().map(String::as_str).collect()
    }

    /// `self` followed by `next` (next maps the classes of self).
    pub fn then(&self, next: &LabelMap) -> LabelMap {
        let map = self
            .map
            .iter()
            .filter_map(|(w, c)| next.map.get(c).map(|c2| (w.clone(), c2.clone())))
            .collect();
        LabelMap {
            level: self.level + next.level,
            map,
        }
    }
}

/// `h` rounds of deleting every childless node; nodes left childless become leaves.
pub fn prune_to_level(
    dag: &ConceptDag,
    h: usize,
    primary: &BTreeMap<String, Vec<String>>,
) -> Result<(ConceptDag, LabelMap)> {
    let n = dag.len();
    let mut alive = vec![true; n];
    let mut leaf = vec![false; n];
    for (i, l) in leaf.iter_mut().enumerate() {
        *l = dag.kind_at(i) == NodeKind::Leaf;
    }
    for round in 0..h {
        let doomed: Vec<usize> = (0..n).filter(|&i| alive[i] && leaf[i]).collect();
        if doomed.contains(&dag.root_index()) {
            return Err(Error::PruneTooDeep {
                requested: h,
                max_feasible: round,
            });
        }
        for &i in &doomed {
            alive[i] = false;
        }
        for i in 0..n {
            if alive[i] && !leaf[i] && !dag.children_at(i).iter().any(|&c| alive[c]) {
                leaf[i] = true;
            }
        }
    }

    let nodes: Vec<(String, NodeKind)> = (0..n)
        .filter(|&i| alive[i])
        .map(|i| {
            let k = if leaf[i] { NodeKind::Leaf } else { NodeKind::Internal };
            (dag.id_at(i).to_string(), k)
        })
        .collect();
    let mut edges = Vec::new();
    for p in (0..n).filter(|&i| alive[i]) {
        for &c in dag.children_at(p) {
            if alive[c] {
                edges.push((dag.id_at(p).to_string(), dag.id_at(c).to_string()));
            }
        }
    }
    let pruned = ConceptDag::from_parts(dag.root(), nodes, edges)?;

    let mut map = BTreeMap::new();
    for word in dag.leaves() {
        if pruned.kind(word) == Some(NodeKind::Leaf) {
            map.insert(word.to_string(), word.to_string());
            continue;
        }
        let candidates: Vec<&str> = dag
            .ancestors(word)
            .into_iter()
            .filter(|a| pruned.kind(a) == Some(NodeKind::Leaf))
            .collect();
        let on_path = primary
            .get(word)
            .and_then(|path| path.iter().rev().find(|p| candidates.contains(&p.as_str())).cloned());
        // candidates come from a BTreeSet, so the first one is the smallest id
        let class = on_path.or_else(|| candidates.first().map(|c| c.to_string()));
        // A word whose parent kept other children has no surviving leaf
        // ancestor; it takes the deepest surviving ancestor, which stays internal.
        let class = class.or_else(|| {
            let alive: Vec<&str> = dag.ancestors(word).into_iter().filter(|a| pruned.contains(a)).collect();
            primary
                .get(word)
                .and_then(|path| path.iter().rev().find(|p| alive.contains(&p.as_str())).cloned())
                .or_else(|| {
                    alive
                        .iter()
                        .max_by_key(|a| (dag.ancestors(a).len(), std::cmp::Reverse(**a)))
                        .map(|a| a.to_string())
                })
        });
        if let Some(class) = class {
            map.insert(word.to_string(), class);
        }
    }
    Ok((pruned, LabelMap { level: h, map }))
}
