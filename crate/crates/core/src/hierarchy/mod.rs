//! Concept DAG built from hypernym paths.
//!
//! Internal nodes are synsets, leaves are vocabulary words. Every operation that
//! changes the graph goes through [`ConceptDag::from_parts`], which re-checks the
//! structural invariants (single root, acyclic, leaves childless, internal nodes
//! non-empty) and recomputes spans.

mod dag;
pub mod io;
mod ops;

pub use dag::{ConceptDag, NodeKind};
pub use ops::{
    broad_word_scores, build_dag, eligible_nodes, filter_broad_words, primary_paths, prune_to_level, rebuild_for_split,
    remove_named_nodes, BroadWordScore, LabelMap,
};

use serde::{Deserialize, Serialize};
use std::fmt;

/// Synsets discarded from the global DAG and excluded from episode sampling.
pub const DEFAULT_DISCARDED_SYNSETS: [&str; 3] = ["whole.n.02", "object.n.01", "physical_entity.n.01"];

/// Broad-word threshold on `span(parent) - siblings`.
pub const DEFAULT_BROAD_THRESHOLD: usize = 45;

/// Minimum span length for a node to be eligible for episodes.
pub const DEFAULT_MIN_SPAN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SynsetId(String);

impl SynsetId {
    pub fn new(id: impl Into<String>) -> Self {
        SynsetId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Lemma part of a WordNet-style id: `artifact.n.01` -> `artifact`.
    pub fn lemma(&self) -> &str {
        concept_lemma(&self.0)
    }
}

pub fn concept_lemma(id: &str) -> &str {
    let mut parts = id.rsplitn(3, '.');
    let (sense, pos) = (parts.next(), parts.next());
    match (sense, pos, parts.next()) {
        (Some(s), Some(p), Some(lemma))
            if !lemma.is_empty() && p.len() == 1 && s.chars().all(|c| c.is_ascii_digit()) =>
        {
            lemma
        }
        _ => id,
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SynsetId {
    fn from(s: &str) -> Self {
        SynsetId(s.to_string())
    }
}

impl From<String> for SynsetId {
    fn from(s: String) -> Self {
        SynsetId(s)
    }
}

impl AsRef<str> for SynsetId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// One hypernym path for a word: `root / ... / parent` then `synset` then `word`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HypernymRecord {
    pub word: String,
    pub synset: SynsetId,
    pub path: Vec<SynsetId>,
}

impl HypernymRecord {
    pub fn new(word: &str, synset: &str, path: &[&str]) -> Self {
        HypernymRecord {
            word: word.to_string(),
            synset: SynsetId::from(synset),
            path: path.iter().map(|s| SynsetId::from(*s)).collect(),
        }
    }

    /// The full chain of node ids from the root down to the word.
    pub fn chain(&self) -> impl Iterator<Item = &str> {
        self.path
            .iter()
            .map(SynsetId::as_str)
            .chain(std::iter::once(self.synset.as_str()))
            .chain(std::iter::once(self.word.as_str()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lemma_strips_pos_and_sense() {
        assert_eq!(concept_lemma("artifact.n.01"), "artifact");
        assert_eq!(concept_lemma("causal_agent.n.01"), "causal_agent");
        assert_eq!(concept_lemma("node_3"), "node_3");
        assert_eq!(concept_lemma("a.b"), "a.b");
        assert_eq!(SynsetId::from("living_thing.n.01").lemma(), "living_thing");
    }
}
