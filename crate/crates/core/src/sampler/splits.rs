use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassPool, Split};
use crate::error::{Error, Result};
use crate::hierarchy::{rebuild_for_split, ConceptDag, HypernymRecord, SynsetId, DEFAULT_DISCARDED_SYNSETS};
use crate::preprocess::{ManifestRow, SampleManifest};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    /// A (word, subject) pair needs this many occurrences to be held out.
    pub min_occurrences: usize,
    /// Rows whose `session` starts with this prefix form the held-out source
    /// group; every other row is meta-train material. `None` uses all rows.
    pub eval_session_prefix: Option<String>,
    pub val_word_fraction: f64,
    pub val_subject_fraction: f64,
    pub discarded: Vec<SynsetId>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            min_occurrences: 23,
            eval_session_prefix: None,
            val_word_fraction: 0.2,
            val_subject_fraction: 0.25,
            discarded: DEFAULT_DISCARDED_SYNSETS.iter().map(|s| SynsetId::from(*s)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitData {
    pub split: Split,
    pub dag: ConceptDag,
    pub pool: ClassPool,
    pub words: BTreeSet<String>,
    pub subjects: BTreeSet<String>,
    pub rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: SplitData,
    pub validation: SplitData,
    pub test: SplitData,
}

fn partition(
    mut items: Vec<String>,
    fraction: f64,
    rng: &mut ChaCha8Rng,
    what: &str,
) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
    if items.len() < 2 {
        return Err(Error::EmptySplit(format!(
            "need at least two held-out {what} to divide between validation and test, got {}",
            items.len()
        )));
    }
    items.shuffle(rng);
    let n_val = ((fraction * items.len() as f64).round() as usize).clamp(1, items.len() - 1);
    let test = items.split_off(n_val);
    Ok((items.into_iter().collect(), test.into_iter().collect()))
}

fn finish(
    split: Split,
    rows: Vec<ManifestRow>,
    records: &[HypernymRecord],
    discarded: &[SynsetId],
) -> Result<SplitData> {
    let words: BTreeSet<String> = rows.iter().map(|r| r.word.clone()).collect();
    if words.is_empty() {
        return Err(Error::EmptySplit(format!("{split} has no samples")));
    }
    let dag = rebuild_for_split(records, &words, discarded)?;
    let leaves: BTreeSet<&str> = dag.leaves().into_iter().collect();
    let rows: Vec<ManifestRow> = rows.into_iter().filter(|r| leaves.contains(r.word.as_str())).collect();
    let pool = ClassPool::from_rows(&rows, |_| true)?;
    Ok(SplitData {
        split,
        words: rows.iter().map(|r| r.word.clone()).collect(),
        subjects: rows.iter().map(|r| r.subject.clone()).collect(),
        dag,
        pool,
        rows,
    })
}

/// Holds out frequent (word, subject) pairs, divides their words and subjects
/// between validation and test, and rebuilds one DAG per split.
pub fn make_splits(
    manifest: &SampleManifest,
    records: &[HypernymRecord],
    dag: &ConceptDag,
    spec: &SplitSpec,
    seed: u64,
) -> Result<Splits> {
    let leaves: BTreeSet<&str> = dag.leaves().into_iter().collect();
    let rows: Vec<&ManifestRow> = manifest
        .rows
        .iter()
        .filter(|r| leaves.contains(r.word.as_str()))
        .collect();
    let is_source = |r: &ManifestRow| match &spec.eval_session_prefix {
        Some(p) => r.session.starts_with(p.as_str()),
        None => true,
    };

    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for r in rows.iter().filter(|r| is_source(r)) {
        *counts.entry((r.word.as_str(), r.subject.as_str())).or_default() += 1;
    }
    let held: BTreeSet<(&str, &str)> = counts
        .into_iter()
        .filter(|(_, n)| *n >= spec.min_occurrences)
        .map(|(k, _)| k)
        .collect();
    let eval_words: BTreeSet<&str> = held.iter().map(|(w, _)| *w).collect();
    let eval_subjects: BTreeSet<&str> = held.iter().map(|(_, s)| *s).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "make-splits", 0));
    let (val_words, test_words) = partition(
        eval_words.iter().map(|s| s.to_string()).collect(),
        spec.val_word_fraction,
        &mut rng,
        "words",
    )?;
    let (val_subjects, test_subjects) = partition(
        eval_subjects.iter().map(|s| s.to_string()).collect(),
        spec.val_subject_fraction,
        &mut rng,
        "subjects",
    )?;

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for r in rows {
        let source = is_source(r);
        if held.contains(&(r.word.as_str(), r.subject.as_str())) && source {
            if val_words.contains(&r.word) && val_subjects.contains(&r.subject) {
                val.push(r.clone());
            } else if test_words.contains(&r.word) && test_subjects.contains(&r.subject) {
                test.push(r.clone());
            }
        } else if !eval_words.contains(r.word.as_str()) && (spec.eval_session_prefix.is_none() || !source) {
            train.push(r.clone());
        }
    }
    Ok(Splits {
        train: finish(Split::MetaTrain, train, records, &spec.discarded)?,
        validation: finish(Split::MetaValidation, val, records, &spec.discarded)?,
        test: finish(Split::MetaTest, test, records, &spec.discarded)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_dag;

    fn fixture(
        pairs: &[(&str, &str, usize)],
        extra_words: &[&str],
    ) -> (SampleManifest, Vec<HypernymRecord>, ConceptDag) {
        let mut rows = Vec::new();
        let mut n = 0;
        for (w, s, k) in pairs {
            for _ in 0..*k {
                rows.push(ManifestRow {
                    sample_id: format!("x{n}"),
                    word: w.to_string(),
                    subject: s.to_string(),
                    session: "0".into(),
                    recording_uri: "r".into(),
                    onset_seconds: 0.0,
                });
                n += 1;
            }
        }
        let mut words: BTreeSet<String> = pairs.iter().map(|(w, _, _)| w.to_string()).collect();
        words.extend(extra_words.iter().map(|w| w.to_string()));
        let recs: Vec<HypernymRecord> = words
            .iter()
            .map(|w| HypernymRecord::new(w, "thing.n.01", &["entity.n.01"]))
            .collect();
        let dag = build_dag(&recs, &words).unwrap().0;
        (SampleManifest::new(rows).unwrap(), recs, dag)
    }

    #[test]
    fn threshold_and_disjointness() {
        let mut pairs = Vec::new();
        for w in ["A", "B", "C", "D"] {
            for s in ["s1", "s2", "s3", "s4"] {
                pairs.push((w, s, 23));
            }
        }
        pairs.push(("E", "s1", 22));
        pairs.push(("F", "s9", 5));
        let (m, recs, dag) = fixture(&pairs, &[]);
        let spec = SplitSpec {
            val_word_fraction: 0.5,
            val_subject_fraction: 0.5,
            ..SplitSpec::default()
        };
        let s = make_splits(&m, &recs, &dag, &spec, 1).unwrap();
        // 22 occurrences stay in meta-train
        assert_eq!(s.train.words, BTreeSet::from(["E".to_string(), "F".to_string()]));
        assert!(s.train.words.is_disjoint(&s.validation.words));
        assert!(s.train.words.is_disjoint(&s.test.words));
        assert!(s.validation.subjects.is_disjoint(&s.test.subjects));
        assert_eq!(s.train.dag.leaf_count(), 2);
        let again = make_splits(&m, &recs, &dag, &spec, 1).unwrap();
        assert_eq!(again.validation.words, s.validation.words);
        assert_eq!(again.test.rows, s.test.rows);
    }

    #[test]
    fn empty_split_is_an_error() {
        let (m, recs, dag) = fixture(&[("A", "s1", 5), ("B", "s2", 5)], &[]);
        assert!(matches!(
            make_splits(&m, &recs, &dag, &SplitSpec::default(), 1),
            Err(Error::EmptySplit(_))
        ));
    }
}
