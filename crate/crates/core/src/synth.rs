//! Hierarchical-Gaussian data with a known generative model.
//!
//! Class means diffuse down a regular tree (child = parent + N(0, σ_level² I)),
//! samples are leaf mean + N(0, σ_obs² I). Semantic proximity therefore equals
//! mean proximity, and the exact Bayes classifier gives a ceiling for every
//! episode the sampler can produce.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalx::{aggregate, EvalRecord, LevelData, WaySetting};
use crate::hierarchy::{
    io::format_hypernym_paths, primary_paths, rebuild_for_split, ConceptDag, HypernymRecord, NodeKind,
};
use crate::metalearn::{argmax_rows, FeatureStore, Mode};
use crate::preprocess::heeg::{write_keyed, KeyedTensor, Tensor};
use crate::preprocess::manifest::write_manifest;
use crate::preprocess::{ManifestRow, SampleManifest, TARGET_RATE};
use crate::sampler::{fixed_way_episode, sample_episode, ClassPool, Episode, EpisodeSuite, SamplerConfig};
use crate::seed::{derive_seed, stream_seed};

pub const SYNTH_ROOT: &str = "entity.n.01";
pub const SYNTH_TOP: &str = "top.n.01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub branching: usize,
    /// Levels below the top concept; the tree has `branching^depth` leaves.
    pub depth: usize,
    pub sigma_level: f64,
    pub sigma_obs: f64,
    pub samples_per_leaf: usize,
    pub channels: usize,
    pub window_samples: usize,
    pub subjects: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            branching: 3,
            depth: 4,
            sigma_level: 1.0,
            sigma_obs: 3.0,
            samples_per_leaf: 40,
            channels: 4,
            window_samples: 8,
            subjects: 4,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_level.is_finite()
            && self.sigma_level >= 0.0
            && self.sigma_obs.is_finite()
            && self.sigma_obs >= 0.0)
        {
            return Err(Error::InvalidArgument(
                "synthetic scales must be finite and non-negative".into(),
            ));
        }
        if self.branching < 2 || self.depth == 0 {
            return Err(Error::InvalidArgument(
                "synthetic tree needs branching >= 2 and depth >= 1".into(),
            ));
        }
        if self
            .branching
            .checked_pow(self.depth as u32)
            .is_none_or(|n| n > 1_000_000)
        {
            return Err(Error::InvalidArgument("synthetic tree is too large".into()));
        }
        if self.samples_per_leaf == 0 || self.channels == 0 || self.window_samples == 0 || self.subjects == 0 {
            return Err(Error::InvalidArgument(
                "sample, channel, window and subject counts must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.channels * self.window_samples
    }

    pub fn n_leaves(&self) -> usize {
        self.branching.pow(self.depth as u32)
    }

    /// Expected population variance of leaf means per dimension.
    pub fn between_variance(&self) -> f64 {
        let s2 = self.sigma_level * self.sigma_level;
        (1..=self.depth)
            .map(|l| s2 * (1.0 - 1.0 / self.branching.pow(l as u32) as f64))
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub records: Vec<HypernymRecord>,
    pub dag: ConceptDag,
    /// Word classes.
    pub pool: ClassPool,
    /// Mean vector of every node, leaves included.
    pub means: BTreeMap<String, Vec<f64>>,
    pub manifest: SampleManifest,
    /// Flattened windows, one row per sample, stored at `f32` precision.
    pub bank: KeyedTensor,
}

fn node_id(path: &[usize]) -> String {
    let tag: Vec<String> = path.iter().map(usize::to_string).collect();
    format!("c{}_{}.n.01", path.len(), tag.join("_"))
}

fn word_id(path: &[usize]) -> String {
    let tag: Vec<String> = path.iter().map(usize::to_string).collect();
    format!("W{}", tag.join("_"))
}

fn all_paths(branching: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..branching).map(move |b| {
                    let mut q = p.clone();
                    q.push(b);
                    q
                })
            })
            .collect();
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Builds the tree, diffuses the means and draws every sample.
pub fn gen_hierarchy_gaussians(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let dim = spec.dim();
    let mut means: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut walk = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, "synth-means", 0));
    means.insert(SYNTH_ROOT.into(), vec![0.0; dim]);
    let top: Vec<f64> = gaussian(&mut walk, dim, spec.sigma_level);
    means.insert(SYNTH_TOP.into(), top);
    // breadth-first so that the draw order does not depend on map ordering
    for len in 1..=spec.depth {
        for p in all_paths(spec.branching, len) {
            let parent = if len == 1 {
                SYNTH_TOP.to_string()
            } else {
                node_id(&p[..len - 1])
            };
            let id = if len == spec.depth { word_id(&p) } else { node_id(&p) };
            let step = gaussian(&mut walk, dim, spec.sigma_level);
            let m: Vec<f64> = means[&parent].iter().zip(&step).map(|(a, b)| a + b).collect();
            means.insert(id, m);
        }
    }

    let leaves = all_paths(spec.branching, spec.depth);
    let records: Vec<HypernymRecord> = leaves
        .iter()
        .map(|p| {
            let mut chain = vec![SYNTH_ROOT.to_string(), SYNTH_TOP.to_string()];
            chain.extend((1..spec.depth).map(|l| node_id(&p[..l])));
            let synset = chain.pop().unwrap_or_default();
            let refs: Vec<&str> = chain.iter().map(String::as_str).collect();
            HypernymRecord::new(&word_id(p), &synset, &refs)
        })
        .collect();
    let words: BTreeSet<String> = records.iter().map(|r| r.word.clone()).collect();
    let dag = rebuild_for_split(&records, &words, &[])?;

    let per_leaf: Vec<(String, Vec<Vec<f64>>)> = words
        .par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, w, 0));
            let mu = &means[w];
            let xs = (0..spec.samples_per_leaf)
                .map(|_| {
                    let z = gaussian(&mut rng, dim, spec.sigma_obs);
                    mu.iter().zip(&z).map(|(a, b)| a + b).collect()
                })
                .collect();
            (w.clone(), xs)
        })
        .collect();

    let n = words.len() * spec.samples_per_leaf;
    let mut data = Array2::<f32>::zeros((n, dim));
    let mut keys = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    let mut classes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (w, xs) in &per_leaf {
        for (i, x) in xs.iter().enumerate() {
            let id = format!("{w}_{i:04}");
            let r = keys.len();
            for (j, v) in x.iter().enumerate() {
                data[[r, j]] = *v as f32;
            }
            rows.push(ManifestRow {
                sample_id: id.clone(),
                word: w.clone(),
                subject: format!("S{:02}", i % spec.subjects),
                session: "synth".into(),
                recording_uri: "windows.heeg".into(),
                onset_seconds: 0.0,
            });
            classes.entry(w.clone()).or_default().push(id.clone());
            keys.push(id);
        }
    }
    Ok(SynthData {
        spec: spec.clone(),
        records,
        dag,
        pool: ClassPool::new(classes)?,
        means,
        manifest: SampleManifest::new(rows)?,
        bank: KeyedTensor {
            keys,
            tensor: Tensor {
                data,
                rate: TARGET_RATE,
            },
        },
    })
}

impl SynthData {
    pub fn store(&self) -> Result<FeatureStore> {
        FeatureStore::from_keyed(&self.bank)
    }

    pub fn primary(&self) -> BTreeMap<String, Vec<String>> {
        primary_paths(&self.records)
    }

    /// Per parent of leaves, `train_per_group` children go to training and the
    /// rest to test (seeded shuffle per parent).
    pub fn stratified_split(&self, train_per_group: usize, seed: u64) -> Result<(BTreeSet<String>, BTreeSet<String>)> {
        let mut train = BTreeSet::new();
        let mut test = BTreeSet::new();
        let parents: BTreeSet<&str> = self
            .dag
            .leaves()
            .into_iter()
            .flat_map(|l| self.dag.parents(l))
            .collect();
        for p in parents {
            let mut kids: Vec<&str> = self
                .dag
                .children(p)
                .into_iter()
                .filter(|c| self.dag.kind(c) == Some(NodeKind::Leaf))
                .collect();
            if kids.len() <= train_per_group {
                return Err(Error::InvalidArgument(format!(
                    "`{p}` has {} leaves, cannot hold out after {train_per_group} for training",
                    kids.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, p, 0));
            kids.shuffle(&mut rng);
            train.extend(kids[..train_per_group].iter().map(|s| s.to_string()));
            test.extend(kids[train_per_group..].iter().map(|s| s.to_string()));
        }
        Ok((train, test))
    }

    /// The hierarchy and word pool restricted to `words`.
    pub fn level_data(&self, words: &BTreeSet<String>) -> Result<LevelData> {
        let dag = rebuild_for_split(&self.records, words, &[])?;
        let classes = self
            .pool
            .iter()
            .filter(|(c, _)| words.contains(*c))
            .map(|(c, s)| (c.to_string(), s.to_vec()))
            .collect();
        Ok(LevelData {
            dag,
            pool: ClassPool::new(classes)?,
        })
    }

    /// Hypernym paths, manifest and the keyed window bank under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let hp = dir.join("hypernyms.txt");
        std::fs::write(&hp, format_hypernym_paths(&self.records)).map_err(|e| Error::io(&hp, e))?;
        write_manifest(&dir.join("manifest.csv"), &self.manifest)?;
        write_keyed(&dir.join("windows.heeg"), &self.bank)?;
        let mp = dir.join("means.json");
        std::fs::write(&mp, serde_json::to_string(&self.means)?).map_err(|e| Error::io(&mp, e))
    }
}

/// Exact Bayes classifier for a class pool whose classes are mixtures of
/// known Gaussian leaves with shared isotropic covariance.
#[derive(Debug, Clone)]
pub struct GaussianOracle<'a> {
    means: &'a BTreeMap<String, Vec<f64>>,
    sigma_obs: f64,
    /// class -> (leaf, weight) over the pool samples
    components: BTreeMap<String, Vec<(String, f64)>>,
}

impl<'a> GaussianOracle<'a> {
    /// `pool` must be a (possibly relabelled) subset of `data.pool`.
    pub fn new(data: &'a SynthData, pool: &ClassPool) -> Result<Self> {
        let leaf_of: BTreeMap<&str, &str> = data
            .manifest
            .rows
            .iter()
            .map(|r| (r.sample_id.as_str(), r.word.as_str()))
            .collect();
        let mut components = BTreeMap::new();
        for (c, ids) in pool.iter() {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for id in ids {
                let leaf = leaf_of
                    .get(id.as_str())
                    .ok_or_else(|| Error::InvalidArgument(format!("sample `{id}` is not synthetic")))?;
                *counts.entry(leaf.to_string()).or_default() += 1;
            }
            let total = ids.len() as f64;
            components.insert(
                c.to_string(),
                counts.into_iter().map(|(l, n)| (l, n as f64 / total)).collect(),
            );
        }
        Ok(GaussianOracle {
            means: &data.means,
            sigma_obs: data.spec.sigma_obs,
            components,
        })
    }

    /// Log class-conditional density up to a shared constant. At σ_obs = 0 the
    /// limit is used: the negative squared distance to the nearest component.
    fn score(&self, class: &str, x: &[f64]) -> f64 {
        let comps = &self.components[class];
        let d2: Vec<f64> = comps
            .iter()
            .map(|(l, _)| self.means[l].iter().zip(x).map(|(m, v)| (m - v) * (m - v)).sum())
            .collect();
        if self.sigma_obs == 0.0 {
            return -d2.iter().copied().fold(f64::INFINITY, f64::min);
        }
        let s2 = 2.0 * self.sigma_obs * self.sigma_obs;
        let terms: Vec<f64> = comps.iter().zip(&d2).map(|((_, w), d)| w.ln() - d / s2).collect();
        let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    /// Accuracy on the episode's query set (uniform class prior).
    pub fn episode_accuracy(&self, ep: &Episode, store: &FeatureStore) -> Result<f64> {
        let xq = store.rows(ep.query.iter().map(|(id, _)| id.as_str()))?;
        let mut scores = Array2::zeros((xq.nrows(), ep.way()));
        for (i, row) in xq.rows().into_iter().enumerate() {
            let x = row.to_vec();
            for (j, c) in ep.classes.iter().enumerate() {
                if !self.components.contains_key(c) {
                    return Err(Error::InvalidArgument(format!("class `{c}` unknown to the oracle")));
                }
                scores[[i, j]] = self.score(c, &x);
            }
        }
        let pred = argmax_rows(scores.view());
        let hits = ep
            .query
            .iter()
            .zip(&pred)
            .filter(|((_, c), &p)| ep.classes[p] == *c)
            .count();
        Ok(if ep.query.is_empty() {
            0.0
        } else {
            hits as f64 / ep.query.len() as f64
        })
    }
}

/// Oracle records for every episode of `suite` (and its fixed-way forms), in
/// the same shape the learned pipeline produces. The mode field is unused.
pub fn oracle_records(
    oracle: &GaussianOracle<'_>,
    suite: &EpisodeSuite,
    dag: &ConceptDag,
    store: &FeatureStore,
    fixed_ways: &[usize],
) -> Result<Vec<EvalRecord>> {
    let per: Vec<Result<Vec<EvalRecord>>> = suite
        .episodes
        .par_iter()
        .map(|ep| {
            let mut v = vec![(WaySetting::Variable, ep.clone())];
            v.extend(
                fixed_ways
                    .iter()
                    .filter_map(|&w| fixed_way_episode(ep, w).map(|e| (WaySetting::Fixed(w), e))),
            );
            v.into_iter()
                .map(|(setting, e)| {
                    Ok(EvalRecord {
                        node: e.node.clone(),
                        mode: Mode::Baseline,
                        setting,
                        way: e.way(),
                        instance: e.instance,
                        span_length: dag.span_len(&e.node),
                        score: oracle.episode_accuracy(&e, store)?,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per {
        out.extend(r?);
    }
    Ok(out)
}

/// Monte Carlo normalized accuracy of the Bayes classifier at abstraction
/// level `level` on the held-out leaves of a 1-train-leaf-per-group split.
/// Episodes cycle through the eligible nodes; the result is the mean over
/// nodes of the per-node mean, as for learned models.
pub fn bayes_oracle_accuracy(
    spec: &SynthSpec,
    level: usize,
    setting: WaySetting,
    trials: usize,
    sampler: &SamplerConfig,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("oracle needs at least one trial".into()));
    }
    let data = gen_hierarchy_gaussians(spec)?;
    let (_, test_words) = data.stratified_split(1, spec.seed)?;
    let test = data.level_data(&test_words)?.prune(level, &data.primary())?;
    let store = data.store()?;
    let oracle = GaussianOracle::new(&data, &test.pool)?;
    let nodes = crate::hierarchy::eligible_nodes(&test.dag, sampler.min_span, &sampler.excluded);
    if nodes.is_empty() {
        return Err(Error::EmptySplit(format!("no eligible nodes at level {level}")));
    }
    let records: Vec<Result<Option<EvalRecord>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let node = &nodes[t % nodes.len()];
            let instance = (t / nodes.len()) as u64;
            let seed = derive_seed(stream_seed(spec.seed, "oracle", level as u64), node, instance);
            let ep = match sample_episode(&test.dag, &test.pool, node, seed, sampler, None) {
                Ok(e) => e,
                Err(Error::Unsampleable { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let ep = match setting {
                WaySetting::Variable => ep,
                WaySetting::Fixed(w) => match fixed_way_episode(&ep, w) {
                    Some(e) => e,
                    None => return Ok(None),
                },
            };
            Ok(Some(EvalRecord {
                node: node.clone(),
                mode: Mode::Baseline,
                setting,
                way: ep.way(),
                instance,
                span_length: test.dag.span_len(node),
                score: oracle.episode_accuracy(&ep, &store)?,
            }))
        })
        .collect();
    let mut kept = Vec::new();
    for r in records {
        kept.extend(r?);
    }
    if kept.is_empty() {
        return Err(Error::EmptySplit(format!("no {setting} episodes at level {level}")));
    }
    let report = aggregate(&kept)?;
    report
        .suite_stats(Mode::Baseline, setting)
        .map(|s| s.mean)
        .ok_or_else(|| Error::EmptySplit("oracle produced no scores".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            depth: 3,
            samples_per_leaf: 12,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn shape_and_determinism() {
        let a = gen_hierarchy_gaussians(&small()).unwrap();
        assert_eq!(a.dag.leaf_count(), 27);
        assert_eq!(a.bank.keys.len(), 27 * 12);
        assert_eq!(a.bank.tensor.data.ncols(), 32);
        let b = gen_hierarchy_gaussians(&small()).unwrap();
        assert_eq!(a.bank, b.bank);
        assert_eq!(a.means, b.means);
    }

    #[test]
    fn split_is_stratified() {
        let d = gen_hierarchy_gaussians(&small()).unwrap();
        let (tr, te) = d.stratified_split(1, 3).unwrap();
        assert_eq!(tr.len(), 9);
        assert_eq!(te.len(), 18);
        assert!(tr.is_disjoint(&te));
        let lvl = d.level_data(&te).unwrap();
        assert_eq!(lvl.dag.leaf_count(), 18);
        assert_eq!(lvl.pool.n_classes(), 18);
    }

    #[test]
    fn rejects_bad_specs() {
        let bad = SynthSpec {
            sigma_obs: -1.0,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = SynthSpec {
            branching: 1,
            ..SynthSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn writes_pipeline_files() {
        let d = gen_hierarchy_gaussians(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.write(dir.path()).unwrap();
        let recs = crate::hierarchy::io::read_hypernym_paths(&dir.path().join("hypernyms.txt")).unwrap();
        assert_eq!(recs.len(), 27);
        let kt = crate::preprocess::heeg::read_keyed(&dir.path().join("windows.heeg")).unwrap();
        assert_eq!(kt, d.bank);
    }
}
