use std::collections::BTreeMap;
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::laws::{compute_query_shots, compute_support_shots, compute_support_size, sample_classes};
use super::{ClassPool, QueryShotsMode, SamplerConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{eligible_nodes, ConceptDag};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    MetaTrain,
    MetaValidation,
    MetaTest,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::MetaTrain => "meta-train",
            Split::MetaValidation => "meta-validation",
            Split::MetaTest => "meta-test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One N-way task. Support and query rows are `(sample_id, class)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub node: String,
    /// Instance number within the node (suite episodes) or the draw index (training).
    #[serde(default)]
    pub instance: u64,
    pub seed: u64,
    pub classes: Vec<String>,
    pub support: Vec<(String, String)>,
    pub query: Vec<(String, String)>,
    pub k_q: usize,
    pub support_size: usize,
    pub shots: BTreeMap<String, usize>,
}

impl Episode {
    pub fn way(&self) -> usize {
        self.classes.len()
    }

    /// Class index of each support row, following `classes` order.
    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(class)).ok()
    }
}

/// Intermediate quantities of one draw, kept for law checks.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodePlan {
    pub k_q: usize,
    pub beta: f64,
    pub support_size: usize,
    pub ratios: Vec<f64>,
    pub shots: Vec<usize>,
}

/// One-time split of every class into disjoint query and support reservoirs,
/// so query and support ids stay disjoint across all training episodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservoir {
    query: BTreeMap<String, Vec<String>>,
    support: BTreeMap<String, Vec<String>>,
}

impl Reservoir {
    /// Query reservoir of class `c` holds `min(query_cap, floor(|S(c)|/2))` ids,
    /// the largest `k_q` any episode can ask for.
    pub fn partition(pool: &ClassPool, query_cap: usize, seed: u64) -> Self {
        let mut query = BTreeMap::new();
        let mut support = BTreeMap::new();
        for (c, ids) in pool.iter() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, c, 0));
            let mut ids = ids.to_vec();
            ids.shuffle(&mut rng);
            let q = query_cap.min(ids.len() / 2);
            let mut s = ids.split_off(q);
            ids.sort();
            s.sort();
            query.insert(c.to_string(), ids);
            support.insert(c.to_string(), s);
        }
        Reservoir { query, support }
    }

    pub fn query(&self, class: &str) -> &[String] {
        self.query.get(class).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn support(&self, class: &str) -> &[String] {
        self.support.get(class).map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn sample_episode(
    dag: &ConceptDag,
    pool: &ClassPool,
    node: &str,
    seed: u64,
    cfg: &SamplerConfig,
    reservoir: Option<&Reservoir>,
) -> Result<Episode> {
    sample_episode_traced(dag, pool, node, seed, cfg, reservoir).map(|(e, _)| e)
}

fn draw<R: Rng + ?Sized>(from: &[String], k: usize, rng: &mut R) -> Vec<String> {
    let mut v: Vec<String> = from.choose_multiple(rng, k).cloned().collect();
    v.sort();
    v
}

/// Draws one episode from `node`; fully determined by the arguments.
pub fn sample_episode_traced(
    dag: &ConceptDag,
    pool: &ClassPool,
    node: &str,
    seed: u64,
    cfg: &SamplerConfig,
    reservoir: Option<&Reservoir>,
) -> Result<(Episode, EpisodePlan)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = sample_classes(dag, node, cfg, &mut rng)?;
    let k_q = match cfg.query_shots_mode {
        QueryShotsMode::PerEpisode => compute_query_shots(pool, &classes, cfg.query_cap),
        QueryShotsMode::Global => {
            let all: Vec<String> = pool.classes().map(String::from).collect();
            compute_query_shots(pool, &all, cfg.query_cap)
        }
    }
    .map_err(|e| relabel(e, node))?;
    // (0, 1]
    let beta = 1.0 - rng.random::<f64>();
    let support_size =
        compute_support_size(pool, &classes, k_q, beta, cfg.support_cap).map_err(|e| relabel(e, node))?;
    let (mut shots, ratios) = compute_support_shots(pool, &classes, k_q, support_size, cfg, &mut rng)?;
    if let Some(r) = reservoir {
        for (s, c) in shots.iter_mut().zip(&classes) {
            *s = (*s).min(r.support(c).len());
        }
    }

    let mut support = Vec::new();
    let mut query = Vec::new();
    for (c, &k_sup) in classes.iter().zip(&shots) {
        let all = pool.samples(c).unwrap_or(&[]);
        let (q, s) = match reservoir {
            Some(r) => {
                if r.query(c).len() < k_q {
                    return Err(Error::Unsampleable {
                        node: node.to_string(),
                        reason: format!("query reservoir of `{c}` smaller than k_q"),
                    });
                }
                let q = draw(r.query(c), k_q, &mut rng);
                let s = draw(r.support(c), k_sup, &mut rng);
                (q, s)
            }
            None => {
                let q = draw(all, k_q, &mut rng);
                let rest: Vec<String> = all.iter().filter(|id| q.binary_search(id).is_err()).cloned().collect();
                let s = draw(&rest, k_sup, &mut rng);
                (q, s)
            }
        };
        if s.is_empty() {
            return Err(Error::Unsampleable {
                node: node.to_string(),
                reason: format!("no support samples for `{c}`"),
            });
        }
        query.extend(q.into_iter().map(|id| (id, c.clone())));
        support.extend(s.into_iter().map(|id| (id, c.clone())));
    }
    let ep = Episode {
        node: node.to_string(),
        instance: 0,
        seed,
        shots: classes.iter().cloned().zip(shots.iter().copied()).collect(),
        classes,
        support,
        query,
        k_q,
        support_size,
    };
    let plan = EpisodePlan {
        k_q,
        beta,
        support_size,
        ratios,
        shots,
    };
    Ok((ep, plan))
}

fn relabel(e: Error, node: &str) -> Error {
    match e {
        Error::Unsampleable { reason, .. } => Error::Unsampleable {
            node: node.to_string(),
            reason,
        },
        other => other,
    }
}

/// A node-level sampling failure, excluded from aggregates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub node: String,
    pub instance: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSuite {
    pub split: Split,
    pub instances_per_node: usize,
    pub episodes: Vec<Episode>,
}

/// `instances` episodes for every eligible node, seeded by
/// `derive_seed(base_seed, node, instance)`.
pub fn sample_eval_suite(
    dag: &ConceptDag,
    pool: &ClassPool,
    split: Split,
    instances: usize,
    base_seed: u64,
    cfg: &SamplerConfig,
) -> Result<(EpisodeSuite, Vec<Rejection>)> {
    if instances == 0 {
        return Err(Error::InvalidArgument("instances per node must be at least 1".into()));
    }
    cfg.validate()?;
    let nodes = eligible_nodes(dag, cfg.min_span, &cfg.excluded);
    let per_node: Vec<Vec<std::result::Result<Episode, Rejection>>> = nodes
        .par_iter()
        .map(|node| {
            (0..instances as u64)
                .map(|i| {
                    let seed = derive_seed(base_seed, node, i);
                    sample_episode(dag, pool, node, seed, cfg, None)
                        .map(|e| Episode { instance: i, ..e })
                        .map_err(|e| Rejection {
                            node: node.clone(),
                            instance: i,
                            reason: e.to_string(),
                        })
                })
                .collect()
        })
        .collect();
    let mut episodes = Vec::new();
    let mut rejections = Vec::new();
    for r in per_node.into_iter().flatten() {
        match r {
            Ok(e) => episodes.push(e),
            Err(r) => rejections.push(r),
        }
    }
    Ok((
        EpisodeSuite {
            split,
            instances_per_node: instances,
            episodes,
        },
        rejections,
    ))
}

/// Sub-samples `way` classes of `ep` using a seed derived from the episode
/// seed. `None` when the episode has fewer than `way` classes.
pub fn fixed_way_episode(ep: &Episode, way: usize) -> Option<Episode> {
    if way < 2 || ep.classes.len() < way {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(ep.seed, "fixed-way", way as u64));
    let mut chosen: Vec<String> = ep.classes.choose_multiple(&mut rng, way).cloned().collect();
    chosen.sort();
    let keep = |rows: &[(String, String)]| -> Vec<(String, String)> {
        rows.iter()
            .filter(|(_, c)| chosen.binary_search(c).is_ok())
            .cloned()
            .collect()
    };
    let support = keep(&ep.support);
    let shots: BTreeMap<String, usize> = ep
        .shots
        .iter()
        .filter(|(c, _)| chosen.binary_search(c).is_ok())
        .map(|(c, s)| (c.clone(), *s))
        .collect();
    Some(Episode {
        node: ep.node.clone(),
        instance: ep.instance,
        seed: ep.seed,
        query: keep(&ep.query),
        support_size: support.len(),
        support,
        classes: chosen,
        k_q: ep.k_q,
        shots,
    })
}

/// Fresh training episodes with global support/query disjointness.
#[derive(Debug, Clone)]
pub struct TrainSampler<'a> {
    dag: &'a ConceptDag,
    pool: &'a ClassPool,
    nodes: Vec<String>,
    reservoir: Reservoir,
    base_seed: u64,
    cfg: SamplerConfig,
}

impl<'a> TrainSampler<'a> {
    pub fn new(dag: &'a ConceptDag, pool: &'a ClassPool, base_seed: u64, cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let nodes = eligible_nodes(dag, cfg.min_span, &cfg.excluded);
        if nodes.is_empty() {
            return Err(Error::EmptySplit("no eligible nodes for training episodes".into()));
        }
        let reservoir = Reservoir::partition(pool, cfg.query_cap, derive_seed(base_seed, "reservoir", 0));
        Ok(TrainSampler {
            dag,
            pool,
            nodes,
            reservoir,
            base_seed,
            cfg: cfg.clone(),
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn reservoir(&self) -> &Reservoir {
        &self.reservoir
    }

    /// Episode number `index`. The node is drawn uniformly; unsampleable nodes
    /// fall through to the next one in id order.
    pub fn episode(&self, index: u64) -> Result<Episode> {
        let n = self.nodes.len();
        let start = (derive_seed(self.base_seed, "meta-train", index) % n as u64) as usize;
        let mut last = None;
        for t in 0..n {
            let node = &self.nodes[(start + t) % n];
            let seed = derive_seed(self.base_seed, node, index);
            match sample_episode(self.dag, self.pool, node, seed, &self.cfg, Some(&self.reservoir)) {
                Ok(e) => return Ok(Episode { instance: index, ..e }),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::EmptySplit("no eligible nodes".into())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::{build_dag, HypernymRecord};
    use std::collections::BTreeSet;

    fn fixture() -> (ConceptDag, ClassPool) {
        let mut recs = Vec::new();
        let mut pool = BTreeMap::new();
        for g in 0..3 {
            for w in 0..(6 + 4 * g) {
                let word = format!("G{g}W{w}");
                recs.push(HypernymRecord::new(
                    &word,
                    &format!("g{g}.n.01"),
                    &["entity.n.01", "top.n.01"],
                ));
                pool.insert(word.clone(), (0..(4 + 7 * w)).map(|i| format!("{word}_{i}")).collect());
            }
        }
        let words: BTreeSet<String> = recs.iter().map(|r| r.word.clone()).collect();
        (build_dag(&recs, &words).unwrap().0, ClassPool::new(pool).unwrap())
    }

    #[test]
    fn deterministic_and_disjoint() {
        let (dag, pool) = fixture();
        let cfg = SamplerConfig::default();
        let a = sample_episode(&dag, &pool, "g1.n.01", 42, &cfg, None).unwrap();
        let b = sample_episode(&dag, &pool, "g1.n.01", 42, &cfg, None).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let s: BTreeSet<&String> = a.support.iter().map(|(id, _)| id).collect();
        assert!(a.query.iter().all(|(id, _)| !s.contains(id)));
        assert_eq!(a.way(), 10);
    }

    #[test]
    fn suite_covers_every_eligible_node() {
        let (dag, pool) = fixture();
        let cfg = SamplerConfig::default();
        let (suite, rej) = sample_eval_suite(&dag, &pool, Split::MetaTest, 10, 3, &cfg).unwrap();
        // g0, g1, g2 and top are eligible
        assert!(rej.is_empty());
        assert_eq!(suite.episodes.len(), 40);
        let (again, _) = sample_eval_suite(&dag, &pool, Split::MetaTest, 10, 3, &cfg).unwrap();
        assert_eq!(suite, again);
    }

    #[test]
    fn fixed_way_subsets() {
        let (dag, pool) = fixture();
        let ep = sample_episode(&dag, &pool, "g0.n.01", 5, &SamplerConfig::default(), None).unwrap();
        assert_eq!(ep.way(), 6);
        let two = fixed_way_episode(&ep, 2).unwrap();
        assert_eq!(two.way(), 2);
        assert_eq!(two.query.len(), 2 * ep.k_q);
        assert!(two.support.iter().all(|(_, c)| two.classes.contains(c)));
        assert_eq!(fixed_way_episode(&ep, 2), Some(two));
        assert!(fixed_way_episode(&ep, 10).is_none());
        assert_eq!(fixed_way_episode(&ep, 6).unwrap().support.len(), ep.support.len());
    }

    #[test]
    fn training_stream_is_globally_disjoint() {
        let (dag, pool) = fixture();
        let ts = TrainSampler::new(&dag, &pool, 9, &SamplerConfig::default()).unwrap();
        let mut sup = BTreeSet::new();
        let mut qry = BTreeSet::new();
        for i in 0..200 {
            let e = ts.episode(i).unwrap();
            sup.extend(e.support.into_iter().map(|(id, _)| id));
            qry.extend(e.query.into_iter().map(|(id, _)| id));
        }
        assert!(sup.is_disjoint(&qry));
    }
}
