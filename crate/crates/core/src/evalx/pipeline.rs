use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, EvalRecord, EvalReport, WaySetting};
use crate::error::{Error, Result};
use crate::hierarchy::{prune_to_level, ConceptDag};
use crate::metalearn::{evaluate_episode, meta_train, train_baseline, AdaptConfig, EmbedderParams, FeatureStore, Mode};
use crate::sampler::{
    fixed_way_episode, sample_eval_suite, ClassPool, EpisodeSuite, SamplerConfig, Split, TrainSampler,
};
use crate::seed::stream_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub adapt: AdaptConfig,
    pub sampler: SamplerConfig,
    pub test_instances: usize,
    /// Fixed-way settings scored next to the variable-way episode.
    pub fixed_ways: Vec<usize>,
    /// Score episodes by balanced accuracy instead of accuracy.
    pub balanced: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            adapt: AdaptConfig::default(),
            sampler: SamplerConfig::default(),
            test_instances: 10,
            fixed_ways: vec![2, 6, 10],
            balanced: false,
        }
    }
}

/// A split's hierarchy and its class pool (classes are the DAG leaves).
#[derive(Debug, Clone)]
pub struct LevelData {
    pub dag: ConceptDag,
    pub pool: ClassPool,
}

impl LevelData {
    /// Prunes `h` levels and relabels the pool through the resulting map.
    pub fn prune(&self, h: usize, primary: &BTreeMap<String, Vec<String>>) -> Result<LevelData> {
        let (dag, map) = prune_to_level(&self.dag, h, primary)?;
        Ok(LevelData {
            dag,
            pool: self.pool.remap(&map),
        })
    }
}

pub fn init_embedder(input_dim: usize, cfg: &AdaptConfig, seed: u64) -> Result<EmbedderParams> {
    EmbedderParams::mlp(
        input_dim,
        cfg.embed_dim,
        cfg.dropout,
        stream_seed(seed, "embedder-init", 0),
    )
}

/// Trains `init` on the training split with the given mode. Also returns the
/// loss trace: mean loss per epoch (baseline) or query loss per meta-step.
pub fn train_mode(
    mode: Mode,
    init: &EmbedderParams,
    train: &LevelData,
    store: &FeatureStore,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(EmbedderParams, Vec<f64>)> {
    match mode {
        Mode::Baseline => {
            let (x, y, classes) = store.pool_data(&train.pool)?;
            let out = train_baseline(
                init,
                x.view(),
                &y,
                classes.len(),
                &cfg.adapt,
                stream_seed(seed, "baseline", 0),
            )?;
            Ok((out.params, out.epoch_losses))
        }
        Mode::Fomaml | Mode::Proto => {
            let sampler = TrainSampler::new(
                &train.dag,
                &train.pool,
                stream_seed(seed, "meta-train", 0),
                &cfg.sampler,
            )?;
            let (p, stats) = meta_train(init, &sampler, store, mode, &cfg.adapt)?;
            Ok((p, stats.iter().map(|s| s.query_loss).collect()))
        }
    }
}

/// Scores every suite episode in its variable-way form and in each fixed-way
/// form it supports. Records follow suite order.
pub fn evaluate_suite(
    params: &EmbedderParams,
    suite: &EpisodeSuite,
    dag: &ConceptDag,
    store: &FeatureStore,
    mode: Mode,
    cfg: &PipelineConfig,
) -> Result<Vec<EvalRecord>> {
    let per_episode: Vec<Result<Vec<EvalRecord>>> = suite
        .episodes
        .par_iter()
        .map(|ep| {
            let span_length = dag.span_len(&ep.node);
            let mut variants = vec![(WaySetting::Variable, ep.clone())];
            for &w in &cfg.fixed_ways {
                if let Some(sub) = fixed_way_episode(ep, w) {
                    variants.push((WaySetting::Fixed(w), sub));
                }
            }
            variants
                .into_iter()
                .map(|(setting, e)| {
                    let data = store.episode_data(&e)?;
                    let s = evaluate_episode(params, &data, mode, &cfg.adapt)?;
                    Ok(EvalRecord {
                        node: e.node.clone(),
                        mode,
                        setting,
                        way: s.way,
                        instance: e.instance,
                        span_length,
                        score: if cfg.balanced { s.balanced_accuracy } else { s.accuracy },
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in per_episode {
        out.extend(r?);
    }
    Ok(out)
}

/// Fraction of test classes that are also training classes.
pub fn class_overlap(train: &ClassPool, test: &ClassPool) -> f64 {
    if test.n_classes() == 0 {
        return 0.0;
    }
    let shared = test.classes().filter(|c| train.contains(c)).count();
    shared as f64 / test.n_classes() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: usize,
    /// Set when the level could not be run; the remaining fields are then empty.
    pub skipped: Option<String>,
    pub train_classes: usize,
    pub test_classes: usize,
    pub overlap: f64,
    pub rejections: usize,
    pub records: Vec<EvalRecord>,
    pub report: Option<EvalReport>,
}

fn run_level(
    level: usize,
    train: &LevelData,
    test: &LevelData,
    store: &FeatureStore,
    modes: &[Mode],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<LevelReport> {
    let (suite, rejections) = sample_eval_suite(
        &test.dag,
        &test.pool,
        Split::MetaTest,
        cfg.test_instances,
        stream_seed(seed, "meta-test", 0),
        &cfg.sampler,
    )?;
    if suite.episodes.is_empty() {
        return Err(Error::EmptySplit(format!("no test episodes at level {level}")));
    }
    let init = init_embedder(store.dim(), &cfg.adapt, seed)?;
    let mut records = Vec::new();
    for &mode in modes {
        let (params, _) = train_mode(mode, &init, train, store, cfg, seed)?;
        records.extend(evaluate_suite(&params, &suite, &test.dag, store, mode, cfg)?);
    }
    let report = aggregate(&records)?;
    Ok(LevelReport {
        level,
        skipped: None,
        train_classes: train.pool.n_classes(),
        test_classes: test.pool.n_classes(),
        overlap: class_overlap(&train.pool, &test.pool),
        rejections: rejections.len(),
        records,
        report: Some(report),
    })
}

/// For each `h`: prune both splits, relabel, retrain each mode from the same
/// initialisation and evaluate on a fresh suite. Seeds do not depend on `h`,
/// so `h = 0` reproduces the unpruned run. Levels that cannot be pruned or
/// sampled are reported as skipped.
#[allow(clippy::too_many_arguments)]
pub fn abstraction_run(
    train: &LevelData,
    test: &LevelData,
    primary: &BTreeMap<String, Vec<String>>,
    store: &FeatureStore,
    levels: &[usize],
    modes: &[Mode],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<LevelReport>> {
    cfg.adapt.validate()?;
    cfg.sampler.validate()?;
    let mut out = Vec::with_capacity(levels.len());
    for &h in levels {
        let attempt = train
            .prune(h, primary)
            .and_then(|tr| Ok((tr, test.prune(h, primary)?)))
            .and_then(|(tr, te)| run_level(h, &tr, &te, store, modes, cfg, seed));
        match attempt {
            Ok(r) => out.push(r),
            Err(e @ (Error::PruneTooDeep { .. } | Error::EmptySplit(_) | Error::Unsampleable { .. })) => {
                log::warn!("level {h} skipped: {e}");
                out.push(LevelReport {
                    level: h,
                    skipped: Some(e.to_string()),
                    train_classes: 0,
                    test_classes: 0,
                    overlap: 0.0,
                    rejections: 0,
                    records: Vec::new(),
                    report: None,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
