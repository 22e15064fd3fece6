//! Hierarchy-aware episode sampling.
//!
//! An episode is drawn from one eligible DAG node: up to `way_cap` classes from
//! its span, a constant per-class query count `k_q`, a support budget `|D_sup|`
//! and per-class support shots split by a softmax over `alpha_c + log|S(c)|`.

mod episode;
mod io;
mod laws;
mod pool;
mod splits;

pub use episode::{
    fixed_way_episode, sample_episode, sample_episode_traced, sample_eval_suite, Episode, EpisodePlan, EpisodeSuite,
    Rejection, Reservoir, Split, TrainSampler,
};
pub use io::{read_episodes, write_episodes};
pub use laws::{
    compute_query_shots, compute_support_shots, compute_support_size, sample_classes, shots_from_ratios, support_ratios,
};
pub use pool::ClassPool;
pub use splits::{make_splits, SplitData, SplitSpec, Splits};

use serde::{Deserialize, Serialize};

use crate::hierarchy::{SynsetId, DEFAULT_DISCARDED_SYNSETS, DEFAULT_MIN_SPAN};

/// How `k_q` is held constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum QueryShotsMode {
    /// min(floor(|S(c)|/2), query_cap) over the episode's classes.
    #[default]
    PerEpisode,
    /// The same minimum over every class of the pool, so k_q is shared by all episodes.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub min_span: usize,
    pub way_cap: usize,
    pub query_cap: usize,
    pub support_cap: usize,
    pub alpha_low: f64,
    pub alpha_high: f64,
    pub query_shots_mode: QueryShotsMode,
    /// Nodes never sampled besides the root.
    pub excluded: Vec<SynsetId>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            min_span: DEFAULT_MIN_SPAN,
            way_cap: 10,
            query_cap: 10,
            support_cap: 100,
            alpha_low: 0.5f64.ln(),
            alpha_high: 2.0f64.ln(),
            query_shots_mode: QueryShotsMode::PerEpisode,
            excluded: DEFAULT_DISCARDED_SYNSETS.iter().map(|s| SynsetId::from(*s)).collect(),
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.way_cap < 2 {
            return Err(Error::InvalidArgument("way_cap must be at least 2".into()));
        }
        if self.query_cap == 0 || self.support_cap == 0 {
            return Err(Error::InvalidArgument("query and support caps must be positive".into()));
        }
        if !(self.alpha_low.is_finite() && self.alpha_high.is_finite() && self.alpha_low < self.alpha_high) {
            return Err(Error::InvalidArgument(format!(
                "alpha interval [{}, {}) is empty",
                self.alpha_low, self.alpha_high
            )));
        }
        Ok(())
    }
}
