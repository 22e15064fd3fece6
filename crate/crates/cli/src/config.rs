//! Run configuration: TOML with one table per pipeline stage. Every key has a
//! default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use hieeg::evalx::{PipelineConfig, SpanBin, DEFAULT_SPAN_BINS};
use hieeg::hierarchy::{SynsetId, DEFAULT_BROAD_THRESHOLD, DEFAULT_DISCARDED_SYNSETS};
use hieeg::metalearn::{AdaptConfig, Mode};
use hieeg::montage::DEFAULT_NEIGHBORS;
use hieeg::preprocess::PreprocessConfig;
use hieeg::sampler::{SamplerConfig, SplitSpec};
use hieeg::synth::SynthSpec;
use hieeg::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub paths: PathsSection,
    pub hierarchy: HierarchySection,
    pub montage: MontageSection,
    pub preprocess: PreprocessConfig,
    pub splits: SplitSpec,
    pub sampler: SamplerConfig,
    pub adapt: AdaptConfig,
    pub eval: EvalSection,
    pub abstraction: AbstractionSection,
    pub synth: SynthSpec,
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Default inputs; a command-line path flag takes precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub hypernyms: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub dag: Option<PathBuf>,
    pub reference_layout: Option<PathBuf>,
    pub target_layouts: Vec<PathBuf>,
    pub alignment: Option<PathBuf>,
    pub windows: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub suite: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub records: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchySection {
    pub broad_threshold: usize,
    pub discarded: Vec<SynsetId>,
}

impl Default for HierarchySection {
    fn default() -> Self {
        HierarchySection {
            broad_threshold: DEFAULT_BROAD_THRESHOLD,
            discarded: DEFAULT_DISCARDED_SYNSETS.iter().map(|s| SynsetId::from(*s)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MontageSection {
    pub neighbors: usize,
}

impl Default for MontageSection {
    fn default() -> Self {
        MontageSection {
            neighbors: DEFAULT_NEIGHBORS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub val_instances: usize,
    pub test_instances: usize,
    pub fixed_ways: Vec<usize>,
    /// Score by balanced accuracy instead of accuracy.
    pub balanced: bool,
    pub span_bins: Vec<SpanBin>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            val_instances: 5,
            test_instances: 10,
            fixed_ways: vec![2, 6, 10],
            balanced: false,
            span_bins: DEFAULT_SPAN_BINS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbstractionSection {
    pub levels: Vec<usize>,
    pub modes: Vec<Mode>,
}

impl Default for AbstractionSection {
    fn default() -> Self {
        AbstractionSection {
            levels: vec![2, 3, 4],
            modes: Mode::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub levels: Vec<usize>,
    pub trials: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            levels: vec![0, 1, 2],
            trials: 10_000,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.adapt.validate()?;
        self.synth.validate()?;
        if self.eval.val_instances == 0 || self.eval.test_instances == 0 {
            return Err(Error::InvalidArgument("instance counts must be positive".into()));
        }
        if self.eval.fixed_ways.iter().any(|&w| w < 2) {
            return Err(Error::InvalidArgument("fixed ways must be at least 2".into()));
        }
        if self.oracle.trials == 0 {
            return Err(Error::InvalidArgument("oracle trials must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text used for hashing and for the run metadata.
    pub fn canonical(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn pipeline(&self, instances: usize) -> PipelineConfig {
        PipelineConfig {
            adapt: self.adapt.clone(),
            sampler: self.sampler.clone(),
            test_instances: instances,
            fixed_ways: self.eval.fixed_ways.clone(),
            balanced: self.eval.balanced,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[sampler]\nway_kap = 3\n").is_err());
        assert!(RunConfig::parse("[nonsense]\n").is_err());
    }

    #[test]
    fn canonical_roundtrips() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::parse(&c.canonical()).unwrap(), c);
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::parse("[adapt]\ninner_steps = 2\n[eval]\nfixed_ways = [2]\n").unwrap();
        assert_eq!(c.adapt.inner_steps, 2);
        assert_eq!(c.eval.fixed_ways, vec![2]);
        assert_eq!(c.adapt.inner_lr, 0.01);
    }
}
