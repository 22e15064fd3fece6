//! Hierarchy-aware episodic evaluation for EEG-to-text decoding.
//!
//! The crate is organised around the pipeline stages:
//!
//! ```text
//! hypernym paths ─► hierarchy (concept DAG, broad-word filter, pruning)
//! layouts        ─► montage   (channel alignment across montages)
//! raw EEG        ─► preprocess (re-reference, select, resample, band-pass, windows)
//! DAG + pools    ─► sampler   (variable-way / variable-shot episodes)
//! episodes       ─► metalearn (baseline, fo-MAML, proto-fo-MAML adaptation)
//! records        ─► evalx     (normalized accuracy, span bins, abstraction runs)
//! ```
//!
//! `synth` generates hierarchical-Gaussian data in the same file formats so the
//! whole pipeline can be checked against an exact Bayes classifier.

pub mod error;
pub mod evalx;
pub mod hierarchy;
pub mod metalearn;
pub mod montage;
pub mod preprocess;
pub mod sampler;
pub mod seed;
pub mod synth;

pub use error::{Error, ErrorKind, Result};

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
