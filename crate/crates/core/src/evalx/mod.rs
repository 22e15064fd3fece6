//! Chance-normalised scoring, per-node aggregation, span bins and
//! abstraction-level runs.

mod pipeline;
mod span;

pub use pipeline::{
    abstraction_run, class_overlap, evaluate_suite, init_embedder, train_mode, LevelData, LevelReport, PipelineConfig,
};
pub use span::{
    assign_bin, span_bins_report, write_span_table, write_wordcloud, BinRow, SpanBin, SpanReport, WordCloudRow,
    DEFAULT_SPAN_BINS, OVERFLOW_LABEL,
};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metalearn::Mode;

/// `(A - 1/N) / (1 - 1/N) * 100`: 0 at chance, 100 when perfect.
pub fn normalized_accuracy(a: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "normalized accuracy needs N >= 2, got {n}"
        )));
    }
    let chance = 1.0 / n as f64;
    Ok((a - chance) / (1.0 - chance) * 100.0)
}

/// Mean per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(truth: &[usize], pred: &[usize], way: usize) -> f64 {
    let mut hit = vec![0usize; way];
    let mut tot = vec![0usize; way];
    for (&t, &p) in truth.iter().zip(pred) {
        if t < way {
            tot[t] += 1;
            hit[t] += usize::from(t == p);
        }
    }
    let recalls: Vec<f64> = hit
        .iter()
        .zip(&tot)
        .filter(|(_, &n)| n > 0)
        .map(|(&h, &n)| h as f64 / n as f64)
        .collect();
    if recalls.is_empty() {
        0.0
    } else {
        recalls.iter().sum::<f64>() / recalls.len() as f64
    }
}

/// Which episodes a record was scored on: the sampled variable-way episode or a
/// fixed-way sub-episode derived from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WaySetting {
    Variable,
    Fixed(usize),
}

impl fmt::Display for WaySetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WaySetting::Variable => f.write_str("variable"),
            WaySetting::Fixed(n) => write!(f, "{n}-way"),
        }
    }
}

impl std::str::FromStr for WaySetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "variable" {
            return Ok(WaySetting::Variable);
        }
        s.strip_suffix("-way")
            .and_then(|n| n.parse().ok())
            .map(WaySetting::Fixed)
            .ok_or_else(|| Error::InvalidArgument(format!("bad way setting `{s}`")))
    }
}

impl Serialize for WaySetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WaySetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One scored episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub node: String,
    pub mode: Mode,
    pub setting: WaySetting,
    /// Number of classes N of the scored episode.
    pub way: usize,
    pub instance: u64,
    pub span_length: usize,
    /// Accuracy or balanced accuracy in `[0, 1]`.
    pub score: f64,
}

impl EvalRecord {
    pub fn normalized(&self) -> Result<f64> {
        normalized_accuracy(self.score, self.way)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Order-independent: values are sorted before summation.
    pub fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 0 {
            return MeanStd {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let mut sq: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        sq.sort_by(f64::total_cmp);
        MeanStd {
            mean,
            std: (sq.iter().sum::<f64>() / n as f64).sqrt(),
            n,
        }
    }

    pub fn cell(&self) -> String {
        format!("{:.2}±{:.2}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub mode: Mode,
    pub setting: WaySetting,
    pub node: String,
    pub span_length: usize,
    pub stats: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub mode: Mode,
    pub setting: WaySetting,
    pub stats: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub nodes: Vec<NodeSummary>,
    pub suite: Vec<SuiteSummary>,
}

/// Normalised accuracy per node (mean over instances), then mean and population
/// std over nodes per (mode, way setting).
pub fn aggregate(records: &[EvalRecord]) -> Result<EvalReport> {
    let mut cells: BTreeMap<(Mode, WaySetting, &str), (usize, Vec<f64>)> = BTreeMap::new();
    for r in records {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::InvalidArgument(format!("score {} outside [0, 1]", r.score)));
        }
        let e = cells
            .entry((r.mode, r.setting, r.node.as_str()))
            .or_insert_with(|| (r.span_length, Vec::new()));
        e.1.push(r.normalized()?);
    }
    let nodes: Vec<NodeSummary> = cells
        .into_iter()
        .map(|((mode, setting, node), (span_length, v))| NodeSummary {
            mode,
            setting,
            node: node.to_string(),
            span_length,
            stats: MeanStd::of(&v),
        })
        .collect();
    let mut groups: BTreeMap<(Mode, WaySetting), Vec<f64>> = BTreeMap::new();
    for n in &nodes {
        groups.entry((n.mode, n.setting)).or_default().push(n.stats.mean);
    }
    let suite = groups
        .into_iter()
        .map(|((mode, setting), v)| SuiteSummary {
            mode,
            setting,
            stats: MeanStd::of(&v),
        })
        .collect();
    Ok(EvalReport { nodes, suite })
}

impl EvalReport {
    pub fn suite_stats(&self, mode: Mode, setting: WaySetting) -> Option<MeanStd> {
        self.suite
            .iter()
            .find(|s| s.mode == mode && s.setting == setting)
            .map(|s| s.stats)
    }

    /// Modes as rows, way settings as columns, `mean±std` cells.
    pub fn grid(&self) -> Vec<Vec<String>> {
        let mut settings: Vec<WaySetting> = self.suite.iter().map(|s| s.setting).collect();
        settings.sort();
        settings.dedup();
        let mut modes: Vec<Mode> = self.suite.iter().map(|s| s.mode).collect();
        modes.sort();
        modes.dedup();
        let mut rows = vec![std::iter::once("mode".to_string())
            .chain(settings.iter().map(|s| s.to_string()))
            .collect()];
        for m in modes {
            let mut row = vec![m.as_str().to_string()];
            for s in &settings {
                row.push(self.suite_stats(m, *s).map(|c| c.cell()).unwrap_or_default());
            }
            rows.push(row);
        }
        rows
    }
}

fn write_rows(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<stem>_grid.csv`, `<stem>_nodes.csv`, `<stem>_suite.csv` and `<stem>.json` into `dir`.
pub fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    write_rows(&dir.join(format!("{stem}_grid.csv")), &report.grid())?;
    let mut rows = vec![["mode", "way", "node", "span_length", "instances", "mean", "std"]
        .map(String::from)
        .to_vec()];
    for n in &report.nodes {
        rows.push(vec![
            n.mode.as_str().into(),
            n.setting.to_string(),
            n.node.clone(),
            n.span_length.to_string(),
            n.stats.n.to_string(),
            format!("{:.6}", n.stats.mean),
            format!("{:.6}", n.stats.std),
        ]);
    }
    write_rows(&dir.join(format!("{stem}_nodes.csv")), &rows)?;
    let mut rows = vec![["mode", "way", "nodes", "mean", "std"].map(String::from).to_vec()];
    for s in &report.suite {
        rows.push(vec![
            s.mode.as_str().into(),
            s.setting.to_string(),
            s.stats.n.to_string(),
            format!("{:.6}", s.stats.mean),
            format!("{:.6}", s.stats.std),
        ]);
    }
    write_rows(&dir.join(format!("{stem}_suite.csv")), &rows)?;
    let p = dir.join(format!("{stem}.json"));
    std::fs::write(&p, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&p, e))
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node", "mode", "way_setting", "way", "instance", "span_length", "score"])?;
    for r in records {
        w.write_record([
            r.node.clone(),
            r.mode.as_str().into(),
            r.setting.to_string(),
            r.way.to_string(),
            r.instance.to_string(),
            r.span_length.to_string(),
            format!("{:.17}", r.score),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.records() {
        let row = row?;
        let bad = |what: &str| Error::format(path, format!("bad {what} in records"));
        out.push(EvalRecord {
            node: row[0].to_string(),
            mode: row[1].parse()?,
            setting: row[2].parse()?,
            way: row[3].parse().map_err(|_| bad("way"))?,
            instance: row[4].parse().map_err(|_| bad("instance"))?,
            span_length: row[5].parse().map_err(|_| bad("span_length"))?,
            score: row[6].parse().map_err(|_| bad("score"))?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(node: &str, score: f64, way: usize) -> EvalRecord {
        EvalRecord {
            node: node.into(),
            mode: Mode::Baseline,
            setting: WaySetting::Fixed(way),
            way,
            instance: 0,
            span_length: 7,
            score,
        }
    }

    #[test]
    fn normalized_examples() {
        assert_eq!(normalized_accuracy(0.5, 2).unwrap(), 0.0);
        assert_eq!(normalized_accuracy(1.0, 7).unwrap(), 100.0);
        assert!((normalized_accuracy(0.25, 10).unwrap() - 16.6667).abs() < 0.01);
        assert!(normalized_accuracy(0.0, 2).unwrap() < 0.0);
        assert!(normalized_accuracy(0.5, 1).is_err());
    }

    #[test]
    fn balanced_accuracy_averages_recalls() {
        // class 0: 2/2, class 1: 0/1
        assert_eq!(balanced_accuracy(&[0, 0, 1], &[0, 0, 0], 2), 0.5);
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[rec("a", 1.0, 2), rec("a", 1.0, 2)]).unwrap();
        assert_eq!(r.suite[0].stats.std, 0.0);
        let r = aggregate(&[rec("a", 0.5, 2), rec("b", 1.0, 2)]).unwrap();
        assert_eq!(r.suite[0].stats.mean, 50.0);
        assert_eq!(r.suite[0].stats.std, 50.0);
        let g = r.grid();
        assert_eq!(g[0], vec!["mode", "2-way"]);
        assert_eq!(g[1], vec!["baseline", "50.00±50.00"]);
    }

    #[test]
    fn way_setting_text() {
        assert_eq!("6-way".parse::<WaySetting>().unwrap(), WaySetting::Fixed(6));
        assert_eq!(WaySetting::Variable.to_string(), "variable");
        assert!("six".parse::<WaySetting>().is_err());
    }
}
