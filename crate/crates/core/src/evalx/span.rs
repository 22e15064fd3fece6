use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalReport, MeanStd, WaySetting};
use crate::error::{Error, Result};
use crate::hierarchy::concept_lemma;
use crate::metalearn::Mode;

/// Inclusive span-length range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanBin {
    pub lo: usize,
    pub hi: usize,
}

impl SpanBin {
    pub fn label(&self) -> String {
        format!("{}-{}", self.lo, self.hi)
    }

    pub fn contains(&self, span: usize) -> bool {
        (self.lo..=self.hi).contains(&span)
    }
}

/// Data-derived bins observed on the meta-test hierarchy; they leave gaps.
pub const DEFAULT_SPAN_BINS: [SpanBin; 4] = [
    SpanBin { lo: 5, hi: 15 },
    SpanBin { lo: 17, hi: 36 },
    SpanBin { lo: 49, hi: 82 },
    SpanBin { lo: 111, hi: 119 },
];

pub const OVERFLOW_LABEL: &str = "overflow";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub bin: String,
    pub mode: Mode,
    pub setting: WaySetting,
    /// Statistics over the node means falling in the bin.
    pub stats: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloudRow {
    pub mode: Mode,
    pub setting: WaySetting,
    pub concept: String,
    pub span_length: usize,
    pub normalized_accuracy: f64,
}

impl WordCloudRow {
    /// `concept.span`, e.g. `artifact.119`.
    pub fn tag(&self) -> String {
        format!("{}.{}", self.concept, self.span_length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub rows: Vec<BinRow>,
    /// Bin label of every node (bins or overflow), keyed by node id.
    pub assignment: BTreeMap<String, String>,
    pub wordcloud: Vec<WordCloudRow>,
}

fn check_bins(bins: &[SpanBin]) -> Result<()> {
    for b in bins {
        if b.lo > b.hi {
            return Err(Error::InvalidArgument(format!("span bin {} is empty", b.label())));
        }
    }
    for w in bins.windows(2) {
        if w[1].lo <= w[0].hi {
            return Err(Error::InvalidArgument(
                "span bin edges must be strictly increasing".into(),
            ));
        }
    }
    Ok(())
}

pub fn assign_bin(bins: &[SpanBin], span: usize) -> String {
    bins.iter()
        .find(|b| b.contains(span))
        .map(SpanBin::label)
        .unwrap_or_else(|| OVERFLOW_LABEL.to_string())
}

/// Groups per-node results by span length. Nodes outside every bin go to the
/// overflow bucket, which is reported like any other bin.
pub fn span_bins_report(report: &EvalReport, bins: &[SpanBin]) -> Result<SpanReport> {
    check_bins(bins)?;
    let mut groups: BTreeMap<(usize, Mode, WaySetting), Vec<f64>> = BTreeMap::new();
    let mut assignment = BTreeMap::new();
    let mut wordcloud = Vec::new();
    for n in &report.nodes {
        let idx = bins
            .iter()
            .position(|b| b.contains(n.span_length))
            .unwrap_or(bins.len());
        groups.entry((idx, n.mode, n.setting)).or_default().push(n.stats.mean);
        assignment.insert(n.node.clone(), assign_bin(bins, n.span_length));
        wordcloud.push(WordCloudRow {
            mode: n.mode,
            setting: n.setting,
            concept: concept_lemma(&n.node).to_string(),
            span_length: n.span_length,
            normalized_accuracy: n.stats.mean,
        });
    }
    let rows = groups
        .into_iter()
        .map(|((idx, mode, setting), v)| BinRow {
            bin: bins
                .get(idx)
                .map(SpanBin::label)
                .unwrap_or_else(|| OVERFLOW_LABEL.into()),
            mode,
            setting,
            stats: MeanStd::of(&v),
        })
        .collect();
    Ok(SpanReport {
        rows,
        assignment,
        wordcloud,
    })
}

pub fn write_span_table(path: &Path, report: &SpanReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin", "mode", "way", "nodes", "mean", "std"])?;
    for r in &report.rows {
        w.write_record([
            r.bin.clone(),
            r.mode.as_str().into(),
            r.setting.to_string(),
            r.stats.n.to_string(),
            format!("{:.6}", r.stats.mean),
            format!("{:.6}", r.stats.std),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `concept,span_length,normalized_accuracy` rows for one mode and way setting.
pub fn write_wordcloud(path: &Path, report: &SpanReport, mode: Mode, setting: WaySetting) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["concept", "span_length", "normalized_accuracy"])?;
    for r in report
        .wordcloud
        .iter()
        .filter(|r| r.mode == mode && r.setting == setting)
    {
        w.write_record([
            r.concept.clone(),
            r.span_length.to_string(),
            format!("{:.4}", r.normalized_accuracy),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalx::{aggregate, EvalRecord};

    fn rec(node: &str, span: usize, score: f64) -> EvalRecord {
        EvalRecord {
            node: node.into(),
            mode: Mode::Proto,
            setting: WaySetting::Fixed(2),
            way: 2,
            instance: 0,
            span_length: span,
            score,
        }
    }

    #[test]
    fn bins_and_overflow() {
        assert_eq!(assign_bin(&DEFAULT_SPAN_BINS, 119), "111-119");
        assert_eq!(assign_bin(&DEFAULT_SPAN_BINS, 16), OVERFLOW_LABEL);
        assert_eq!(assign_bin(&DEFAULT_SPAN_BINS, 5), "5-15");
    }

    #[test]
    fn report_and_wordcloud() {
        let r = aggregate(&[
            rec("artifact.n.01", 119, 1.0),
            rec("tool.n.01", 16, 0.5),
            rec("fruit.n.01", 7, 0.75),
        ])
        .unwrap();
        let s = span_bins_report(&r, &DEFAULT_SPAN_BINS).unwrap();
        assert_eq!(s.assignment.len(), 3);
        assert_eq!(s.assignment["tool.n.01"], OVERFLOW_LABEL);
        let art = s.wordcloud.iter().find(|w| w.concept == "artifact").unwrap();
        assert_eq!(art.tag(), "artifact.119");
        assert_eq!(art.normalized_accuracy, 100.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("wc.csv");
        write_wordcloud(&p, &s, Mode::Proto, WaySetting::Fixed(2)).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("artifact,119,100.0000"));
    }

    #[test]
    fn rejects_overlapping_bins() {
        let bad = [SpanBin { lo: 5, hi: 10 }, SpanBin { lo: 10, hi: 12 }];
        let r = aggregate(&[rec("a.n.01", 5, 1.0)]).unwrap();
        assert!(span_bins_report(&r, &bad).is_err());
    }
}
