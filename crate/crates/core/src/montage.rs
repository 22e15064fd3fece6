//! Electrode-layout alignment.
//!
//! Each reference electrode is matched to its nearest electrode in every target
//! layout. When several reference electrodes claim the same target, the closest
//! one keeps it and the others fall back to their next-nearest candidate; this
//! is repeated for a fixed number of rounds. Only reference electrodes matched
//! in every target layout are kept.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 8;
pub const CONFLICT_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Electrode {
    pub label: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeLayout {
    pub name: String,
    pub electrodes: Vec<Electrode>,
}

impl ElectrodeLayout {
    pub fn new(name: impl Into<String>, electrodes: Vec<Electrode>) -> Result<Self> {
        let layout = ElectrodeLayout {
            name: name.into(),
            electrodes,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.electrodes.is_empty() {
            return Err(Error::Layout(format!("layout `{}` has no electrodes", self.name)));
        }
        let mut seen = BTreeSet::new();
        for e in &self.electrodes {
            if !seen.insert(e.label.as_str()) {
                return Err(Error::Layout(format!(
                    "duplicate label `{}` in layout `{}`",
                    e.label, self.name
                )));
            }
            if e.position.iter().any(|v| !v.is_finite()) {
                return Err(Error::Layout(format!("non-finite position for `{}`", e.label)));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.electrodes.iter().map(|e| e.label.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.electrodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.electrodes.is_empty()
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Candidate targets for one reference electrode, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    pub reference: String,
    pub candidates: Vec<(String, f64)>,
}

pub fn nearest_neighbors(reference: &ElectrodeLayout, target: &ElectrodeLayout, k: usize) -> Result<Vec<NeighborList>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if target.len() < k {
        return Err(Error::Layout(format!(
            "target layout `{}` has {} electrodes, fewer than k = {k}",
            target.name,
            target.len()
        )));
    }
    Ok(reference
        .electrodes
        .iter()
        .map(|r| {
            let mut cands: Vec<(String, f64)> = target
                .electrodes
                .iter()
                .map(|t| (t.label.clone(), distance(&r.position, &t.position)))
                .collect();
            cands.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
            cands.truncate(k);
            NeighborList {
                reference: r.label.clone(),
                candidates: cands,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPair {
    pub reference: String,
    /// `None` when the electrode lost a residual conflict.
    pub target: Option<String>,
    pub distance: f64,
}

/// Deduplicates first choices over at most [`CONFLICT_ROUNDS`] rounds.
///
/// In each round every contested target is kept by the closest claimant (ties
/// by reference label); losers advance to their next candidate unless only one
/// candidate remains, in which case they stay put. Duplicates left after the
/// last round keep a single owner chosen by the same rule.
pub fn resolve_conflicts(lists: &[NeighborList]) -> Vec<ResolvedPair> {
    let mut cursor = vec![0usize; lists.len()];
    let current = |i: usize, cursor: &[usize]| &lists[i].candidates[cursor[i]];
    let beats = |a: usize, b: usize, cursor: &[usize]| {
        let (da, db) = (current(a, cursor).1, current(b, cursor).1);
        da.total_cmp(&db)
            .then_with(|| lists[a].reference.cmp(&lists[b].reference))
            .is_lt()
    };
    let claims = |cursor: &[usize]| {
        let mut by_target: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in lists.iter().enumerate() {
            if !l.candidates.is_empty() {
                by_target.entry(current(i, cursor).0.as_str()).or_default().push(i);
            }
        }
        by_target
    };

    for _ in 0..CONFLICT_ROUNDS {
        let snapshot = cursor.clone();
        let mut any = false;
        for (_, group) in claims(&snapshot) {
            if group.len() < 2 {
                continue;
            }
            let winner = group
                .iter()
                .copied()
                .reduce(|w, i| if beats(i, w, &snapshot) { i } else { w })
                .unwrap_or(group[0]);
            for &i in &group {
                if i != winner && lists[i].candidates.len() - snapshot[i] > 1 {
                    cursor[i] += 1;
                    any = true;
                }
            }
        }
        if !any {
            break;
        }
    }

    let mut owner: BTreeMap<&str, usize> = BTreeMap::new();
    for (target, group) in claims(&cursor) {
        let winner = group
            .iter()
            .copied()
            .reduce(|w, i| if beats(i, w, &cursor) { i } else { w })
            .unwrap_or(group[0]);
        owner.insert(target, winner);
    }
    (0..lists.len())
        .map(|i| match lists[i].candidates.get(cursor[i]) {
            Some((t, d)) if owner.get(t.as_str()) == Some(&i) => ResolvedPair {
                reference: lists[i].reference.clone(),
                target: Some(t.clone()),
                distance: *d,
            },
            other => ResolvedPair {
                reference: lists[i].reference.clone(),
                target: None,
                distance: other.map_or(f64::NAN, |c| c.1),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentEntry {
    pub reference: String,
    /// One label per target layout, in `AlignmentMap::targets` order.
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMap {
    pub reference_layout: String,
    pub target_layouts: Vec<String>,
    pub entries: Vec<AlignmentEntry>,
}

impl AlignmentMap {
    /// Channel labels to extract from a recording made with `layout`, in entry order.
    pub fn labels_for(&self, layout: &str) -> Option<Vec<&str>> {
        if layout == self.reference_layout {
            return Some(self.entries.iter().map(|e| e.reference.as_str()).collect());
        }
        let col = self.target_layouts.iter().position(|t| t == layout)?;
        Some(self.entries.iter().map(|e| e.targets[col].as_str()).collect())
    }

    pub fn reference_labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.reference.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_injective(&self) -> bool {
        (0..self.target_layouts.len()).all(|col| {
            let mut seen = BTreeSet::new();
            self.entries.iter().all(|e| seen.insert(e.targets[col].as_str()))
        })
    }
}

pub fn align_layouts(reference: &ElectrodeLayout, targets: &[ElectrodeLayout], k: usize) -> Result<AlignmentMap> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("at least one target layout is required".into()));
    }
    reference.validate()?;
    let mut per_target: Vec<BTreeMap<String, String>> = Vec::with_capacity(targets.len());
    for t in targets {
        t.validate()?;
        let lists = nearest_neighbors(reference, t, k)?;
        per_target.push(
            resolve_conflicts(&lists)
                .into_iter()
                .filter_map(|p| p.target.map(|t| (p.reference, t)))
                .collect(),
        );
    }
    let entries: Vec<AlignmentEntry> = reference
        .electrodes
        .iter()
        .filter_map(|e| {
            let targets: Option<Vec<String>> = per_target.iter().map(|m| m.get(&e.label).cloned()).collect();
            targets.map(|targets| AlignmentEntry {
                reference: e.label.clone(),
                targets,
            })
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::Layout(
            "no reference electrode is matched in every target".into(),
        ));
    }
    Ok(AlignmentMap {
        reference_layout: reference.name.clone(),
        target_layouts: targets.iter().map(|t| t.name.clone()).collect(),
        entries,
    })
}

/// Reads `# layout: <name>` followed by `label,x,y,z` rows (header row optional).
pub fn parse_layout(text: &str, origin: &Path) -> Result<ElectrodeLayout> {
    let mut name = None;
    let mut electrodes = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(n) = rest.trim().strip_prefix("layout:") {
                name = Some(n.trim().to_string());
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::format(
                origin,
                format!("line {}: expected label,x,y,z", lineno + 1),
            ));
        }
        if fields == ["label", "x", "y", "z"] {
            continue;
        }
        let mut pos = [0.0; 3];
        for (p, f) in pos.iter_mut().zip(&fields[1..]) {
            *p = f
                .parse()
                .map_err(|_| Error::format(origin, format!("line {}: bad coordinate `{f}`", lineno + 1)))?;
        }
        electrodes.push(Electrode {
            label: fields[0].to_string(),
            position: pos,
        });
    }
    let name = name.ok_or_else(|| Error::format(origin, "missing `# layout: <name>` line"))?;
    ElectrodeLayout::new(name, electrodes)
}

pub fn read_layout(path: &Path) -> Result<ElectrodeLayout> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layout(&text, path)
}

pub fn format_layout(layout: &ElectrodeLayout) -> String {
    let mut s = format!("# layout: {}\nlabel,x,y,z\n", layout.name);
    for e in &layout.electrodes {
        s.push_str(&format!(
            "{},{},{},{}\n",
            e.label, e.position[0], e.position[1], e.position[2]
        ));
    }
    s
}

pub fn write_alignment(path: &Path, map: &AlignmentMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![map.reference_layout.as_str()];
    header.extend(map.target_layouts.iter().map(String::as_str));
    w.write_record(&header)?;
    for e in &map.entries {
        let mut row = vec![e.reference.as_str()];
        row.extend(e.targets.iter().map(String::as_str));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_alignment(path: &Path) -> Result<AlignmentMap> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::format(
            path,
            "alignment needs a reference and at least one target column",
        ));
    }
    let mut entries = Vec::new();
    for row in r.records() {
        let row = row?;
        entries.push(AlignmentEntry {
            reference: row[0].to_string(),
            targets: row.iter().skip(1).map(String::from).collect(),
        });
    }
    Ok(AlignmentMap {
        reference_layout: header[0].to_string(),
        target_layouts: header.iter().skip(1).map(String::from).collect(),
        entries,
    })
}
