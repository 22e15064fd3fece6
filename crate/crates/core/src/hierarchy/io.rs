//! Hypernym-path text files, DAG JSON and label-map CSV.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConceptDag, HypernymRecord, LabelMap, NodeKind, SynsetId};
use crate::error::{Error, Result};

/// Parses `WORD<TAB>SYNSET<TAB>root/.../parent` lines. Blank lines and `#` comments are skipped.
pub fn parse_hypernym_paths(text: &str, origin: &Path) -> Result<Vec<HypernymRecord>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                origin,
                format!(
                    "line {}: expected 3 tab-separated fields, got {}",
                    lineno + 1,
                    fields.len()
                ),
            ));
        }
        let (word, synset, path) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        if word.is_empty() || synset.is_empty() || path.is_empty() {
            return Err(Error::format(origin, format!("line {}: empty field", lineno + 1)));
        }
        let path: Vec<SynsetId> = path.split('/').map(|s| SynsetId::from(s.trim())).collect();
        if path.iter().any(|p| p.as_str().is_empty()) {
            return Err(Error::format(
                origin,
                format!("line {}: empty path component", lineno + 1),
            ));
        }
        let rec = HypernymRecord {
            word: word.to_string(),
            synset: SynsetId::from(synset),
            path,
        };
        if seen.insert(rec.clone()) {
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn read_hypernym_paths(path: &Path) -> Result<Vec<HypernymRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hypernym_paths(&text, path)
}

pub fn format_hypernym_paths(records: &[HypernymRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let path: Vec<&str> = r.path.iter().map(SynsetId::as_str).collect();
        s.push_str(&format!("{}\t{}\t{}\n", r.word, r.synset, path.join("/")));
    }
    s
}

pub fn write_hypernym_paths(path: &Path, records: &[HypernymRecord]) -> Result<()> {
    fs::write(path, format_hypernym_paths(records)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRecord {
    id: String,
    kind: NodeKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DagFile {
    nodes: Vec<NodeRecord>,
    edges: Vec<(String, String)>,
    root: String,
}

pub fn dag_to_json(dag: &ConceptDag) -> Result<String> {
    let file = DagFile {
        nodes: dag
            .nodes()
            .map(|(id, kind)| NodeRecord {
                id: id.to_string(),
                kind,
            })
            .collect(),
        edges: dag
            .edges()
            .into_iter()
            .map(|(p, c)| (p.to_string(), c.to_string()))
            .collect(),
        root: dag.root().to_string(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn dag_from_json(text: &str) -> Result<ConceptDag> {
    let file: DagFile = serde_json::from_str(text)?;
    ConceptDag::from_parts(&file.root, file.nodes.into_iter().map(|n| (n.id, n.kind)), file.edges)
}

pub fn write_dag(path: &Path, dag: &ConceptDag) -> Result<()> {
    fs::write(path, dag_to_json(dag)? + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_dag(path: &Path) -> Result<ConceptDag> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    dag_from_json(&text)
}

pub fn write_label_map(path: &Path, map: &LabelMap) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["word", "class_id"])?;
    for (word, class) in &map.map {
        w.write_record([word, class])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_label_map(path: &Path, level: usize) -> Result<LabelMap> {
    let mut r = csv::Reader::from_path(path)?;
    let mut map = std::collections::BTreeMap::new();
    for row in r.records() {
        let row = row?;
        if row.len() != 2 {
            return Err(Error::format(path, "expected `word,class_id` rows"));
        }
        map.insert(row[0].to_string(), row[1].to_string());
    }
    Ok(LabelMap { level, map })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hierarchy::build_dag;

    #[test]
    fn parses_and_dedups() {
        let text = "# comment\nFARM\tfarm.n.01\tentity.n.01/location.n.01\n\
                    FARM\tfarm.n.01\tentity.n.01/location.n.01\n\
                    RANCH\tfarm.n.01\tentity.n.01/location.n.01\n";
        let recs = parse_hypernym_paths(text, Path::new("x")).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].path.len(), 2);
        assert_eq!(
            parse_hypernym_paths(&format_hypernym_paths(&recs), Path::new("x")).unwrap(),
            recs
        );
        assert!(parse_hypernym_paths("A\tb\n", Path::new("x")).is_err());
        assert!(parse_hypernym_paths("A\tb\te//f\n", Path::new("x")).is_err());
    }

    #[test]
    fn dag_json_roundtrip() {
        let recs = vec![
            HypernymRecord::new("FARM", "farm.n.01", &["entity.n.01"]),
            HypernymRecord::new("DOG", "dog.n.01", &["entity.n.01", "animal.n.01"]),
        ];
        let words = recs.iter().map(|r| r.word.clone()).collect();
        let (dag, _) = build_dag(&recs, &words).unwrap();
        let json = dag_to_json(&dag).unwrap();
        assert!(json.contains("\"root\": \"entity.n.01\""));
        assert_eq!(dag_from_json(&json).unwrap(), dag);
    }
}
