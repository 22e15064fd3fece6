use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One stimulus presentation: which word, who saw it, and where its EEG lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample_id: String,
    pub word: String,
    pub subject: String,
    pub session: String,
    pub recording_uri: String,
    pub onset_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleManifest {
    pub rows: Vec<ManifestRow>,
}

impl SampleManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &rows {
            if !seen.insert(r.sample_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate sample_id `{}`", r.sample_id)));
            }
        }
        Ok(SampleManifest { rows })
    }

    pub fn words(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.word.as_str()).collect()
    }

    pub fn subjects(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.subject.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub const MANIFEST_HEADER: [&str; 6] = [
    "sample_id",
    "word",
    "subject",
    "session",
    "recording_uri",
    "onset_seconds",
];

pub fn read_manifest(path: &Path) -> Result<SampleManifest> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != MANIFEST_HEADER {
        return Err(Error::format(
            path,
            format!("manifest header must be `{}`", MANIFEST_HEADER.join(",")),
        ));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<ManifestRow>, _>>()?;
    SampleManifest::new(rows)
}

pub fn write_manifest(path: &Path, m: &SampleManifest) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in &m.rows {
        w.serialize(r)?;
    }
    if m.rows.is_empty() {
        w.write_record(MANIFEST_HEADER)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str) -> ManifestRow {
        ManifestRow {
            sample_id: id.into(),
            word: "DOG".into(),
            subject: "s1".into(),
            session: "0".into(),
            recording_uri: "rec.heeg".into(),
            onset_seconds: 0.5,
        }
    }

    #[test]
    fn roundtrip_and_uniqueness() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = SampleManifest::new(vec![row("a"), row("b")]).unwrap();
        write_manifest(&p, &m).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("sample_id,word,subject,session,recording_uri,onset_seconds\n"));
        assert_eq!(read_manifest(&p).unwrap(), m);
        assert!(SampleManifest::new(vec![row("a"), row("a")]).is_err());
    }
}
