use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::LabelMap;
use crate::preprocess::ManifestRow;

/// Class id -> sorted sample ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPool {
    classes: BTreeMap<String, Vec<String>>,
}

impl ClassPool {
    pub fn new(classes: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut out = BTreeMap::new();
        for (c, mut ids) in classes {
            if ids.is_empty() {
                return Err(Error::InvalidArgument(format!("class `{c}` has no samples")));
            }
            for id in &ids {
                if !seen.insert(id.clone()) {
                    return Err(Error::InvalidArgument(format!("sample `{id}` appears twice in pool")));
                }
            }
            ids.sort();
            out.insert(c, ids);
        }
        Ok(ClassPool { classes: out })
    }

    /// Groups manifest rows by word, keeping only words accepted by `keep`.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a ManifestRow>, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let mut classes: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in rows {
            if keep(&r.word) {
                classes.entry(r.word.clone()).or_default().push(r.sample_id.clone());
            }
        }
        ClassPool::new(classes)
    }

    /// Relabels every sample through `map`; words without a class are dropped.
    pub fn remap(&self, map: &LabelMap) -> ClassPool {
        let mut classes: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (word, ids) in &self.classes {
            if let Some(c) = map.get(word) {
                classes.entry(c.to_string()).or_default().extend(ids.iter().cloned());
            }
        }
        for ids in classes.values_mut() {
            ids.sort();
        }
        ClassPool { classes }
    }

    pub fn size(&self, class: &str) -> Option<usize> {
        self.classes.get(class).map(Vec::len)
    }

    pub fn samples(&self, class: &str) -> Option<&[String]> {
        self.classes.get(class).map(Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.classes.iter().map(|(c, s)| (c.as_str(), s.as_slice()))
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_samples(&self) -> usize {
        self.classes.values().map(Vec::len).sum()
    }

    pub fn contains(&self, class: &str) -> bool {
        self.classes.contains_key(class)
    }

    /// Sample id -> class id.
    pub fn labels(&self) -> BTreeMap<&str, &str> {
        self.classes
            .iter()
            .flat_map(|(c, ids)| ids.iter().map(move |id| (id.as_str(), c.as_str())))
            .collect()
    }
}
