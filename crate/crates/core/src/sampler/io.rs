use std::fs;
use std::path::Path;

use super::Episode;
use crate::error::{Error, Result};

/// One JSON episode per line.
pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    let mut s = String::new();
    for e in episodes {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}
