use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hieeg::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to rerun a command: its arguments, the resolved
/// configuration and the digests of what it wrote. No timestamps, so two
/// identical runs produce identical metadata.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub jobs: usize,
    pub config_hash: String,
    pub versions: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub config: RunConfig,
}

/// Tracks the files a command writes.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Path for `name` inside the output directory, recorded as an output.
    pub fn file(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.written.push(p.clone());
        Ok(p)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let p = self.file(name)?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.write_text(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// Writes `<command>.run.json` with digests of every recorded output.
    pub fn finish(mut self, command: &str, args: Vec<String>, cfg: &RunConfig, jobs: usize) -> Result<PathBuf> {
        self.written.sort();
        self.written.dedup();
        let mut outputs = BTreeMap::new();
        for p in &self.written {
            // sidecars written by library writers are picked up too
            let mut group = vec![p.clone()];
            for suffix in [".channels", ".keys.csv"] {
                let mut s = p.clone().into_os_string();
                s.push(suffix);
                let side = PathBuf::from(s);
                if side.exists() {
                    group.push(side);
                }
            }
            for f in group {
                let bytes = std::fs::read(&f).map_err(|e| Error::io(&f, e))?;
                let rel = f.strip_prefix(&self.dir).unwrap_or(&f).to_string_lossy().into_owned();
                outputs.insert(rel, sha256_hex(&bytes));
            }
        }
        let canonical = cfg.canonical();
        let meta = RunMetadata {
            command: command.to_string(),
            args,
            seed: cfg.run.seed,
            jobs,
            config_hash: sha256_hex(canonical.as_bytes()),
            versions: BTreeMap::from([
                ("hieeg".to_string(), hieeg::VERSION.to_string()),
                ("hieeg-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
            ]),
            outputs,
            config: cfg.clone(),
        };
        let p = self.dir.join(format!("{command}.run.json"));
        std::fs::write(&p, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}
