//! Provenance sidecars: enough to reproduce a run exactly — resolved
//! settings, the seed, and content digests of every input file. No
//! timestamps, so reruns write byte-identical sidecars.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct Provenance {
    command: String,
    lines: Vec<(String, String)>,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            lines: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    /// Records a file's SHA-256 content digest.
    pub fn digest(&mut self, key: &str, path: &Path) -> Result<()> {
        let bytes = std::fs::read(path)
            .with_context(|| format!("digesting input {}", path.display()))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        });
        self.set(key, format!("sha256:{hex}"));
        Ok(())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let mut out = String::new();
        let _ = writeln!(out, "# specrich provenance");
        let _ = writeln!(out, "command = {}", self.command);
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        let path = dir.join("provenance.txt");
        std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}
