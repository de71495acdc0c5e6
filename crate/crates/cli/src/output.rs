use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Writes CSV tables and JSON summaries into the output directory.
///
/// Every CSV has a header row and ends with a `# config_hash=… seed=…` line.
/// Floats use Rust's shortest round-trip formatting.
pub struct Output {
    dir: PathBuf,
    hash: String,
    seed: u64,
}

impl Output {
    pub fn new(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            seed: cfg.seed,
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut body = header.join(",");
        body.push('\n');
        for row in rows {
            body.push_str(&row.join(","));
            body.push('\n');
        }
        body.push_str(&format!("# config_hash={} seed={}\n", self.hash, self.seed));
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Numeric(e.to_string()))?;
        let path = self.dir.join(name);
        fs::write(&path, text + "\n")?;
        println!("wrote {}", path.display());
        Ok(path)
    }
}
