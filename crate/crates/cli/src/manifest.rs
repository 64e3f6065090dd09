//! Run manifest written as a comment block at the top of every output file.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    /// (path, sha256 hex)
    pub inputs: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub created_unix: u64,
    pub defaults: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            inputs: Vec::new(),
            seed: None,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            defaults: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push((path.display().to_string(), sha256_hex(&bytes)));
        Ok(())
    }

    pub fn setting(&mut self, key: &str, value: impl ToString) {
        self.defaults.push((key.to_string(), value.to_string()));
    }

    /// Comment lines, each starting with `# `.
    pub fn render(&self) -> String {
        let mut s = format!("# percop {}\n# command: {}\n", self.tool_version, self.command);
        s += &format!("# created_unix: {}\n", self.created_unix);
        if let Some(seed) = self.seed {
            s += &format!("# seed: {seed}\n");
        }
        for (p, d) in &self.inputs {
            s += &format!("# input: {p} sha256={d}\n");
        }
        for (k, v) in &self.defaults {
            s += &format!("# setting: {k}={v}\n");
        }
        s
    }
}
