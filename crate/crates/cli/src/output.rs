use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::args::Command;

/// A user-facing validation failure (exit code 1).
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

pub fn invalid(e: impl fmt::Display) -> anyhow::Error {
    anyhow::Error::new(Invalid(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub out: PathBuf,
    pub command: Command,
}

impl RunConfig {
    pub fn new(seed: u64, out: PathBuf, command: Command) -> Self {
        RunConfig {
            tool: "netlab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            out,
            command,
        }
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }

    pub fn json_string(&self) -> String {
        serde_json::to_string(self).expect("run config serializes")
    }
}

/// Files a command produces, kept in memory until the command succeeds.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(PathBuf, Vec<u8>)>,
    pub report: String,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_json(&mut self, name: impl Into<PathBuf>, value: &serde_json::Value) {
        let mut s = serde_json::to_string_pretty(value).expect("json serializes");
        s.push('\n');
        self.add(name, s);
    }

    pub fn say(&mut self, line: impl AsRef<str>) {
        self.report.push_str(line.as_ref());
        self.report.push('\n');
    }

    /// Writes every file through a temporary sibling and an atomic rename.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            let parent = path.parent().unwrap_or(dir);
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            let mut tmp = tempfile::NamedTempFile::new_in(parent)
                .with_context(|| format!("creating a temporary file in {}", parent.display()))?;
            tmp.write_all(bytes)?;
            tmp.flush()?;
            tmp.persist(&path)
                .with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_nested_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        out.add("a.csv", "x\n");
        out.add_json("sub/b.json", &serde_json::json!({"k": 1}));
        out.write(dir.path()).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x\n");
        assert_eq!(
            fs::read_to_string(dir.path().join("sub/b.json")).unwrap(),
            "{\n  \"k\": 1\n}\n"
        );
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn invalid_is_detectable() {
        let e = invalid("bad");
        assert!(e.downcast_ref::<Invalid>().is_some());
        assert_eq!(e.to_string(), "bad");
    }
}
