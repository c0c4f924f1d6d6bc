use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Ordered key/value results of one run.
#[derive(Debug, Default)]
pub struct Summary {
    entries: Vec<(String, Value)>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        let mut s = Summary::default();
        s.put("command", command);
        s.put("version", VERSION);
        s
    }

    pub fn put(&mut self, key: &str, value: impl Into<Value>) {
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    /// Non-finite numbers become strings since JSON has no spelling for them.
    pub fn num(&mut self, key: &str, x: f64) {
        if x.is_finite() {
            self.put(key, x);
        } else {
            self.put(key, format!("{x}"));
        }
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            match v {
                Value::String(x) => s.push_str(&format!("{k}={x}\n")),
                other => s.push_str(&format!("{k}={other}\n")),
            }
        }
        s
    }

    pub fn json(&self) -> String {
        let map: serde_json::Map<String, Value> = self.entries.iter().cloned().collect();
        let mut s = serde_json::to_string_pretty(&Value::Object(map)).expect("plain values");
        s.push('\n');
        s
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
    }

    pub fn manifest(&self, command: &str, cfg: &RunConfig) -> Result<()> {
        let body = toml::to_string(cfg).context("serializing manifest")?;
        self.write(
            "manifest.toml",
            format!("# cqnls {VERSION}\n# command: {command}\n{body}"),
        )
    }

    pub fn summary(&self, s: &Summary) -> Result<()> {
        self.write("summary.txt", s.text())?;
        self.write("summary.json", s.json())
    }
}
