//! Artifact writers. Every file carries the config hash; floats use the
//! shortest representation that round-trips.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;

use crate::config::{Format, RunConfig};

/// Shortest round-trip form of `x`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub struct Artifacts {
    dir: PathBuf,
    hash: String,
    csv: bool,
    json: bool,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hash: config.hash(),
            csv: config.wants(Format::Csv),
            json: config.wants(Format::Json),
            written: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// `# config_hash: …`, then the header row, then `rows`.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        if !self.csv {
            return Ok(());
        }
        let mut text = format!("# config_hash: {}\n{}\n", self.hash, header.join(","));
        for r in rows {
            debug_assert_eq!(r.len(), header.len());
            text.push_str(&r.join(","));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    /// Writes `value` with a `config_hash` field added. Keys come out sorted.
    pub fn json(&mut self, name: &str, mut value: Value) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        if let Value::Object(map) = &mut value {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(bytes).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shortest_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 1e-7] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(2.0), "2");
    }

    #[test]
    fn csv_and_json_carry_hash() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::default();
        let mut a = Artifacts::new(dir.path(), &cfg).unwrap();
        a.csv("t.csv", &["x", "y"], &[vec![num(1.5), num(2.0)]]).unwrap();
        a.json("t.json", serde_json::json!({"b": 1, "a": 2})).unwrap();
        let csv = fs::read_to_string(dir.path().join("t.csv")).unwrap();
        assert_eq!(csv, format!("# config_hash: {}\nx,y\n1.5,2\n", cfg.hash()));
        let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t.json")).unwrap()).unwrap();
        assert_eq!(json["config_hash"], cfg.hash());
        assert_eq!(a.written().len(), 2);
    }

    #[test]
    fn formats_filter_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.output.formats = vec![Format::Json];
        let mut a = Artifacts::new(dir.path(), &cfg).unwrap();
        a.csv("t.csv", &["x"], &[]).unwrap();
        assert!(!dir.path().join("t.csv").exists());
    }
}
