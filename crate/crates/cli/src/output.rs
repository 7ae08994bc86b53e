use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hash of the effective configuration. The output directory is left out,
/// so the same run written to two places carries the same hash.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut canonical = cfg.clone();
    canonical.output_dir = PathBuf::new();
    let text = canonical.to_toml()?;
    Ok(hex::encode(Sha256::digest(text.as_bytes())))
}

/// Writes result files into one directory, each stamped with the software
/// version and the configuration hash.
pub struct Emitter {
    dir: PathBuf,
    hash: String,
    command: &'static str,
    written: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    dmem: &'a str,
    config_sha256: &'a str,
    command: &'a str,
    kind: &'a str,
    data: &'a T,
}

impl Emitter {
    pub fn new(dir: PathBuf, cfg: &RunConfig, command: &'static str) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Emitter { dir, hash: config_hash(cfg)?, command, written: Vec::new() })
    }

    pub fn header_lines(&self) -> Vec<String> {
        vec![format!("dmem {VERSION}"), format!("config_sha256={}", self.hash), format!("command={}", self.command)]
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// A CSV with `# ` header lines, then `extra` lines, then the table.
    pub fn csv<F>(&mut self, name: &str, extra: &[String], header: &[&str], fill: F) -> Result<()>
    where
        F: FnOnce(&mut csv::Writer<&mut BufWriter<File>>) -> Result<()>,
    {
        let path = self.path(name);
        let mut f = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
        for line in self.header_lines().iter().chain(extra) {
            writeln!(f, "# {line}")?;
        }
        {
            let mut w = csv::Writer::from_writer(&mut f);
            w.write_record(header)?;
            fill(&mut w)?;
            w.flush()?;
        }
        f.flush()?;
        self.record(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, kind: &str, data: &T) -> Result<()> {
        let path = self.path(name);
        let env = Envelope { dmem: VERSION, config_sha256: &self.hash, command: self.command, kind, data };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        self.record(path);
        Ok(())
    }
}

/// Shortest round-trip text of a float; empty for a missing value.
pub fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn relative_to(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = RunConfig::from_toml("seed = 1\noutput_dir = \"a\"").unwrap();
        let b = RunConfig::from_toml("seed = 1\noutput_dir = \"b\"").unwrap();
        let c = RunConfig::from_toml("seed = 2\noutput_dir = \"a\"").unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn csv_carries_header_block() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::from_toml("").unwrap();
        let mut e = Emitter::new(dir.path().to_path_buf(), &cfg, "fit").unwrap();
        e.csv("t.csv", &["note".into()], &["a", "b"], |w| {
            w.write_record(["1", &num(Some(0.1))])?;
            Ok(())
        })
        .unwrap();
        let text = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], format!("# dmem {VERSION}"));
        assert!(lines[1].starts_with("# config_sha256="));
        assert_eq!(lines[3], "# note");
        assert_eq!(&lines[4..], ["a,b", "1,0.1"]);
    }
}
