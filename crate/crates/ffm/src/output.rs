//! The `--out` directory: every artifact a command writes is registered here,
//! and [`OutDir::finish`] records them with their SHA-256 in `manifest.json`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        fs::create_dir_all(root).map_err(CliError::io(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path for `name`, registered as an artifact.
    pub fn file(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> CliResult<()> {
        let p = self.file(name);
        fs::write(&p, text).map_err(CliError::io(p))
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> CliResult<()> {
        let text = serde_json::to_string_pretty(value).expect("json values serialize");
        self.write_text(name, &(text + "\n"))
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Hashes every registered file and writes the manifest.
    pub fn finish(self) -> CliResult<Value> {
        let mut entries = Vec::new();
        for name in &self.files {
            let p = self.root.join(name);
            let bytes = fs::read(&p).map_err(CliError::io(&p))?;
            entries.push(json!({
                "file": name,
                "bytes": bytes.len(),
                "sha256": hex::encode(Sha256::digest(&bytes)),
            }));
        }
        let manifest = json!({ "artifacts": entries });
        let p = self.root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("json values serialize") + "\n";
        fs::write(&p, text).map_err(CliError::io(p))?;
        Ok(manifest)
    }
}

/// Line-delimited JSON records, one per training step.
pub struct JsonLines {
    out: BufWriter<fs::File>,
    path: PathBuf,
}

impl JsonLines {
    pub fn create(path: PathBuf) -> CliResult<Self> {
        let f = fs::File::create(&path).map_err(CliError::io(&path))?;
        Ok(Self {
            out: BufWriter::new(f),
            path,
        })
    }

    pub fn record(&mut self, value: &Value) -> CliResult<()> {
        writeln!(self.out, "{value}").map_err(CliError::io(&self.path))
    }

    pub fn close(mut self) -> CliResult<()> {
        self.out.flush().map_err(CliError::io(&self.path))
    }
}

/// Verifies every manifest entry against the files on disk.
pub fn check_manifest(root: &Path) -> CliResult<Vec<String>> {
    let p = root.join(MANIFEST);
    let text = fs::read_to_string(&p).map_err(CliError::io(&p))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("manifest: {e}")))?;
    let mut bad = Vec::new();
    for e in v["artifacts"].as_array().into_iter().flatten() {
        let name = e["file"].as_str().unwrap_or_default();
        let ok = fs::read(root.join(name))
            .map(|b| hex::encode(Sha256::digest(&b)) == e["sha256"].as_str().unwrap_or_default())
            .unwrap_or(false);
        if !ok {
            bad.push(name.to_string());
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_and_verifies_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(&dir.path().join("run")).unwrap();
        out.write_text("a.txt", "abc").unwrap();
        out.write_json("b.json", &json!({"x": 1})).unwrap();
        out.write_text("a.txt", "abc").unwrap();
        let m = out.finish().unwrap();
        let arts = m["artifacts"].as_array().unwrap();
        assert_eq!(arts.len(), 2);
        assert_eq!(
            arts[0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let root = dir.path().join("run");
        assert!(check_manifest(&root).unwrap().is_empty());
        fs::write(root.join("a.txt"), "abd").unwrap();
        assert_eq!(check_manifest(&root).unwrap(), vec!["a.txt".to_string()]);
    }

    #[test]
    fn json_lines_are_one_record_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("log.jsonl");
        let mut log = JsonLines::create(p.clone()).unwrap();
        log.record(&json!({"step": 1})).unwrap();
        log.record(&json!({"step": 2})).unwrap();
        log.close().unwrap();
        let text = fs::read_to_string(p).unwrap();
        let lines: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1]["step"], 2);
    }
}
