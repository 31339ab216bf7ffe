use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_MAGIC: &str = "#copytag-manifest v1";

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").unwrap();
    }
    hex
}

/// Resolved configuration and input digests of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunManifest {
    pub verb: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<(PathBuf, String)>,
}

impl RunManifest {
    pub fn new(verb: &str) -> Self {
        Self { verb: verb.to_string(), ..Default::default() }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.config.push((key.to_string(), value.to_string()));
        self
    }

    /// Records an input file and its digest; returns its contents.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let text = read_text(path)?;
        self.inputs.push((path.to_path_buf(), sha256_hex(text.as_bytes())));
        Ok(text)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{MANIFEST_MAGIC}\nversion={}\nverb={}\n", env!("CARGO_PKG_VERSION"), self.verb);
        for (k, v) in &self.config {
            writeln!(out, "{k}={v}").unwrap();
        }
        for (p, digest) in &self.inputs {
            writeln!(out, "input={} sha256={digest}", p.display()).unwrap();
        }
        out
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

fn temp_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(format!(".tmp-{}", std::process::id()));
    PathBuf::from(s)
}

/// Writes every file to a temporary sibling, then renames them into place.
/// Nothing is left behind if any write fails.
pub fn write_atomically(files: &[(PathBuf, String)]) -> Result<()> {
    let mut temps = Vec::with_capacity(files.len());
    for (path, contents) in files {
        let tmp = temp_path(path);
        if let Err(e) = fs::write(&tmp, contents) {
            let _ = fs::remove_file(&tmp);
            temps.iter().for_each(|t| drop(fs::remove_file(t)));
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
        temps.push(tmp);
    }
    for (i, ((path, _), tmp)) in files.iter().zip(&temps).enumerate() {
        if let Err(e) = fs::rename(tmp, path) {
            temps[i..].iter().for_each(|t| drop(fs::remove_file(t)));
            files[..i].iter().for_each(|(p, _)| drop(fs::remove_file(p)));
            return Err(e).with_context(|| format!("writing {}", path.display()));
        }
    }
    Ok(())
}

/// Writes a primary output and its manifest.
pub fn write_with_manifest(out: &Path, contents: String, manifest: &RunManifest) -> Result<()> {
    write_atomically(&[(out.to_path_buf(), contents), (manifest_path(out), manifest.to_text())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("a.txt");
        let bad = dir.path().join("missing").join("b.txt");
        assert!(write_atomically(&[(good.clone(), "x".into()), (bad, "y".into())]).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn manifest_lists_config_and_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "").unwrap();
        let mut m = RunManifest::new("eval");
        m.set("spans", true);
        m.read_input(&input).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("#copytag-manifest v1\nversion="));
        assert!(text.contains("verb=eval\nspans=true\n"));
        assert!(text.contains("sha256=e3b0c442"));
    }
}
