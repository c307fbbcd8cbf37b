//! Stage manifests and atomic artifact writes.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Output {
    pub sha256: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    /// Upstream files and their digests.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, Output>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_config(config: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in config {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

pub fn hash_file(path: &Path) -> anyhow::Result<String> {
    let mut f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

fn temp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    path.with_file_name(name)
}

/// Writes through `fill` into a temporary sibling, then renames into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> anyhow::Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> anyhow::Result<()>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let tmp = temp_path(path);
    let file = File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
    let mut w = BufWriter::new(file);
    let res = fill(&mut w).and_then(|_| {
        w.flush()?;
        w.get_ref().sync_all()?;
        Ok(())
    });
    if let Err(e) = res {
        let _ = fs::remove_file(&tmp);
        return Err(e);
    }
    drop(w);
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(f)).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn manifest_path(work: &Path, stage: &str) -> PathBuf {
    work.join("manifests").join(format!("{stage}.json"))
}

pub fn load(work: &Path, stage: &str) -> anyhow::Result<Option<Manifest>> {
    let p = manifest_path(work, stage);
    if !p.exists() {
        return Ok(None);
    }
    read_json(&p).map(Some)
}

/// Lines describing how `recorded` differs from `current`.
pub fn config_diff(recorded: &BTreeMap<String, String>, current: &BTreeMap<String, String>) -> Vec<String> {
    let mut keys: Vec<&String> = recorded.keys().chain(current.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter_map(|k| {
            let (a, b) = (recorded.get(k), current.get(k));
            (a != b).then(|| {
                let show = |v: Option<&String>| v.map_or("<absent>".to_string(), |s| format!("{s:?}"));
                format!("  {k}: manifest {} vs config {}", show(a), show(b))
            })
        })
        .collect()
}

impl Manifest {
    /// Outputs whose file is missing or no longer matches its digest.
    pub fn stale_outputs(&self, work: &Path) -> anyhow::Result<Vec<String>> {
        let mut stale = Vec::new();
        for (name, out) in &self.outputs {
            let p = work.join(name);
            if !p.exists() || hash_file(&p)? != out.sha256 {
                stale.push(name.clone());
            }
        }
        Ok(stale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_depends_on_every_entry() {
        let mut a = BTreeMap::new();
        a.insert("x".to_string(), "1".to_string());
        let h1 = hash_config(&a);
        a.insert("y".to_string(), "".to_string());
        assert_ne!(h1, hash_config(&a));
        let mut b = a.clone();
        b.insert("x".to_string(), "2".to_string());
        assert_eq!(config_diff(&a, &b), vec!["  x: manifest \"1\" vs config \"2\"".to_string()]);
    }

    #[test]
    fn atomic_write_leaves_no_partial_file_on_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, |w| Ok(w.write_all(b"ok")?)).unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"ok");
        let e = write_atomic(&p, |w| {
            w.write_all(b"half")?;
            anyhow::bail!("boom")
        });
        assert!(e.is_err());
        assert_eq!(fs::read(&p).unwrap(), b"ok");
        assert!(!temp_path(&p).exists());
    }
}
