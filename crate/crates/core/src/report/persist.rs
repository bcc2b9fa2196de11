//! Atomic file output, JSONL with an embedded provenance line, fingerprints.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Provenance embedded in every output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub config_fingerprint: String,
    pub version: String,
}

impl Meta {
    pub fn new(config_fingerprint: impl Into<String>) -> Self {
        Meta {
            config_fingerprint: config_fingerprint.into(),
            version: crate::VERSION.to_string(),
        }
    }

    /// `# config_fingerprint=...,version=...` header for CSV/TSV outputs.
    pub fn comment_line(&self) -> String {
        format!(
            "# config_fingerprint={},version={}\n",
            self.config_fingerprint, self.version
        )
    }
}

/// SHA-256 of the canonical JSON rendering of `value`.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    // serde_json::Value objects are BTreeMap-backed, so keys come out sorted.
    let canonical = serde_json::to_value(value).expect("config serializes");
    hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write through a temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[derive(Serialize)]
struct MetaLine<'a> {
    meta: &'a Meta,
}

pub fn render_jsonl<T: Serialize>(meta: Option<&Meta>, items: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    if let Some(meta) = meta {
        serde_json::to_writer(&mut buf, &MetaLine { meta }).expect("meta serializes");
        buf.push(b'\n');
    }
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("records serialize");
        buf.push(b'\n');
    }
    buf
}

pub fn write_jsonl<T: Serialize>(path: &Path, meta: Option<&Meta>, items: &[T]) -> Result<()> {
    atomic_write(path, &render_jsonl(meta, items))
}

fn is_meta_line(line: &str) -> bool {
    line.starts_with("{\"meta\":")
}

/// Read JSONL, skipping blank lines and the provenance line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || is_meta_line(&line) {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Provenance line of a JSONL file, if any.
pub fn read_jsonl_meta(path: &Path) -> Result<Option<Meta>> {
    #[derive(Deserialize)]
    struct Line {
        meta: Meta,
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    if !is_meta_line(&first) {
        return Ok(None);
    }
    Ok(serde_json::from_str::<Line>(&first).ok().map(|l| l.meta))
}

/// Pretty JSON of `value` with a top-level `meta` object added.
pub fn render_json<T: Serialize>(meta: Option<&Meta>, value: &T) -> Vec<u8> {
    let mut v = serde_json::to_value(value).expect("value serializes");
    if let (Some(meta), Some(obj)) = (meta, v.as_object_mut()) {
        obj.insert("meta".into(), serde_json::to_value(meta).expect("meta serializes"));
    }
    let mut out = serde_json::to_vec_pretty(&v).expect("value serializes");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, meta: Option<&Meta>, value: &T) -> Result<()> {
    atomic_write(path, &render_json(meta, value))
}

/// Read a JSON document; a `meta` key is ignored by types that do not
/// declare it. Decode failures are schema errors naming the file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}
