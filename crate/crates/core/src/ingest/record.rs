use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::language::LanguageId;
use crate::report::persist::{self, Meta};

/// One extracted source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFileRecord {
    /// Url of the manifest entry the file came from.
    pub repo: String,
    /// Repo-relative path, forward slashes.
    pub path: String,
    pub language: LanguageId,
    #[serde(rename = "content_b64", with = "b64")]
    pub content: Vec<u8>,
    pub byte_size: u64,
    pub ws_token_count: u64,
    /// Lowercase hex SHA-256, set by the dedup stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

impl SourceFileRecord {
    pub fn new(
        repo: impl Into<String>,
        path: impl Into<String>,
        language: LanguageId,
        content: Vec<u8>,
    ) -> Self {
        let path: String = path.into();
        SourceFileRecord {
            repo: repo.into(),
            path: path.replace('\\', "/"),
            language,
            byte_size: content.len() as u64,
            ws_token_count: count_ws_tokens(&content),
            content,
            digest: None,
        }
    }

    pub fn text(&self) -> std::borrow::Cow<'_, str> {
        String::from_utf8_lossy(&self.content)
    }
}

/// Whitespace-delimited tokens of raw bytes (ASCII whitespace separators).
pub fn count_ws_tokens(content: &[u8]) -> u64 {
    content
        .split(|b| b.is_ascii_whitespace())
        .filter(|w| !w.is_empty())
        .count() as u64
}

mod b64 {
    use super::*;

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(serde::de::Error::custom)
    }
}

pub fn write_records(
    path: &Path,
    meta: Option<&Meta>,
    records: &[SourceFileRecord],
) -> crate::Result<()> {
    persist::write_jsonl(path, meta, records)
}

pub fn read_records(path: &Path) -> crate::Result<Vec<SourceFileRecord>> {
    persist::read_jsonl(path)
}
