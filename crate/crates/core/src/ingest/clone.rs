use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RepoManifestEntry;

/// External VCS command used to make shallow working copies.
///
/// The command is invoked as `program args... <url> <dest>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneDriver {
    pub program: String,
    pub args: Vec<String>,
}

impl Default for CloneDriver {
    fn default() -> Self {
        CloneDriver {
            program: "git".into(),
            args: vec![
                "clone".into(),
                "--depth".into(),
                "1".into(),
                "--quiet".into(),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum CloneOutcome {
    Succeeded(PathBuf),
    /// Destination already held a completed clone.
    Skipped(PathBuf),
    Failed(String),
}

/// Stable directory name for a repository url.
pub fn repo_dir_name(url: &str) -> String {
    let trimmed = url
        .trim_end_matches('/')
        .trim_end_matches(".git")
        .rsplit("://")
        .next()
        .unwrap_or(url);
    let mut name: String = trimmed
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    name.truncate(80);
    let digest = Sha256::digest(url.as_bytes());
    format!("{name}-{}", hex::encode(&digest[..4]))
}

/// Shallow-clone `entry` under `dest`. Never panics and never aborts a batch:
/// every failure becomes `CloneOutcome::Failed`.
pub fn clone_repo(entry: &RepoManifestEntry, dest: &Path, driver: &CloneDriver) -> CloneOutcome {
    let target = dest.join(repo_dir_name(&entry.url));
    if target.is_dir() {
        return CloneOutcome::Skipped(target);
    }
    // Clone beside the target and rename, so an interrupted clone is never
    // mistaken for a finished one on re-run.
    let partial = dest.join(format!(".{}.partial", repo_dir_name(&entry.url)));
    if partial.exists() {
        if let Err(e) = std::fs::remove_dir_all(&partial) {
            return CloneOutcome::Failed(format!("driver: cannot clear {}: {e}", partial.display()));
        }
    }
    let output = Command::new(&driver.program)
        .args(&driver.args)
        .arg(&entry.url)
        .arg(&partial)
        .env("GIT_TERMINAL_PROMPT", "0")
        .stdin(Stdio::null())
        .output();
    let output = match output {
        Ok(o) => o,
        Err(e) => return CloneOutcome::Failed(format!("driver: {e}")),
    };
    if !output.status.success() {
        let _ = std::fs::remove_dir_all(&partial);
        let stderr = String::from_utf8_lossy(&output.stderr).to_ascii_lowercase();
        let class = if stderr.contains("authentication") || stderr.contains("permission denied") {
            "auth"
        } else {
            "network"
        };
        return CloneOutcome::Failed(class.to_string());
    }
    match std::fs::rename(&partial, &target) {
        Ok(()) => CloneOutcome::Succeeded(target),
        Err(e) => CloneOutcome::Failed(format!("driver: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dir_names_are_distinct_and_safe() {
        let a = repo_dir_name("https://github.com/a/b");
        let b = repo_dir_name("https://github.com/a/b.git");
        assert_ne!(a, b);
        assert!(a.starts_with("github.com_a_b-"));
        assert!(!a.contains('/'));
    }
}
