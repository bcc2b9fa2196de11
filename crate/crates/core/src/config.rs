//! Run configuration files (TOML). Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backend::BackendConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub min_stars: Option<u64>,
    pub per_language_cap: Option<usize>,
    /// Clone command, e.g. `["git", "clone", "--depth", "1"]`.
    pub clone_command: Option<Vec<String>>,
    pub eval_per_language: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanEvalSection {
    pub n: Option<usize>,
    pub temperatures: Option<Vec<f64>>,
    pub top_p: Option<f64>,
    pub max_tokens: Option<usize>,
    pub timeout_s: Option<f64>,
    /// Sandbox runner command line.
    pub runner: Option<Vec<String>>,
    pub runner_workers: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenizerSection {
    pub vocab_size: Option<usize>,
    pub fraction: Option<f64>,
    pub ngram_order: Option<usize>,
    pub ngram_alpha: Option<f64>,
}

/// Settings shared by every subcommand except `filter`, whose file holds
/// filter thresholds at the top level.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub backend: Option<BackendConfig>,
    pub ingest: Option<IngestSection>,
    pub humaneval: Option<HumanEvalSection>,
    pub tokenizer: Option<TokenizerSection>,
}

pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    toml::from_str(text).map_err(|e| e.message().to_string())
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> crate::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    parse_toml(&text).map_err(|m| crate::Error::Config(format!("{}: {m}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendKind;

    #[test]
    fn full_file() {
        let c: RunConfig = parse_toml(
            r#"
jobs = 4
seed = 9
[backend]
kind = "http"
url = "http://localhost:8000"
[humaneval]
n = 10
temperatures = [0.2, 0.8]
runner = ["python3", "runner.py"]
"#,
        )
        .unwrap();
        assert_eq!(c.jobs, Some(4));
        assert_eq!(c.backend.unwrap().kind, BackendKind::Http);
        assert_eq!(c.humaneval.unwrap().temperatures, Some(vec![0.2, 0.8]));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_toml::<RunConfig>("jobz = 1").is_err());
        assert!(parse_toml::<RunConfig>("[humaneval]\nk = 3").is_err());
        assert!(parse_toml::<RunConfig>("").is_ok());
    }

    #[test]
    fn readme_sample_parses() {
        let readme = include_str!("../../../README.md");
        let start = readme.find("```toml\n").unwrap() + 8;
        let end = start + readme[start..].find("```").unwrap();
        let c: RunConfig = parse_toml(&readme[start..end]).unwrap();
        assert_eq!(c.humaneval.unwrap().runner_workers, Some(8));
        assert_eq!(c.tokenizer.unwrap().ngram_order, Some(3));
    }
}
