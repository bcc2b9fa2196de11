use std::collections::BTreeMap;
use std::path::Path;

use walkdir::WalkDir;

use super::{IngestError, SourceFileRecord};
use crate::language::LanguageId;

const VCS_DIRS: [&str; 4] = [".git", ".hg", ".svn", ".bzr"];

/// Files extracted from one working copy.
#[derive(Debug, Default, Clone)]
pub struct Extraction {
    pub records: Vec<SourceFileRecord>,
    /// Files that matched the language but could not be read.
    pub unreadable: usize,
}

/// Repo-relative paths (forward slashes, sorted) of every regular file,
/// excluding VCS metadata directories. Symlinks are not followed.
pub fn list_repo_files(repo_dir: &Path) -> Result<Vec<String>, IngestError> {
    if !repo_dir.is_dir() {
        return Err(IngestError::io(
            repo_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        ));
    }
    let mut files = Vec::new();
    let walker = WalkDir::new(repo_dir)
        .follow_links(false)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            !(e.file_type().is_dir()
                && e.depth() > 0
                && VCS_DIRS.iter().any(|d| e.file_name() == *d))
        });
    for entry in walker {
        let entry = match entry {
            Ok(e) => e,
            Err(e) => {
                log::warn!("skipping unreadable entry: {e}");
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(repo_dir)
            .expect("walkdir yields children of its root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        files.push(rel);
    }
    files.sort();
    Ok(files)
}

/// Language with the most recognized files; ties go to the
/// lexicographically smallest language name.
pub fn detect_majority_language<P: AsRef<Path>>(files: &[P]) -> Result<LanguageId, IngestError> {
    let mut counts: BTreeMap<LanguageId, usize> = BTreeMap::new();
    for f in files {
        if let Some(lang) = LanguageId::from_path(f) {
            *counts.entry(lang).or_default() += 1;
        }
    }
    // BTreeMap iterates in name order; keep the first maximum seen.
    counts
        .into_iter()
        .fold(None, |best: Option<(LanguageId, usize)>, (lang, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((lang, n)),
        })
        .map(|(lang, _)| lang)
        .ok_or(IngestError::NoRecognizedLanguage { files: files.len() })
}

/// One record per file of `lang`, in path order.
pub fn extract_files(
    repo_dir: &Path,
    repo_url: &str,
    lang: LanguageId,
) -> Result<Extraction, IngestError> {
    let mut out = Extraction::default();
    for rel in list_repo_files(repo_dir)? {
        if LanguageId::from_path(&rel) != Some(lang) {
            continue;
        }
        match std::fs::read(repo_dir.join(&rel)) {
            Ok(content) => out
                .records
                .push(SourceFileRecord::new(repo_url, rel, lang, content)),
            Err(e) => {
                log::warn!("{}: unreadable: {e}", repo_dir.join(&rel).display());
                out.unreadable += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn majority_by_count() {
        assert_eq!(
            detect_majority_language(&["a.py", "b.py", "c.md"]).unwrap(),
            LanguageId::Python
        );
    }

    #[test]
    fn majority_tie_is_lexicographic() {
        assert_eq!(detect_majority_language(&["b.rs", "a.go"]).unwrap(), LanguageId::Go);
        assert_eq!(detect_majority_language(&["x.cs", "y.c"]).unwrap(), LanguageId::C);
    }

    #[test]
    fn majority_requires_a_recognized_file() {
        assert!(matches!(
            detect_majority_language(&["README.md"]),
            Err(IngestError::NoRecognizedLanguage { files: 1 })
        ));
    }

    #[test]
    fn extracts_only_language_files_skipping_vcs_and_symlinks() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        fs::create_dir_all(root.join("src/pkg")).unwrap();
        fs::create_dir_all(root.join(".git/objects")).unwrap();
        fs::write(root.join("src/pkg/B.java"), "class B {}").unwrap();
        fs::write(root.join("src/A.java"), "class A {}").unwrap();
        fs::write(root.join("pom.xml"), "<p/>").unwrap();
        fs::write(root.join(".git/objects/X.java"), "junk").unwrap();
        #[cfg(unix)]
        std::os::unix::fs::symlink(root.join("src/A.java"), root.join("Link.java")).unwrap();

        let ex = extract_files(root, "https://h/r", LanguageId::Java).unwrap();
        let paths: Vec<_> = ex.records.iter().map(|r| r.path.as_str()).collect();
        assert_eq!(paths, ["src/A.java", "src/pkg/B.java"]);
        assert!(ex.records.iter().all(|r| r.repo == "https://h/r"));
    }

    #[test]
    fn empty_repo_yields_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let ex = extract_files(dir.path(), "u", LanguageId::Go).unwrap();
        assert!(ex.records.is_empty());
    }
}
