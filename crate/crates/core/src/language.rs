//! The closed set of corpus languages and the extension map.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the twelve corpus languages.
///
/// Variant order is the lexicographic order of the display names, so the
/// derived `Ord` doubles as the majority-language tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LanguageId {
    #[serde(rename = "C")]
    C,
    #[serde(rename = "C#")]
    CSharp,
    #[serde(rename = "C++")]
    Cpp,
    #[serde(rename = "Go")]
    Go,
    #[serde(rename = "Java")]
    Java,
    #[serde(rename = "JavaScript")]
    JavaScript,
    #[serde(rename = "PHP")]
    Php,
    #[serde(rename = "Python")]
    Python,
    #[serde(rename = "Ruby")]
    Ruby,
    #[serde(rename = "Rust")]
    Rust,
    #[serde(rename = "Scala")]
    Scala,
    #[serde(rename = "TypeScript")]
    TypeScript,
}

impl LanguageId {
    pub const ALL: [LanguageId; 12] = [
        LanguageId::C,
        LanguageId::CSharp,
        LanguageId::Cpp,
        LanguageId::Go,
        LanguageId::Java,
        LanguageId::JavaScript,
        LanguageId::Php,
        LanguageId::Python,
        LanguageId::Ruby,
        LanguageId::Rust,
        LanguageId::Scala,
        LanguageId::TypeScript,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LanguageId::C => "C",
            LanguageId::CSharp => "C#",
            LanguageId::Cpp => "C++",
            LanguageId::Go => "Go",
            LanguageId::Java => "Java",
            LanguageId::JavaScript => "JavaScript",
            LanguageId::Php => "PHP",
            LanguageId::Python => "Python",
            LanguageId::Ruby => "Ruby",
            LanguageId::Rust => "Rust",
            LanguageId::Scala => "Scala",
            LanguageId::TypeScript => "TypeScript",
        }
    }

    /// Filesystem-safe lowercase identifier (`csharp`, `cpp`, ...).
    pub fn slug(self) -> &'static str {
        match self {
            LanguageId::C => "c",
            LanguageId::CSharp => "csharp",
            LanguageId::Cpp => "cpp",
            LanguageId::Go => "go",
            LanguageId::Java => "java",
            LanguageId::JavaScript => "javascript",
            LanguageId::Php => "php",
            LanguageId::Python => "python",
            LanguageId::Ruby => "ruby",
            LanguageId::Rust => "rust",
            LanguageId::Scala => "scala",
            LanguageId::TypeScript => "typescript",
        }
    }

    /// File extensions (lowercase, without the dot) mapped to this language.
    pub fn extensions(self) -> &'static [&'static str] {
        match self {
            LanguageId::C => &["c", "h"],
            LanguageId::CSharp => &["cs"],
            LanguageId::Cpp => &["cpp", "cc", "cxx", "c++", "hpp", "hh", "hxx", "h++"],
            LanguageId::Go => &["go"],
            LanguageId::Java => &["java"],
            LanguageId::JavaScript => &["js", "mjs", "cjs", "jsx"],
            LanguageId::Php => &["php"],
            LanguageId::Python => &["py"],
            LanguageId::Ruby => &["rb"],
            LanguageId::Rust => &["rs"],
            LanguageId::Scala => &["scala", "sc"],
            LanguageId::TypeScript => &["ts", "tsx"],
        }
    }

    pub fn from_extension(ext: &str) -> Option<LanguageId> {
        let ext = ext.to_ascii_lowercase();
        LanguageId::ALL
            .into_iter()
            .find(|lang| lang.extensions().contains(&ext.as_str()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Option<LanguageId> {
        path.as_ref()
            .extension()
            .and_then(|e| e.to_str())
            .and_then(LanguageId::from_extension)
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown language `{0}`")]
pub struct UnknownLanguage(pub String);

impl FromStr for LanguageId {
    type Err = UnknownLanguage;

    /// Accepts display names and slugs, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageId::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s) || l.slug().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownLanguage(s.to_string()))
    }
}
