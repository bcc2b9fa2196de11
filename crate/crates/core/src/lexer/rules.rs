//! Per-language lexical rule tables.

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::language::LanguageId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Escape {
    None,
    /// Backslash escapes the next character.
    Backslash,
    /// The closing delimiter doubled stands for itself (`@"a""b"`).
    Doubled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StringDelim {
    pub open: &'static str,
    pub close: &'static str,
    pub escape: Escape,
    pub multiline: bool,
    /// Only a short character literal (`'a'`, `'\n'`); otherwise the opener
    /// is plain punctuation (Rust lifetimes, Scala symbols).
    pub char_literal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockComment {
    pub open: &'static str,
    pub close: &'static str,
    pub nested: bool,
    /// Recognized only at the start of a line (Ruby `=begin`/`=end`).
    pub line_start: bool,
}

/// Special raw-string syntaxes introduced by an identifier-like prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawStrings {
    None,
    /// `r"..."`, `r#"..."#`, `br##"..."##`.
    Rust,
    /// `R"delim(...)delim"` with optional encoding prefix.
    Cpp,
}

#[derive(Debug)]
pub struct LexRules {
    pub language: LanguageId,
    pub line_comments: Vec<&'static str>,
    pub block_comments: Vec<BlockComment>,
    /// Longest opener first.
    pub strings: Vec<StringDelim>,
    /// Longest first. Identifier-like prefixes that may glue onto a string opener
    /// (`b"..."`, `f'...'`, `@"..."`). Compared case-insensitively when
    /// `prefix_case_insensitive`.
    pub string_prefixes: Vec<&'static str>,
    pub prefix_case_insensitive: bool,
    /// Non-alphanumeric characters that may begin an identifier (`$`, `@`).
    pub ident_start_extra: &'static str,
    /// Characters allowed as a final identifier character (`?`, `!` in Ruby).
    pub ident_suffix: &'static str,
    pub keywords: HashSet<&'static str>,
    /// Longest first.
    pub operators: Vec<&'static str>,
    pub raw_strings: RawStrings,
}

const fn s(open: &'static str, close: &'static str, escape: Escape, multiline: bool) -> StringDelim {
    StringDelim {
        open,
        close,
        escape,
        multiline,
        char_literal: false,
    }
}

const fn ch(open: &'static str) -> StringDelim {
    StringDelim {
        open,
        close: open,
        escape: Escape::Backslash,
        multiline: false,
        char_literal: true,
    }
}

const fn block(open: &'static str, close: &'static str, nested: bool) -> BlockComment {
    BlockComment {
        open,
        close,
        nested,
        line_start: false,
    }
}

const C_OPS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "##", "+", "-", "*", "/", "%", "=", "<", ">", "!",
    "&", "|", "^", "~", "?",
];

const C_KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Bool", "_Complex", "_Atomic", "_Static_assert",
    "_Thread_local", "_Noreturn", "_Alignas", "_Alignof", "NULL", "true", "false", "bool",
];

const CPP_EXTRA_OPS: &[&str] = &["<=>", "->*", "::", ".*"];

const CPP_KEYWORDS: &[&str] = &[
    "alignas", "alignof", "and", "and_eq", "asm", "auto", "bitand", "bitor", "bool", "break",
    "case", "catch", "char", "char8_t", "char16_t", "char32_t", "class", "compl", "concept",
    "const", "consteval", "constexpr", "constinit", "const_cast", "continue", "co_await",
    "co_return", "co_yield", "decltype", "default", "delete", "do", "double", "dynamic_cast",
    "else", "enum", "explicit", "export", "extern", "false", "float", "for", "friend", "goto",
    "if", "inline", "int", "long", "mutable", "namespace", "new", "noexcept", "not", "not_eq",
    "nullptr", "operator", "or", "or_eq", "private", "protected", "public", "register",
    "reinterpret_cast", "requires", "return", "short", "signed", "sizeof", "static",
    "static_assert", "static_cast", "struct", "switch", "template", "this", "thread_local",
    "throw", "true", "try", "typedef", "typeid", "typename", "union", "unsigned", "using",
    "virtual", "void", "volatile", "wchar_t", "while", "xor", "xor_eq", "override", "final",
];

const CSHARP_KEYWORDS: &[&str] = &[
    "abstract", "as", "base", "bool", "break", "byte", "case", "catch", "char", "checked",
    "class", "const", "continue", "decimal", "default", "delegate", "do", "double", "else",
    "enum", "event", "explicit", "extern", "false", "finally", "fixed", "float", "for",
    "foreach", "goto", "if", "implicit", "in", "int", "interface", "internal", "is", "lock",
    "long", "namespace", "new", "null", "object", "operator", "out", "override", "params",
    "private", "protected", "public", "readonly", "ref", "return", "sbyte", "sealed", "short",
    "sizeof", "stackalloc", "static", "string", "struct", "switch", "this", "throw", "true",
    "try", "typeof", "uint", "ulong", "unchecked", "unsafe", "ushort", "using", "virtual",
    "void", "volatile", "while", "var", "async", "await", "get", "set", "yield", "record",
    "init", "where", "dynamic", "nameof", "when",
];

const CSHARP_OPS: &[&str] = &[
    "<<=", ">>=", "??=", "=>", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "??", "?.", "::", "+", "-", "*", "/", "%",
    "=", "<", ">", "!", "&", "|", "^", "~", "?",
];

const GO_KEYWORDS: &[&str] = &[
    "break", "case", "chan", "const", "continue", "default", "defer", "else", "fallthrough",
    "for", "func", "go", "goto", "if", "import", "interface", "map", "package", "range",
    "return", "select", "struct", "switch", "type", "var", "true", "false", "nil", "iota",
];

const GO_OPS: &[&str] = &[
    "<<=", ">>=", "&^=", "...", "&^", ":=", "<-", "++", "--", "<<", ">>", "<=", ">=", "==", "!=",
    "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "=",
    "<", ">", "!", "&", "|", "^", "~",
];

const JAVA_KEYWORDS: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally",
    "float", "for", "goto", "if", "implements", "import", "instanceof", "int", "interface",
    "long", "native", "new", "package", "private", "protected", "public", "return", "short",
    "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while", "true", "false", "null", "var", "record",
    "yield", "sealed", "permits",
];

const JAVA_OPS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "<<", ">>", "<=", ">=", "==",
    "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%",
    "=", "<", ">", "!", "&", "|", "^", "~", "?", "@",
];

const JS_KEYWORDS: &[&str] = &[
    "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete",
    "do", "else", "export", "extends", "finally", "for", "function", "if", "import", "in",
    "instanceof", "new", "return", "super", "switch", "this", "throw", "try", "typeof", "var",
    "void", "while", "with", "yield", "let", "static", "async", "await", "of", "true", "false",
    "null", "undefined",
];

const TS_EXTRA_KEYWORDS: &[&str] = &[
    "abstract", "any", "as", "boolean", "declare", "enum", "implements", "interface",
    "keyof", "module", "namespace", "never", "number", "private", "protected", "public",
    "readonly", "string", "symbol", "type", "unknown", "is", "infer", "satisfies",
];

const JS_OPS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "++",
    "--", "**", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "??", "?.", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^",
    "~", "?",
];

const PHP_KEYWORDS: &[&str] = &[
    "abstract", "and", "array", "as", "break", "callable", "case", "catch", "class", "clone",
    "const", "continue", "declare", "default", "do", "echo", "else", "elseif", "empty",
    "enddeclare", "endfor", "endforeach", "endif", "endswitch", "endwhile", "extends",
    "final", "finally", "fn", "for", "foreach", "function", "global", "goto", "if",
    "implements", "include", "include_once", "instanceof", "insteadof", "interface", "isset",
    "list", "match", "namespace", "new", "or", "print", "private", "protected", "public",
    "readonly", "require", "require_once", "return", "static", "switch", "throw", "trait",
    "try", "unset", "use", "var", "while", "xor", "yield", "true", "false", "null", "enum",
];

const PHP_OPS: &[&str] = &[
    "<?php", "<?=", "?>", "===", "!==", "<=>", "**=", "??=", "...", "<<=", ">>=", "=>", "->",
    "?->", "::", "++", "--", "**", "<<", ">>", "<=", ">=", "==", "!=", "<>", "&&", "||", "??",
    "+=", "-=", "*=", "/=", ".=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "=", "<",
    ">", "!", "&", "|", "^", "~", "?", "@",
];

const PYTHON_KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield", "match", "case",
];

const PYTHON_OPS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==",
    "!=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@",
    "=", "<", ">", "&", "|", "^", "~",
];

const RUBY_KEYWORDS: &[&str] = &[
    "BEGIN", "END", "alias", "and", "begin", "break", "case", "class", "def", "defined?", "do",
    "else", "elsif", "end", "ensure", "false", "for", "if", "in", "module", "next", "nil",
    "not", "or", "redo", "rescue", "retry", "return", "self", "super", "then", "true", "undef",
    "unless", "until", "when", "while", "yield", "__FILE__", "__LINE__", "__method__",
];

const RUBY_OPS: &[&str] = &[
    "**=", "<=>", "===", "...", "<<=", ">>=", "&&=", "||=", "&.", "=>", "->", "==", "!=", "=~",
    "!~", "<=", ">=", "&&", "||", "<<", ">>", "**", "..", "::", "+=", "-=", "*=", "/=", "%=",
    "|=", "&=", "^=", "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^", "~", "?",
];

const RUST_KEYWORDS: &[&str] = &[
    "as", "async", "await", "break", "const", "continue", "crate", "dyn", "else", "enum",
    "extern", "false", "fn", "for", "if", "impl", "in", "let", "loop", "match", "mod", "move",
    "mut", "pub", "ref", "return", "self", "Self", "static", "struct", "super", "trait", "true",
    "type", "unsafe", "use", "where", "while", "yield", "macro_rules", "union",
];

const RUST_OPS: &[&str] = &[
    "<<=", ">>=", "...", "..=", "::", "->", "=>", "..", "<<", ">>", "<=", ">=", "==", "!=", "&&",
    "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "=", "<",
    ">", "!", "&", "|", "^", "?",
];

const SCALA_KEYWORDS: &[&str] = &[
    "abstract", "case", "catch", "class", "def", "do", "else", "extends", "false", "final",
    "finally", "for", "forSome", "if", "implicit", "import", "lazy", "match", "new", "null",
    "object", "override", "package", "private", "protected", "return", "sealed", "super",
    "this", "throw", "trait", "try", "true", "type", "val", "var", "while", "with", "yield",
    "given", "using", "enum", "then", "export", "extension",
];

const SCALA_OPS: &[&str] = &[
    "<-", "->", "=>", "<:", ">:", "<%", "::", "++", "==", "!=", "<=", ">=", "&&", "||", "+=",
    "-=", "*=", "/=", "<<", ">>", "+", "-", "*", "/", "%", "=", "<", ">", "!", "&", "|", "^",
    "~", "?", "#", "@",
];

fn build(
    language: LanguageId,
    line_comments: &[&'static str],
    block_comments: &[BlockComment],
    strings: &[StringDelim],
    string_prefixes: &[&'static str],
    keywords: &[&[&'static str]],
    operators: &[&[&'static str]],
) -> LexRules {
    let mut strings = strings.to_vec();
    strings.sort_by(|a, b| b.open.len().cmp(&a.open.len()));
    let mut ops: Vec<&'static str> = operators.iter().flat_map(|o| o.iter().copied()).collect();
    ops.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    ops.dedup();
    let mut string_prefixes = string_prefixes.to_vec();
    string_prefixes.sort_by(|a, b| b.len().cmp(&a.len()));
    LexRules {
        language,
        line_comments: line_comments.to_vec(),
        block_comments: block_comments.to_vec(),
        strings,
        string_prefixes,
        prefix_case_insensitive: false,
        ident_start_extra: "",
        ident_suffix: "",
        keywords: keywords.iter().flat_map(|k| k.iter().copied()).collect(),
        operators: ops,
        raw_strings: RawStrings::None,
    }
}

fn make(lang: LanguageId) -> LexRules {
    use Escape::*;
    use LanguageId::*;
    let c_block = [block("/*", "*/", false)];
    let dq = s("\"", "\"", Backslash, false);
    let sq = s("'", "'", Backslash, false);
    match lang {
        C => build(lang, &["//"], &c_block, &[dq, sq], &["L", "u", "U", "u8"], &[C_KEYWORDS], &[C_OPS]),
        Cpp => {
            let mut r = build(
                lang,
                &["//"],
                &c_block,
                &[dq, sq],
                &["L", "u", "U", "u8"],
                &[CPP_KEYWORDS],
                &[C_OPS, CPP_EXTRA_OPS],
            );
            r.raw_strings = RawStrings::Cpp;
            r
        }
        CSharp => build(
            lang,
            &["//"],
            &c_block,
            &[
                s("\"\"\"", "\"\"\"", None, true),
                dq,
                sq,
                // verbatim strings, reached through the `@` prefix
                s("@\"", "\"", Doubled, true),
            ],
            &["$"],
            &[CSHARP_KEYWORDS],
            &[CSHARP_OPS],
        ),
        Go => build(
            lang,
            &["//"],
            &c_block,
            &[dq, sq, s("`", "`", None, true)],
            &[],
            &[GO_KEYWORDS],
            &[GO_OPS],
        ),
        Java => build(
            lang,
            &["//"],
            &c_block,
            &[s("\"\"\"", "\"\"\"", Backslash, true), dq, sq],
            &[],
            &[JAVA_KEYWORDS],
            &[JAVA_OPS],
        ),
        JavaScript | TypeScript => {
            let kws: &[&[&str]] = if lang == TypeScript {
                &[JS_KEYWORDS, TS_EXTRA_KEYWORDS]
            } else {
                &[JS_KEYWORDS]
            };
            let mut r = build(
                lang,
                &["//"],
                &c_block,
                &[dq, sq, s("`", "`", Backslash, true)],
                &[],
                kws,
                &[JS_OPS],
            );
            r.ident_start_extra = "$";
            r
        }
        Php => {
            let mut r = build(
                lang,
                &["//", "#"],
                &c_block,
                &[s("\"", "\"", Backslash, true), s("'", "'", Backslash, true), s("`", "`", Backslash, true)],
                &[],
                &[PHP_KEYWORDS],
                &[PHP_OPS],
            );
            r.ident_start_extra = "$";
            r
        }
        Python => {
            let mut r = build(
                lang,
                &["#"],
                &[],
                &[
                    s("\"\"\"", "\"\"\"", Backslash, true),
                    s("'''", "'''", Backslash, true),
                    dq,
                    sq,
                ],
                &["r", "u", "b", "f", "br", "rb", "fr", "rf"],
                &[PYTHON_KEYWORDS],
                &[PYTHON_OPS],
            );
            r.prefix_case_insensitive = true;
            r
        }
        Ruby => {
            let mut r = build(
                lang,
                &["#"],
                &[BlockComment {
                    open: "=begin",
                    close: "=end",
                    nested: false,
                    line_start: true,
                }],
                &[s("\"", "\"", Backslash, true), s("'", "'", Backslash, true), s("`", "`", Backslash, true)],
                &[],
                &[RUBY_KEYWORDS],
                &[RUBY_OPS],
            );
            r.ident_start_extra = "@$";
            r.ident_suffix = "?!";
            r
        }
        Rust => {
            let mut r = build(
                lang,
                &["//"],
                &[block("/*", "*/", true)],
                &[s("\"", "\"", Backslash, true), ch("'")],
                &["b", "c"],
                &[RUST_KEYWORDS],
                &[RUST_OPS],
            );
            r.raw_strings = RawStrings::Rust;
            r
        }
        Scala => build(
            lang,
            &["//"],
            &[block("/*", "*/", true)],
            &[s("\"\"\"", "\"\"\"", None, true), dq, ch("'")],
            &["s", "f", "raw"],
            &[SCALA_KEYWORDS],
            &[SCALA_OPS],
        ),
    }
}

static TABLES: OnceLock<Vec<LexRules>> = OnceLock::new();

/// The rule table of `lang`.
pub fn rules(lang: LanguageId) -> &'static LexRules {
    let tables = TABLES.get_or_init(|| LanguageId::ALL.iter().map(|&l| make(l)).collect());
    &tables[lang as usize]
}
