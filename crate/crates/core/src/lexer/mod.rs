//! Table-driven, error-tolerant lexer for the twelve corpus languages.
//!
//! The token counts produced here are the shared denominator for perplexity,
//! so that models with different tokenizers are compared per lexical token.
//! Whitespace is never a token; each comment and each string literal is
//! exactly one token.

mod rules;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::language::LanguageId;

pub use rules::{rules, BlockComment, Escape, LexRules, RawStrings, StringDelim};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    Number,
    String,
    Comment,
    Operator,
    Punctuation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexToken<'a> {
    pub kind: TokenKind,
    /// Byte range into the lexed text.
    pub span: Range<usize>,
    pub text: &'a str,
}

/// Lex `content`. Total over all inputs: unknown characters become
/// single-character `Punctuation`, unterminated constructs run to the end of
/// input (or of the line, for single-line strings).
pub fn lex(content: &str, lang: LanguageId) -> Vec<LexToken<'_>> {
    Scanner::new(content, rules(lang)).collect()
}

/// Lex raw bytes; invalid UTF-8 is replaced first. Spans refer to the
/// replaced text, which is returned alongside.
pub fn lex_bytes(content: &[u8], lang: LanguageId) -> (String, Vec<(TokenKind, Range<usize>)>) {
    let text = String::from_utf8_lossy(content).into_owned();
    let toks = Scanner::new(&text, rules(lang))
        .map(|t| (t.kind, t.span))
        .collect();
    (text, toks)
}

/// Number of lexical tokens; the perplexity normalizer.
pub fn count_reference_tokens(content: &str, lang: LanguageId) -> usize {
    Scanner::new(content, rules(lang)).count()
}

struct Scanner<'a> {
    src: &'a str,
    pos: usize,
    rules: &'static LexRules,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

impl<'a> Scanner<'a> {
    fn new(src: &'a str, rules: &'static LexRules) -> Self {
        Scanner { src, pos: 0, rules }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_line_start(&self) -> bool {
        self.pos == 0 || self.src.as_bytes()[self.pos - 1] == b'\n'
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    /// End offset (exclusive) of a block comment starting at `start`.
    fn scan_block_comment(&self, start: usize, bc: &BlockComment) -> usize {
        let mut depth = 1usize;
        let mut i = start + bc.open.len();
        let s = self.src;
        while i < s.len() {
            let rest = &s[i..];
            if bc.line_start {
                if s.as_bytes()[i - 1] == b'\n' && rest.starts_with(bc.close) {
                    return i + bc.close.len();
                }
            } else if rest.starts_with(bc.close) {
                depth -= 1;
                i += bc.close.len();
                if depth == 0 {
                    return i;
                }
                continue;
            } else if bc.nested && rest.starts_with(bc.open) {
                depth += 1;
                i += bc.open.len();
                continue;
            }
            i += rest.chars().next().map_or(1, char::len_utf8);
        }
        s.len()
    }

    /// End offset of a string whose opener ends at `body`.
    fn scan_string_body(&self, body: usize, d: &StringDelim) -> usize {
        let s = self.src;
        let mut i = body;
        while i < s.len() {
            let rest = &s[i..];
            match d.escape {
                Escape::Backslash if rest.starts_with('\\') => {
                    i += 1;
                    // an escaped newline continues even a single-line literal
                    if let Some(c) = s[i..].chars().next() {
                        i += c.len_utf8();
                    }
                    continue;
                }
                Escape::Doubled if rest.starts_with(d.close) && rest[d.close.len()..].starts_with(d.close) => {
                    i += 2 * d.close.len();
                    continue;
                }
                _ => {}
            }
            if rest.starts_with(d.close) {
                return i + d.close.len();
            }
            let c = rest.chars().next().expect("non-empty rest");
            if c == '\n' && !d.multiline {
                return i;
            }
            i += c.len_utf8();
        }
        s.len()
    }

    /// `'a'`, `'\n'`, `'\u{1F600}'`; `None` when the quote does not open a
    /// character literal.
    fn scan_char_literal(&self, start: usize, d: &StringDelim) -> Option<usize> {
        let body = &self.src[start + d.open.len()..];
        let mut chars = body.char_indices();
        let (_, first) = chars.next()?;
        if first == '\n' || body.starts_with(d.close) {
            return None;
        }
        if first == '\\' {
            // escape sequence: accept up to 10 more chars before the close
            for (idx, c) in chars.take(11) {
                if c == '\n' {
                    return None;
                }
                if idx > 1 && body[idx..].starts_with(d.close) {
                    return Some(start + d.open.len() + idx + d.close.len());
                }
            }
            return None;
        }
        let after = first.len_utf8();
        body[after..]
            .starts_with(d.close)
            .then(|| start + d.open.len() + after + d.close.len())
    }

    /// Try each string opener at `at`; returns the end of the literal.
    fn try_string_at(&self, at: usize) -> Option<usize> {
        let rest = &self.src[at..];
        for d in &self.rules.strings {
            if !rest.starts_with(d.open) {
                continue;
            }
            if d.char_literal {
                if let Some(end) = self.scan_char_literal(at, d) {
                    return Some(end);
                }
                continue;
            }
            return Some(self.scan_string_body(at + d.open.len(), d));
        }
        None
    }

    fn try_raw_string(&self) -> Option<usize> {
        let rest = self.rest();
        match self.rules.raw_strings {
            RawStrings::None => None,
            RawStrings::Rust => {
                let after_prefix = rest
                    .strip_prefix("br")
                    .or_else(|| rest.strip_prefix("cr"))
                    .or_else(|| rest.strip_prefix('r'))?;
                let hashes = after_prefix.bytes().take_while(|&b| b == b'#').count();
                let body = after_prefix[hashes..].strip_prefix('"')?;
                let close: String = std::iter::once('"')
                    .chain(std::iter::repeat_n('#', hashes))
                    .collect();
                let body_start = self.src.len() - body.len();
                Some(match body.find(close.as_str()) {
                    Some(off) => body_start + off + close.len(),
                    None => self.src.len(),
                })
            }
            RawStrings::Cpp => {
                let after_prefix = ["u8R", "LR", "uR", "UR", "R"]
                    .iter()
                    .find_map(|p| rest.strip_prefix(p))?;
                let body = after_prefix.strip_prefix('"')?;
                let paren = body.find('(')?;
                let delim = &body[..paren];
                if delim.len() > 16
                    || delim
                        .chars()
                        .any(|c| c.is_whitespace() || c == '\\' || c == ')')
                {
                    return None;
                }
                let close = format!("){delim}\"");
                let content_start = self.src.len() - body.len() + paren + 1;
                Some(match self.src[content_start..].find(close.as_str()) {
                    Some(off) => content_start + off + close.len(),
                    None => self.src.len(),
                })
            }
        }
    }

    fn try_prefixed_string(&self) -> Option<usize> {
        let rest = self.rest();
        for p in &self.rules.string_prefixes {
            if rest.len() < p.len() || !rest.is_char_boundary(p.len()) {
                continue;
            }
            let head = &rest[..p.len()];
            let matches = if self.rules.prefix_case_insensitive {
                head.eq_ignore_ascii_case(p)
            } else {
                head == *p
            };
            if matches {
                if let Some(end) = self.try_string_at(self.pos + p.len()) {
                    return Some(end);
                }
            }
        }
        None
    }

    fn scan_number(&self) -> usize {
        let s = self.src;
        let b = s.as_bytes();
        let mut i = self.pos;
        let hex = b[i] == b'0' && matches!(b.get(i + 1), Some(b'x' | b'X'));
        while i < s.len() {
            let c = b[i];
            if c.is_ascii_alphanumeric() || c == b'_' {
                let exp = !hex && (c == b'e' || c == b'E');
                i += 1;
                if exp
                    && matches!(b.get(i), Some(b'+' | b'-'))
                    && b.get(i + 1).is_some_and(u8::is_ascii_digit)
                {
                    i += 1;
                }
            } else if c == b'.' && b.get(i + 1).is_some_and(u8::is_ascii_digit) {
                i += 1;
            } else if c == b'.'
                && i > self.pos
                && !matches!(b.get(i + 1), Some(b'.'))
                && !b.get(i + 1).is_some_and(|n| n.is_ascii_alphabetic() || *n == b'_')
                && !s[self.pos..i].contains('.')
            {
                // trailing-dot float such as `1.`
                i += 1;
            } else {
                break;
            }
        }
        i
    }

    fn scan_identifier(&self) -> Option<usize> {
        let rest = self.rest();
        let extra = self.rules.ident_start_extra;
        let sigils = rest.chars().take_while(|c| extra.contains(*c)).count();
        let after = &rest[sigils..];
        let first = after.chars().next()?;
        if !is_ident_start(first) {
            return None;
        }
        let mut len = sigils;
        for c in after.chars() {
            if is_ident_continue(c) {
                len += c.len_utf8();
            } else {
                break;
            }
        }
        if let Some(c) = rest[len..].chars().next() {
            if self.rules.ident_suffix.contains(c) && !rest[len + c.len_utf8()..].starts_with('=') {
                len += c.len_utf8();
            }
        }
        Some(self.pos + len)
    }

    fn next_token(&mut self) -> Option<(TokenKind, usize)> {
        let rest = self.rest();
        let r = self.rules;

        for bc in &r.block_comments {
            if rest.starts_with(bc.open) && (!bc.line_start || self.at_line_start()) {
                return Some((TokenKind::Comment, self.scan_block_comment(self.pos, bc)));
            }
        }
        for marker in &r.line_comments {
            if rest.starts_with(marker) {
                let end = rest.find('\n').map_or(self.src.len(), |i| self.pos + i);
                // Keep a trailing '\r' out of the token only if it is all that is left.
                return Some((TokenKind::Comment, end));
            }
        }
        if let Some(end) = self.try_raw_string() {
            return Some((TokenKind::String, end));
        }
        if let Some(end) = self.try_prefixed_string() {
            return Some((TokenKind::String, end));
        }
        if let Some(end) = self.try_string_at(self.pos) {
            return Some((TokenKind::String, end));
        }
        let c = self.peek()?;
        let b = self.src.as_bytes();
        if c.is_ascii_digit() || (c == '.' && b.get(self.pos + 1).is_some_and(u8::is_ascii_digit)) {
            return Some((TokenKind::Number, self.scan_number()));
        }
        if let Some(end) = self.scan_identifier() {
            let word = &self.src[self.pos..end];
            let kind = if r.keywords.contains(word) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            return Some((kind, end));
        }
        if let Some(op) = r.operators.iter().find(|op| rest.starts_with(**op)) {
            return Some((TokenKind::Operator, self.pos + op.len()));
        }
        Some((TokenKind::Punctuation, self.pos + c.len_utf8()))
    }
}

impl<'a> Iterator for Scanner<'a> {
    type Item = LexToken<'a>;

    fn next(&mut self) -> Option<LexToken<'a>> {
        let skip = self
            .rest()
            .char_indices()
            .find(|(_, c)| !c.is_whitespace())
            .map(|(i, _)| i)?;
        self.pos += skip;
        let start = self.pos;
        let (kind, end) = self.next_token()?;
        debug_assert!(end > start, "zero-width token");
        self.pos = end;
        Some(LexToken {
            kind,
            span: start..end,
            text: &self.src[start..end],
        })
    }
}
