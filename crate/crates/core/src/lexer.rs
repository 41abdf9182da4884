//! Lossless Cypher lexer. Not a grammar: the goal is faithful token
//! boundaries so term counting ignores keywords inside strings and comments.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Keyword,
    Identifier,
    LiteralString,
    LiteralNumber,
    Symbol,
    Comment,
    Whitespace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CypherToken<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    pub offset: usize,
}

/// Recoverable lexing problems; the lexer closes the construct at
/// end-of-input and keeps going.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LexIssue {
    UnterminatedString { offset: usize },
    UnterminatedComment { offset: usize },
}

#[derive(Debug, Clone, Default)]
pub struct LexOutput<'a> {
    pub tokens: Vec<CypherToken<'a>>,
    pub issues: Vec<LexIssue>,
}

/// Words the lexer classifies as keywords, case-insensitively. A superset of
/// any reasonable term set; membership here only affects token kind, never
/// token boundaries.
const KEYWORD_WORDS: &[&str] = &[
    "ALL", "AND", "ANY", "AS", "ASC", "ASCENDING", "BY", "CALL", "CASE", "CONSTRAINT", "CONTAINS",
    "COUNT", "CREATE", "DELETE", "DESC", "DESCENDING", "DETACH", "DISTINCT", "DROP", "ELSE", "END",
    "ENDS", "EXISTS", "FOREACH", "IN", "INDEX", "IS", "LIMIT", "MATCH", "MERGE", "NONE", "NOT",
    "ON", "OPTIONAL", "OR", "ORDER", "REDUCE", "REMOVE", "RETURN", "SET", "SINGLE", "SKIP",
    "STARTS", "THEN", "UNION", "UNWIND", "USING", "WHEN", "WHERE", "WITH", "XOR", "YIELD",
];

fn is_keyword_word(word: &str) -> bool {
    let upper = word.to_ascii_uppercase();
    KEYWORD_WORDS.binary_search(&upper.as_str()).is_ok()
}

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Tokenizes `query` losslessly: concatenating token texts in order always
/// reproduces the input byte-for-byte.
pub fn lex(query: &str) -> LexOutput<'_> {
    let bytes = query.as_bytes();
    let mut out = LexOutput::default();
    let mut pos = 0;

    while pos < bytes.len() {
        let rest = &query[pos..];
        let c = rest.chars().next().expect("non-empty rest");
        let start = pos;

        let (kind, len) = if c.is_whitespace() {
            (TokenKind::Whitespace, scan_while(rest, char::is_whitespace))
        } else if rest.starts_with("//") {
            let len = rest.find('\n').unwrap_or(rest.len());
            (TokenKind::Comment, len)
        } else if rest.starts_with("/*") {
            match rest[2..].find("*/") {
                Some(i) => (TokenKind::Comment, 2 + i + 2),
                None => {
                    out.issues.push(LexIssue::UnterminatedComment { offset: start });
                    (TokenKind::Comment, rest.len())
                }
            }
        } else if c == '\'' || c == '"' {
            match scan_quoted(rest, c, true) {
                Some(len) => (TokenKind::LiteralString, len),
                None => {
                    out.issues.push(LexIssue::UnterminatedString { offset: start });
                    (TokenKind::LiteralString, rest.len())
                }
            }
        } else if c == '`' {
            match scan_quoted(rest, '`', false) {
                Some(len) => (TokenKind::Identifier, len),
                None => {
                    out.issues.push(LexIssue::UnterminatedString { offset: start });
                    (TokenKind::Identifier, rest.len())
                }
            }
        } else if c.is_ascii_digit() {
            (TokenKind::LiteralNumber, scan_number(rest))
        } else if is_word_start(c) {
            let len = scan_while(rest, is_word_char);
            let kind = if is_keyword_word(&rest[..len]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            };
            (kind, len)
        } else {
            (TokenKind::Symbol, c.len_utf8())
        };

        out.tokens.push(CypherToken {
            kind,
            text: &query[start..start + len],
            offset: start,
        });
        pos += len;
    }
    out
}

fn scan_while(s: &str, pred: impl Fn(char) -> bool) -> usize {
    s.char_indices()
        .find(|&(_, c)| !pred(c))
        .map(|(i, _)| i)
        .unwrap_or(s.len())
}

/// Length of a quoted token including both quotes, or None if unterminated.
/// Backslash escapes apply inside '…' and "…" but not `…`.
fn scan_quoted(s: &str, quote: char, escapes: bool) -> Option<usize> {
    let mut chars = s.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        if escapes && c == '\\' {
            chars.next();
        } else if c == quote {
            return Some(i + c.len_utf8());
        }
    }
    None
}

fn scan_number(s: &str) -> usize {
    // digits, optional fraction, optional exponent; hex literals pass
    // through as digit+word-char runs
    let mut len = scan_while(s, |c| c.is_ascii_alphanumeric() || c == '_');
    let rest = &s[len..];
    if rest.starts_with('.') && rest[1..].starts_with(|c: char| c.is_ascii_digit()) {
        len += 1 + scan_while(&rest[1..], |c| c.is_ascii_alphanumeric() || c == '_');
    }
    len
}
