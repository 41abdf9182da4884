//! Complexity measurements over ground-truth Cypher queries: normalized
//! length, token count, and canonical term occurrence counts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetFile;
use crate::lexer::{lex, TokenKind};

/// Canonical Cypher terms to count, multi-word entries allowed. Matching is
/// longest-first over keyword tokens, so an "OPTIONAL MATCH" occurrence is
/// never also counted as "MATCH".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermSet {
    // each term as its uppercase word sequence, longest first
    terms: Vec<Vec<String>>,
}

pub const DEFAULT_TERMS: &[&str] = &[
    "MATCH", "OPTIONAL MATCH", "WHERE", "RETURN", "WITH", "UNWIND", "ORDER BY", "SKIP", "LIMIT",
    "CREATE", "MERGE", "DELETE", "DETACH DELETE", "SET", "REMOVE", "FOREACH", "CALL", "YIELD",
    "UNION", "CASE", "EXISTS", "COUNT", "DISTINCT",
];

impl TermSet {
    pub fn new<S: AsRef<str>>(terms: &[S]) -> Self {
        let mut terms: Vec<Vec<String>> = terms
            .iter()
            .map(|t| {
                t.as_ref()
                    .split_whitespace()
                    .map(|w| w.to_ascii_uppercase())
                    .collect()
            })
            .filter(|words: &Vec<String>| !words.is_empty())
            .collect();
        terms.sort();
        terms.dedup();
        // longest first so multi-word terms win over their prefixes
        terms.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        TermSet { terms }
    }

    pub fn canonical_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.join(" ")).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

impl Default for TermSet {
    fn default() -> Self {
        TermSet::new(DEFAULT_TERMS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CypherProfile {
    pub char_length: usize,
    pub token_length: usize,
    pub term_counts: BTreeMap<String, usize>,
    pub term_total: usize,
    /// true when the lexer had to recover from an unterminated string/comment
    pub lex_recovered: bool,
}

/// Collapses whitespace runs to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn profile(query: &str, term_set: &TermSet) -> CypherProfile {
    let out = lex(query);
    let significant: Vec<_> = out
        .tokens
        .iter()
        .filter(|t| !matches!(t.kind, TokenKind::Whitespace | TokenKind::Comment))
        .collect();

    let mut term_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut i = 0;
    while i < significant.len() {
        if significant[i].kind != TokenKind::Keyword {
            i += 1;
            continue;
        }
        let mut advanced = 1;
        for words in &term_set.terms {
            if matches_at(&significant, i, words) {
                *term_counts.entry(words.join(" ")).or_default() += 1;
                advanced = words.len();
                break;
            }
        }
        i += advanced;
    }

    let term_total = term_counts.values().sum();
    CypherProfile {
        char_length: normalize_whitespace(query).chars().count(),
        token_length: significant.len(),
        term_counts,
        term_total,
        lex_recovered: !out.issues.is_empty(),
    }
}

fn matches_at(tokens: &[&crate::lexer::CypherToken], at: usize, words: &[String]) -> bool {
    if at + words.len() > tokens.len() {
        return false;
    }
    words.iter().enumerate().all(|(j, w)| {
        let t = tokens[at + j];
        t.kind == TokenKind::Keyword && t.text.eq_ignore_ascii_case(w)
    })
}

/// One profile per record, keyed by record_id. Pure function of the input.
pub fn profile_dataset(
    file: &DatasetFile,
    term_set: &TermSet,
) -> BTreeMap<String, CypherProfile> {
    file.records()
        .iter()
        .map(|r| (r.record_id.clone(), profile(&r.cypher, term_set)))
        .collect()
}

/// Corpus-level histogram summary emitted by the `profile` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub records: usize,
    pub char_length_deciles: Vec<usize>,
    pub token_length_deciles: Vec<usize>,
    pub term_total_distribution: BTreeMap<usize, usize>,
    pub mean_term_total: f64,
}

pub fn summarize(profiles: &BTreeMap<String, CypherProfile>) -> ProfileSummary {
    let mut char_lengths: Vec<usize> = profiles.values().map(|p| p.char_length).collect();
    let mut token_lengths: Vec<usize> = profiles.values().map(|p| p.token_length).collect();
    char_lengths.sort_unstable();
    token_lengths.sort_unstable();

    let deciles = |sorted: &[usize]| -> Vec<usize> {
        if sorted.is_empty() {
            return Vec::new();
        }
        (0..=10)
            .map(|d| {
                let idx = (d * (sorted.len() - 1)) / 10;
                sorted[idx]
            })
            .collect()
    };

    let mut term_total_distribution: BTreeMap<usize, usize> = BTreeMap::new();
    let mut sum = 0usize;
    for p in profiles.values() {
        *term_total_distribution.entry(p.term_total).or_default() += 1;
        sum += p.term_total;
    }
    let mean = if profiles.is_empty() {
        0.0
    } else {
        sum as f64 / profiles.len() as f64
    };

    ProfileSummary {
        records: profiles.len(),
        char_length_deciles: deciles(&char_lengths),
        token_length_deciles: deciles(&token_lengths),
        term_total_distribution,
        mean_term_total: mean,
    }
}
