//! Translation-based (lexical) evaluation: generated-query post-processing,
//! Google-BLEU (corpus GLEU), and Exact Match.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::normalize_whitespace;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no evaluation pairs provided")]
    EmptyInput,
    #[error("record {0} has no group mapping")]
    UnknownRecordId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub record_id: String,
    pub generated: String,
    pub reference: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexicalScores {
    pub google_bleu: f64,
    pub exact_match: f64,
    pub n: usize,
}

/// Strips model wrapper text from a generated query: a leading "cypher:"
/// prefix (case-insensitive), surrounding code fences with an optional
/// language tag, and collapses whitespace. Idempotent.
pub fn postprocess(generated: &str) -> String {
    let mut text = generated.trim().to_string();
    loop {
        let before = text.clone();
        text = strip_fences(&text).trim().to_string();
        if let Some(rest) = strip_prefix_ci(&text, "cypher:") {
            text = rest.trim_start().to_string();
        }
        if text == before {
            break;
        }
    }
    normalize_whitespace(&text)
}

fn strip_prefix_ci<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    if text.len() >= prefix.len() && text[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&text[prefix.len()..])
    } else {
        None
    }
}

fn strip_fences(text: &str) -> &str {
    let Some(rest) = text.strip_prefix("```") else {
        return text;
    };
    // drop the optional language tag on the fence line
    let rest = match rest.find('\n') {
        Some(i) if rest[..i].trim().chars().all(|c| c.is_alphanumeric()) => &rest[i + 1..],
        _ => rest,
    };
    rest.trim_end().strip_suffix("```").unwrap_or(rest)
}

/// Whitespace-splits after isolating punctuation, keeping quoted string
/// literals whole.
pub fn tokenize_for_bleu(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\'' || c == '"' {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            let mut literal = String::from(c);
            let mut escaped = false;
            for inner in chars.by_ref() {
                literal.push(inner);
                if escaped {
                    escaped = false;
                } else if inner == '\\' {
                    escaped = true;
                } else if inner == c {
                    break;
                }
            }
            tokens.push(literal);
        } else if c.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if c.is_alphanumeric() || c == '_' {
            word.push(c);
        } else {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(c.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Corpus GLEU over pre-tokenized sequences: clipped n-gram matches and
/// totals summed over all pairs for n = 1..=max_n, score =
/// min(matches/generated_total, matches/reference_total).
pub fn gleu_from_tokens<T: AsRef<[String]>>(pairs: &[(T, T)], max_n: usize) -> f64 {
    let mut matches = 0usize;
    let mut gen_total = 0usize;
    let mut ref_total = 0usize;
    for (generated, reference) in pairs {
        let (generated, reference) = (generated.as_ref(), reference.as_ref());
        for n in 1..=max_n {
            let gen_grams = ngram_counts(generated, n);
            let ref_grams = ngram_counts(reference, n);
            for (gram, count) in &gen_grams {
                matches += (*count).min(ref_grams.get(gram).copied().unwrap_or(0));
            }
            gen_total += generated.len().saturating_sub(n - 1);
            ref_total += reference.len().saturating_sub(n - 1);
        }
    }
    if gen_total == 0 && ref_total == 0 {
        return 1.0; // all-empty corpus: vacuously perfect
    }
    let precision = if gen_total == 0 { 0.0 } else { matches as f64 / gen_total as f64 };
    let recall = if ref_total == 0 { 0.0 } else { matches as f64 / ref_total as f64 };
    precision.min(recall)
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

fn pair_tokens(pair: &EvalPair) -> (Vec<String>, Vec<String>) {
    (
        tokenize_for_bleu(&postprocess(&pair.generated)),
        tokenize_for_bleu(&normalize_whitespace(&pair.reference)),
    )
}

pub fn google_bleu(pairs: &[EvalPair], max_n: usize) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let token_pairs: Vec<(Vec<String>, Vec<String>)> = pairs.iter().map(pair_tokens).collect();
    Ok(gleu_from_tokens(&token_pairs, max_n))
}

/// Fraction of pairs whose postprocessed generation equals the
/// whitespace-normalized reference, case-sensitively.
pub fn exact_match(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = pairs
        .iter()
        .filter(|p| postprocess(&p.generated) == normalize_whitespace(&p.reference))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

pub fn lexical_scores(pairs: &[EvalPair], max_n: usize) -> Result<LexicalScores, MetricsError> {
    Ok(LexicalScores {
        google_bleu: google_bleu(pairs, max_n)?,
        exact_match: exact_match(pairs)?,
        n: pairs.len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupedScores {
    pub all: LexicalScores,
    pub groups: BTreeMap<String, LexicalScores>,
}

/// Per-group scores plus an "all" row computed over the union (micro, not a
/// mean of group rows).
pub fn grouped_report(
    pairs: &[EvalPair],
    grouping: &BTreeMap<String, String>,
    max_n: usize,
) -> Result<GroupedScores, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut by_group: BTreeMap<&str, Vec<EvalPair>> = BTreeMap::new();
    for pair in pairs {
        let key = grouping
            .get(&pair.record_id)
            .ok_or_else(|| MetricsError::UnknownRecordId(pair.record_id.clone()))?;
        by_group.entry(key).or_default().push(pair.clone());
    }
    let mut groups = BTreeMap::new();
    for (key, members) in by_group {
        groups.insert(key.to_string(), lexical_scores(&members, max_n)?);
    }
    Ok(GroupedScores {
        all: lexical_scores(pairs, max_n)?,
        groups,
    })
}
