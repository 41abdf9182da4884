//! Hard-example selection strategies and baselines. Every strategy is a
//! deterministic function of (dataset content, SelectionSpec).

use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{DatasetFile, DatasetRecord, Split};
use crate::profile::CypherProfile;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("no record matches the hard-database or hard-source filters")]
    EmptyCandidateSet,
    #[error("no profile for record {0}")]
    MissingProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Original,
    RandomStratified,
    Complexity,
    Length,
    CypherTerms,
    ComplexityThenLength,
    ComplexityThenTerms,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Original,
        Strategy::RandomStratified,
        Strategy::Complexity,
        Strategy::Length,
        Strategy::CypherTerms,
        Strategy::ComplexityThenLength,
        Strategy::ComplexityThenTerms,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Original => "original",
            Strategy::RandomStratified => "random_stratified",
            Strategy::Complexity => "complexity",
            Strategy::Length => "length",
            Strategy::CypherTerms => "cypher_terms",
            Strategy::ComplexityThenLength => "complexity_then_length",
            Strategy::ComplexityThenTerms => "complexity_then_terms",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .iter()
            .find(|st| st.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthUnit {
    Chars,
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub strategy: Strategy,
    pub target_size: usize,
    pub group_cap: usize,
    pub stratum_size: usize,
    pub hard_databases: BTreeSet<String>,
    pub hard_sources: BTreeSet<String>,
    pub seed: u64,
    pub length_unit: LengthUnit,
}

impl Default for SelectionSpec {
    fn default() -> Self {
        SelectionSpec {
            strategy: Strategy::Complexity,
            target_size: 16_173,
            group_cap: 4_000,
            stratum_size: 2_755,
            hard_databases: ["recommendations", "companies", "neoflix"]
                .into_iter()
                .map(String::from)
                .collect(),
            hard_sources: [
                "functional_cypher",
                "synthetic_gemini",
                "text2cypher2023_train",
            ]
            .into_iter()
            .map(String::from)
            .collect(),
            seed: 0,
            length_unit: LengthUnit::Chars,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStats {
    pub available: usize,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionManifest {
    pub spec: SelectionSpec,
    pub dataset_hash: String,
    pub tool_version: String,
    /// unix seconds; excluded from determinism comparisons
    pub timestamp: u64,
    pub sampling: String,
    /// "target_size" when target_size bounded the result, "achievable" when
    /// filters/caps or the split size did
    pub active_bound: String,
    pub shortfall: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selected: Vec<String>,
    pub per_group_stats: BTreeMap<String, GroupStats>,
    pub manifest: SelectionManifest,
}

/// Sub-seed derivation: hash(seed, salt) so adding a group never perturbs
/// another group's sample.
fn sub_rng(seed: u64, salt: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(salt.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Uniform sample without replacement of `k` indices out of `n`, returned in
/// ascending order so chosen records keep stable source order.
fn sample_indices(n: usize, k: usize, seed: u64, salt: &str) -> Vec<usize> {
    if k >= n {
        return (0..n).collect();
    }
    let mut rng = sub_rng(seed, salt);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

fn train_records(file: &DatasetFile) -> Vec<&DatasetRecord> {
    file.records()
        .iter()
        .filter(|r| r.split == Split::Train)
        .collect()
}

fn make_manifest(spec: &SelectionSpec, file: &DatasetFile, achieved: usize) -> SelectionManifest {
    let shortfall = spec.target_size.saturating_sub(achieved);
    SelectionManifest {
        spec: spec.clone(),
        dataset_hash: file.content_hash(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        sampling: "uniform-without-replacement".to_string(),
        active_bound: if shortfall == 0 { "target_size" } else { "achievable" }.to_string(),
        shortfall,
    }
}

fn rank_key(profile: &CypherProfile, spec: &SelectionSpec, by_terms: bool) -> usize {
    if by_terms {
        profile.term_total
    } else {
        match spec.length_unit {
            LengthUnit::Chars => profile.char_length,
            LengthUnit::Tokens => profile.token_length,
        }
    }
}

/// Strategy dispatcher. `profiles` is only consulted by the rank-based and
/// combined strategies.
pub fn select(
    file: &DatasetFile,
    profiles: &BTreeMap<String, CypherProfile>,
    spec: &SelectionSpec,
) -> Result<SelectionResult, SelectionError> {
    match spec.strategy {
        Strategy::Original => Ok(select_original(file, spec)),
        Strategy::RandomStratified => Ok(select_random_stratified(file, spec)),
        Strategy::Complexity => select_complexity(file, spec),
        Strategy::Length | Strategy::CypherTerms => select_by_rank(file, profiles, spec),
        Strategy::ComplexityThenLength | Strategy::ComplexityThenTerms => {
            select_combined(file, profiles, spec)
        }
    }
}

/// Pass-through baseline: the whole train split in source order.
fn select_original(file: &DatasetFile, spec: &SelectionSpec) -> SelectionResult {
    let train = train_records(file);
    let selected: Vec<String> = train.iter().map(|r| r.record_id.clone()).collect();
    let mut per_group_stats: BTreeMap<String, GroupStats> = BTreeMap::new();
    for r in &train {
        let s = per_group_stats
            .entry(r.data_source.clone())
            .or_insert(GroupStats { available: 0, selected: 0 });
        s.available += 1;
        s.selected += 1;
    }
    let achieved = selected.len();
    let mut manifest = make_manifest(spec, file, achieved);
    // original ignores target_size; report it as fully achieved
    manifest.shortfall = 0;
    manifest.active_bound = "achievable".to_string();
    SelectionResult { selected, per_group_stats, manifest }
}

/// OR-filter over hard databases/sources, per-data_source cap, then a seeded
/// downsample if the capped union still exceeds target_size. Output order is
/// stable source order.
pub fn select_complexity(
    file: &DatasetFile,
    spec: &SelectionSpec,
) -> Result<SelectionResult, SelectionError> {
    let train = train_records(file);
    let candidates: Vec<&DatasetRecord> = train
        .into_iter()
        .filter(|r| {
            r.database_ref
                .as_deref()
                .is_some_and(|db| spec.hard_databases.contains(db))
                || spec.hard_sources.contains(&r.data_source)
        })
        .collect();
    if candidates.is_empty() {
        return Err(SelectionError::EmptyCandidateSet);
    }

    // group by data_source, preserving per-group source order
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in candidates.iter().enumerate() {
        groups.entry(&r.data_source).or_default().push(i);
    }

    let mut available: BTreeMap<String, usize> = BTreeMap::new();
    let mut kept: Vec<usize> = Vec::new();
    for (source, members) in &groups {
        available.insert(source.to_string(), members.len());
        let picked = sample_indices(
            members.len(),
            spec.group_cap.min(members.len()),
            spec.seed,
            &format!("group:{source}"),
        );
        kept.extend(picked.into_iter().map(|i| members[i]));
    }
    kept.sort_unstable();

    if kept.len() > spec.target_size {
        let picked = sample_indices(kept.len(), spec.target_size, spec.seed, "downsample");
        kept = picked.into_iter().map(|i| kept[i]).collect();
    }

    let mut per_group_stats: BTreeMap<String, GroupStats> = BTreeMap::new();
    for (source, avail) in available {
        per_group_stats.insert(source, GroupStats { available: avail, selected: 0 });
    }
    for &i in &kept {
        per_group_stats
            .get_mut(&candidates[i].data_source)
            .expect("group present")
            .selected += 1;
    }

    let selected: Vec<String> = kept.iter().map(|&i| candidates[i].record_id.clone()).collect();
    let manifest = make_manifest(spec, file, selected.len());
    Ok(SelectionResult { selected, per_group_stats, manifest })
}

/// Top-k of the train split by descending key (length or term count), ties
/// at the cutoff broken by ascending record_id.
pub fn select_by_rank(
    file: &DatasetFile,
    profiles: &BTreeMap<String, CypherProfile>,
    spec: &SelectionSpec,
) -> Result<SelectionResult, SelectionError> {
    let by_terms = spec.strategy == Strategy::CypherTerms;
    let train = train_records(file);
    let mut ranked: Vec<(usize, &DatasetRecord)> = Vec::with_capacity(train.len());
    for r in train {
        let p = profiles
            .get(&r.record_id)
            .ok_or_else(|| SelectionError::MissingProfile(r.record_id.clone()))?;
        ranked.push((rank_key(p, spec, by_terms), r));
    }
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.record_id.cmp(&b.1.record_id)));
    ranked.truncate(spec.target_size);

    let mut per_group_stats: BTreeMap<String, GroupStats> = BTreeMap::new();
    for r in file.records().iter().filter(|r| r.split == Split::Train) {
        per_group_stats
            .entry(r.data_source.clone())
            .or_insert(GroupStats { available: 0, selected: 0 })
            .available += 1;
    }
    for (_, r) in &ranked {
        per_group_stats
            .get_mut(&r.data_source)
            .expect("group present")
            .selected += 1;
    }

    let selected: Vec<String> = ranked.iter().map(|(_, r)| r.record_id.clone()).collect();
    let manifest = make_manifest(spec, file, selected.len());
    Ok(SelectionResult { selected, per_group_stats, manifest })
}

/// Complexity selection reordered by the secondary key, descending; ties by
/// ascending record_id. Selected set is identical to plain complexity.
pub fn select_combined(
    file: &DatasetFile,
    profiles: &BTreeMap<String, CypherProfile>,
    spec: &SelectionSpec,
) -> Result<SelectionResult, SelectionError> {
    let by_terms = spec.strategy == Strategy::ComplexityThenTerms;
    let base = select_complexity(file, spec)?;
    let mut keyed: Vec<(usize, String)> = Vec::with_capacity(base.selected.len());
    for id in base.selected {
        let p = profiles
            .get(&id)
            .ok_or_else(|| SelectionError::MissingProfile(id.clone()))?;
        keyed.push((rank_key(p, spec, by_terms), id));
    }
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(SelectionResult {
        selected: keyed.into_iter().map(|(_, id)| id).collect(),
        per_group_stats: base.per_group_stats,
        manifest: base.manifest,
    })
}

/// Baseline: per-data_source seeded sample of stratum_size, then a seeded
/// downsample of the union to target_size. Output order is stable source order.
pub fn select_random_stratified(file: &DatasetFile, spec: &SelectionSpec) -> SelectionResult {
    let train = train_records(file);
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in train.iter().enumerate() {
        groups.entry(&r.data_source).or_default().push(i);
    }

    let mut per_group_stats: BTreeMap<String, GroupStats> = BTreeMap::new();
    let mut kept: Vec<usize> = Vec::new();
    for (source, members) in &groups {
        per_group_stats.insert(
            source.to_string(),
            GroupStats { available: members.len(), selected: 0 },
        );
        let picked = sample_indices(
            members.len(),
            spec.stratum_size.min(members.len()),
            spec.seed,
            &format!("group:{source}"),
        );
        kept.extend(picked.into_iter().map(|i| members[i]));
    }
    kept.sort_unstable();

    if kept.len() > spec.target_size {
        let picked = sample_indices(kept.len(), spec.target_size, spec.seed, "downsample");
        kept = picked.into_iter().map(|i| kept[i]).collect();
    }

    for &i in &kept {
        per_group_stats
            .get_mut(&train[i].data_source)
            .expect("group present")
            .selected += 1;
    }

    let selected: Vec<String> = kept.iter().map(|&i| train[i].record_id.clone()).collect();
    let manifest = make_manifest(spec, file, selected.len());
    SelectionResult { selected, per_group_stats, manifest }
}

/// Nearest-rank percentile of the train split's data_source group sizes.
pub fn compute_stratum_size(file: &DatasetFile, percentile: f64) -> usize {
    assert!(percentile > 0.0 && percentile <= 1.0, "percentile in (0, 1]");
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for r in file.records().iter().filter(|r| r.split == Split::Train) {
        *sizes.entry(&r.data_source).or_default() += 1;
    }
    let mut sizes: Vec<usize> = sizes.into_values().collect();
    if sizes.is_empty() {
        return 0;
    }
    sizes.sort_unstable();
    let rank = (percentile * sizes.len() as f64).ceil() as usize;
    sizes[rank.clamp(1, sizes.len()) - 1]
}
