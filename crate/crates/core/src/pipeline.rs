//! End-to-end pipeline: validate → profile → prune → (optional) evaluate,
//! with per-stage error attribution and deterministic outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::dataset::{self, DatasetError, DatasetFile};
use crate::execution::{self, ExecError};
use crate::metrics::{self, EvalPair, MetricsError};
use crate::profile::{profile_dataset, summarize, CypherProfile};
use crate::report::ReportBundle;
use crate::selection::{self, SelectionError};

#[derive(Debug, Error)]
#[error("stage {stage}: {source}")]
pub struct PipelineError {
    pub stage: &'static str,
    #[source]
    pub source: StageError,
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl StageError {
    /// Exit-code class: 3 for executor problems, 2 for everything data-side.
    pub fn is_executor(&self) -> bool {
        matches!(self, StageError::Exec(_))
    }
}

fn stage<E: Into<StageError>>(name: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError {
        stage: name,
        source: e.into(),
    }
}

/// One prediction line: {"record_id": ..., "generated": ...}; "instance_id"
/// is accepted as an alias for record_id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(alias = "instance_id")]
    pub record_id: String,
    pub generated: String,
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, StageError> {
    if !path.exists() {
        return Err(StageError::MissingInput(format!(
            "predictions file {}",
            path.display()
        )));
    }
    let contents = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line).map_err(|e| {
            StageError::MissingInput(format!("predictions line {}: {e}", idx + 1))
        })?;
        out.push(p);
    }
    Ok(out)
}

/// Joins predictions to their ground-truth Cypher by record_id.
pub fn build_pairs(
    predictions: &[Prediction],
    dataset: &DatasetFile,
) -> Result<Vec<EvalPair>, StageError> {
    let by_id: BTreeMap<&str, &str> = dataset
        .records()
        .iter()
        .map(|r| (r.record_id.as_str(), r.cypher.as_str()))
        .collect();
    predictions
        .iter()
        .map(|p| {
            by_id
                .get(p.record_id.as_str())
                .map(|reference| EvalPair {
                    record_id: p.record_id.clone(),
                    generated: p.generated.clone(),
                    reference: reference.to_string(),
                })
                .ok_or_else(|| {
                    StageError::MissingInput(format!(
                        "prediction for unknown record_id {}",
                        p.record_id
                    ))
                })
        })
        .collect()
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub bundle: ReportBundle,
    pub pruned_path: PathBuf,
    pub manifest_path: PathBuf,
    pub report_path: PathBuf,
}

/// Runs the whole flow for one strategy and writes pruned dataset, manifest,
/// and report under `config.out_dir`.
pub fn run_pipeline(config: &RunConfig, run_name: &str) -> Result<PipelineOutput, PipelineError> {
    fs::create_dir_all(&config.out_dir).map_err(stage("setup"))?;

    // validate
    let train_path = config
        .dataset
        .train
        .as_ref()
        .ok_or_else(|| stage("validate")(StageError::MissingInput("dataset.train path".into())))?;
    let loaded =
        dataset::load_dataset(train_path, config.strict).map_err(stage("validate"))?;
    let file = loaded.file;

    // profile
    let term_set = config.term_set();
    let profiles = profile_dataset(&file, &term_set);
    let profile_summary = summarize(&profiles);

    // prune
    let computed_stratum = config
        .selection
        .stratum_percentile
        .map(|p| selection::compute_stratum_size(&file, p));
    let spec = config
        .selection
        .to_spec(computed_stratum)
        .map_err(stage("prune"))?;
    let result = selection::select(&file, &profiles, &spec).map_err(stage("prune"))?;

    let selected_records: Vec<_> = result
        .selected
        .iter()
        .map(|id| file.record_by_id(id).expect("selected id exists").clone())
        .collect();
    let pruned_path = config.out_dir.join(format!("{run_name}.pruned.jsonl"));
    dataset::write_dataset(&selected_records, &pruned_path).map_err(stage("prune"))?;

    let manifest_path = config.out_dir.join(format!("{run_name}.manifest.json"));
    let manifest_json = serde_json::json!({
        "manifest": result.manifest,
        "per_group_stats": result.per_group_stats,
    });
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest_json).expect("manifest serializes"),
    )
    .map_err(stage("prune"))?;

    let selected_mean_term_total = mean_term_total(&result.selected, &profiles);

    // evaluate (optional)
    let mut translation = None;
    let mut execution_scores = None;
    let mut execution_coverage = None;
    if config.evaluate {
        let predictions_path = config.dataset.predictions.as_ref().ok_or_else(|| {
            stage("evaluate")(StageError::MissingInput("dataset.predictions path".into()))
        })?;
        let eval_dataset = match &config.dataset.test {
            Some(test_path) => {
                dataset::load_dataset(test_path, config.strict)
                    .map_err(stage("evaluate"))?
                    .file
            }
            None => file.clone(),
        };
        let predictions = load_predictions(predictions_path).map_err(stage("evaluate"))?;
        let pairs = build_pairs(&predictions, &eval_dataset).map_err(stage("evaluate"))?;
        let grouping: BTreeMap<String, String> = eval_dataset
            .records()
            .iter()
            .map(|r| (r.record_id.clone(), r.data_source.clone()))
            .collect();
        translation = Some(
            metrics::grouped_report(&pairs, &grouping, 4).map_err(stage("evaluate"))?,
        );

        if config.executor.fixture.is_some() || config.executor.mode == "live" {
            let binding = config.executor.to_binding().map_err(stage("evaluate"))?;
            let executor = binding.open().map_err(stage("evaluate"))?;
            let report = execution::execution_scores(&pairs, executor.as_ref(), &eval_dataset)
                .map_err(stage("evaluate"))?;
            execution_coverage = Some(report.coverage);
            execution_scores = Some(metrics::GroupedScores {
                all: report.scores,
                groups: BTreeMap::new(),
            });
        }
    }

    let bundle = ReportBundle {
        run_name: run_name.to_string(),
        validation: loaded.report,
        profile_summary,
        selection_manifest: result.manifest,
        selected_mean_term_total,
        translation,
        execution: execution_scores,
        execution_coverage,
    };
    let report_path = config.out_dir.join(format!("{run_name}.report.json"));
    bundle.save(&report_path).map_err(stage("report"))?;

    Ok(PipelineOutput {
        bundle,
        pruned_path,
        manifest_path,
        report_path,
    })
}

pub fn mean_term_total(ids: &[String], profiles: &BTreeMap<String, CypherProfile>) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let sum: usize = ids
        .iter()
        .filter_map(|id| profiles.get(id))
        .map(|p| p.term_total)
        .sum();
    sum as f64 / ids.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DatasetPaths, SelectionConfig};
    use std::io::Write;

    fn toy_dataset(dir: &Path, n: usize) -> PathBuf {
        let path = dir.join("train.jsonl");
        let mut f = fs::File::create(&path).unwrap();
        for i in 0..n {
            let clauses = " WITH x".repeat(i % 5);
            writeln!(
                f,
                r#"{{"instance_id":"r{i:03}","question":"q{i}","schema":"","cypher":"MATCH (n{i}){clauses} RETURN n{i}","data_source":"src{}"}}"#,
                i % 2
            )
            .unwrap();
        }
        path
    }

    fn toy_config(dir: &Path, strategy: &str, target: usize) -> RunConfig {
        RunConfig {
            dataset: DatasetPaths {
                train: Some(toy_dataset(dir, 20)),
                test: None,
                predictions: None,
            },
            selection: SelectionConfig {
                strategy: strategy.to_string(),
                target_size: target,
                seed: 11,
                ..Default::default()
            },
            out_dir: dir.join("out"),
            ..Default::default()
        }
    }

    #[test]
    fn length_strategy_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let config = toy_config(dir.path(), "length", 8);
        let output = run_pipeline(&config, "toy").unwrap();
        let pruned = dataset::load_dataset(&output.pruned_path, true).unwrap();
        assert_eq!(pruned.file.len(), 8);
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&output.manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["manifest"]["spec"]["strategy"], "length");
        assert_eq!(manifest["manifest"]["spec"]["seed"], 11);
    }

    #[test]
    fn missing_predictions_is_a_named_stage_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = toy_config(dir.path(), "length", 8);
        config.evaluate = true;
        let err = run_pipeline(&config, "toy").unwrap_err();
        assert_eq!(err.stage, "evaluate");
        assert!(err.to_string().contains("predictions"));
    }

    #[test]
    fn pipeline_is_deterministic_modulo_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        let config = toy_config(dir.path(), "random_stratified", 8);
        let a = run_pipeline(&config, "runA").unwrap();
        let b = run_pipeline(&config, "runB").unwrap();
        assert_eq!(
            fs::read(&a.pruned_path).unwrap(),
            fs::read(&b.pruned_path).unwrap()
        );
        let strip = |path: &Path| {
            let mut v: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
            v["manifest"]["timestamp"] = serde_json::json!(0);
            serde_json::to_string(&v).unwrap()
        };
        assert_eq!(strip(&a.manifest_path), strip(&b.manifest_path));
    }

    #[test]
    fn predictions_join_and_unknown_id() {
        let dir = tempfile::tempdir().unwrap();
        let train = toy_dataset(dir.path(), 3);
        let file = dataset::load_dataset(&train, true).unwrap().file;
        let preds = vec![Prediction {
            record_id: "r000".into(),
            generated: "RETURN 1".into(),
        }];
        let pairs = build_pairs(&preds, &file).unwrap();
        assert_eq!(pairs[0].reference, "MATCH (n0) RETURN n0");

        let bad = vec![Prediction {
            record_id: "ghost".into(),
            generated: "RETURN 1".into(),
        }];
        assert!(build_pairs(&bad, &file).is_err());
    }
}
