//! Report bundle and run-comparison tables (CSV + aligned text).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ValidationReport;
use crate::execution::CoverageStats;
use crate::metrics::GroupedScores;
use crate::profile::ProfileSummary;
use crate::selection::SelectionManifest;

/// Everything one pipeline run produces, re-derivable from the per-stage
/// files it is assembled from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub run_name: String,
    pub validation: ValidationReport,
    pub profile_summary: ProfileSummary,
    pub selection_manifest: SelectionManifest,
    pub selected_mean_term_total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<GroupedScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<GroupedScores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_coverage: Option<CoverageStats>,
}

impl ReportBundle {
    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let raw = fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(std::io::Error::other)
    }

    pub fn save(&self, path: &Path) -> Result<(), std::io::Error> {
        let raw = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(path, raw)
    }
}

const COLUMNS: [&str; 4] = [
    "gleu_translation",
    "em_translation",
    "gleu_execution",
    "em_execution",
];

fn cells(report: &ReportBundle) -> [Option<f64>; 4] {
    [
        report.translation.as_ref().map(|t| t.all.google_bleu),
        report.translation.as_ref().map(|t| t.all.exact_match),
        report.execution.as_ref().map(|e| e.all.google_bleu),
        report.execution.as_ref().map(|e| e.all.exact_match),
    ]
}

fn render_cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "n/a".to_string(),
    }
}

/// Rows = run names, columns = translation/execution GLEU and Exact Match.
/// Missing score sections render as "n/a", never 0.
pub fn comparison_csv(reports: &[ReportBundle]) -> String {
    let mut out = format!("run,{}\n", COLUMNS.join(","));
    for report in reports {
        let row: Vec<String> = cells(report).into_iter().map(render_cell).collect();
        out.push_str(&format!("{},{}\n", report.run_name, row.join(",")));
    }
    out
}

pub fn comparison_text(reports: &[ReportBundle]) -> String {
    let name_width = reports
        .iter()
        .map(|r| r.run_name.len())
        .chain(["run".len()])
        .max()
        .unwrap_or(3);
    let col_width = COLUMNS.iter().map(|c| c.len()).max().unwrap_or(8);
    let mut out = format!("{:<name_width$}", "run");
    for col in COLUMNS {
        out.push_str(&format!("  {col:>col_width$}"));
    }
    out.push('\n');
    for report in reports {
        out.push_str(&format!("{:<name_width$}", report.run_name));
        for cell in cells(report) {
            out.push_str(&format!("  {:>col_width$}", render_cell(cell)));
        }
        out.push('\n');
    }
    out
}

/// Aggregation check: per-record score files must re-derive the stored
/// table values. Used by tests and the `report` subcommand's self-check.
pub fn scores_consistent(report: &ReportBundle) -> bool {
    let check = |scores: &GroupedScores| {
        let n: usize = scores.groups.values().map(|g| g.n).sum();
        n == scores.all.n
    };
    report.translation.as_ref().map_or(true, check)
        && report.execution.as_ref().map_or(true, check)
}

/// Per-group availability table for the selection stage, keyed for
/// deterministic output.
pub fn per_group_table(manifest_groups: &BTreeMap<String, crate::selection::GroupStats>) -> String {
    let mut out = String::from("group,available,selected\n");
    for (group, stats) in manifest_groups {
        out.push_str(&format!("{group},{},{}\n", stats.available, stats.selected));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::LexicalScores;
    use crate::selection::{SelectionSpec, SelectionManifest};

    fn bundle(name: &str, translation: Option<(f64, f64)>, execution: Option<(f64, f64)>) -> ReportBundle {
        let wrap = |pair: (f64, f64)| GroupedScores {
            all: LexicalScores { google_bleu: pair.0, exact_match: pair.1, n: 4 },
            groups: BTreeMap::from([(
                "src".to_string(),
                LexicalScores { google_bleu: pair.0, exact_match: pair.1, n: 4 },
            )]),
        };
        ReportBundle {
            run_name: name.to_string(),
            validation: Default::default(),
            profile_summary: crate::profile::summarize(&BTreeMap::new()),
            selection_manifest: SelectionManifest {
                spec: SelectionSpec::default(),
                dataset_hash: "x".into(),
                tool_version: "0".into(),
                timestamp: 0,
                sampling: "uniform-without-replacement".into(),
                active_bound: "target_size".into(),
                shortfall: 0,
            },
            selected_mean_term_total: 0.0,
            translation: translation.map(wrap),
            execution: execution.map(wrap),
            execution_coverage: None,
        }
    }

    #[test]
    fn two_runs_four_columns() {
        let reports = [
            bundle("original", Some((0.75, 0.36)), Some((0.25, 0.27))),
            bundle("random", Some((0.69, 0.20)), Some((0.21, 0.25))),
        ];
        let csv = comparison_csv(&reports);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0].split(',').count(), 5);
        assert!(lines[1].starts_with("original,0.7500,0.3600,0.2500,0.2700"));
    }

    #[test]
    fn missing_execution_renders_na() {
        let reports = [bundle("translation_only", Some((0.5, 0.5)), None)];
        let csv = comparison_csv(&reports);
        assert!(csv.contains("0.5000,0.5000,n/a,n/a"));
        let text = comparison_text(&reports);
        assert!(text.contains("n/a"));
    }

    #[test]
    fn table_values_pass_through_exactly() {
        let runs = [
            bundle("a", Some((0.1111, 0.2222)), Some((0.3333, 0.4444))),
            bundle("b", Some((0.5555, 0.6666)), None),
            bundle("c", None, Some((0.7777, 0.8888))),
        ];
        let csv = comparison_csv(&runs);
        assert!(csv.contains("a,0.1111,0.2222,0.3333,0.4444"));
        assert!(csv.contains("b,0.5555,0.6666,n/a,n/a"));
        assert!(csv.contains("c,n/a,n/a,0.7777,0.8888"));
    }

    #[test]
    fn aggregation_check() {
        let good = bundle("ok", Some((0.5, 0.5)), None);
        assert!(scores_consistent(&good));
        let mut bad = good.clone();
        bad.translation.as_mut().unwrap().all.n = 99;
        assert!(!scores_consistent(&bad));
    }
}
