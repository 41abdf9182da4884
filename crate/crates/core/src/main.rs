//! cypherprune CLI: validate, profile, prune, evaluate, report, fixture, run.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 executor error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cypherprune::config::RunConfig;
use cypherprune::dataset;
use cypherprune::execution;
use cypherprune::metrics;
use cypherprune::pipeline::{self, StageError};
use cypherprune::profile::{profile_dataset, summarize};
use cypherprune::report::{self, ReportBundle};

#[derive(Parser)]
#[command(name = "cypherprune", version, about = "Text2Cypher dataset pruning and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// run config file (TOML); flags override file values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset file and print a validation report
    Validate {
        file: PathBuf,
        /// abort on the first invalid line instead of reporting
        #[arg(long)]
        strict: bool,
    },
    /// Emit per-record Cypher profiles and corpus histograms
    Profile {
        file: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// write per-record profiles (JSONL) here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Select a hard-example subset and write the pruned dataset + manifest
    Prune {
        file: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        target_size: Option<usize>,
        #[arg(long)]
        group_cap: Option<usize>,
        #[arg(long)]
        stratum_size: Option<usize>,
        #[arg(long)]
        stratum_percentile: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// comma-separated database_ref values for the complexity filter
        #[arg(long, value_delimiter = ',')]
        hard_databases: Option<Vec<String>>,
        /// comma-separated data_source values for the complexity filter
        #[arg(long, value_delimiter = ',')]
        hard_sources: Option<Vec<String>>,
        /// "chars" or "tokens"
        #[arg(long)]
        length_unit: Option<String>,
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
        /// run name used for output file prefixes
        #[arg(long, default_value = "prune")]
        name: String,
    },
    /// Score predictions against ground truth
    Evaluate {
        #[command(subcommand)]
        mode: EvaluateMode,
    },
    /// Build comparison tables across runs
    Report {
        #[command(subcommand)]
        mode: ReportMode,
    },
    /// Record a replay fixture from a live database
    Fixture {
        #[command(subcommand)]
        mode: FixtureMode,
    },
    /// Run the full pipeline (validate → profile → prune → evaluate)
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "run")]
        name: String,
    },
}

#[derive(Subcommand)]
enum EvaluateMode {
    /// Lexical scoring: Google-BLEU and Exact Match on query text
    Translation {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// also write a CSV per-group table here
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Execution scoring: run both queries and compare canonical outputs
    Execution {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// replay fixture path
        #[arg(long, conflicts_with = "live")]
        replay: Option<PathBuf>,
        /// execute against a live database (GRAPHDB_URI / executor config)
        #[arg(long)]
        live: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum ReportMode {
    /// Combine run reports into one comparison table (CSV + aligned text)
    Compare {
        /// report files, each written by `prune` or `run`
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum FixtureMode {
    /// Execute every ground-truth query once and store the outcomes
    Record {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, StageError> {
    match &args.config {
        Some(path) => Ok(RunConfig::load(path)?),
        None => Ok(RunConfig::default()),
    }
}

fn data_err(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn executor_err(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("executor error: {e}");
    ExitCode::from(3)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            if e.is_executor() {
                executor_err(e)
            } else {
                data_err(e)
            }
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, StageError> {
    match cli.command {
        Command::Validate { file, strict } => {
            let loaded = dataset::load_dataset(&file, strict)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&loaded.report).expect("report serializes")
            );
            if loaded.report.invalid > 0 {
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Profile { file, config, out } => {
            let config = load_config(&config)?;
            let loaded = dataset::load_dataset(&file, config.strict)?;
            let profiles = profile_dataset(&loaded.file, &config.term_set());
            if let Some(out) = out {
                let mut lines = String::new();
                for (id, p) in &profiles {
                    let obj = serde_json::json!({ "record_id": id, "profile": p });
                    lines.push_str(&serde_json::to_string(&obj).expect("profile serializes"));
                    lines.push('\n');
                }
                std::fs::write(&out, lines)?;
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&summarize(&profiles)).expect("summary serializes")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Prune {
            file,
            config,
            strategy,
            target_size,
            group_cap,
            stratum_size,
            stratum_percentile,
            seed,
            hard_databases,
            hard_sources,
            length_unit,
            out_dir,
            name,
        } => {
            let mut config = load_config(&config)?;
            config.dataset.train = Some(file);
            config.out_dir = out_dir;
            let sel = &mut config.selection;
            if let Some(v) = strategy {
                sel.strategy = v;
            }
            if let Some(v) = target_size {
                sel.target_size = v;
            }
            if let Some(v) = group_cap {
                sel.group_cap = v;
            }
            if let Some(v) = stratum_size {
                sel.stratum_size = Some(v);
            }
            if let Some(v) = stratum_percentile {
                sel.stratum_size = None;
                sel.stratum_percentile = Some(v);
            }
            if let Some(v) = seed {
                sel.seed = v;
            }
            if let Some(v) = hard_databases {
                sel.hard_databases = v;
            }
            if let Some(v) = hard_sources {
                sel.hard_sources = v;
            }
            if let Some(v) = length_unit {
                sel.length_unit = v;
            }
            let output =
                pipeline::run_pipeline(&config, &name).map_err(|e| e.source)?;
            println!(
                "wrote {} ({} records) and {}",
                output.pruned_path.display(),
                output.bundle.selection_manifest.spec.target_size
                    - output.bundle.selection_manifest.shortfall,
                output.manifest_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { mode } => match mode {
            EvaluateMode::Translation { dataset: dataset_path, predictions, csv } => {
                let file = dataset::load_dataset(&dataset_path, false)?.file;
                let preds = pipeline::load_predictions(&predictions)?;
                let pairs = pipeline::build_pairs(&preds, &file)?;
                let by_source: BTreeMap<String, String> = file
                    .records()
                    .iter()
                    .map(|r| (r.record_id.clone(), r.data_source.clone()))
                    .collect();
                let scores = metrics::grouped_report(&pairs, &by_source, 4)?;
                if let Some(csv_path) = csv {
                    let mut out = String::from("group,google_bleu,exact_match,n\n");
                    out.push_str(&format!(
                        "all,{:.4},{:.4},{}\n",
                        scores.all.google_bleu, scores.all.exact_match, scores.all.n
                    ));
                    for (group, s) in &scores.groups {
                        out.push_str(&format!(
                            "{group},{:.4},{:.4},{}\n",
                            s.google_bleu, s.exact_match, s.n
                        ));
                    }
                    std::fs::write(&csv_path, out)?;
                }
                println!(
                    "{}",
                    serde_json::to_string_pretty(&scores).expect("scores serializes")
                );
                Ok(ExitCode::SUCCESS)
            }
            EvaluateMode::Execution { dataset: dataset_path, predictions, replay, live, config } => {
                let mut config = load_config(&config)?;
                if let Some(fixture) = replay {
                    config.executor.mode = "replay".to_string();
                    config.executor.fixture = Some(fixture);
                } else if live {
                    config.executor.mode = "live".to_string();
                }
                let file = dataset::load_dataset(&dataset_path, false)?.file;
                let preds = pipeline::load_predictions(&predictions)?;
                let pairs = pipeline::build_pairs(&preds, &file)?;
                let binding = config.executor.to_binding()?;
                let executor = binding.open()?;
                let result = execution::execution_scores(&pairs, executor.as_ref(), &file)?;
                println!(
                    "{}",
                    serde_json::to_string_pretty(&result).expect("result serializes")
                );
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Report { mode } => match mode {
            ReportMode::Compare { reports, out } => {
                if reports.len() < 2 {
                    return Err(StageError::MissingInput(
                        "report compare needs at least 2 report files".into(),
                    ));
                }
                let mut bundles = Vec::new();
                for path in &reports {
                    let bundle = ReportBundle::load(path)?;
                    if !report::scores_consistent(&bundle) {
                        return Err(StageError::MissingInput(format!(
                            "report {} fails its aggregation self-check",
                            path.display()
                        )));
                    }
                    bundles.push(bundle);
                }
                let text = report::comparison_text(&bundles);
                print!("{text}");
                if let Some(out) = out {
                    std::fs::write(out.with_extension("csv"), report::comparison_csv(&bundles))?;
                    std::fs::write(out.with_extension("txt"), text)?;
                }
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Fixture { mode } => match mode {
            FixtureMode::Record { dataset: dataset_path, out, config } => {
                let mut config = load_config(&config)?;
                config.executor.mode = "live".to_string();
                let file = dataset::load_dataset(&dataset_path, false)?.file;
                let binding = config.executor.to_binding()?;
                let executor = binding.open()?;
                let queries: Vec<(String, String)> = file
                    .records()
                    .iter()
                    .filter_map(|r| {
                        r.database_ref
                            .as_ref()
                            .map(|db| (db.clone(), r.cypher.clone()))
                    })
                    .collect();
                let path = execution::record_fixture(&queries, executor.as_ref(), &out)?;
                println!("recorded {} queries into {}", queries.len(), path.display());
                Ok(ExitCode::SUCCESS)
            }
        },
        Command::Run { config, name } => {
            let config = RunConfig::load(&config)?;
            let output = pipeline::run_pipeline(&config, &name).map_err(|e| e.source)?;
            println!("report written to {}", output.report_path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
