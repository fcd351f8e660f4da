//! The `analyze` and `validate-input` verbs.

use std::path::{Path, PathBuf};

use invalid_iv::methods::{check_capability, run_method, MethodSpec, PreparedInput, RunContext};
use invalid_iv::model::load_summary_stats;
use invalid_iv::{EstimateReport, IVDataset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, InputKind};
use crate::error::CliError;
use crate::forest::{forest_csv, forest_rows, forest_svg, ForestRow};
use crate::input::{read_individual, read_summary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub kind: InputKind,
    pub n: Option<usize>,
    pub p: usize,
    /// Overall first-stage F statistic. For summary input, the mean squared first-stage
    /// t statistic.
    pub first_stage_f: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub label: String,
    pub id: String,
    pub status: MethodStatus,
    pub report: Option<EstimateReport>,
    pub error: Option<String>,
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub input: InputSummary,
    pub alpha: f64,
    pub seed: u64,
    pub methods: Vec<MethodResult>,
}

impl AnalysisReport {
    pub fn failures(&self) -> usize {
        self.methods.iter().filter(|m| m.status == MethodStatus::Error).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutput {
    pub report: AnalysisReport,
    pub forest: Vec<ForestRow>,
}

impl AnalysisOutput {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.report).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn forest_csv(&self) -> String {
        forest_csv(&self.forest)
    }

    pub fn forest_svg(&self) -> String {
        forest_svg(&self.forest)
    }

    /// Writes `report.json`, `forest.csv` and, when `plot` is set, `forest.svg`.
    pub fn write(&self, out_dir: &Path, plot: bool) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let mut files = vec![(out_dir.join("report.json"), self.json()), (out_dir.join("forest.csv"), self.forest_csv())];
        if plot {
            files.push((out_dir.join("forest.svg"), self.forest_svg()));
        }
        for (path, body) in &files {
            std::fs::write(path, body).map_err(|e| CliError::io(path, e))?;
        }
        Ok(files.into_iter().map(|(p, _)| p).collect())
    }
}

/// Loaded input, ready for the methods.
pub fn prepare_input(config: &AnalysisConfig) -> Result<(PreparedInput, InputSummary), CliError> {
    let path = config.input.as_ref().ok_or_else(|| CliError::Input("no input file given".into()))?;
    match config.input_kind {
        InputKind::Individual => {
            let data = read_individual(path, &config.columns)?;
            individual_input(&data)
        }
        InputKind::Summary => {
            let records = read_summary(path)?;
            let fit = load_summary_stats(&records, config.sample_size)?;
            let p = fit.p();
            let mean_t2 = records.iter().map(|r| (r.gamma_hat / r.se_gamma).powi(2)).sum::<f64>() / p as f64;
            let summary = InputSummary { kind: InputKind::Summary, n: config.sample_size, p, first_stage_f: Some(mean_t2) };
            Ok((PreparedInput::summary(fit), summary))
        }
    }
}

pub fn individual_input(data: &IVDataset) -> Result<(PreparedInput, InputSummary), CliError> {
    let summary = InputSummary { kind: InputKind::Individual, n: Some(data.n()), p: data.p(), first_stage_f: Some(data.residualize_covariates()?.first_stage_f()?) };
    Ok((PreparedInput::individual(data)?, summary))
}

/// Checks every method against the input kind before anything runs.
pub fn check_methods(methods: &[MethodSpec], kind: InputKind) -> Result<(), CliError> {
    for m in methods {
        check_capability(m, kind == InputKind::Individual)
            .map_err(|e| CliError::MethodOption { method: m.label(), message: e.to_string() })?;
    }
    Ok(())
}

fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))
}

/// Runs the configured methods in parallel on `jobs` workers and assembles the report
/// in configuration order. A failing method is recorded with its error.
pub fn run_analysis(config: &AnalysisConfig, jobs: Option<usize>) -> Result<AnalysisOutput, CliError> {
    check_methods(&config.methods, config.input_kind)?;
    let (input, summary) = prepare_input(config)?;
    run_prepared(config, &input, summary, jobs)
}

pub fn run_prepared(config: &AnalysisConfig, input: &PreparedInput, summary: InputSummary, jobs: Option<usize>) -> Result<AnalysisOutput, CliError> {
    let ctx = RunContext { alpha: config.alpha, seed: config.seed, oracle_valid: None };
    let pool = thread_pool(jobs)?;
    let results: Vec<Result<EstimateReport, String>> = pool.install(|| {
        config
            .methods
            .par_iter()
            .map(|m| run_method(m, input, &ctx).map_err(|e| e.to_string()))
            .collect()
    });
    let mut methods = Vec::with_capacity(results.len());
    let mut forest = Vec::new();
    for (spec, res) in config.methods.iter().zip(results) {
        let (status, report, error) = match res {
            Ok(r) => {
                forest.extend(forest_rows(&r));
                (MethodStatus::Ok, Some(r), None)
            }
            Err(e) => (MethodStatus::Error, None, Some(e)),
        };
        methods.push(MethodResult { label: spec.label(), id: spec.id.to_string(), status, report, error });
    }
    let report = AnalysisReport { input: summary, alpha: config.alpha, seed: config.seed, methods };
    Ok(AnalysisOutput { report, forest })
}
