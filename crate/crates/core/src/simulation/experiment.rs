use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, Truth};
use super::scenario::SimScenario;
use crate::error::Result;
use crate::methods::{run_method, MethodSpec, PreparedInput, RunContext};
use crate::model::EstimateReport;
use crate::stats;

/// Nominal level of the intervals scored for coverage.
pub const EXPERIMENT_ALPHA: f64 = 0.05;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep`: the SplitMix64 output at state `base + (rep + 1) * 0x9E3779B97F4A7C15`.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    mix(base.wrapping_add((rep as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Results of one replication, one entry per requested method.
#[derive(Debug, Clone, PartialEq)]
pub struct RepOutcome {
    pub rep: usize,
    pub seed: u64,
    pub truth: Truth,
    pub results: Vec<std::result::Result<EstimateReport, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub bias: Option<f64>,
    pub rmse: Option<f64>,
    pub coverage: Option<f64>,
    pub med_length: Option<f64>,
    /// Share of replications with the selected set equal to the true valid set.
    pub selection_acc: Option<f64>,
    pub successes: usize,
    pub failures: usize,
    /// First error message, when any replication failed.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub reps: usize,
    pub rows: Vec<MethodSummary>,
}

impl ExperimentTable {
    pub fn row(&self, method: &str) -> Option<&MethodSummary> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// CSV with columns `method,bias,rmse,coverage,med_length,selection_acc`; undefined
    /// entries are empty.
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
        let mut out = String::from("method,bias,rmse,coverage,med_length,selection_acc\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.method,
                cell(r.bias),
                cell(r.rmse),
                cell(r.coverage),
                cell(r.med_length),
                cell(r.selection_acc)
            );
        }
        out
    }
}

/// Generates `reps` datasets with seeds [`rep_seed`]`(scenario.seed, r)` and runs every
/// method on each. Replications run in parallel; results are in replication order.
pub fn run_replications(scenario: &SimScenario, methods: &[MethodSpec], reps: usize) -> Result<Vec<RepOutcome>> {
    if reps == 0 {
        return Err(crate::error::IvError::InvalidArgument("reps must be at least 1".into()));
    }
    for m in methods {
        m.validate()?;
    }
    let design = scenario.resolve()?;
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = rep_seed(scenario.seed, rep);
            let sc = SimScenario { seed, ..design.clone() };
            let (data, truth) = generate(&sc)?;
            let results = match PreparedInput::individual(&data) {
                Ok(input) => {
                    let ctx = RunContext { alpha: EXPERIMENT_ALPHA, seed, oracle_valid: Some(truth.valid.clone()) };
                    methods.iter().map(|m| run_method(m, &input, &ctx).map_err(|e| e.to_string())).collect()
                }
                Err(e) => vec![Err(e.to_string()); methods.len()],
            };
            Ok(RepOutcome { rep, seed, truth, results })
        })
        .collect()
}

/// Runs the listed methods (identifiers, optionally `id:v`) over `reps` replications.
pub fn run_experiment<S: AsRef<str>>(scenario: &SimScenario, methods: &[S], reps: usize) -> Result<ExperimentTable> {
    let specs: Vec<MethodSpec> = methods.iter().map(|m| MethodSpec::parse(m.as_ref())).collect::<Result<_>>()?;
    run_experiment_with(scenario, &specs, reps)
}

pub fn run_experiment_with(scenario: &SimScenario, methods: &[MethodSpec], reps: usize) -> Result<ExperimentTable> {
    let outcomes = run_replications(scenario, methods, reps)?;
    Ok(summarize(methods, &outcomes))
}

/// Aggregates replication outcomes, column by column in replication order.
pub fn summarize(methods: &[MethodSpec], outcomes: &[RepOutcome]) -> ExperimentTable {
    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let mut errors = Vec::new();
            let mut sq = Vec::new();
            let mut dev = Vec::new();
            let mut covered = Vec::new();
            let mut lengths = Vec::new();
            let mut selected = Vec::new();
            for o in outcomes {
                let report = match &o.results[k] {
                    Ok(r) => r,
                    Err(e) => {
                        errors.push(e.clone());
                        continue;
                    }
                };
                if let Some(b) = report.beta_hat {
                    dev.push(b - o.truth.beta);
                    sq.push((b - o.truth.beta).powi(2));
                }
                if let Some(ci) = &report.ci {
                    covered.push(if ci.contains(o.truth.beta) { 1.0 } else { 0.0 });
                    lengths.push(ci.length());
                }
                if spec.id.selects() {
                    if let Some(v) = &report.valid_set {
                        selected.push(if *v == o.truth.valid { 1.0 } else { 0.0 });
                    }
                }
            }
            let mean = |v: &[f64]| if v.is_empty() { None } else { Some(stats::mean(v)) };
            MethodSummary {
                method: spec.label(),
                bias: mean(&dev),
                rmse: mean(&sq).map(f64::sqrt),
                coverage: mean(&covered),
                med_length: stats::median(&lengths),
                selection_acc: mean(&selected),
                successes: outcomes.len() - errors.len(),
                failures: errors.len(),
                first_error: errors.into_iter().next(),
            }
        })
        .collect();
    ExperimentTable { reps: outcomes.len(), rows }
}
