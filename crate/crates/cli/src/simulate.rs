//! The `simulate` verb.

use std::path::{Path, PathBuf};

use invalid_iv::simulation::{run_experiment_with, ExperimentTable};

use crate::config::SimulationConfig;
use crate::error::CliError;

/// Runs the experiment on `jobs` workers; `seed` replaces the scenario seed.
pub fn run_simulation(config: &SimulationConfig, seed: Option<u64>, jobs: Option<usize>) -> Result<ExperimentTable, CliError> {
    let mut scenario = config.scenario.clone();
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| run_experiment_with(&scenario, &config.methods, config.reps))?)
}

/// Writes `experiment.csv` and `experiment.json`.
pub fn write_table(table: &ExperimentTable, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut json = serde_json::to_string_pretty(table).expect("table serializes");
    json.push('\n');
    let files = [(out_dir.join("experiment.csv"), table.to_csv()), (out_dir.join("experiment.json"), json)];
    for (path, body) in &files {
        std::fs::write(path, body).map_err(|e| CliError::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
