//! TOML configuration for the `analyze` and `simulate` verbs.

use std::path::{Path, PathBuf};

use invalid_iv::methods::{figure_menu, MethodId, MethodOptions, MethodSpec};
use invalid_iv::simulation::SimScenario;
use serde::{Deserialize, Serialize};
use toml::{Spanned, Table, Value};

use crate::error::{line_of, toml_error, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    #[default]
    Individual,
    Summary,
}

/// Column names for individual-level CSV input.
#[derive(Debug, Clone, PartialEq)]
pub struct Columns {
    pub outcome: String,
    pub exposure: String,
    /// Explicit instrument columns; otherwise every column whose name starts with `z`.
    pub instruments: Option<Vec<String>>,
    /// Explicit covariate columns; otherwise every column whose name starts with `x`.
    pub covariates: Option<Vec<String>>,
}

impl Default for Columns {
    fn default() -> Self {
        Self { outcome: "y".into(), exposure: "d".into(), instruments: None, covariates: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub input: Option<PathBuf>,
    pub input_kind: InputKind,
    pub columns: Columns,
    /// Sample size behind summary statistics.
    pub sample_size: Option<usize>,
    pub seed: u64,
    pub alpha: f64,
    pub plot: bool,
    pub methods: Vec<MethodSpec>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            input: None,
            input_kind: InputKind::Individual,
            columns: Columns::default(),
            sample_size: None,
            seed: 0,
            alpha: invalid_iv::DEFAULT_ALPHA,
            plot: false,
            methods: Vec::new(),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    input: Option<String>,
    input_kind: Option<InputKind>,
    sample_size: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
    plot: Option<bool>,
    outcome: Option<String>,
    exposure: Option<String>,
    instruments: Option<Vec<String>>,
    covariates: Option<Vec<String>>,
    #[serde(default)]
    method: Vec<Spanned<Table>>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn resolve_path(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    }
}

pub fn load_analysis_config(path: &Path) -> Result<AnalysisConfig, CliError> {
    let text = read(path)?;
    parse_analysis_config(&text, path)
}

/// Parses an analysis configuration. `path` locates errors and anchors a relative
/// `input`. Without `[[method]]` sections the full comparison menu is used.
pub fn parse_analysis_config(text: &str, path: &Path) -> Result<AnalysisConfig, CliError> {
    let raw: RawAnalysis = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
    let alpha = raw.alpha.unwrap_or(invalid_iv::DEFAULT_ALPHA);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::parse(path, find_key_line(text, "alpha"), "alpha must lie in (0, 1)"));
    }
    let mut methods = Vec::new();
    for entry in &raw.method {
        methods.extend(parse_method_table(entry, text)?);
    }
    if methods.is_empty() {
        methods = figure_menu();
    }
    Ok(AnalysisConfig {
        input: raw.input.map(|s| resolve_path(path, &s)),
        input_kind: raw.input_kind.unwrap_or_default(),
        columns: Columns {
            outcome: raw.outcome.unwrap_or_else(|| "y".into()),
            exposure: raw.exposure.unwrap_or_else(|| "d".into()),
            instruments: raw.instruments,
            covariates: raw.covariates,
        },
        sample_size: raw.sample_size,
        seed: raw.seed.unwrap_or(0),
        alpha,
        plot: raw.plot.unwrap_or(false),
        methods,
    })
}

fn find_key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| l.trim_start().starts_with(key))
        .map(|k| k + 1)
        .unwrap_or(0)
}

/// Expands one `[[method]]` table into specs; an array `v` yields one spec per value.
fn parse_method_table(entry: &Spanned<Table>, text: &str) -> Result<Vec<MethodSpec>, CliError> {
    let line = line_of(text, entry.span().start);
    let mut table = entry.get_ref().clone();
    let id_value = table.remove("id").ok_or_else(|| CliError::MethodOption {
        method: format!("<line {line}>"),
        message: "missing 'id'".into(),
    })?;
    let id_str = id_value.as_str().ok_or_else(|| CliError::MethodOption {
        method: format!("<line {line}>"),
        message: "'id' must be a string".into(),
    })?;
    let option_error = |message: String| CliError::MethodOption { method: id_str.to_string(), message: format!("{message} (line {line})") };
    let id: MethodId = id_str.parse().map_err(|_| option_error("unknown method".into()))?;
    let allowed = id.allowed_options();
    if let Some(key) = table.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(option_error(format!("unsupported option '{key}'")));
    }
    let vs: Vec<Option<Value>> = match table.remove("v") {
        Some(Value::Array(items)) if !items.is_empty() => items.into_iter().map(Some).collect(),
        Some(Value::Array(_)) => return Err(option_error("'v' must not be empty".into())),
        Some(v) => vec![Some(v)],
        None => vec![None],
    };
    let mut out = Vec::with_capacity(vs.len());
    for v in vs {
        let mut t = table.clone();
        if let Some(v) = v {
            t.insert("v".into(), v);
        }
        let options: MethodOptions = Value::Table(t).try_into().map_err(|e: toml::de::Error| option_error(e.message().to_string()))?;
        let spec = MethodSpec { id, options };
        spec.validate().map_err(|e| option_error(e.to_string()))?;
        out.push(spec);
    }
    Ok(out)
}

/// Configuration of the `simulate` verb.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub scenario: SimScenario,
    pub reps: usize,
    pub methods: Vec<MethodSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    reps: usize,
    #[serde(default)]
    methods: Vec<String>,
    #[serde(default)]
    method: Vec<Spanned<Table>>,
    scenario: SimScenario,
}

pub fn load_simulation_config(path: &Path) -> Result<SimulationConfig, CliError> {
    let text = read(path)?;
    parse_simulation_config(&text, path)
}

/// Parses a simulation file: `reps`, a `methods` list of identifiers (`id` or `id:v`),
/// optional `[[method]]` sections and a `[scenario]` table.
pub fn parse_simulation_config(text: &str, path: &Path) -> Result<SimulationConfig, CliError> {
    let raw: RawSimulation = toml::from_str(text).map_err(|e| toml_error(path, text, e))?;
    if raw.reps == 0 {
        return Err(CliError::parse(path, find_key_line(text, "reps"), "reps must be at least 1"));
    }
    let mut methods = Vec::new();
    for m in &raw.methods {
        let spec = MethodSpec::parse(m).map_err(|e| CliError::MethodOption { method: m.clone(), message: e.to_string() })?;
        methods.push(spec);
    }
    for entry in &raw.method {
        methods.extend(parse_method_table(entry, text)?);
    }
    if methods.is_empty() {
        return Err(CliError::parse(path, 0, "no methods listed"));
    }
    Ok(SimulationConfig { scenario: raw.scenario, reps: raw.reps, methods })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<AnalysisConfig, CliError> {
        parse_analysis_config(text, Path::new("/tmp/cfg.toml"))
    }

    #[test]
    fn defaults_and_menu() {
        let c = parse("").unwrap();
        assert_eq!(c.methods.len(), 16);
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.columns.outcome, "y");
    }

    #[test]
    fn method_sections_expand_v() {
        let c = parse(
            "input = \"data.csv\"\nseed = 3\n\n[[method]]\nid = \"tsls-all\"\n\n[[method]]\nid = \"union-ci\"\nv = [2, 3]\ninner = \"anderson_rubin\"\n",
        )
        .unwrap();
        assert_eq!(c.input, Some(PathBuf::from("/tmp/data.csv")));
        let labels: Vec<String> = c.methods.iter().map(|m| m.label()).collect();
        assert_eq!(labels, vec!["tsls-all", "union-ci(v=2)", "union-ci(v=3)"]);
        assert_eq!(c.methods[2].options.inner, Some(invalid_iv::uniform::InnerMethod::AndersonRubin));
    }

    #[test]
    fn option_errors_name_the_method() {
        let err = parse("[[method]]\nid = \"sisvive\"\nv = 2\n").unwrap_err();
        assert!(matches!(&err, CliError::MethodOption { method, .. } if method == "sisvive"), "{err}");
        let err = parse("[[method]]\nid = \"cim\"\nlevel = \"high\"\n").unwrap_err();
        assert!(matches!(&err, CliError::MethodOption { method, .. } if method == "cim"), "{err}");
        let err = parse("[[method]]\nid = \"lasso\"\n").unwrap_err();
        assert!(matches!(&err, CliError::MethodOption { method, .. } if method == "lasso"));
    }

    #[test]
    fn syntax_errors_carry_lines() {
        let err = parse("seed = 1\nalpha = = 2\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 2, .. }), "{err}");
        let err = parse("seed = 1\n\nbogus = 2\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn simulation_file() {
        let text = "reps = 3\nmethods = [\"tsht\", \"union-ci:2\"]\n\n[scenario]\nfamily = \"linear\"\nn = 500\np = 3\nbeta = 1.0\n\n[scenario.pi_spec]\nkind = \"sparse\"\nindices = [2]\nmagnitudes = [0.5]\n";
        let c = parse_simulation_config(text, Path::new("sim.toml")).unwrap();
        assert_eq!(c.reps, 3);
        assert_eq!(c.methods.len(), 2);
        assert_eq!(c.scenario.p, 3);
        let bad = "reps = 3\nmethods = [\"tsht\"]\n[scenario]\nfamily = \"linear\"\nn = 500\np = \"three\"\nbeta = 1.0\n";
        let err = parse_simulation_config(bad, Path::new("sim.toml")).unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 6, .. }), "{err}");
    }
}
