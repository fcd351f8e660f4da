//! Registry of method identifiers, their options and a single dispatch entry point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};
use crate::hetero::{genius_with, misteri_fit_with, GeniusVariant, MisteriOptions};
use crate::linear::{adaptive::adaptive_lasso_with, kclass_estimator, median_estimator, ols, sisvive_with, tsls_with_alpha, SisviveOptions};
use crate::model::{fit_reduced_form, CovMode, EstimateReport, IVDataset, ReducedFormFit};
use crate::nonlinear::{g_interaction_with, tsci_with, ForestOptions, Learner, TsciOptions};
use crate::selection::{cim_with, tsht, CimOptions};
use crate::uniform::{sampling_ci_with, searching_ci, union_ci_with, InnerMethod, SamplingOptions, UnionOptions};
use crate::DEFAULT_ALPHA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodId {
    Ols,
    TslsAll,
    TslsOracle,
    Median,
    Sisvive,
    Kclass,
    AdaptiveLasso,
    Tsht,
    Cim,
    SearchingCi,
    SamplingCi,
    UnionCi,
    Tsci,
    GInteraction,
    Genius,
    GeniusSumsq,
    Misteri,
}

impl MethodId {
    pub const ALL: [MethodId; 17] = [
        MethodId::Ols,
        MethodId::TslsAll,
        MethodId::TslsOracle,
        MethodId::Median,
        MethodId::Sisvive,
        MethodId::Kclass,
        MethodId::AdaptiveLasso,
        MethodId::Tsht,
        MethodId::Cim,
        MethodId::SearchingCi,
        MethodId::SamplingCi,
        MethodId::UnionCi,
        MethodId::Tsci,
        MethodId::GInteraction,
        MethodId::Genius,
        MethodId::GeniusSumsq,
        MethodId::Misteri,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::Ols => "ols",
            MethodId::TslsAll => "tsls-all",
            MethodId::TslsOracle => "tsls-oracle",
            MethodId::Median => "median",
            MethodId::Sisvive => "sisvive",
            MethodId::Kclass => "kclass",
            MethodId::AdaptiveLasso => "adaptive-lasso",
            MethodId::Tsht => "tsht",
            MethodId::Cim => "cim",
            MethodId::SearchingCi => "searching-ci",
            MethodId::SamplingCi => "sampling-ci",
            MethodId::UnionCi => "union-ci",
            MethodId::Tsci => "tsci",
            MethodId::GInteraction => "g-interaction",
            MethodId::Genius => "genius",
            MethodId::GeniusSumsq => "genius-sumsq",
            MethodId::Misteri => "misteri",
        }
    }

    /// Whether the method can run from reduced-form summary statistics alone.
    pub fn accepts_summary(self) -> bool {
        matches!(self, MethodId::Median | MethodId::Tsht | MethodId::SearchingCi | MethodId::SamplingCi)
    }

    /// Whether the method reports a selected valid set worth scoring against the truth.
    pub fn selects(self) -> bool {
        matches!(self, MethodId::AdaptiveLasso | MethodId::Tsht | MethodId::Cim)
    }

    /// Option keys the method understands.
    pub fn allowed_options(self) -> &'static [&'static str] {
        match self {
            MethodId::Ols | MethodId::TslsAll | MethodId::TslsOracle | MethodId::Kclass => &["cov_mode"],
            MethodId::Median | MethodId::Tsht | MethodId::SearchingCi | MethodId::GeniusSumsq => &[],
            MethodId::Sisvive => &["lambda", "folds"],
            MethodId::AdaptiveLasso | MethodId::Cim => &["level", "cov_mode"],
            MethodId::SamplingCi => &["resamples", "c_n", "lambda"],
            MethodId::UnionCi => &["v", "alpha_s", "alpha_t", "inner", "cov_mode"],
            MethodId::Tsci => &["learner", "split_fraction", "trees"],
            MethodId::GInteraction => &["v"],
            MethodId::Genius => &["variant"],
            MethodId::Misteri => &["starts"],
        }
    }

    fn needs_v(self) -> bool {
        matches!(self, MethodId::UnionCi | MethodId::GInteraction)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = IvError;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| IvError::UnknownMethod(s.to_string()))
    }
}

/// Per-method settings. Unset fields take the method's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodOptions {
    pub v: Option<usize>,
    pub alpha_s: Option<f64>,
    pub alpha_t: Option<f64>,
    pub inner: Option<InnerMethod>,
    pub lambda: Option<f64>,
    pub folds: Option<usize>,
    pub level: Option<f64>,
    pub cov_mode: Option<CovMode>,
    pub resamples: Option<usize>,
    pub c_n: Option<f64>,
    pub learner: Option<Learner>,
    pub split_fraction: Option<f64>,
    pub trees: Option<usize>,
    pub variant: Option<GeniusVariant>,
    pub starts: Option<usize>,
}

impl MethodOptions {
    pub fn set_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut push = |set: bool, key: &'static str| {
            if set {
                keys.push(key);
            }
        };
        push(self.v.is_some(), "v");
        push(self.alpha_s.is_some(), "alpha_s");
        push(self.alpha_t.is_some(), "alpha_t");
        push(self.inner.is_some(), "inner");
        push(self.lambda.is_some(), "lambda");
        push(self.folds.is_some(), "folds");
        push(self.level.is_some(), "level");
        push(self.cov_mode.is_some(), "cov_mode");
        push(self.resamples.is_some(), "resamples");
        push(self.c_n.is_some(), "c_n");
        push(self.learner.is_some(), "learner");
        push(self.split_fraction.is_some(), "split_fraction");
        push(self.trees.is_some(), "trees");
        push(self.variant.is_some(), "variant");
        push(self.starts.is_some(), "starts");
        keys
    }
}

/// A method with its options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub id: MethodId,
    pub options: MethodOptions,
}

impl MethodSpec {
    pub fn new(id: MethodId) -> Self {
        Self { id, options: MethodOptions::default() }
    }

    pub fn with_v(id: MethodId, v: usize) -> Self {
        Self { id, options: MethodOptions { v: Some(v), ..MethodOptions::default() } }
    }

    /// Parses `id` or `id:v`, e.g. `union-ci:6`.
    pub fn parse(s: &str) -> Result<Self> {
        let spec = match s.split_once(':') {
            Some((id, v)) => {
                let v = v.parse::<usize>().map_err(|_| IvError::MethodOption {
                    method: id.to_string(),
                    message: format!("cannot parse v from {v:?}"),
                })?;
                Self::with_v(id.parse()?, v)
            }
            None => Self::new(s.parse()?),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Row label: the identifier, with the assumed number of valid instruments appended
    /// for methods that take one.
    pub fn label(&self) -> String {
        match self.options.v {
            Some(v) if self.id.needs_v() => format!("{}(v={v})", self.id),
            _ => self.id.to_string(),
        }
    }

    fn option_error(&self, message: String) -> IvError {
        IvError::MethodOption { method: self.id.to_string(), message }
    }

    /// Checks option keys against the method and value ranges.
    pub fn validate(&self) -> Result<()> {
        let allowed = self.id.allowed_options();
        if let Some(key) = self.options.set_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(self.option_error(format!("unsupported option '{key}'")));
        }
        let o = &self.options;
        if self.id.needs_v() && o.v.is_none() {
            return Err(self.option_error("option 'v' is required".into()));
        }
        if o.v == Some(0) {
            return Err(self.option_error("v must be at least 1".into()));
        }
        let in_unit = |x: Option<f64>| x.is_none_or(|x| x > 0.0 && x < 1.0);
        if !in_unit(o.alpha_s) || !in_unit(o.alpha_t) || !in_unit(o.level) || !in_unit(o.split_fraction) {
            return Err(self.option_error("levels and fractions must lie in (0, 1)".into()));
        }
        if o.lambda.is_some_and(|l| !(l > 0.0)) || o.c_n.is_some_and(|c| !(c > 0.0)) {
            return Err(self.option_error("penalty and shrinkage constants must be positive".into()));
        }
        if [o.folds.map(|f| f >= 2), o.resamples.map(|m| m >= 1), o.trees.map(|t| t >= 1), o.starts.map(|s| s >= 1)].contains(&Some(false))
        {
            return Err(self.option_error("counts out of range (folds >= 2, resamples, trees, starts >= 1)".into()));
        }
        Ok(())
    }
}

/// The sixteen-row menu of the applied comparison: fourteen methods, with the
/// interaction estimator and the union interval each at `v = 6` and `v = 8`.
pub fn figure_menu() -> Vec<MethodSpec> {
    use MethodId::*;
    let mut out: Vec<MethodSpec> = [Ols, TslsAll, Median, Sisvive, Kclass, AdaptiveLasso, Tsht, Cim, Tsci]
        .into_iter()
        .map(MethodSpec::new)
        .collect();
    out.push(MethodSpec::with_v(GInteraction, 6));
    out.push(MethodSpec::with_v(GInteraction, 8));
    out.push(MethodSpec::new(Genius));
    out.push(MethodSpec::new(Misteri));
    out.push(MethodSpec::new(SamplingCi));
    out.push(MethodSpec::with_v(UnionCi, 6));
    out.push(MethodSpec::with_v(UnionCi, 8));
    out
}

/// Data shared by every method in one analysis.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    /// Individual-level data as supplied.
    pub raw: Option<IVDataset>,
    /// Covariate-residualized, centered data for the linear-model methods.
    pub centered: Option<IVDataset>,
    pub fit: ReducedFormFit,
}

impl PreparedInput {
    pub fn individual(data: &IVDataset) -> Result<Self> {
        let centered = data.residualize_covariates()?.center_and_validate()?;
        let fit = fit_reduced_form(&centered, CovMode::Robust)?;
        Ok(Self { raw: Some(data.clone()), centered: Some(centered), fit })
    }

    pub fn summary(fit: ReducedFormFit) -> Self {
        Self { raw: None, centered: None, fit }
    }

    pub fn is_individual(&self) -> bool {
        self.raw.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    pub alpha: f64,
    pub seed: u64,
    /// True valid set, needed only by `tsls-oracle`.
    pub oracle_valid: Option<Vec<usize>>,
}

impl Default for RunContext {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, seed: 0, oracle_valid: None }
    }
}

/// Fails when the method cannot run on the given kind of input.
pub fn check_capability(spec: &MethodSpec, individual: bool) -> Result<()> {
    if !individual && !spec.id.accepts_summary() {
        return Err(IvError::MethodOption {
            method: spec.id.to_string(),
            message: "requires individual-level data".into(),
        });
    }
    Ok(())
}

/// Runs one method. The report's `method` field is the spec's label.
pub fn run_method(spec: &MethodSpec, input: &PreparedInput, ctx: &RunContext) -> Result<EstimateReport> {
    spec.validate()?;
    check_capability(spec, input.is_individual())?;
    let o = &spec.options;
    let alpha = ctx.alpha;
    let cov = o.cov_mode.unwrap_or_default();
    let centered = || input.centered.as_ref().expect("capability checked");
    let raw = || input.raw.as_ref().expect("capability checked");
    let mut report = match spec.id {
        MethodId::Ols => ols(centered(), cov, alpha)?,
        MethodId::TslsAll => {
            let p = centered().p();
            tsls_with_alpha(centered(), &(0..p).collect::<Vec<_>>(), cov, alpha)?
        }
        MethodId::TslsOracle => {
            let valid = ctx.oracle_valid.as_ref().ok_or_else(|| IvError::MethodOption {
                method: spec.id.to_string(),
                message: "the true valid set is not available".into(),
            })?;
            tsls_with_alpha(centered(), valid, cov, alpha)?
        }
        MethodId::Median => median_estimator(&input.fit)?,
        MethodId::Sisvive => {
            let opts = SisviveOptions { lambda: o.lambda, folds: o.folds.unwrap_or(10), seed: ctx.seed };
            sisvive_with(centered(), &opts)?
        }
        MethodId::Kclass => rewald(kclass_estimator(centered(), cov)?, alpha),
        MethodId::AdaptiveLasso => rewald(adaptive_lasso_with(centered(), o.level, cov)?, alpha),
        MethodId::Tsht => tsht(&input.fit, alpha, input.centered.as_ref())?,
        MethodId::Cim => {
            let opts = CimOptions { level: o.level, cov_mode: cov, alpha, ..CimOptions::default() };
            cim_with(centered(), &opts)?
        }
        MethodId::SearchingCi => {
            let ci = searching_ci(&input.fit, alpha, None)?;
            EstimateReport::interval(spec.id.as_str(), ci)
        }
        MethodId::SamplingCi => {
            let defaults = SamplingOptions::default();
            let opts = SamplingOptions {
                m: o.resamples.unwrap_or(defaults.m),
                c_n: o.c_n.unwrap_or(defaults.c_n),
                lambda: o.lambda,
                seed: ctx.seed,
                grid: None,
            };
            let s = sampling_ci_with(&input.fit, alpha, &opts)?;
            let mut r = EstimateReport::interval(spec.id.as_str(), s.ci)
                .diag("lambda", s.lambda)
                .diag("nonempty_resamples", s.nonempty);
            if s.fallback {
                r.warn("SamplingFallback: every resampled set was empty; searching interval returned");
            }
            r
        }
        MethodId::UnionCi => {
            let mut opts = UnionOptions::new(o.v.expect("validated"));
            opts.alpha_s = o.alpha_s.unwrap_or(opts.alpha_s);
            opts.alpha_t = o.alpha_t.unwrap_or(alpha - opts.alpha_s);
            opts.inner = o.inner.unwrap_or(opts.inner);
            opts.cov_mode = cov;
            let u = union_ci_with(centered(), &opts)?;
            let mut r = EstimateReport::interval(spec.id.as_str(), u.ci)
                .diag("v", opts.v)
                .diag("subsets", u.subsets)
                .diag("kept", u.kept)
                .diag("grid_truncated", u.grid_truncated);
            if u.empty {
                r.warn(format!("EmptyUnion: every {}-subset was rejected by the J screen", opts.v));
            }
            r
        }
        MethodId::Tsci => {
            let mut opts = TsciOptions { seed: ctx.seed, alpha, ..TsciOptions::default() };
            opts.learner = o.learner.unwrap_or(opts.learner);
            opts.split_fraction = o.split_fraction.unwrap_or(opts.split_fraction);
            opts.forest = ForestOptions { trees: o.trees.unwrap_or(opts.forest.trees), ..opts.forest };
            with_covariate_note(tsci_with(raw(), &opts)?, raw())
        }
        MethodId::GInteraction => with_covariate_note(g_interaction_with(raw(), o.v.expect("validated"), alpha)?, raw()),
        MethodId::Genius => with_covariate_note(genius_with(raw(), o.variant.unwrap_or_default(), alpha)?, raw()),
        MethodId::GeniusSumsq => with_covariate_note(genius_with(raw(), GeniusVariant::Sumsq, alpha)?, raw()),
        MethodId::Misteri => {
            let mut opts = MisteriOptions { seed: ctx.seed, alpha, ..MisteriOptions::default() };
            opts.starts = o.starts.unwrap_or(opts.starts);
            with_covariate_note(misteri_fit_with(raw(), &opts)?, raw())
        }
    };
    report.method = spec.label();
    Ok(report)
}

/// Recomputes the Wald interval at `alpha` for methods built at the default level.
fn rewald(mut report: EstimateReport, alpha: f64) -> EstimateReport {
    if alpha != DEFAULT_ALPHA {
        if let (Some(b), Some(se)) = (report.beta_hat, report.se) {
            let z = crate::stats::z_two_sided(alpha);
            report.ci = Some(crate::model::IntervalUnion::single(b - z * se, b + z * se));
        }
    }
    report
}

fn with_covariate_note(mut report: EstimateReport, data: &IVDataset) -> EstimateReport {
    if data.covariates().is_some() {
        report.warn("CovariatesIgnored: this method uses outcome, exposure and instruments only");
    }
    report
}
