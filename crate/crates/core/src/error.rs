use thiserror::Error;

/// Errors raised by estimators, inference procedures and the simulation harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IvError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("too few observations: n = {n}, need at least {needed}")]
    TooFewObservations { n: usize, needed: usize },
    #[error("standard error for instrument {index} is not positive")]
    NonPositiveSE { index: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("operation requires the sample size, which the summary statistics did not provide")]
    MissingSampleSize,
    #[error("first-stage coefficient of instrument {index} is numerically zero")]
    ZeroFirstStage { index: usize },
    #[error("valid instrument set is empty")]
    EmptyValidSet,
    #[error("k-class denominator 1 - p/n - 1/n is not positive (n = {n}, p = {p})")]
    DegenerateK { n: usize, p: usize },
    #[error("penalty level must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("J test needs at least two instruments in the valid set, got {0}")]
    Underidentified(usize),
    #[error("subset enumeration too large: {count} subsets exceeds limit {limit}")]
    CombinatorialLimit { count: f64, limit: f64 },
    #[error("alpha_s + alpha_t must lie in (0, 1), got {0}")]
    InvalidAlphas(f64),
    #[error("search grid has {0} points, fewer than the required 100")]
    GridTooCoarse(usize),
    #[error("invalid search grid: {0}")]
    InvalidGrid(String),
    #[error("curvature of the first-stage fit is too weak to identify the effect: {0}")]
    WeakCurvature(String),
    #[error("split too small: {0}")]
    SplitTooSmall(String),
    #[error("interaction instruments are weak: first-stage F = {0:.3}")]
    WeakInteractionInstrument(f64),
    #[error("exposure appears homoskedastic; heteroskedasticity moments are degenerate")]
    HomoskedasticExposure,
    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),
    #[error("optimizer diverged: {0}")]
    OptimizerDiverged(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unknown method: {0}")]
    UnknownMethod(String),
    #[error("method {method}: {message}")]
    MethodOption { method: String, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, IvError>;
