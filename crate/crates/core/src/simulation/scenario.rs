use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IvError, Result};

/// Stream of the scenario seed used to draw fixed design parameters.
const DESIGN_STREAM: u64 = 1;
const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    /// Linear model with direct effects `C / sqrt(n)`.
    LocalViolation,
    /// Exposure mean with polynomial terms in the instruments.
    Nonlinear,
    /// Exposure variance depending on the instruments.
    HeteroGenius,
    /// Binary exposure with the log-linear outcome-variance model.
    Misteri,
}

/// Direct effects of the instruments on the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PiSpec {
    /// Nonzero effects `magnitudes` at `indices`; zero elsewhere.
    Sparse { indices: Vec<usize>, magnitudes: Vec<f64> },
    /// `pi = c / sqrt(n)`.
    Local { c: Vec<f64> },
    /// Random direction on `support` (all instruments by default) orthogonal to `gamma`,
    /// scaled to Euclidean norm `magnitude`.
    OrthogonalToGamma {
        magnitude: f64,
        #[serde(default)]
        support: Option<Vec<usize>>,
    },
    Explicit { values: Vec<f64> },
}

impl Default for PiSpec {
    fn default() -> Self {
        PiSpec::Sparse { indices: Vec::new(), magnitudes: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstrumentLaw {
    #[default]
    Normal,
    Rademacher,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Majority,
    Plurality,
}

/// `coef * prod_k Z_{indices[k]}`; a repeated index gives a power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearTerm {
    pub indices: Vec<usize>,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MisteriDesign {
    #[serde(default)]
    pub beta0: f64,
    #[serde(default = "default_misteri_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub eta0: f64,
    /// Defaults to `0.5 e_1`.
    #[serde(default)]
    pub eta: Option<Vec<f64>>,
    /// Intercept of the exposure's logistic model.
    #[serde(default)]
    pub exposure_intercept: f64,
}

fn default_misteri_alpha() -> f64 {
    0.5
}

impl Default for MisteriDesign {
    fn default() -> Self {
        Self { beta0: 0.0, alpha: default_misteri_alpha(), eta0: 0.0, eta: None, exposure_intercept: 0.0 }
    }
}

/// Family-specific settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extras {
    /// Nonlinear exposure terms; defaults to `0.5 Z_1^2` in the nonlinear family and to
    /// none in the heteroskedastic family.
    #[serde(default)]
    pub nonlinearity: Option<Vec<NonlinearTerm>>,
    /// Log-variance slopes of the exposure; defaults to `0.5 e_1`.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub misteri: MisteriDesign,
}

fn default_confounding() -> f64 {
    0.6
}

fn default_noise() -> f64 {
    1.0
}

/// Declarative description of a data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimScenario {
    pub family: Family,
    pub n: usize,
    pub p: usize,
    pub beta: f64,
    /// First-stage coefficients; drawn from `U[0.3, 0.6]` when absent.
    #[serde(default)]
    pub gamma: Option<Vec<f64>>,
    #[serde(default)]
    pub pi_spec: PiSpec,
    /// Correlation of the exposure and outcome errors.
    #[serde(default = "default_confounding")]
    pub confounding: f64,
    /// Scale of all error terms; zero gives noiseless data.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub instruments: InstrumentLaw,
    #[serde(default)]
    pub extras: Extras,
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default)]
    pub seed: u64,
}

impl SimScenario {
    pub fn linear(n: usize, p: usize, beta: f64) -> Self {
        Self {
            family: Family::Linear,
            n,
            p,
            beta,
            gamma: None,
            pi_spec: PiSpec::default(),
            confounding: default_confounding(),
            noise: default_noise(),
            instruments: InstrumentLaw::Normal,
            extras: Extras::default(),
            regime: None,
            seed: 0,
        }
    }

    fn invalid(msg: impl Into<String>) -> IvError {
        IvError::InvalidScenario(msg.into())
    }

    /// Fills in drawn design parameters (`gamma`, orthogonal direct effects) from the
    /// scenario seed, so that replications with other seeds share the same design.
    pub fn resolve(&self) -> Result<Self> {
        self.check_shape()?;
        let mut out = self.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(DESIGN_STREAM);
        if out.gamma.is_none() {
            out.gamma = Some((0..self.p).map(|_| rng.random_range(0.3..0.6)).collect());
        }
        if let PiSpec::OrthogonalToGamma { magnitude, support } = &self.pi_spec {
            let gamma = out.gamma.as_ref().expect("set above");
            let support = support.clone().unwrap_or_else(|| (0..self.p).collect());
            let g = DVector::from_iterator(support.len(), support.iter().map(|&j| gamma[j]));
            let raw = DVector::from_fn(support.len(), |_, _| StandardNormal.sample(&mut rng));
            let dir = &raw - &g * (raw.dot(&g) / g.dot(&g));
            let dir = dir.normalize() * *magnitude;
            let mut values = vec![0.0; self.p];
            for (k, &j) in support.iter().enumerate() {
                values[j] = dir[k];
            }
            out.pi_spec = PiSpec::Explicit { values };
        }
        out.validate()?;
        Ok(out)
    }

    fn check_shape(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Self::invalid("p must be positive"));
        }
        if self.n < self.p + 2 {
            return Err(Self::invalid(format!("n = {} is too small for p = {}", self.n, self.p)));
        }
        if !self.beta.is_finite() {
            return Err(Self::invalid("beta must be finite"));
        }
        if !(self.confounding > -1.0 && self.confounding < 1.0) {
            return Err(Self::invalid("confounding must lie in (-1, 1)"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Self::invalid("noise must be a nonnegative number"));
        }
        if let Some(g) = &self.gamma {
            if g.len() != self.p {
                return Err(Self::invalid(format!("gamma has {} entries, expected {}", g.len(), self.p)));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Self::invalid("gamma must be finite"));
            }
        }
        match &self.pi_spec {
            PiSpec::Sparse { indices, magnitudes } => {
                if indices.len() != magnitudes.len() {
                    return Err(Self::invalid("pi indices and magnitudes differ in length"));
                }
                let mut seen = vec![false; self.p];
                for &j in indices {
                    if j >= self.p || std::mem::replace(&mut seen[j], true) {
                        return Err(Self::invalid(format!("pi index {j} is out of range or repeated")));
                    }
                }
                if magnitudes.iter().any(|m| *m == 0.0 || !m.is_finite()) {
                    return Err(Self::invalid("pi magnitudes must be finite and nonzero"));
                }
            }
            PiSpec::Local { c } => {
                if c.len() != self.p || c.iter().any(|x| !x.is_finite()) {
                    return Err(Self::invalid("local violation vector must have p finite entries"));
                }
            }
            PiSpec::OrthogonalToGamma { magnitude, support } => {
                if !(magnitude.is_finite() && *magnitude > 0.0) {
                    return Err(Self::invalid("orthogonal magnitude must be positive"));
                }
                if let Some(s) = support {
                    if s.len() < 2 || s.iter().any(|&j| j >= self.p) {
                        return Err(Self::invalid("orthogonal support needs at least two in-range indices"));
                    }
                }
            }
            PiSpec::Explicit { values } => {
                if values.len() != self.p || values.iter().any(|x| !x.is_finite()) {
                    return Err(Self::invalid("explicit pi must have p finite entries"));
                }
            }
        }
        if matches!(self.pi_spec, PiSpec::Local { .. }) != (self.family == Family::LocalViolation) {
            return Err(Self::invalid("local violations are specified with the local_violation family and only there"));
        }
        let check_len = |v: &Option<Vec<f64>>, what: &str| -> Result<()> {
            match v {
                Some(v) if v.len() != self.p => Err(Self::invalid(format!("{what} has {} entries, expected {}", v.len(), self.p))),
                _ => Ok(()),
            }
        };
        check_len(&self.extras.theta, "theta")?;
        check_len(&self.extras.misteri.eta, "eta")?;
        if let Some(terms) = &self.extras.nonlinearity {
            if !matches!(self.family, Family::Nonlinear | Family::HeteroGenius) {
                return Err(Self::invalid("nonlinear terms apply only to the nonlinear and hetero_genius families"));
            }
            if terms.iter().any(|t| t.indices.iter().any(|&j| j >= self.p)) {
                return Err(Self::invalid("nonlinear term index out of range"));
            }
            if self.family == Family::Nonlinear && !terms.iter().any(|t| t.indices.len() >= 2 && t.coef != 0.0) {
                return Err(Self::invalid("nonlinear family needs a quadratic or product term"));
            }
        }
        Ok(())
    }

    /// Full validation, including consistency of a declared regime with the implied
    /// valid set. Requires a resolved `gamma` for the regime check.
    pub fn validate(&self) -> Result<()> {
        self.check_shape()?;
        if let (Some(regime), Some(gamma)) = (self.regime, &self.gamma) {
            let pi = self.direct_effects()?;
            let valid = valid_set(&pi);
            let ok = match regime {
                Regime::Majority => 2 * valid.len() > self.p,
                Regime::Plurality => {
                    let largest_invalid = largest_ratio_group(&pi, gamma);
                    !valid.is_empty() && valid.len() > largest_invalid
                }
            };
            if !ok {
                return Err(Self::invalid(format!("declared {regime:?} regime does not hold for {} valid of {} instruments", valid.len(), self.p)));
            }
        }
        Ok(())
    }

    /// True direct effects. Orthogonal specifications must be resolved first.
    pub fn direct_effects(&self) -> Result<Vec<f64>> {
        Ok(match &self.pi_spec {
            PiSpec::Sparse { indices, magnitudes } => {
                let mut pi = vec![0.0; self.p];
                for (&j, &m) in indices.iter().zip(magnitudes) {
                    pi[j] = m;
                }
                pi
            }
            PiSpec::Local { c } => c.iter().map(|x| x / (self.n as f64).sqrt()).collect(),
            PiSpec::Explicit { values } => values.clone(),
            PiSpec::OrthogonalToGamma { .. } => return Err(Self::invalid("orthogonal direct effects are drawn by resolve()")),
        })
    }

    /// Number of instruments with a nonzero direct effect declared by the specification.
    pub fn support_size(&self) -> Result<usize> {
        Ok(self.direct_effects()?.iter().filter(|x| **x != 0.0).count())
    }
}

pub(crate) fn valid_set(pi: &[f64]) -> Vec<usize> {
    (0..pi.len()).filter(|&j| pi[j] == 0.0).collect()
}

/// Size of the largest group of invalid instruments sharing `pi_j / gamma_j`.
fn largest_ratio_group(pi: &[f64], gamma: &[f64]) -> usize {
    let ratios: Vec<f64> = (0..pi.len()).filter(|&j| pi[j] != 0.0).map(|j| pi[j] / gamma[j]).collect();
    ratios
        .iter()
        .map(|r| ratios.iter().filter(|s| (*s - r).abs() <= RATIO_TOLERANCE * r.abs().max(s.abs()).max(1.0)).count())
        .max()
        .unwrap_or(0)
}
