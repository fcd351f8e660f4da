use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::interval::IntervalUnion;

/// A diagnostic value attached to an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Diagnostic {
    Integer(i64),
    Number(f64),
    Flag(bool),
    Text(String),
    Integers(Vec<i64>),
    Numbers(Vec<f64>),
}

impl From<f64> for Diagnostic {
    fn from(v: f64) -> Self {
        Diagnostic::Number(v)
    }
}

impl From<usize> for Diagnostic {
    fn from(v: usize) -> Self {
        Diagnostic::Integer(v as i64)
    }
}

impl From<bool> for Diagnostic {
    fn from(v: bool) -> Self {
        Diagnostic::Flag(v)
    }
}

impl From<&str> for Diagnostic {
    fn from(v: &str) -> Self {
        Diagnostic::Text(v.to_string())
    }
}

impl From<String> for Diagnostic {
    fn from(v: String) -> Self {
        Diagnostic::Text(v)
    }
}

impl From<Vec<f64>> for Diagnostic {
    fn from(v: Vec<f64>) -> Self {
        Diagnostic::Numbers(v)
    }
}

impl From<Vec<usize>> for Diagnostic {
    fn from(v: Vec<usize>) -> Self {
        Diagnostic::Integers(v.into_iter().map(|x| x as i64).collect())
    }
}

/// Output of every estimator or confidence procedure.
///
/// `valid_set` holds zero-based instrument indices. Interval-only procedures leave
/// `beta_hat` as `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: String,
    pub beta_hat: Option<f64>,
    pub se: Option<f64>,
    pub ci: Option<IntervalUnion>,
    pub valid_set: Option<Vec<usize>>,
    pub diagnostics: BTreeMap<String, Diagnostic>,
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub fn point(method: impl Into<String>, beta_hat: f64) -> Self {
        Self {
            method: method.into(),
            beta_hat: Some(beta_hat),
            se: None,
            ci: None,
            valid_set: None,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    /// Point estimate with standard error and the Wald interval `beta_hat ± z_{1-alpha/2} se`.
    pub fn wald(method: impl Into<String>, beta_hat: f64, se: f64, alpha: f64) -> Self {
        let z = crate::stats::z_two_sided(alpha);
        let mut r = Self::point(method, beta_hat);
        r.se = Some(se);
        r.ci = Some(IntervalUnion::single(beta_hat - z * se, beta_hat + z * se));
        r
    }

    pub fn interval(method: impl Into<String>, ci: IntervalUnion) -> Self {
        Self {
            method: method.into(),
            beta_hat: None,
            se: None,
            ci: Some(ci),
            valid_set: None,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn with_valid_set(mut self, set: Vec<usize>) -> Self {
        self.valid_set = Some(set);
        self
    }

    pub fn diag(mut self, key: &str, value: impl Into<Diagnostic>) -> Self {
        self.diagnostics.insert(key.to_string(), value.into());
        self
    }

    pub fn set_diag(&mut self, key: &str, value: impl Into<Diagnostic>) {
        self.diagnostics.insert(key.to_string(), value.into());
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }

    pub fn diag_number(&self, key: &str) -> Option<f64> {
        match self.diagnostics.get(key)? {
            Diagnostic::Number(v) => Some(*v),
            Diagnostic::Integer(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn has_warning(&self, prefix: &str) -> bool {
        self.warnings.iter().any(|w| w.starts_with(prefix))
    }
}
