use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scenario::{valid_set, Family, InstrumentLaw, NonlinearTerm, SimScenario};
use crate::error::{IvError, Result};
use crate::hetero::misteri::VARIANCE_BOUNDS;
use crate::model::IVDataset;

/// Parameters behind a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub beta: f64,
    pub gamma: Vec<f64>,
    pub pi: Vec<f64>,
    /// Instruments with zero direct effect.
    pub valid: Vec<usize>,
}

fn default_terms() -> Vec<NonlinearTerm> {
    vec![NonlinearTerm { indices: vec![0, 0], coef: 0.5 }]
}

fn nonlinear_part(terms: &[NonlinearTerm], z: &DMatrix<f64>, i: usize) -> f64 {
    terms.iter().map(|t| t.coef * t.indices.iter().map(|&j| z[(i, j)]).product::<f64>()).sum()
}

fn e1(p: usize) -> Vec<f64> {
    let mut v = vec![0.0; p];
    v[0] = 0.5;
    v
}

/// Draws one dataset. Instruments are drawn first, row by row, followed by the
/// per-row error terms, all from one ChaCha8 stream seeded by `scenario.seed`.
pub fn generate(scenario: &SimScenario) -> Result<(IVDataset, Truth)> {
    let s = scenario.resolve()?;
    let (n, p) = (s.n, s.p);
    let gamma = s.gamma.clone().expect("resolved");
    let pi = s.direct_effects()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = match s.instruments {
                InstrumentLaw::Normal => StandardNormal.sample(&mut rng),
                InstrumentLaw::Rademacher => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
        }
    }
    let g = DVector::from_vec(gamma.clone());
    let pv = DVector::from_vec(pi.clone());
    let zg = &z * &g;
    let zp = &z * &pv;
    let rho = s.confounding;
    let tail = (1.0 - rho * rho).sqrt();
    let sigma = s.noise;
    let mut d = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    match s.family {
        Family::Linear | Family::LocalViolation | Family::Nonlinear => {
            let terms = s.extras.nonlinearity.clone().unwrap_or_else(default_terms);
            for i in 0..n {
                let (a, b) = (normal(), normal());
                let mut mean = zg[i];
                if s.family == Family::Nonlinear {
                    mean += nonlinear_part(&terms, &z, i);
                }
                d[i] = mean + sigma * a;
                y[i] = s.beta * d[i] + zp[i] + sigma * (rho * a + tail * b);
            }
        }
        Family::HeteroGenius => {
            let theta = DVector::from_vec(s.extras.theta.clone().unwrap_or_else(|| e1(p)));
            let zt = &z * &theta;
            let terms = s.extras.nonlinearity.clone().unwrap_or_default();
            for i in 0..n {
                let (u, ed, ey) = (normal(), normal(), normal());
                let extra = nonlinear_part(&terms, &z, i);
                d[i] = zg[i] + extra + sigma * (u + (0.5 * zt[i]).exp() * ed);
                y[i] = s.beta * d[i] + zp[i] + sigma * (rho * u + tail * ey);
            }
        }
        Family::Misteri => {
            let m = &s.extras.misteri;
            let eta = DVector::from_vec(m.eta.clone().unwrap_or_else(|| e1(p)));
            let ze = &z * &eta;
            let (lo, hi) = (VARIANCE_BOUNDS.0.ln(), VARIANCE_BOUNDS.1.ln());
            for i in 0..n {
                let lin = m.exposure_intercept + zg[i];
                let prob = 1.0 / (1.0 + (-lin).exp());
                let u: f64 = rng.random();
                d[i] = if u < prob { 1.0 } else { 0.0 };
                let sv = m.eta0 + ze[i];
                if !(sv >= lo && sv <= hi) {
                    return Err(IvError::InvalidScenario(format!("outcome variance exp({sv:.3}) leaves the supported range at row {i}")));
                }
                let var = sv.exp();
                let e: f64 = StandardNormal.sample(&mut rng);
                y[i] = m.beta0 + s.beta * d[i] + zp[i] + m.alpha * d[i] * var + sigma * var.sqrt() * e;
            }
        }
    }
    let valid = valid_set(&pi);
    let data = IVDataset::new(y, d, z, None)?;
    Ok((data, Truth { beta: s.beta, gamma, pi, valid }))
}
