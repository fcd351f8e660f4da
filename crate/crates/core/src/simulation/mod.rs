//! Data-generating processes for each model family, an identification oracle and a
//! replication engine.

pub mod experiment;
pub mod generate;
pub mod oracle;
pub mod scenario;

pub use experiment::{rep_seed, run_experiment, run_experiment_with, run_replications, summarize, ExperimentTable, MethodSummary, RepOutcome, EXPERIMENT_ALPHA};
pub use generate::{generate, Truth};
pub use oracle::{identification_oracle, IdentificationRule, OracleSolution, ORACLE_MAX_P};
pub use scenario::{Extras, Family, InstrumentLaw, MisteriDesign, NonlinearTerm, PiSpec, Regime, SimScenario};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::IvError;
    use crate::linalg;
    use crate::methods::{MethodId, MethodSpec};
    use nalgebra::{DMatrix, DVector};

    fn majority(n: usize) -> SimScenario {
        SimScenario {
            pi_spec: PiSpec::Sparse { indices: vec![5, 6], magnitudes: vec![0.5, -0.4] },
            regime: Some(Regime::Majority),
            seed: 11,
            ..SimScenario::linear(n, 7, 1.0)
        }
    }

    #[test]
    fn deterministic() {
        let (a, ta) = generate(&majority(500)).unwrap();
        let (b, tb) = generate(&majority(500)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate(&SimScenario { seed: 12, ..majority(500) }).unwrap();
        assert_ne!(a.outcome(), c.outcome());
    }

    #[test]
    fn truth_and_defaults() {
        let (_, t) = generate(&majority(100)).unwrap();
        assert_eq!(t.valid, vec![0, 1, 2, 3, 4]);
        assert_eq!(t.pi.iter().filter(|x| **x == 0.0).count(), 7 - 2);
        assert!(t.gamma.iter().all(|g| (0.3..0.6).contains(g)));
    }

    #[test]
    fn regime_must_hold() {
        let s = SimScenario {
            pi_spec: PiSpec::Sparse { indices: vec![0, 1, 2, 3], magnitudes: vec![1.0; 4] },
            regime: Some(Regime::Majority),
            ..SimScenario::linear(100, 7, 1.0)
        };
        assert!(matches!(generate(&s), Err(IvError::InvalidScenario(_))));
        // four invalid instruments with distinct ratios: plurality holds
        let s = SimScenario {
            gamma: Some(vec![0.5; 7]),
            pi_spec: PiSpec::Sparse { indices: vec![0, 1, 2, 3], magnitudes: vec![0.1, 0.2, 0.3, 0.4] },
            regime: Some(Regime::Plurality),
            ..SimScenario::linear(100, 7, 1.0)
        };
        generate(&s).unwrap();
        // two equal-ratio groups of three invalid instruments against three valid ones
        let s = SimScenario {
            gamma: Some(vec![0.5; 9]),
            pi_spec: PiSpec::Sparse { indices: vec![0, 1, 2, 3, 4, 5], magnitudes: vec![0.1, 0.1, 0.1, 0.2, 0.2, 0.2] },
            regime: Some(Regime::Plurality),
            ..SimScenario::linear(100, 9, 1.0)
        };
        assert!(generate(&s).is_err());
    }

    #[test]
    fn malformed_scenarios() {
        let base = SimScenario::linear(100, 3, 1.0);
        let bad = [
            SimScenario { confounding: 1.0, ..base.clone() },
            SimScenario { gamma: Some(vec![0.5; 2]), ..base.clone() },
            SimScenario { pi_spec: PiSpec::Sparse { indices: vec![3], magnitudes: vec![1.0] }, ..base.clone() },
            SimScenario { pi_spec: PiSpec::Sparse { indices: vec![0], magnitudes: vec![0.0] }, ..base.clone() },
            SimScenario { pi_spec: PiSpec::Local { c: vec![1.0; 3] }, ..base.clone() },
            SimScenario { family: Family::LocalViolation, ..base.clone() },
            SimScenario { n: 4, ..base.clone() },
            SimScenario {
                family: Family::Nonlinear,
                extras: Extras { nonlinearity: Some(vec![NonlinearTerm { indices: vec![0], coef: 1.0 }]), ..Extras::default() },
                ..base.clone()
            },
            SimScenario {
                extras: Extras { nonlinearity: Some(vec![NonlinearTerm { indices: vec![0, 1], coef: 1.0 }]), ..Extras::default() },
                ..base.clone()
            },
        ];
        for s in bad {
            assert!(matches!(generate(&s), Err(IvError::InvalidScenario(_))), "{s:?}");
        }
    }

    #[test]
    fn local_violation_scales() {
        let s = SimScenario { family: Family::LocalViolation, pi_spec: PiSpec::Local { c: vec![2.0, 0.0, 0.0] }, ..SimScenario::linear(400, 3, 1.0) };
        let (_, t) = generate(&s).unwrap();
        assert!((t.pi[0] - 0.1).abs() < 1e-15);
        assert_eq!(t.valid, vec![1, 2]);
    }

    /// Reduced-form coefficients of `Y` on `[1, Z]` with homoskedastic standard errors.
    fn reduced_form(z: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = z.nrows();
        let x = DMatrix::from_fn(n, z.ncols() + 1, |i, j| if j == 0 { 1.0 } else { z[(i, j - 1)] });
        let coef = linalg::ols(&x, y).unwrap();
        let r = y - &x * &coef;
        let s2 = r.norm_squared() / (n - x.ncols()) as f64;
        let inv = linalg::spd_inverse(&x.tr_mul(&x), "design").unwrap();
        let se = DVector::from_fn(x.ncols(), |j, _| (s2 * inv[(j, j)]).sqrt());
        (coef, se)
    }

    #[test]
    fn all_valid_reduced_form_is_proportional() {
        let s = SimScenario { seed: 5, ..SimScenario::linear(100_000, 4, 1.5) };
        let (data, t) = generate(&s).unwrap();
        let (coef, se) = reduced_form(data.instruments(), data.outcome());
        for j in 0..4 {
            assert!((coef[j + 1] - 1.5 * t.gamma[j]).abs() < 3.0 * se[j + 1], "j = {j}");
        }
    }

    #[test]
    fn misteri_variance_slope() {
        let mut s = SimScenario { family: Family::Misteri, seed: 9, ..SimScenario::linear(100_000, 2, 1.0) };
        s.gamma = Some(vec![0.5, 0.3]);
        let (data, _) = generate(&s).unwrap();
        let rows: Vec<usize> = (0..data.n()).filter(|&i| data.exposure()[i] == 0.0).collect();
        let sub = data.subset_rows(&rows);
        let (coef, _) = reduced_form(sub.instruments(), sub.outcome());
        let x = DMatrix::from_fn(sub.n(), 3, |i, j| if j == 0 { 1.0 } else { sub.instruments()[(i, j - 1)] });
        let resid = sub.outcome() - &x * &coef;
        let log_sq = resid.map(|r| (r * r).ln());
        let (slope, se) = reduced_form(sub.instruments(), &log_sq);
        assert!((slope[1] - 0.5).abs() < 3.0 * se[1], "slope {} se {}", slope[1], se[1]);
        assert!(slope[2].abs() < 3.0 * se[2]);
    }

    #[test]
    fn orthogonal_pi_is_orthogonal_in_sample() {
        let s = SimScenario { pi_spec: PiSpec::OrthogonalToGamma { magnitude: 0.5, support: None }, seed: 3, ..SimScenario::linear(20_000, 6, 1.0) };
        let mut draws = Vec::new();
        for rep in 0..40 {
            let (data, t) = generate(&SimScenario { seed: rep_seed(3, rep), ..s.resolve().unwrap() }).unwrap();
            assert!(t.valid.is_empty());
            let z = data.instruments();
            let gram = z.tr_mul(z) / data.n() as f64;
            let pi = DVector::from_vec(t.pi.clone());
            let g = DVector::from_vec(t.gamma.clone());
            draws.push(pi.dot(&(&gram * &g)));
        }
        let mean = crate::stats::mean(&draws);
        let se = crate::stats::sample_sd(&draws) / (draws.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn rep_seeds_differ() {
        let seeds: Vec<u64> = (0..1000).map(|r| rep_seed(42, r)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 1000);
        assert_eq!(rep_seed(42, 7), seeds[7]);
    }

    #[test]
    fn noiseless_oracle_has_zero_bias() {
        let s = SimScenario { noise: 0.0, ..SimScenario::linear(200, 3, 1.0) };
        let table = run_experiment(&s, &["tsls-oracle"], 1).unwrap();
        assert_eq!(table.rows[0].bias, Some(0.0));
        assert_eq!(table.rows[0].rmse, Some(0.0));
    }

    #[test]
    fn unknown_method() {
        let s = SimScenario::linear(200, 3, 1.0);
        assert!(matches!(run_experiment(&s, &["nope"], 1), Err(IvError::UnknownMethod(_))));
    }

    #[test]
    fn table_is_schedule_independent() {
        let s = majority(2000);
        let methods = [MethodSpec::new(MethodId::Tsht), MethodSpec::new(MethodId::SearchingCi), MethodSpec::new(MethodId::TslsOracle)];
        let a = run_experiment_with(&s, &methods, 20).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_experiment_with(&s, &methods, 20)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        let row = a.row("tsht").unwrap();
        assert!(row.selection_acc.is_some() && row.coverage.is_some());
        assert!(a.row("searching-ci").unwrap().bias.is_none());
        assert!(a.to_csv().starts_with("method,bias,rmse,coverage,med_length,selection_acc\n"));
    }

    #[test]
    fn scenario_toml_shape() {
        let s = majority(1000);
        let json = serde_json::to_string(&s).unwrap();
        let back: SimScenario = serde_json::from_str(&json).unwrap();
        assert_eq!(s, back);
        let minimal: SimScenario = serde_json::from_str(r#"{"family":"linear","n":100,"p":3,"beta":1.0}"#).unwrap();
        assert_eq!(minimal.confounding, 0.6);
        assert_eq!(minimal.pi_spec, PiSpec::default());
    }
}
