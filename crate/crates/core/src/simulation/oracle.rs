use serde::{Deserialize, Serialize};

/// Largest number of instruments the exhaustive enumeration accepts.
pub const ORACLE_MAX_P: usize = 12;
const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentificationRule {
    /// More than half of the instruments are valid.
    Majority,
    /// The valid instruments form a largest group with a common ratio; ties yield one
    /// solution per tied group.
    Plurality,
    /// Every other common-ratio set is strictly smaller than the valid set.
    Andrews,
}

/// One `(beta, pi)` solving `Gamma = beta gamma + pi` with `pi_S = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub beta: f64,
    pub pi: Vec<f64>,
    /// The largest common-ratio set with this `beta`.
    pub valid: Vec<usize>,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= RATIO_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Whether `Gamma_j / gamma_j` is constant over the instruments in `mask`, returning that
/// constant.
fn common_ratio(big: &[f64], small: &[f64], mask: u32) -> Option<f64> {
    let mut first: Option<f64> = None;
    for j in 0..big.len() {
        if mask & (1 << j) == 0 {
            continue;
        }
        if small[j] == 0.0 {
            return None;
        }
        let r = big[j] / small[j];
        match first {
            None => first = Some(r),
            Some(f) if !close(f, r) => return None,
            _ => {}
        }
    }
    first
}

/// Every solution of the reduced-form system admitted by `rule`, sorted by `beta`.
///
/// Enumerates all nonempty instrument subsets, keeps those with a common ratio, and
/// applies the rule to the maximal common-ratio sets.
///
/// # Panics
/// When the vectors differ in length or exceed [`ORACLE_MAX_P`] entries.
pub fn identification_oracle(big_gamma: &[f64], gamma: &[f64], rule: IdentificationRule) -> Vec<OracleSolution> {
    let p = gamma.len();
    assert_eq!(big_gamma.len(), p, "Gamma and gamma differ in length");
    assert!(p <= ORACLE_MAX_P, "exhaustive enumeration supports at most {ORACLE_MAX_P} instruments");
    let constant: Vec<(u32, f64)> = (1u32..(1 << p))
        .filter_map(|mask| common_ratio(big_gamma, gamma, mask).map(|r| (mask, r)))
        .collect();
    // maximal common-ratio sets
    let groups: Vec<(u32, f64)> = constant
        .iter()
        .copied()
        .filter(|&(mask, _)| !constant.iter().any(|&(other, _)| other != mask && other & mask == mask))
        .collect();
    let size = |mask: u32| mask.count_ones() as usize;
    let chosen: Vec<(u32, f64)> = match rule {
        IdentificationRule::Majority => groups.iter().copied().filter(|&(m, _)| 2 * size(m) > p).collect(),
        IdentificationRule::Plurality => {
            let top = groups.iter().map(|&(m, _)| size(m)).max().unwrap_or(0);
            groups.iter().copied().filter(|&(m, _)| size(m) == top).collect()
        }
        IdentificationRule::Andrews => groups
            .iter()
            .copied()
            .filter(|&(m, r)| {
                constant
                    .iter()
                    .all(|&(other, ro)| other & m == other || close(ro, r) || size(other) < size(m))
            })
            .collect(),
    };
    let mut out: Vec<OracleSolution> = Vec::new();
    for (mask, beta) in chosen {
        if out.iter().any(|s| close(s.beta, beta)) {
            continue;
        }
        let valid: Vec<usize> = (0..p).filter(|&j| mask & (1 << j) != 0).collect();
        let pi = (0..p)
            .map(|j| if mask & (1 << j) != 0 { 0.0 } else { big_gamma[j] - beta * gamma[j] })
            .collect();
        out.push(OracleSolution { beta, pi, valid });
    }
    out.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    out
}
