use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A finite union of disjoint closed intervals, stored sorted ascending.
///
/// Endpoints may be infinite (unbounded test-inversion sets). The empty sequence is
/// the empty set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(lower: f64, upper: f64) -> Self {
        Self::from_intervals(vec![(lower, upper)])
    }

    /// Normalizes an arbitrary list of intervals: drops pairs with `lower > upper` or NaN,
    /// sorts, and merges overlapping or touching pieces.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|(l, u)| !l.is_nan() && !u.is_nan() && l <= u);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (l, u) in raw {
            match merged.last_mut() {
                Some(last) if l <= last.1 => last.1 = last.1.max(u),
                _ => merged.push((l, u)),
            }
        }
        Self { intervals: merged }
    }

    pub fn union(&self, other: &IntervalUnion) -> Self {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Self::from_intervals(all)
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(l, u)| l <= x && x <= u)
    }

    /// Total Lebesgue measure.
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|(l, u)| u - l).sum()
    }

    /// Smallest single interval containing the set.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.intervals.first()?.0, self.intervals.last()?.1))
    }

    pub fn is_subset_of(&self, other: &IntervalUnion) -> bool {
        self.intervals.iter().all(|&(l, u)| {
            other
                .intervals
                .iter()
                .any(|&(ol, ou)| ol <= l && u <= ou)
        })
    }
}

fn encode(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else if x > 0.0 {
        serde_json::json!("inf")
    } else {
        serde_json::json!("-inf")
    }
}

fn decode(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) if s == "inf" => Some(f64::INFINITY),
        serde_json::Value::String(s) if s == "-inf" => Some(f64::NEG_INFINITY),
        _ => None,
    }
}

// Serialized as a list of `[lower, upper]` pairs; infinite endpoints become "inf"/"-inf".
impl Serialize for IntervalUnion {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[serde_json::Value; 2]> = self
            .intervals
            .iter()
            .map(|&(l, u)| [encode(l), encode(u)])
            .collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for IntervalUnion {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs: Vec<[serde_json::Value; 2]> = Vec::deserialize(deserializer)?;
        let mut out = Vec::with_capacity(pairs.len());
        for [l, u] in &pairs {
            let (Some(l), Some(u)) = (decode(l), decode(u)) else {
                return Err(serde::de::Error::custom("interval endpoint must be a number or +/-inf"));
            };
            out.push((l, u));
        }
        Ok(Self::from_intervals(out))
    }
}
