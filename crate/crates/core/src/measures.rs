//! Finitely supported probability measures, ground metrics and the discrete
//! KL divergence shared by every solver in the crate.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Mass tolerance for `n` entries; summation error grows with the length.
pub fn mass_tolerance(n: usize) -> f64 {
    MASS_TOLERANCE.max(4.0 * n as f64 * f64::EPSILON)
}

/// Hashable key for exact vector equality. `-0.0` and `0.0` map to the same key
/// so that the key agrees with `==` on finite entries.
fn point_key(point: &[f64]) -> Vec<u64> {
    point.iter().map(|v| (v + 0.0).to_bits()).collect()
}

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A finitely supported probability measure `Σ_j w_j δ_{x_j}` with distinct atoms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from atoms and weights. Repeated atoms are merged by
    /// summing their weights.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        let dim = points[0].len();
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                });
            }
            check_finite(p, "support point")?;
        }
        check_finite(&weights, "weights")?;
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidProbabilities("weights must be strictly positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > mass_tolerance(weights.len()) {
            return Err(Error::InvalidProbabilities(format!("weights sum to {total}, not 1")));
        }

        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(points.len());
        let mut merged_points = Vec::with_capacity(points.len());
        let mut merged_weights: Vec<f64> = Vec::with_capacity(points.len());
        for (p, w) in points.into_iter().zip(weights) {
            match index.get(&point_key(&p)) {
                Some(&j) => merged_weights[j] += w,
                None => {
                    index.insert(point_key(&p), merged_points.len());
                    merged_points.push(p);
                    merged_weights.push(w);
                }
            }
        }
        Ok(Self {
            points: merged_points,
            weights: merged_weights,
        })
    }

    /// Point mass at `point`.
    pub fn dirac(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point], vec![1.0])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of distinct atoms.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Index of the atom equal to `x`, if `x` lies in the support.
    pub fn support_index(&self, x: &[f64]) -> Option<usize> {
        self.points.iter().position(|p| p.as_slice() == x)
    }

    /// Mass the measure places at `x`.
    pub fn mass_at(&self, x: &[f64]) -> f64 {
        self.support_index(x).map_or(0.0, |k| self.weights[k])
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        check_finite(x, "observation")
    }
}

/// Empirical measure of a sample set; duplicate samples are merged and carry
/// weight multiplicity / N.
pub fn empirical_measure(samples: &[Vec<f64>]) -> Result<DiscreteMeasure> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let dim = samples[0].len();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for s in samples {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.len(),
            });
        }
        check_finite(s, "sample")?;
        let key = point_key(s);
        match index.get(&key) {
            Some(&j) => counts[j] += 1,
            None => {
                index.insert(key, points.len());
                points.push(s.clone());
                counts.push(1);
            }
        }
    }
    let n = samples.len() as f64;
    let weights = counts.into_iter().map(|c| c as f64 / n).collect();
    Ok(DiscreteMeasure { points, weights })
}

/// Ground metric on `R^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundMetric {
    L1,
    #[default]
    L2,
    Linf,
}

impl GroundMetric {
    /// Distance without dimension checks; callers guarantee equal lengths.
    #[inline]
    pub(crate) fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            GroundMetric::L1 => diffs.sum(),
            GroundMetric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            GroundMetric::Linf => diffs.fold(0.0, f64::max),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "l1" => Some(GroundMetric::L1),
            "l2" => Some(GroundMetric::L2),
            "linf" => Some(GroundMetric::Linf),
            _ => None,
        }
    }
}

/// Distance between two points under `metric`.
pub fn distance(metric: GroundMetric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(metric.eval(a, b))
}

/// An observed sample point with finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation(Vec<f64>);

impl Observation {
    pub fn new(value: Vec<f64>) -> Result<Self> {
        check_finite(&value, "observation")?;
        Ok(Self(value))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for Observation {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidProbabilities("empty vector".into()));
        }
        check_finite(&entries, "probability vector")?;
        if entries.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidProbabilities("negative entry".into()));
        }
        let total: f64 = entries.iter().sum();
        if (total - 1.0).abs() > mass_tolerance(entries.len()) {
            return Err(Error::InvalidProbabilities(format!("entries sum to {total}, not 1")));
        }
        Ok(Self(entries))
    }

    /// Uniform distribution over `len` outcomes.
    pub fn uniform(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidProbabilities("empty vector".into()));
        }
        Ok(Self(vec![1.0 / len as f64; len]))
    }

    /// Normalizes nonnegative weights into a probability vector.
    pub fn from_unnormalized(weights: &[f64]) -> Result<Self> {
        check_finite(weights, "weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidProbabilities("negative entry".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidProbabilities("zero total mass".into()));
        }
        Ok(Self(weights.iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ProbabilityVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `KL(p ‖ q) = Σ_i p_i log(p_i / q_i)` with `0 log 0 = 0`.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::NotAbsolutelyContinuous);
        }
        total += pi * (pi / qi).ln();
    }
    // Rounding can push the sum a hair below zero when p ≈ q.
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empirical_merges_duplicates() {
        let m = empirical_measure(&[vec![1.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(m.points(), &[vec![1.0], vec![3.0]]);
        assert!((m.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_singleton_and_uniform() {
        let m = empirical_measure(&[vec![0.0, 0.0]]).unwrap();
        assert_eq!(m.weights(), &[1.0]);
        let m = empirical_measure(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert_eq!(m.weights(), &[0.25; 4]);
    }

    #[test]
    fn empirical_errors() {
        assert_eq!(empirical_measure(&[]), Err(Error::EmptySamples));
        assert_eq!(Error::EmptySamples.to_string(), "empty sample set");
        assert!(matches!(
            empirical_measure(&[vec![0.0], vec![0.0, 1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn signed_zero_is_one_atom() {
        let m = empirical_measure(&[vec![0.0], vec![-0.0]]).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.support_index(&[-0.0]), Some(0));
    }

    #[test]
    fn constructor_rejects_bad_weights() {
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![1.0, 0.0]).is_err());
        let m = DiscreteMeasure::new(vec![vec![2.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.weights(), &[1.0]);
    }

    #[test]
    fn distances() {
        assert_eq!(distance(GroundMetric::L1, &[-1.0], &[1.0]).unwrap(), 2.0);
        assert_eq!(distance(GroundMetric::L2, &[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(distance(GroundMetric::Linf, &[1.0, 2.0], &[4.0, 0.0]).unwrap(), 3.0);
        assert!(distance(GroundMetric::L2, &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_discrete(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let v = kl_discrete(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let err = kl_discrete(&[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
        assert_eq!(err.to_string(), "KL undefined: not absolutely continuous");
    }

    fn simplex(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
    }

    fn metric() -> impl Strategy<Value = GroundMetric> {
        prop_oneof![Just(GroundMetric::L1), Just(GroundMetric::L2), Just(GroundMetric::Linf)]
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative((p, q) in (2usize..6).prop_flat_map(|n| (simplex(n), simplex(n)))) {
            let v = kl_discrete(&p, &q).unwrap();
            prop_assert!(v >= 0.0);
            prop_assert!(kl_discrete(&p, &p).unwrap() <= 1e-10);
        }

        #[test]
        fn empirical_counts(samples in prop::collection::vec(0i32..5, 1..40)) {
            let pts: Vec<Vec<f64>> = samples.iter().map(|&s| vec![s as f64]).collect();
            let m = empirical_measure(&pts).unwrap();
            let total: f64 = m.weights().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            for (p, w) in m.points().iter().zip(m.weights()) {
                let count = samples.iter().filter(|&&s| s as f64 == p[0]).count();
                prop_assert!((w - count as f64 / samples.len() as f64).abs() < 1e-15);
            }
        }

        #[test]
        fn metric_axioms(
            metric in metric(),
            a in prop::collection::vec(-10.0f64..10.0, 3),
            b in prop::collection::vec(-10.0f64..10.0, 3),
            c in prop::collection::vec(-10.0f64..10.0, 3),
        ) {
            let ab = distance(metric, &a, &b).unwrap();
            let ba = distance(metric, &b, &a).unwrap();
            let bc = distance(metric, &b, &c).unwrap();
            let ac = distance(metric, &a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(distance(metric, &a, &a).unwrap(), 0.0);
        }
    }
}
