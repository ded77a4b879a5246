//! Probabilistic classification with per-class likelihood estimators:
//! empirical class measures, count-based prior, hyper-parameter tuning by
//! stratified cross-validation and average-precision scoring.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence_ball::optimistic_likelihood_divergence;
use crate::error::{Error, Result};
use crate::inference::{posterior_from_log_likelihoods, surrogate_posterior, ClassModel, LikelihoodSpec};
use crate::kernel_baseline::{log_sum_exp, KernelKind};
use crate::measures::{empirical_measure, DiscreteMeasure, ProbabilityVector};
use crate::moment_ball::MomentSummary;
use crate::rng::stream_rng;
use crate::wasserstein_ball::TransportProfile;

/// Feature matrix with class labels `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::EmptySamples);
        }
        if features.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} feature rows but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features[0].len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Dataset(format!(
                    "row {i}: expected {dim} features, found {}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!("row {i}, column {j}: non-finite feature")));
            }
        }
        let mut present = vec![false; class_names.len()];
        for &l in &labels {
            if l >= class_names.len() {
                return Err(Error::Dataset(format!("label index {l} out of range")));
            }
            present[l] = true;
        }
        if let Some(c) = present.iter().position(|p| !p) {
            return Err(Error::Dataset(format!("class '{}' has no members", class_names[c])));
        }
        Ok(Self {
            features,
            labels,
            class_names,
        })
    }

    /// Reads a CSV whose last column is the label and whose other columns are
    /// numeric features. The first row is treated as a header unless every
    /// field in it parses as a number.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        let mut rows: Vec<(usize, Vec<f64>, String)> = Vec::new();
        let mut width = None;
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
            if record.iter().all(|f| f.is_empty()) {
                continue;
            }
            if line == 0 && !record.iter().all(|f| f.parse::<f64>().is_ok()) {
                continue;
            }
            let row = line + 1;
            if record.len() < 2 {
                return Err(Error::Dataset(format!(
                    "row {row}: need at least one feature and a label"
                )));
            }
            match width {
                None => width = Some(record.len()),
                Some(w) if w != record.len() => {
                    return Err(Error::Dataset(format!(
                        "row {row}: expected {w} columns, found {}",
                        record.len()
                    )));
                }
                _ => {}
            }
            let n = record.len() - 1;
            let mut feats = Vec::with_capacity(n);
            for (col, field) in record.iter().take(n).enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Dataset(format!(
                        "row {row}, column {}: cannot parse '{field}' as a number",
                        col + 1
                    ))
                })?;
                if !v.is_finite() {
                    return Err(Error::Dataset(format!(
                        "row {row}, column {}: non-finite value",
                        col + 1
                    )));
                }
                feats.push(v);
            }
            rows.push((row, feats, record[n].to_string()));
        }
        if rows.is_empty() {
            return Err(Error::Dataset(format!("{}: no data rows", path.display())));
        }
        let mut names: Vec<String> = rows.iter().map(|r| r.2.clone()).collect();
        names.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => x.total_cmp(&y),
            _ => a.cmp(b),
        });
        names.dedup();
        let labels = rows
            .iter()
            .map(|r| names.iter().position(|n| *n == r.2).unwrap_or_default())
            .collect();
        let features = rows.into_iter().map(|r| r.1).collect();
        Self::new(features, labels, names)
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`; every class must remain represented.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(
            indices.iter().map(|&i| self.features[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.class_names.clone(),
        )
    }

    /// Samples grouped by class.
    pub fn class_samples(&self) -> Vec<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new(); self.num_classes()];
        for (x, &l) in self.features.iter().zip(&self.labels) {
            out[l].push(x.clone());
        }
        out
    }

    /// Prior `π_i = N_i / N`.
    pub fn class_prior(&self) -> Result<ProbabilityVector> {
        let n = self.len() as f64;
        ProbabilityVector::new(self.class_counts().iter().map(|&c| c as f64 / n).collect())
    }
}

/// Reads numeric sample rows from a CSV. A first row that does not parse as
/// numbers is treated as a header.
pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<Option<f64>> = record.iter().map(|f| f.parse().ok()).collect();
        if line == 0 && parsed.iter().any(Option::is_none) {
            continue;
        }
        let row = line + 1;
        let mut values = Vec::with_capacity(parsed.len());
        for (col, v) in parsed.into_iter().enumerate() {
            match v {
                Some(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Dataset(format!(
                        "row {row}, column {}: '{}' is not a finite number",
                        col + 1,
                        &record[col]
                    )))
                }
            }
        }
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::Dataset(format!(
                    "row {row}: expected {} columns, found {}",
                    first.len(),
                    values.len()
                )));
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(rows)
}

/// Ascending list of positive candidate radii (or widths).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TuningGrid {
    candidates: Vec<f64>,
}

impl TuningGrid {
    pub fn new(mut candidates: Vec<f64>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidParameter("tuning grid is empty".into()));
        }
        if candidates.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::InvalidParameter("tuning candidates must be positive".into()));
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        Ok(Self { candidates })
    }

    /// `{a √m 10^b : a ∈ 1..=9, b ∈ {−3, −2, −1}}`.
    pub fn default_for_dimension(m: usize) -> Self {
        let root = (m as f64).sqrt();
        let candidates = [-3, -2, -1]
            .iter()
            .flat_map(|&b| (1..=9).map(move |a| a as f64 * root * 10f64.powi(b)))
            .collect();
        Self { candidates }
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }
}

/// One train/validation partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

fn class_indices(labels: &[usize]) -> Vec<Vec<usize>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

/// Stratified k-fold partition. Each class is shuffled with the seeded stream
/// and dealt round-robin over the folds, continuing the rotation across classes.
pub fn stratified_kfold(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::InvalidParameter("at least two folds are required".into()));
    }
    let by_class = class_indices(labels);
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < folds {
            return Err(Error::CannotStratify {
                class,
                count: members.len(),
                folds,
            });
        }
    }
    let mut rng = stream_rng(seed, 0);
    let mut assignment = vec![0usize; labels.len()];
    let mut position = 0usize;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = position % folds;
            position += 1;
        }
    }
    Ok((0..folds)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}

/// Stratified random split holding out `round(test_fraction · N_c)` members of
/// each class. Returns `(train, test)` index lists in ascending order.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidParameter("test fraction must lie in (0, 1)".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut members in class_indices(labels) {
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let n_test =
            ((members.len() as f64 * test_fraction).round() as usize).clamp(1, members.len() - 1.min(members.len()));
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Average precision with step interpolation: `Σ (R_k − R_{k−1}) P_k` over the
/// ranks where recall increases. Tied scores form one block evaluated at the
/// precision of its last member.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let p = positives as f64;
    let (mut seen, mut hits, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut block_hits = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            block_hits += labels[order[j]] as usize;
            j += 1;
        }
        seen += j - i;
        hits += block_hits;
        if block_hits > 0 {
            ap += (block_hits as f64 / p) * (hits as f64 / seen as f64);
        }
        i = j;
    }
    Ok(ap)
}

/// Ranking quality of posterior vectors: average precision of the second class
/// for binary problems, macro one-vs-rest average precision otherwise.
pub fn posterior_score(posteriors: &[Vec<f64>], labels: &[usize], classes: usize) -> Result<f64> {
    let score_for = |c: usize| -> Result<f64> {
        let scores: Vec<f64> = posteriors.iter().map(|q| q[c]).collect();
        let truth: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        auprc(&scores, &truth)
    };
    if classes == 2 {
        score_for(1)
    } else {
        let mut total = 0.0;
        for c in 0..classes {
            total += score_for(c)?;
        }
        Ok(total / classes as f64)
    }
}

/// Per-feature affine rescaling to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let m = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; m];
        for r in rows {
            for (a, v) in mean.iter_mut().zip(r) {
                *a += v / n;
            }
        }
        let mut var = vec![0.0; m];
        for r in rows {
            for ((a, v), mu) in var.iter_mut().zip(r).zip(&mean) {
                *a += (v - mu) * (v - mu) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, mu), s)| (v - mu) / s)
            .collect()
    }
}

/// Options for [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Candidate radii/widths; `None` keeps the hyper-parameter in the spec.
    pub grid: Option<TuningGrid>,
    pub folds: usize,
    pub seed: u64,
    /// Z-score features using training statistics.
    pub standardize: bool,
    /// Fixed per-class radii/widths; disables tuning.
    pub per_class: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid: None,
            folds: 5,
            seed: 0,
            standardize: false,
            per_class: None,
        }
    }
}

/// A fitted classifier together with its tuning record.
#[derive(Debug, Clone)]
pub struct FittedClassifier {
    pub model: ClassModel,
    /// Spec with the selected hyper-parameter.
    pub spec: LikelihoodSpec,
    pub scaler: Option<Standardizer>,
    /// Number of grid candidates scored by cross-validation.
    pub candidates_evaluated: usize,
    /// `(candidate, mean validation score)` for every evaluated candidate.
    pub cv_scores: Vec<(f64, f64)>,
}

impl FittedClassifier {
    pub fn predict_proba(&self, x: &[f64]) -> Result<ProbabilityVector> {
        match &self.scaler {
            Some(s) => predict_proba(&self.model, &s.apply(x)),
            None => predict_proba(&self.model, x),
        }
    }
}

/// Posterior class probabilities at `x`.
pub fn predict_proba(model: &ClassModel, x: &[f64]) -> Result<ProbabilityVector> {
    Ok(surrogate_posterior(model, x)?.posterior)
}

/// Builds per-class estimators and the count prior, tuning the shared
/// radius/width over `options.grid` by stratified cross-validation.
pub fn fit(dataset: &LabeledDataset, spec: &LikelihoodSpec, options: &FitOptions) -> Result<FittedClassifier> {
    let scaler = options.standardize.then(|| Standardizer::fit(dataset.features()));
    let data = match &scaler {
        Some(s) => LabeledDataset::new(
            dataset.features().iter().map(|x| s.apply(x)).collect(),
            dataset.labels().to_vec(),
            dataset.class_names().to_vec(),
        )?,
        None => dataset.clone(),
    };
    let prior = data.class_prior()?;
    let samples = data.class_samples();
    let labels = data.class_names().to_vec();

    if let Some(per_class) = &options.per_class {
        if per_class.len() != data.num_classes() {
            return Err(Error::InvalidParameter(
                "one hyper-parameter per class is required".into(),
            ));
        }
        let engines = samples
            .iter()
            .zip(per_class)
            .map(|(s, &h)| spec.with_hyper_parameter(h).fit(s))
            .collect::<Result<Vec<_>>>()?;
        return Ok(FittedClassifier {
            model: ClassModel::new(labels, prior, engines)?,
            spec: *spec,
            scaler,
            candidates_evaluated: 0,
            cv_scores: Vec::new(),
        });
    }

    let (chosen, evaluated, cv_scores) = match (&options.grid, spec.hyper_parameter()) {
        (Some(grid), Some(_)) if grid.candidates().len() > 1 => {
            let scores = cross_validate(&data, spec, grid, options.folds, options.seed)?;
            let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let pick = scores
                .iter()
                .find(|s| s.1 == best)
                .map(|s| s.0)
                .unwrap_or(grid.candidates()[0]);
            (spec.with_hyper_parameter(pick), grid.candidates().len(), scores)
        }
        (Some(grid), Some(_)) => (spec.with_hyper_parameter(grid.candidates()[0]), 0, Vec::new()),
        _ => (*spec, 0, Vec::new()),
    };
    Ok(FittedClassifier {
        model: ClassModel::fit(labels, prior, &samples, &chosen)?,
        spec: chosen,
        scaler,
        candidates_evaluated: evaluated,
        cv_scores,
    })
}

/// Class data prepared once per fold so every candidate can be scored from
/// shared distance computations.
enum PreparedClass {
    Measure(DiscreteMeasure),
    Moment(MomentSummary),
}

impl PreparedClass {
    fn new(spec: &LikelihoodSpec, samples: &[Vec<f64>]) -> Result<Self> {
        Ok(match spec {
            LikelihoodSpec::Moment { regularization } => {
                PreparedClass::Moment(MomentSummary::from_samples(samples, *regularization)?)
            }
            _ => PreparedClass::Measure(empirical_measure(samples)?),
        })
    }

    /// Log-likelihood of `x` for every candidate hyper-parameter.
    fn log_likelihoods(&self, spec: &LikelihoodSpec, x: &[f64], candidates: &[f64]) -> Result<Vec<f64>> {
        match (self, spec) {
            (PreparedClass::Moment(s), _) => {
                let v = s.optimistic_likelihood(x)?.ln();
                Ok(vec![v; candidates.len()])
            }
            (PreparedClass::Measure(m), LikelihoodSpec::Wasserstein { metric, .. }) => {
                let profile = TransportProfile::new(m, *metric, x)?;
                Ok(candidates.iter().map(|&r| profile.value(r).ln()).collect())
            }
            (PreparedClass::Measure(m), LikelihoodSpec::Kernel { kind, metric, .. }) => {
                m.check_dim(x)?;
                let dist: Vec<f64> = m.points().iter().map(|p| metric.eval(x, p)).collect();
                let log_w: Vec<f64> = m.weights().iter().map(|w| w.ln()).collect();
                Ok(candidates
                    .iter()
                    .map(|&h| match kind {
                        KernelKind::Exponential => {
                            let terms: Vec<f64> = dist.iter().zip(&log_w).map(|(d, lw)| lw - d / h).collect();
                            log_sum_exp(&terms)
                        }
                        _ => dist
                            .iter()
                            .zip(m.weights())
                            .map(|(d, w)| w * kind.eval(d / h))
                            .sum::<f64>()
                            .ln(),
                    })
                    .collect())
            }
            (PreparedClass::Measure(m), LikelihoodSpec::Divergence { family, .. }) => candidates
                .iter()
                .map(|&r| Ok(optimistic_likelihood_divergence(*family, m, r, x)?.ln()))
                .collect(),
            (PreparedClass::Measure(_), LikelihoodSpec::Moment { .. }) => {
                unreachable!("moment specs prepare summaries")
            }
        }
    }
}

/// Mean validation score of every grid candidate.
fn cross_validate(
    data: &LabeledDataset,
    spec: &LikelihoodSpec,
    grid: &TuningGrid,
    folds: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let partitions = stratified_kfold(data.labels(), folds, seed)?;
    let candidates = grid.candidates();
    let classes = data.num_classes();
    let per_fold: Vec<Vec<f64>> = partitions
        .par_iter()
        .map(|fold| -> Result<Vec<f64>> {
            let train = data.subset(&fold.train)?;
            let prior = train.class_prior()?;
            let prepared = train
                .class_samples()
                .iter()
                .map(|s| PreparedClass::new(spec, s))
                .collect::<Result<Vec<_>>>()?;
            // posteriors[candidate][validation point]
            let mut posteriors = vec![Vec::with_capacity(fold.validation.len()); candidates.len()];
            for &i in &fold.validation {
                let x = &data.features()[i];
                let per_class = prepared
                    .iter()
                    .map(|p| p.log_likelihoods(spec, x, candidates))
                    .collect::<Result<Vec<_>>>()?;
                for (c, post) in posteriors.iter_mut().enumerate() {
                    let log_l: Vec<f64> = per_class.iter().map(|v| v[c]).collect();
                    let q = match posterior_from_log_likelihoods(&prior, &log_l) {
                        Ok((q, _)) => q.into_inner(),
                        // No class can explain x: fall back to the prior.
                        Err(Error::ZeroEvidence) => prior.as_slice().to_vec(),
                        Err(e) => return Err(e),
                    };
                    post.push(q);
                }
            }
            let truth: Vec<usize> = fold.validation.iter().map(|&i| data.labels()[i]).collect();
            posteriors.iter().map(|p| posterior_score(p, &truth, classes)).collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_fold.len() as f64;
    Ok(candidates
        .iter()
        .enumerate()
        .map(|(c, &h)| (h, per_fold.iter().map(|f| f[c]).sum::<f64>() / n))
        .collect())
}
