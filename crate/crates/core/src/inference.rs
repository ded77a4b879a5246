//! Surrogate posterior inference over a finite parameter set.
//!
//! Each class likelihood `p(x | θ_i)` is replaced by an optimistic (or kernel)
//! estimate `L_i`, and the posterior solves
//! `min_q Σ q_i (log q_i − log π_i) − Σ q_i log L_i` over the simplex, whose
//! minimizer is `q_i ∝ π_i L_i` with value `−log Σ π_i L_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence_ball::{DivergenceBall, DivergenceFamily};
use crate::error::{Error, Result};
use crate::kernel_baseline::{kernel_log_likelihood, KernelKind, KernelSpec};
use crate::measures::{empirical_measure, DiscreteMeasure, GroundMetric, ProbabilityVector};
use crate::moment_ball::MomentSummary;
use crate::rng::{stream_rng, StreamRng};
use crate::wasserstein_ball::WassersteinBall;

/// How a class-conditional likelihood is estimated from samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum LikelihoodSpec {
    Divergence {
        family: DivergenceFamily,
        radius: f64,
    },
    Moment {
        #[serde(default)]
        regularization: f64,
    },
    Wasserstein {
        radius: f64,
        #[serde(default)]
        metric: GroundMetric,
    },
    Kernel {
        kind: KernelKind,
        width: f64,
        #[serde(default)]
        metric: GroundMetric,
    },
}

impl LikelihoodSpec {
    /// Short name used in reports and on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            LikelihoodSpec::Divergence { family, .. } => match family {
                DivergenceFamily::Kl => "kl",
                DivergenceFamily::Hellinger => "hellinger",
                DivergenceFamily::ChiSquared => "chi2",
                DivergenceFamily::TotalVariation => "tv",
            },
            LikelihoodSpec::Moment { .. } => "moment",
            LikelihoodSpec::Wasserstein { .. } => "wasserstein",
            LikelihoodSpec::Kernel { kind, .. } => match kind {
                KernelKind::Exponential => "kernel-exp",
                KernelKind::Uniform => "kernel-uni",
                KernelKind::Epanechnikov => "kernel-epa",
            },
        }
    }

    /// The tunable radius or width, if the method has one.
    pub fn hyper_parameter(&self) -> Option<f64> {
        match *self {
            LikelihoodSpec::Divergence { radius, .. } | LikelihoodSpec::Wasserstein { radius, .. } => Some(radius),
            LikelihoodSpec::Kernel { width, .. } => Some(width),
            LikelihoodSpec::Moment { .. } => None,
        }
    }

    /// Copy of `self` with the radius or width replaced.
    pub fn with_hyper_parameter(&self, value: f64) -> Self {
        let mut out = *self;
        match &mut out {
            LikelihoodSpec::Divergence { radius, .. } | LikelihoodSpec::Wasserstein { radius, .. } => *radius = value,
            LikelihoodSpec::Kernel { width, .. } => *width = value,
            LikelihoodSpec::Moment { .. } => {}
        }
        out
    }

    /// Builds the estimator for one class from its samples.
    pub fn fit(&self, samples: &[Vec<f64>]) -> Result<ClassLikelihood> {
        self.fit_measure(empirical_measure(samples)?)
    }

    /// Builds the estimator around a given nominal measure.
    pub fn fit_measure(&self, center: DiscreteMeasure) -> Result<ClassLikelihood> {
        Ok(match *self {
            LikelihoodSpec::Divergence { family, radius } => {
                ClassLikelihood::Divergence(DivergenceBall::new(family, center, radius)?)
            }
            LikelihoodSpec::Moment { regularization } => {
                ClassLikelihood::Moment(MomentSummary::from_measure(&center, regularization)?)
            }
            LikelihoodSpec::Wasserstein { radius, metric } => {
                ClassLikelihood::Wasserstein(WassersteinBall::new(center, radius, metric)?)
            }
            LikelihoodSpec::Kernel { kind, width, metric } => ClassLikelihood::Kernel {
                spec: KernelSpec::new(kind, width)?,
                center,
                metric,
            },
        })
    }
}

/// A fitted class-conditional likelihood estimator.
#[derive(Debug, Clone)]
pub enum ClassLikelihood {
    Divergence(DivergenceBall),
    Moment(MomentSummary),
    Wasserstein(WassersteinBall),
    Kernel {
        spec: KernelSpec,
        center: DiscreteMeasure,
        metric: GroundMetric,
    },
}

impl ClassLikelihood {
    pub fn likelihood(&self, x: &[f64]) -> Result<f64> {
        match self {
            ClassLikelihood::Divergence(ball) => ball.optimistic_likelihood(x),
            ClassLikelihood::Moment(summary) => summary.optimistic_likelihood(x),
            ClassLikelihood::Wasserstein(ball) => Ok(ball.optimistic_likelihood(x)?.0),
            ClassLikelihood::Kernel { spec, center, metric } => {
                Ok(kernel_log_likelihood(spec, center, *metric, x)?.exp())
            }
        }
    }

    /// Natural log of the estimate; `−∞` when the estimate is zero.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        match self {
            ClassLikelihood::Kernel { spec, center, metric } => kernel_log_likelihood(spec, center, *metric, x),
            _ => Ok(self.likelihood(x)?.ln()),
        }
    }
}

/// Labels, prior and one likelihood estimator per class.
#[derive(Debug, Clone)]
pub struct ClassModel {
    labels: Vec<String>,
    prior: ProbabilityVector,
    engines: Vec<ClassLikelihood>,
}

impl ClassModel {
    pub fn new(labels: Vec<String>, prior: ProbabilityVector, engines: Vec<ClassLikelihood>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidModel("at least two classes are required".into()));
        }
        if prior.len() != labels.len() || engines.len() != labels.len() {
            return Err(Error::InvalidModel(format!(
                "{} labels, {} prior entries, {} estimators",
                labels.len(),
                prior.len(),
                engines.len()
            )));
        }
        if prior.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidModel("prior must be strictly positive".into()));
        }
        Ok(Self { labels, prior, engines })
    }

    /// Fits `spec` separately to each class's samples.
    pub fn fit(
        labels: Vec<String>,
        prior: ProbabilityVector,
        class_samples: &[Vec<Vec<f64>>],
        spec: &LikelihoodSpec,
    ) -> Result<Self> {
        let engines = class_samples.iter().map(|s| spec.fit(s)).collect::<Result<Vec<_>>>()?;
        Self::new(labels, prior, engines)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn prior(&self) -> &ProbabilityVector {
        &self.prior
    }

    pub fn engines(&self) -> &[ClassLikelihood] {
        &self.engines
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn log_likelihoods(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.engines.iter().map(|e| e.log_likelihood(x)).collect()
    }
}

/// Minimizer and optimal value of the surrogate ELBO problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posterior {
    pub posterior: ProbabilityVector,
    pub objective: f64,
    pub log_likelihoods: Vec<f64>,
}

/// Surrogate posterior of `model` at the observation `x`.
pub fn surrogate_posterior(model: &ClassModel, x: &[f64]) -> Result<Posterior> {
    let log_likelihoods = model.log_likelihoods(x)?;
    let (posterior, objective) = posterior_from_log_likelihoods(&model.prior, &log_likelihoods)?;
    Ok(Posterior {
        posterior,
        objective,
        log_likelihoods,
    })
}

/// Closed-form solution `q_i ∝ π_i L_i`, `Ĵ = −log Σ π_i L_i`, computed in log
/// space. Classes with `L_i = 0` (log `−∞`) receive zero mass.
pub fn posterior_from_log_likelihoods(prior: &[f64], log_likelihoods: &[f64]) -> Result<(ProbabilityVector, f64)> {
    if prior.len() != log_likelihoods.len() {
        return Err(Error::DimensionMismatch {
            expected: prior.len(),
            found: log_likelihoods.len(),
        });
    }
    if log_likelihoods.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::NonFinite("log-likelihoods"));
    }
    let terms: Vec<f64> = prior
        .iter()
        .zip(log_likelihoods)
        .map(|(p, l)| if *p > 0.0 { p.ln() + l } else { f64::NEG_INFINITY })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::ZeroEvidence);
    }
    let scaled: Vec<f64> = terms.iter().map(|t| (t - max).exp()).collect();
    let total: f64 = scaled.iter().sum();
    let q = scaled.iter().map(|s| s / total).collect();
    Ok((ProbabilityVector::new(q)?, -(max + total.ln())))
}

/// `Σ q_i (log q_i − log π_i) − Σ q_i log L_i` with `0 log 0 = 0`.
pub fn elbo_objective(q: &[f64], prior: &[f64], log_likelihoods: &[f64]) -> Result<f64> {
    if q.len() != prior.len() || q.len() != log_likelihoods.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: prior.len().min(log_likelihoods.len()),
        });
    }
    let mut total = 0.0;
    for ((&qi, &pi), &li) in q.iter().zip(prior).zip(log_likelihoods) {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return Err(Error::NotAbsolutelyContinuous);
        }
        total += qi * (qi.ln() - pi.ln() - li);
    }
    Ok(total)
}

/// Constants of the light-tail concentration bound that calibrates the
/// Wasserstein radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationParams {
    pub k1: f64,
    pub k2: f64,
    /// Light-tail exponent, `a > 1`.
    pub a: f64,
    /// Confidence level in `(0, 1)`.
    pub beta: f64,
    /// Dimension of the observation space.
    pub dimension: usize,
}

impl ConcentrationParams {
    fn validate(&self) -> Result<()> {
        if !(self.k1 > 0.0 && self.k2 > 0.0) {
            return Err(Error::InvalidParameter("k1 and k2 must be positive".into()));
        }
        if self.a.is_nan() || self.a <= 1.0 {
            return Err(Error::InvalidParameter("tail exponent a must exceed 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidParameter("beta must lie in (0, 1)".into()));
        }
        if self.dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(())
    }
}

/// Radius `(log(k1 C / β) / (k2 N))^{1/p}` with `p = max(m, 2)` once
/// `N ≥ log(k1 C / β) / k2` and `p = a` below that threshold. A nonpositive
/// logarithm yields radius 0.
pub fn wasserstein_radius(params: &ConcentrationParams, classes: usize, samples: usize) -> Result<f64> {
    params.validate()?;
    if params.dimension == 2 {
        return Err(Error::DimensionTwo);
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("sample size must be at least 1".into()));
    }
    let log_term = (params.k1 * classes as f64 / params.beta).ln();
    if log_term <= 0.0 {
        return Ok(0.0);
    }
    let threshold = log_term / params.k2;
    let n = samples as f64;
    let exponent = if n >= threshold {
        1.0 / params.dimension.max(2) as f64
    } else {
        1.0 / params.a
    };
    Ok((log_term / (params.k2 * n)).powf(exponent))
}

/// A finite family of class-conditional distributions that can be sampled and
/// evaluated exactly.
pub trait ClassConditional: Sync {
    fn num_classes(&self) -> usize;

    fn sample(&self, class: usize, rng: &mut StreamRng) -> Vec<f64>;

    fn pmf(&self, class: usize, x: &[f64]) -> f64;
}

/// Monte-Carlo setup comparing the surrogate objective with the true ELBO
/// optimum at a fixed observation.
#[derive(Debug, Clone)]
pub struct SurrogateTrial<'a, M: ClassConditional> {
    pub model: &'a M,
    pub prior: ProbabilityVector,
    pub observation: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    /// One estimator spec per class (radii may differ across classes).
    pub specs: Vec<LikelihoodSpec>,
}

impl<M: ClassConditional> SurrogateTrial<'_, M> {
    fn validate(&self) -> Result<()> {
        let c = self.model.num_classes();
        if self.prior.len() != c || self.sample_sizes.len() != c || self.specs.len() != c {
            return Err(Error::InvalidModel(
                "per-class inputs must match the class count".into(),
            ));
        }
        if self.sample_sizes.contains(&0) {
            return Err(Error::InvalidParameter("sample sizes must be positive".into()));
        }
        Ok(())
    }

    /// Optimal value of the true ELBO problem.
    pub fn true_objective(&self) -> Result<f64> {
        let log_l: Vec<f64> = (0..self.model.num_classes())
            .map(|i| self.model.pmf(i, &self.observation).ln())
            .collect();
        let (q, _) = posterior_from_log_likelihoods(&self.prior, &log_l)?;
        elbo_objective(&q, &self.prior, &log_l)
    }

    /// Surrogate objective for one draw of training samples; `+∞` when every
    /// class estimate vanishes.
    fn surrogate_objective(&self, rng: &mut StreamRng) -> Result<f64> {
        let mut log_l = Vec::with_capacity(self.specs.len());
        for (class, (spec, &n)) in self.specs.iter().zip(&self.sample_sizes).enumerate() {
            let samples: Vec<Vec<f64>> = (0..n).map(|_| self.model.sample(class, rng)).collect();
            log_l.push(spec.fit(&samples)?.log_likelihood(&self.observation)?);
        }
        match posterior_from_log_likelihoods(&self.prior, &log_l) {
            Ok((_, objective)) => Ok(objective),
            Err(Error::ZeroEvidence) => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }

    fn surrogate_objectives(&self, trials: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        if trials == 0 {
            return Err(Error::InvalidParameter("at least one trial is required".into()));
        }
        (0..trials)
            .into_par_iter()
            .map(|t| self.surrogate_objective(&mut stream_rng(seed, t as u64)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

/// Fraction of trials in which the surrogate objective exceeds the true ELBO
/// optimum.
pub fn disappointment_rate<M: ClassConditional>(
    setup: &SurrogateTrial<'_, M>,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let truth = setup.true_objective()?;
    let objectives = setup.surrogate_objectives(trials, seed)?;
    let hits = objectives.iter().filter(|&&j| truth < j).count();
    Ok(hits as f64 / trials as f64)
}

/// Mean absolute gap `|Ĵ − J_true|` across trials.
pub fn mean_objective_gap<M: ClassConditional>(setup: &SurrogateTrial<'_, M>, trials: usize, seed: u64) -> Result<f64> {
    let truth = setup.true_objective()?;
    let objectives = setup.surrogate_objectives(trials, seed)?;
    let total: f64 = objectives.iter().map(|j| (j - truth).abs()).sum();
    Ok(total / trials as f64)
}
