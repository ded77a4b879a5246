//! Experiment harnesses: the beta-binomial posterior study, the
//! classification benchmark, likelihood curves and an empirical consistency
//! check of the surrogate objective.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;
use statrs::function::gamma::ln_gamma;

use crate::classify::{fit, posterior_score, stratified_split, FitOptions, LabeledDataset, TuningGrid};
use crate::divergence_ball::DivergenceFamily;
use crate::error::{Error, Result};
use crate::inference::{
    mean_objective_gap, posterior_from_log_likelihoods, wasserstein_radius, ClassConditional, ConcentrationParams,
    LikelihoodSpec, SurrogateTrial,
};
use crate::kernel_baseline::KernelKind;
use crate::measures::{empirical_measure, kl_discrete, DiscreteMeasure, GroundMetric, ProbabilityVector};
use crate::rng::{derive_seed, stream_rng, StreamRng};

/// Density of `Beta(α, β)` at `θ ∈ (0, 1)`.
pub fn beta_pdf(theta: f64, alpha: f64, beta: f64) -> Result<f64> {
    Ok(ln_beta_pdf(theta, alpha, beta)?.exp())
}

fn ln_beta_pdf(theta: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "beta density needs 0 < θ < 1, got {theta}"
        )));
    }
    if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
        return Err(Error::InvalidParameter("beta shape parameters must be positive".into()));
    }
    let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
    Ok((alpha - 1.0) * theta.ln() + (beta - 1.0) * (1.0 - theta).ln() - ln_b)
}

/// `Bin(x | trials, θ)`, evaluated in log space with `0⁰ = 1`.
pub fn binomial_pmf(x: u64, trials: u64, theta: f64) -> Result<f64> {
    if x > trials {
        return Err(Error::InvalidParameter(format!(
            "binomial outcome {x} exceeds {trials} trials"
        )));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!(
            "success probability {theta} outside [0, 1]"
        )));
    }
    let term = |k: u64, p: f64| if k == 0 { 0.0 } else { k as f64 * p.ln() };
    Ok((ln_binomial(trials, x) + term(x, theta) + term(trials - x, 1.0 - theta)).exp())
}

/// Rounds to at most 12 significant digits.
pub fn round_significant(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Shortest round-trip decimal of `v` after rounding to 12 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_significant(v);
    if r != 0.0 && (r.abs() < 1e-6 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

/// One report cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Text(String),
    Integer(u64),
    Real(f64),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Integer(i) => i.to_string(),
            Cell::Real(v) => format_number(*v),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Cell::Text(s) => s.clone().into(),
            Cell::Integer(i) => (*i).into(),
            Cell::Real(v) => serde_json::Number::from_f64(round_significant(*v))
                .map(serde_json::Value::Number)
                .unwrap_or_else(|| format_number(*v).into()),
        }
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Integer(v as u64)
    }
}

/// Tabular experiment output in long format. The CSV carries the table; the
/// JSON form adds the experiment name, seed and full configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub experiment: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl ExperimentReport {
    fn new(experiment: &str, seed: u64, config: &impl Serialize, columns: &[&str]) -> Result<Self> {
        Ok(Self {
            experiment: experiment.into(),
            seed,
            config: serde_json::to_value(config).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (c, v) in self.columns.iter().zip(row) {
                    obj.insert(c.clone(), v.json());
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        let doc = serde_json::json!({
            "experiment": self.experiment,
            "seed": self.seed,
            "config": self.config,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).unwrap_or_default();
        s.push('\n');
        s
    }

    /// Writes the CSV to `path` and the JSON form next to it with a `.json`
    /// extension. A path already ending in `.json` receives only the JSON.
    pub fn write(&self, path: &Path) -> Result<Vec<PathBuf>> {
        let io = |e: std::io::Error| Error::Dataset(format!("{}: {e}", path.display()));
        if path.extension().is_some_and(|e| e == "json") {
            fs::write(path, self.to_json()).map_err(io)?;
            return Ok(vec![path.to_path_buf()]);
        }
        let json_path = path.with_extension("json");
        fs::write(path, self.to_csv()).map_err(io)?;
        fs::write(&json_path, self.to_json()).map_err(io)?;
        Ok(vec![path.to_path_buf(), json_path])
    }

    /// Numeric cells of `column`, in row order.
    pub fn column_values(&self, column: &str) -> Vec<f64> {
        let Some(idx) = self.columns.iter().position(|c| c == column) else {
            return Vec::new();
        };
        self.rows
            .iter()
            .filter_map(|r| match r.get(idx) {
                Some(Cell::Real(v)) => Some(*v),
                Some(Cell::Integer(i)) => Some(*i as f64),
                _ => None,
            })
            .collect()
    }
}

/// Likelihood approximations compared in the beta-binomial study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaBinomialMethod {
    Kl,
    Wasserstein,
    ExponentialKernel,
}

impl BetaBinomialMethod {
    pub const ALL: [BetaBinomialMethod; 3] = [Self::Kl, Self::Wasserstein, Self::ExponentialKernel];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kl => "kl",
            Self::Wasserstein => "wasserstein",
            Self::ExponentialKernel => "kernel-exp",
        }
    }

    /// Estimator with radius (or width) `value` on the integer line.
    pub fn spec(self, value: f64) -> LikelihoodSpec {
        match self {
            Self::Kl => LikelihoodSpec::Divergence {
                family: DivergenceFamily::Kl,
                radius: value,
            },
            Self::Wasserstein => LikelihoodSpec::Wasserstein {
                radius: value,
                metric: GroundMetric::L1,
            },
            Self::ExponentialKernel => LikelihoodSpec::Kernel {
                kind: KernelKind::Exponential,
                width: value,
                metric: GroundMetric::L1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaBinomialConfig {
    pub alpha: f64,
    pub beta: f64,
    /// Binomial trials per observation.
    pub trials: u64,
    /// Number of grid points `θ_i = i / (grid_size + 1)`.
    pub grid_size: usize,
    pub theta_true: f64,
    /// Training samples per grid point.
    pub sample_sizes: Vec<usize>,
    /// Radii (and kernel widths) swept.
    pub radii: Vec<f64>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BetaBinomialConfig {
    fn default() -> Self {
        let radii = (-4..=1)
            .flat_map(|b| [1.0, 2.0, 5.0].map(|a| a * 10f64.powi(b)))
            .collect();
        Self {
            alpha: 1.0,
            beta: 1.0,
            trials: 20,
            grid_size: 20,
            theta_true: 0.6,
            sample_sizes: vec![1, 2, 4, 8, 10],
            radii,
            repetitions: 100,
            seed: 0,
        }
    }
}

impl BetaBinomialConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return bad("alpha and beta must be positive");
        }
        if !(self.theta_true > 0.0 && self.theta_true < 1.0) {
            return bad("theta_true must lie in (0, 1)");
        }
        if self.grid_size < 2 {
            return bad("grid_size must be at least 2");
        }
        if self.trials < 1 {
            return bad("trials must be at least 1");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return bad("sample_sizes must be nonempty and positive");
        }
        if self.radii.is_empty() || self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("radii must be nonempty and positive");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive");
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let c = self.grid_size as f64;
        (1..=self.grid_size).map(|i| i as f64 / (c + 1.0)).collect()
    }

    /// Prior proportional to the beta density over the grid.
    pub fn prior(&self) -> Result<ProbabilityVector> {
        normalized_beta(&self.grid(), self.alpha, self.beta)
    }

    /// Exact posterior restricted to the grid for observation `x`.
    pub fn discretized_posterior(&self, x: u64) -> Result<ProbabilityVector> {
        let m = self.trials as f64;
        normalized_beta(&self.grid(), x as f64 + self.alpha, m - x as f64 + self.beta)
    }
}

fn normalized_beta(grid: &[f64], alpha: f64, beta: f64) -> Result<ProbabilityVector> {
    let logs = grid
        .iter()
        .map(|&t| ln_beta_pdf(t, alpha, beta))
        .collect::<Result<Vec<_>>>()?;
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    ProbabilityVector::from_unnormalized(&w)
}

/// Mean KL from the surrogate posterior to the discretized posterior for every
/// (method, sample size, radius).
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBinomialResult {
    pub config: BetaBinomialConfig,
    pub methods: Vec<BetaBinomialMethod>,
    /// Indexed `[method][sample size][radius]`.
    pub mean_kl: Vec<Vec<Vec<f64>>>,
}

impl BetaBinomialResult {
    fn method_index(&self, method: BetaBinomialMethod) -> Option<usize> {
        self.methods.iter().position(|&m| m == method)
    }

    fn size_index(&self, n: usize) -> Option<usize> {
        self.config.sample_sizes.iter().position(|&s| s == n)
    }

    /// Smallest radius attaining the minimal mean KL, with that KL.
    pub fn tuned(&self, method: BetaBinomialMethod, n: usize) -> Option<(f64, f64)> {
        let row = &self.mean_kl[self.method_index(method)?][self.size_index(n)?];
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        let k = row.iter().position(|&v| v == best)?;
        Some((self.config.radii[k], best))
    }

    /// Rows `method, eps_or_h, n_i, mean_kl`.
    pub fn report(&self) -> Result<ExperimentReport> {
        let mut report = ExperimentReport::new(
            "beta-binomial",
            self.config.seed,
            &self.config,
            &["method", "eps_or_h", "n_i", "mean_kl"],
        )?;
        for (mi, method) in self.methods.iter().enumerate() {
            for (ni, &n) in self.config.sample_sizes.iter().enumerate() {
                for (ri, &r) in self.config.radii.iter().enumerate() {
                    report.rows.push(vec![
                        method.name().into(),
                        r.into(),
                        n.into(),
                        self.mean_kl[mi][ni][ri].into(),
                    ]);
                }
            }
        }
        Ok(report)
    }
}

/// Beta-binomial study. Each repetition draws one observation and one pool of
/// training samples per grid point; smaller sample sizes use prefixes of the
/// pool, and every method sees the same draws.
pub fn run_beta_binomial(config: &BetaBinomialConfig, methods: &[BetaBinomialMethod]) -> Result<BetaBinomialResult> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods requested".into()));
    }
    let grid = config.grid();
    let prior = config.prior()?;
    let max_n = config.sample_sizes.iter().copied().max().unwrap_or(1);
    let sampler = |theta: f64| Binomial::new(config.trials, theta).map_err(|e| Error::InvalidParameter(e.to_string()));
    let observation_law = sampler(config.theta_true)?;
    let class_laws = grid.iter().map(|&t| sampler(t)).collect::<Result<Vec<_>>>()?;

    let per_rep: Vec<Vec<Vec<Vec<f64>>>> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| -> Result<Vec<Vec<Vec<f64>>>> {
            let mut rng = stream_rng(config.seed, rep as u64);
            let x = observation_law.sample(&mut rng);
            let pools: Vec<Vec<Vec<f64>>> = class_laws
                .iter()
                .map(|law| (0..max_n).map(|_| vec![law.sample(&mut rng) as f64]).collect())
                .collect();
            let truth = config.discretized_posterior(x)?;
            let obs = [x as f64];
            methods
                .iter()
                .map(|method| {
                    config
                        .sample_sizes
                        .iter()
                        .map(|&n| {
                            let centers = pools
                                .iter()
                                .map(|pool| empirical_measure(&pool[..n]))
                                .collect::<Result<Vec<DiscreteMeasure>>>()?;
                            config
                                .radii
                                .iter()
                                .map(|&r| {
                                    let spec = method.spec(r);
                                    let log_l = centers
                                        .iter()
                                        .map(|c| spec.fit_measure(c.clone())?.log_likelihood(&obs))
                                        .collect::<Result<Vec<_>>>()?;
                                    match posterior_from_log_likelihoods(&prior, &log_l) {
                                        Ok((q, _)) => kl_discrete(&q, &truth),
                                        Err(Error::ZeroEvidence) => Ok(f64::INFINITY),
                                        Err(e) => Err(e),
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let reps = config.repetitions as f64;
    let mut mean_kl: Vec<Vec<Vec<f64>>> = methods
        .iter()
        .map(|_| vec![vec![0.0; config.radii.len()]; config.sample_sizes.len()])
        .collect();
    for rep in &per_rep {
        for (acc_m, rep_m) in mean_kl.iter_mut().zip(rep) {
            for (acc_n, rep_n) in acc_m.iter_mut().zip(rep_m) {
                for (a, v) in acc_n.iter_mut().zip(rep_n) {
                    *a += v / reps;
                }
            }
        }
    }
    Ok(BetaBinomialResult {
        config: config.clone(),
        methods: methods.to_vec(),
        mean_kl,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassificationConfig {
    /// Labeled CSV; used by the command line front end.
    pub dataset: Option<PathBuf>,
    pub methods: Vec<LikelihoodSpec>,
    pub trials: usize,
    pub folds: usize,
    pub test_fraction: f64,
    /// Candidate radii/widths; defaults to the dimension-scaled grid.
    pub grid: Option<Vec<f64>>,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            methods: vec![
                LikelihoodSpec::Kernel {
                    kind: KernelKind::Exponential,
                    width: 1.0,
                    metric: GroundMetric::L2,
                },
                LikelihoodSpec::Moment { regularization: 0.0 },
                LikelihoodSpec::Wasserstein {
                    radius: 1.0,
                    metric: GroundMetric::L2,
                },
            ],
            trials: 10,
            folds: 5,
            test_fraction: 0.25,
            grid: None,
            standardize: false,
            seed: 0,
        }
    }
}

/// Per-method outcome of the classification benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodOutcome {
    pub method: String,
    /// Test AUPRC of each trial.
    pub auprc: Vec<f64>,
    /// Selected radius/width per trial (`None` for untuned methods).
    pub selected: Vec<Option<f64>>,
    /// Grid candidates scored by cross-validation per trial.
    pub candidates_evaluated: Vec<usize>,
}

impl MethodOutcome {
    pub fn mean_auprc(&self) -> f64 {
        self.auprc.iter().sum::<f64>() / self.auprc.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationResult {
    pub outcomes: Vec<MethodOutcome>,
    #[serde(skip)]
    config: ClassificationConfig,
}

impl ClassificationResult {
    pub fn outcome(&self, method: &str) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }

    /// Long-format rows `method, trial, metric, value`; trial `all` holds the
    /// mean AUPRC × 100.
    pub fn report(&self) -> Result<ExperimentReport> {
        let mut report = ExperimentReport::new(
            "classify",
            self.config.seed,
            &self.config,
            &["method", "trial", "metric", "value"],
        )?;
        for o in &self.outcomes {
            for (t, &a) in o.auprc.iter().enumerate() {
                let trial = t.to_string();
                report.rows.push(vec![
                    o.method.as_str().into(),
                    trial.as_str().into(),
                    "auprc".into(),
                    a.into(),
                ]);
                if let Some(h) = o.selected[t] {
                    report.rows.push(vec![
                        o.method.as_str().into(),
                        trial.as_str().into(),
                        "hyper_parameter".into(),
                        h.into(),
                    ]);
                }
                report.rows.push(vec![
                    o.method.as_str().into(),
                    trial.as_str().into(),
                    "candidates_evaluated".into(),
                    o.candidates_evaluated[t].into(),
                ]);
            }
            report.rows.push(vec![
                o.method.as_str().into(),
                "all".into(),
                "mean_auprc_x100".into(),
                (100.0 * o.mean_auprc()).into(),
            ]);
        }
        Ok(report)
    }
}

/// Repeated stratified train/test evaluation. Tunable methods pick their
/// radius/width by stratified cross-validation on the training part; the
/// moment method is fitted directly.
pub fn run_classification(dataset: &LabeledDataset, config: &ClassificationConfig) -> Result<ClassificationResult> {
    if dataset.num_classes() != 2 {
        return Err(Error::Dataset(format!(
            "binary labels required, found {} classes",
            dataset.num_classes()
        )));
    }
    if config.trials == 0 || config.methods.is_empty() {
        return Err(Error::InvalidParameter("trials and methods must be nonempty".into()));
    }
    let grid = match &config.grid {
        Some(g) => TuningGrid::new(g.clone())?,
        None => TuningGrid::default_for_dimension(dataset.dim()),
    };
    let per_trial: Vec<Vec<(f64, Option<f64>, usize)>> = (0..config.trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<(f64, Option<f64>, usize)>> {
            let trial_seed = derive_seed(config.seed, t as u64);
            let (train_idx, test_idx) = stratified_split(dataset.labels(), config.test_fraction, trial_seed)?;
            let train = dataset.subset(&train_idx)?;
            let options = FitOptions {
                grid: Some(grid.clone()),
                folds: config.folds,
                seed: derive_seed(trial_seed, 1),
                standardize: config.standardize,
                per_class: None,
            };
            config
                .methods
                .iter()
                .map(|spec| {
                    let fitted = fit(&train, spec, &options)?;
                    let prior = fitted.model.prior().as_slice().to_vec();
                    let posteriors = test_idx
                        .iter()
                        .map(|&i| match fitted.predict_proba(&dataset.features()[i]) {
                            Ok(q) => Ok(q.into_inner()),
                            Err(Error::ZeroEvidence) => Ok(prior.clone()),
                            Err(e) => Err(e),
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let truth: Vec<usize> = test_idx.iter().map(|&i| dataset.labels()[i]).collect();
                    let score = posterior_score(&posteriors, &truth, 2)?;
                    Ok((score, fitted.spec.hyper_parameter(), fitted.candidates_evaluated))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let outcomes = config
        .methods
        .iter()
        .enumerate()
        .map(|(m, spec)| MethodOutcome {
            method: spec.name().to_string(),
            auprc: per_trial.iter().map(|t| t[m].0).collect(),
            selected: per_trial.iter().map(|t| t[m].1).collect(),
            candidates_evaluated: per_trial.iter().map(|t| t[m].2).collect(),
        })
        .collect();
    Ok(ClassificationResult {
        outcomes,
        config: config.clone(),
    })
}

/// Two interleaved half-circles with Gaussian noise. `gap` shifts the second
/// moon downwards; `gap ≥ 0.5` with small noise makes the classes linearly
/// separable.
pub fn two_moons(per_class: usize, noise: f64, gap: f64, seed: u64) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(Error::EmptySamples);
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = stream_rng(seed, 0);
    let mut features = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for class in 0..2 {
        for _ in 0..per_class {
            let t = rng.random::<f64>() * PI;
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin() - gap)
            };
            features.push(vec![x + normal.sample(&mut rng), y + normal.sample(&mut rng)]);
            labels.push(class);
        }
    }
    LabeledDataset::new(features, labels, vec!["0".into(), "1".into()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    /// Support points of the one-dimensional nominal measure.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub methods: Vec<LikelihoodSpec>,
    pub x_min: f64,
    pub x_max: f64,
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for CurveConfig {
    fn default() -> Self {
        let kernel = |kind| LikelihoodSpec::Kernel {
            kind,
            width: 1.0,
            metric: GroundMetric::L1,
        };
        Self {
            points: vec![-1.0, 1.0],
            weights: vec![0.5, 0.5],
            methods: vec![
                LikelihoodSpec::Wasserstein {
                    radius: 0.2,
                    metric: GroundMetric::L1,
                },
                kernel(KernelKind::Exponential),
                kernel(KernelKind::Uniform),
                kernel(KernelKind::Epanechnikov),
            ],
            x_min: -3.0,
            x_max: 3.0,
            step: 0.01,
            seed: 0,
        }
    }
}

impl CurveConfig {
    /// Evaluation points `x_min + k · step` up to `x_max`.
    pub fn grid(&self) -> Result<Vec<f64>> {
        if !(self.step > 0.0 && self.x_max >= self.x_min && self.x_min.is_finite() && self.x_max.is_finite()) {
            return Err(Error::InvalidParameter(
                "curve grid needs x_min ≤ x_max and step > 0".into(),
            ));
        }
        let n = ((self.x_max - self.x_min) / self.step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.x_min + k as f64 * self.step).collect())
    }

    pub fn center(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(self.points.iter().map(|&p| vec![p]).collect(), self.weights.clone())
    }
}

/// Rows `method, x, value` of each method's likelihood over `xs`.
pub fn likelihood_curve(center: &DiscreteMeasure, methods: &[LikelihoodSpec], xs: &[f64]) -> Result<ExperimentReport> {
    let config = serde_json::json!({
        "points": center.points(),
        "weights": center.weights(),
        "methods": methods,
    });
    curve_report(center, methods, xs, &config, 0)
}

/// Curve for a full configuration, recorded in the report.
pub fn run_curve(config: &CurveConfig) -> Result<ExperimentReport> {
    curve_report(&config.center()?, &config.methods, &config.grid()?, config, config.seed)
}

fn curve_report(
    center: &DiscreteMeasure,
    methods: &[LikelihoodSpec],
    xs: &[f64],
    config: &impl Serialize,
    seed: u64,
) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::new("curve", seed, config, &["method", "x", "value"])?;
    for spec in methods {
        let engine = spec.fit_measure(center.clone())?;
        for &x in xs {
            report
                .rows
                .push(vec![spec.name().into(), x.into(), engine.likelihood(&[x])?.into()]);
        }
    }
    Ok(report)
}

/// Two classes with known probability mass functions on a finite set of
/// integers.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteClasses {
    pub support: Vec<f64>,
    /// One probability vector over `support` per class.
    pub pmfs: Vec<Vec<f64>>,
}

impl DiscreteClasses {
    /// Two overlapping laws on `{0, 1, 2, 3}`.
    pub fn toy() -> Self {
        Self {
            support: vec![0.0, 1.0, 2.0, 3.0],
            pmfs: vec![vec![0.4, 0.3, 0.2, 0.1], vec![0.1, 0.2, 0.3, 0.4]],
        }
    }
}

impl ClassConditional for DiscreteClasses {
    fn num_classes(&self) -> usize {
        self.pmfs.len()
    }

    fn sample(&self, class: usize, rng: &mut StreamRng) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (p, x) in self.pmfs[class].iter().zip(&self.support) {
            acc += p;
            if u < acc {
                return vec![*x];
            }
        }
        vec![*self.support.last().unwrap_or(&0.0)]
    }

    fn pmf(&self, class: usize, x: &[f64]) -> f64 {
        self.support
            .iter()
            .position(|s| x.len() == 1 && *s == x[0])
            .map_or(0.0, |k| self.pmfs[class][k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsistencyConfig {
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub observation: f64,
    pub params: ConcentrationParams,
    pub seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        Self {
            sample_sizes: vec![10, 100, 1000],
            trials: 50,
            observation: 1.0,
            params: ConcentrationParams {
                k1: 1.0,
                k2: 1.0,
                a: 2.0,
                beta: 0.05,
                dimension: 1,
            },
            seed: 0,
        }
    }
}

/// Mean `|Ĵ − J_true|` per sample size on [`DiscreteClasses::toy`] with the
/// concentration-calibrated Wasserstein radius. Rows `n_i, radius, mean_gap`.
pub fn run_consistency(config: &ConsistencyConfig) -> Result<ExperimentReport> {
    let model = DiscreteClasses::toy();
    let classes = model.num_classes();
    let mut report = ExperimentReport::new("consistency", config.seed, config, &["n_i", "radius", "mean_gap"])?;
    for &n in &config.sample_sizes {
        let radius = wasserstein_radius(&config.params, classes, n)?;
        let setup = SurrogateTrial {
            model: &model,
            prior: ProbabilityVector::uniform(classes)?,
            observation: vec![config.observation],
            sample_sizes: vec![n; classes],
            specs: vec![
                LikelihoodSpec::Wasserstein {
                    radius,
                    metric: GroundMetric::L1,
                };
                classes
            ],
        };
        let gap = mean_objective_gap(&setup, config.trials, derive_seed(config.seed, n as u64))?;
        report.rows.push(vec![n.into(), radius.into(), gap.into()]);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_examples() {
        assert!((beta_pdf(0.5, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((beta_pdf(0.5, 2.0, 2.0).unwrap() - 1.5).abs() < 1e-13);
        assert!((beta_pdf(0.25, 2.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
        assert!(beta_pdf(0.0, 1.0, 1.0).is_err());
        assert!(beta_pdf(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn binomial_examples() {
        assert!((binomial_pmf(1, 2, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(binomial_pmf(0, 7, 0.0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(7, 7, 1.0).unwrap(), 1.0);
        assert_eq!(binomial_pmf(3, 7, 0.0).unwrap(), 0.0);
        assert!(binomial_pmf(8, 7, 0.5).is_err());
        assert!(binomial_pmf(1, 7, 1.5).is_err());
    }

    #[test]
    fn number_format() {
        assert_eq!(format_number(0.2), "0.2");
        assert_eq!(format_number(0.1 + 0.2), "0.3");
        assert_eq!(format_number(1.0), "1");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(2e-9), "2e-9");
        assert_eq!(format_number(-0.5), "-0.5");
    }

    #[test]
    fn default_grid_and_posterior_are_normalized() {
        let cfg = BetaBinomialConfig::default();
        let grid = cfg.grid();
        assert_eq!(grid.len(), 20);
        assert!((grid[0] - 1.0 / 21.0).abs() < 1e-15);
        for x in 0..=20 {
            let q = cfg.discretized_posterior(x).unwrap();
            assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(cfg.prior().unwrap().iter().all(|p| (p - 0.05).abs() < 1e-15));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let err = serde_json::from_str::<BetaBinomialConfig>(r#"{"alpah": 1}"#).unwrap_err();
        assert!(err.to_string().contains("alpah"));
        let cfg: BetaBinomialConfig = serde_json::from_str(r#"{"repetitions": 3}"#).unwrap();
        assert_eq!(cfg.repetitions, 3);
        assert_eq!(cfg.trials, 20);
    }

    #[test]
    fn curve_grid_has_endpoints() {
        let g = CurveConfig::default().grid().unwrap();
        assert_eq!(g.len(), 601);
        assert_eq!(g[0], -3.0);
        assert!((g[600] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn toy_classes_sample_their_laws() {
        let model = DiscreteClasses::toy();
        let mut rng = stream_rng(5, 0);
        let mut counts = [0usize; 4];
        for _ in 0..20000 {
            counts[model.sample(1, &mut rng)[0] as usize] += 1;
        }
        for (c, p) in counts.iter().zip(&model.pmfs[1]) {
            assert!((*c as f64 / 20000.0 - p).abs() < 0.015);
        }
        assert_eq!(model.pmf(0, &[2.0]), 0.2);
        assert_eq!(model.pmf(0, &[2.5]), 0.0);
    }
}
