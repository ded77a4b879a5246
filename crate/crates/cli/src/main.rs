use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use optilik::bench::{
    format_number, round_significant, run_beta_binomial, run_classification, run_consistency, run_curve,
    BetaBinomialConfig, BetaBinomialMethod, ClassificationConfig, ConsistencyConfig, CurveConfig, ExperimentReport,
};
use optilik::classify::{read_samples, LabeledDataset};
use optilik::divergence_ball::DivergenceFamily;
use optilik::inference::{surrogate_posterior, ClassLikelihood, ClassModel, LikelihoodSpec};
use optilik::kernel_baseline::KernelKind;
use optilik::measures::GroundMetric;
use optilik::Error;

/// Optimistic likelihood estimation and surrogate posterior inference.
#[derive(Parser, Debug)]
#[command(name = "optilik", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate one likelihood estimate at an observation.
    Likelihood {
        /// CSV of sample rows.
        #[arg(long)]
        samples: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
        /// Print the optimal transport plan (wasserstein only).
        #[arg(long)]
        emit_transport: bool,
    },
    /// Surrogate posterior over the classes of a labeled CSV.
    Posterior {
        /// Labeled CSV; the last column holds the class.
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Run an experiment and write its report.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        /// JSON configuration; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output CSV path; the JSON report is written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(clap::Args, Debug)]
struct EstimatorArgs {
    /// Observation as comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    x: String,
    #[arg(long, value_enum)]
    method: Method,
    /// Ambiguity radius.
    #[arg(long, conflicts_with = "width")]
    radius: Option<f64>,
    /// Kernel width.
    #[arg(long)]
    width: Option<f64>,
    /// Ground metric for transport and kernel distances.
    #[arg(long, value_enum, default_value = "l2")]
    metric: Metric,
    /// Extra diagonal loading for the moment covariance.
    #[arg(long, default_value_t = 0.0)]
    regularization: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Kl,
    Hellinger,
    Chi2,
    Tv,
    Moment,
    Wasserstein,
    KernelExp,
    KernelUni,
    KernelEpa,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Metric {
    L1,
    L2,
    Linf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ExperimentKind {
    BetaBinomial,
    Classify,
    Curve,
    Consistency,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e.to_string())
    }
}

fn usage_error(msg: String) -> ! {
    Cli::command()
        .error(clap::error::ErrorKind::ArgumentConflict, msg)
        .exit()
}

impl EstimatorArgs {
    fn observation(&self) -> Result<Vec<f64>, Failure> {
        self.x
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Failure::Usage(format!("--x: '{}' is not a finite number", s.trim())))
            })
            .collect()
    }

    fn spec(&self) -> Result<LikelihoodSpec, Failure> {
        let metric = match self.metric {
            Metric::L1 => GroundMetric::L1,
            Metric::L2 => GroundMetric::L2,
            Metric::Linf => GroundMetric::Linf,
        };
        let name = self
            .method
            .to_possible_value()
            .map(|v| v.get_name().to_string())
            .unwrap_or_default();
        let radius = || {
            if self.width.is_some() {
                return Err(Failure::Usage(format!("--width does not apply to method {name}")));
            }
            self.radius
                .ok_or_else(|| Failure::Usage(format!("method {name} requires --radius")))
        };
        let width = || {
            self.width
                .ok_or_else(|| Failure::Usage(format!("method {name} requires --width")))
        };
        let divergence = |family| {
            Ok(LikelihoodSpec::Divergence {
                family,
                radius: radius()?,
            })
        };
        let kernel = |kind| {
            Ok(LikelihoodSpec::Kernel {
                kind,
                width: width()?,
                metric,
            })
        };
        match self.method {
            Method::Kl => divergence(DivergenceFamily::Kl),
            Method::Hellinger => divergence(DivergenceFamily::Hellinger),
            Method::Chi2 => divergence(DivergenceFamily::ChiSquared),
            Method::Tv => divergence(DivergenceFamily::TotalVariation),
            Method::Moment => {
                if self.radius.is_some() || self.width.is_some() {
                    return Err(Failure::Usage("method moment takes no --radius or --width".into()));
                }
                Ok(LikelihoodSpec::Moment {
                    regularization: self.regularization,
                })
            }
            Method::Wasserstein => Ok(LikelihoodSpec::Wasserstein {
                radius: radius()?,
                metric,
            }),
            Method::KernelExp => kernel(KernelKind::Exponential),
            Method::KernelUni => kernel(KernelKind::Uniform),
            Method::KernelEpa => kernel(KernelKind::Epanechnikov),
        }
    }
}

fn cmd_likelihood(samples: &Path, estimator: &EstimatorArgs, emit_transport: bool) -> Result<(), Failure> {
    let spec = estimator.spec()?;
    let x = estimator.observation()?;
    if emit_transport && estimator.method != Method::Wasserstein {
        return Err(Failure::Usage("--emit-transport requires method wasserstein".into()));
    }
    let samples = read_samples(samples)?;
    let engine = spec.fit(&samples)?;
    if let (true, ClassLikelihood::Wasserstein(ball)) = (emit_transport, &engine) {
        let (value, plan) = ball.optimistic_likelihood(&x)?;
        println!("{}", format_number(value));
        let plan = serde_json::json!({
            "atoms": ball.center().points(),
            "observations": [x],
            "transport": plan.values().iter().map(|&v| round_significant(v)).collect::<Vec<_>>(),
        });
        println!("{plan}");
    } else {
        println!("{}", format_number(engine.likelihood(&x)?));
    }
    Ok(())
}

fn cmd_posterior(data: &Path, estimator: &EstimatorArgs) -> Result<(), Failure> {
    let spec = estimator.spec()?;
    let x = estimator.observation()?;
    let dataset = LabeledDataset::from_csv(data)?;
    let model = ClassModel::fit(
        dataset.class_names().to_vec(),
        dataset.class_prior()?,
        &dataset.class_samples(),
        &spec,
    )?;
    let post = surrogate_posterior(&model, &x)?;
    let rounded = |v: &[f64]| v.iter().map(|&p| round_significant(p)).collect::<Vec<_>>();
    let likelihoods: Vec<f64> = post
        .log_likelihoods
        .iter()
        .map(|l| round_significant(l.exp()))
        .collect();
    let out = serde_json::json!({
        "labels": model.labels(),
        "prior": rounded(model.prior()),
        "likelihoods": likelihoods,
        "posterior": rounded(&post.posterior),
        "objective": round_significant(post.objective),
    });
    println!("{out}");
    Ok(())
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Failure::Usage(format!(
            "{}: invalid config at '{field}': {}",
            path.display(),
            e.inner()
        ))
    })
}

fn cmd_experiment(kind: ExperimentKind, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let report: ExperimentReport = match kind {
        ExperimentKind::BetaBinomial => {
            let mut cfg: BetaBinomialConfig = load_config(config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            run_beta_binomial(&cfg, &BetaBinomialMethod::ALL)?.report()?
        }
        ExperimentKind::Classify => {
            let mut cfg: ClassificationConfig = load_config(config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let path = cfg
                .dataset
                .clone()
                .ok_or_else(|| Failure::Usage("invalid config at 'dataset': a dataset path is required".into()))?;
            let dataset = LabeledDataset::from_csv(&path)?;
            run_classification(&dataset, &cfg)?.report()?
        }
        ExperimentKind::Curve => {
            let mut cfg: CurveConfig = load_config(config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            run_curve(&cfg)?
        }
        ExperimentKind::Consistency => {
            let mut cfg: ConsistencyConfig = load_config(config)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            run_consistency(&cfg)?
        }
    };
    let written = report.write(out)?;
    let names: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    println!(
        "{}: {} rows written to {}",
        report.experiment,
        report.rows.len(),
        names.join(", ")
    );
    Ok(())
}

fn configure_threads() {
    let Ok(value) = std::env::var("OPTILIK_THREADS") else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if a pool already exists, which cannot happen this early.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => usage_error(format!("OPTILIK_THREADS must be a positive integer, got '{value}'")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match &cli.command {
        Command::Likelihood {
            samples,
            estimator,
            emit_transport,
        } => cmd_likelihood(samples, estimator, *emit_transport),
        Command::Posterior { data, estimator } => cmd_posterior(data, estimator),
        Command::Experiment {
            kind,
            config,
            out,
            seed,
        } => cmd_experiment(*kind, config.as_deref(), out, *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => usage_error(msg),
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
