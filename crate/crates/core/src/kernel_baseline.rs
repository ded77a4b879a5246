//! Sample-average kernel approximations `Σ_j ν̂_j K(d(x, x̂_j) / h)` of the
//! likelihood, used as baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, GroundMetric};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// `K(y) = exp(−y)`
    Exponential,
    /// `K(y) = 1[|y| ≤ 1]`
    Uniform,
    /// `K(y) = 3/4 (1 − y²) 1[|y| ≤ 1]`
    Epanechnikov,
}

impl KernelKind {
    pub fn eval(self, y: f64) -> f64 {
        match self {
            KernelKind::Exponential => (-y).exp(),
            KernelKind::Uniform => {
                if y.abs() <= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Epanechnikov => {
                if y.abs() <= 1.0 {
                    0.75 * (1.0 - y * y)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub width: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::NonPositiveWidth);
        }
        Ok(Self { kind, width })
    }
}

/// Kernel estimate of the likelihood of `x`.
pub fn kernel_likelihood(spec: &KernelSpec, center: &DiscreteMeasure, metric: GroundMetric, x: &[f64]) -> Result<f64> {
    if spec.width.is_nan() || spec.width <= 0.0 {
        return Err(Error::NonPositiveWidth);
    }
    center.check_dim(x)?;
    Ok(center
        .points()
        .iter()
        .zip(center.weights())
        .map(|(p, w)| w * spec.kind.eval(metric.eval(x, p) / spec.width))
        .sum())
}

/// Natural log of [`kernel_likelihood`]. The exponential kernel is summed in
/// log space so narrow widths do not underflow to `−∞`.
pub fn kernel_log_likelihood(
    spec: &KernelSpec,
    center: &DiscreteMeasure,
    metric: GroundMetric,
    x: &[f64],
) -> Result<f64> {
    match spec.kind {
        KernelKind::Exponential => {
            if spec.width.is_nan() || spec.width <= 0.0 {
                return Err(Error::NonPositiveWidth);
            }
            center.check_dim(x)?;
            let terms: Vec<f64> = center
                .points()
                .iter()
                .zip(center.weights())
                .map(|(p, w)| w.ln() - metric.eval(x, p) / spec.width)
                .collect();
            Ok(log_sum_exp(&terms))
        }
        _ => Ok(kernel_likelihood(spec, center, metric, x)?.ln()),
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}
