//! Optimistic likelihood over the set of measures sharing a given mean and
//! covariance. The supremum is `1 / (1 + (x − μ)ᵀ Σ⁻¹ (x − μ))`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

const SYMMETRY_TOL: f64 = 1e-10;

/// Mean vector and (regularized) covariance matrix of a sample set.
#[derive(Debug, Clone)]
pub struct MomentSummary {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    factor: Cholesky<f64, Dyn>,
}

impl MomentSummary {
    /// Wraps a user-supplied mean and covariance. The covariance must be
    /// symmetric and positive definite.
    pub fn new(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 {
            return Err(Error::EmptySamples);
        }
        if covariance.nrows() != m || covariance.ncols() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: covariance.nrows(),
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("moment summary"));
        }
        for i in 0..m {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
            }
        }
        let factor = Cholesky::new(covariance.clone()).ok_or(Error::SingularCovariance)?;
        if factor.l_dirty().diagonal().iter().any(|&d| d <= 0.0) {
            return Err(Error::SingularCovariance);
        }
        Ok(Self {
            mean: DVector::from_vec(mean),
            covariance,
            factor,
        })
    }

    /// Sample mean and covariance (denominator N) plus `regularization · I`.
    /// A covariance whose smallest eigenvalue is at most `1e-12 · trace / m`
    /// additionally receives the ridge `max(1e-8, 1e-8 · trace / m)`.
    pub fn from_samples(samples: &[Vec<f64>], regularization: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySamples);
        }
        let w = 1.0 / samples.len() as f64;
        Self::weighted(samples, &vec![w; samples.len()], regularization)
    }

    /// Mean and covariance of a discrete measure, regularized as in
    /// [`MomentSummary::from_samples`].
    pub fn from_measure(measure: &DiscreteMeasure, regularization: f64) -> Result<Self> {
        Self::weighted(measure.points(), measure.weights(), regularization)
    }

    fn weighted(points: &[Vec<f64>], weights: &[f64], regularization: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySamples);
        }
        if !(regularization.is_finite() && regularization >= 0.0) {
            return Err(Error::InvalidParameter(
                "regularization must be finite and nonnegative".into(),
            ));
        }
        let m = points[0].len();
        if m == 0 {
            return Err(Error::InvalidParameter("zero-dimensional samples".into()));
        }
        let mut mean = DVector::<f64>::zeros(m);
        for (s, w) in points.iter().zip(weights) {
            if s.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: s.len(),
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("sample"));
            }
            for (acc, v) in mean.iter_mut().zip(s) {
                *acc += w * v;
            }
        }

        let mut cov = DMatrix::<f64>::zeros(m, m);
        for (s, w) in points.iter().zip(weights) {
            let centered = DVector::from_iterator(m, s.iter().zip(mean.iter()).map(|(v, mu)| v - mu));
            cov.ger(*w, &centered, &centered, 1.0);
        }
        cov = (&cov + cov.transpose()) * 0.5;
        for i in 0..m {
            cov[(i, i)] += regularization;
        }

        let trace = cov.trace();
        let min_eig = SymmetricEigen::new(cov.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_eig <= 1e-12 * trace / m as f64 {
            let ridge = f64::max(1e-8, 1e-8 * trace / m as f64);
            for i in 0..m {
                cov[(i, i)] += ridge;
            }
        }
        Self::new(mean.iter().copied().collect(), cov)
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Squared Mahalanobis distance `(x − μ)ᵀ Σ⁻¹ (x − μ)`.
    pub fn mahalanobis_squared(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        let diff = DVector::from_iterator(self.dim(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        // ‖L⁻¹ (x − μ)‖² with Σ = L Lᵀ.
        let z = self
            .factor
            .l_dirty()
            .solve_lower_triangular(&diff)
            .ok_or(Error::SingularCovariance)?;
        Ok(z.norm_squared())
    }

    /// Optimistic likelihood of `x` over the mean–covariance ambiguity set.
    pub fn optimistic_likelihood(&self, x: &[f64]) -> Result<f64> {
        Ok(1.0 / (1.0 + self.mahalanobis_squared(x)?))
    }
}

/// Free-function form of [`MomentSummary::optimistic_likelihood`].
pub fn optimistic_likelihood_moment(summary: &MomentSummary, x: &[f64]) -> Result<f64> {
    summary.optimistic_likelihood(x)
}
