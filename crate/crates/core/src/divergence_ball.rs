//! Optimistic likelihood over f-divergence balls `{ν : D_f(ν̂ ‖ ν) ≤ ε}`.
//!
//! Off the support of the nominal measure the value depends only on the
//! radius and has a closed form per family. On the support the optimum moves
//! mass toward the observed atom while shrinking every other atom by a common
//! factor; the divergence is then convex and monotone in the shrinkage, and
//! the largest feasible shift is found by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

/// The f-divergence families with closed-form off-support values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceFamily {
    /// `f(t) = t log t − t + 1`
    Kl,
    /// `f(t) = 1 − √t`
    Hellinger,
    /// `f(t) = (t − 1)²`
    ChiSquared,
    /// `f(t) = |t − 1|`
    TotalVariation,
}

impl DivergenceFamily {
    pub const ALL: [DivergenceFamily; 4] = [
        DivergenceFamily::Kl,
        DivergenceFamily::Hellinger,
        DivergenceFamily::ChiSquared,
        DivergenceFamily::TotalVariation,
    ];

    /// The convex generator `f`, defined for `t ≥ 0`.
    pub fn generator(self, t: f64) -> f64 {
        match self {
            DivergenceFamily::Kl => {
                if t == 0.0 {
                    1.0
                } else {
                    t * t.ln() - t + 1.0
                }
            }
            DivergenceFamily::Hellinger => 1.0 - t.sqrt(),
            DivergenceFamily::ChiSquared => (t - 1.0) * (t - 1.0),
            DivergenceFamily::TotalVariation => (t - 1.0).abs(),
        }
    }

    /// Perspective `y·f(a/y)` extended to `y = 0` by its limit.
    fn perspective(self, a: f64, y: f64) -> f64 {
        if y <= 0.0 {
            if a == 0.0 {
                return 0.0;
            }
            return match self {
                DivergenceFamily::Kl | DivergenceFamily::ChiSquared => f64::INFINITY,
                DivergenceFamily::Hellinger => 0.0,
                DivergenceFamily::TotalVariation => a,
            };
        }
        match self {
            DivergenceFamily::Kl => {
                if a == 0.0 {
                    y
                } else {
                    a * (a / y).ln() - a + y
                }
            }
            DivergenceFamily::Hellinger => y - (a * y).sqrt(),
            DivergenceFamily::ChiSquared => (a - y) * (a - y) / y,
            DivergenceFamily::TotalVariation => (a - y).abs(),
        }
    }

    /// `D_f(p ‖ q) = Σ_z q(z) f(p(z)/q(z))` for two mass vectors on a common
    /// finite support.
    pub fn divergence(self, p: &[f64], q: &[f64]) -> Result<f64> {
        if p.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                found: q.len(),
            });
        }
        Ok(p.iter().zip(q).map(|(&a, &y)| self.perspective(a, y)).sum())
    }

    /// Optimistic likelihood of a point outside the nominal support.
    pub fn off_support_value(self, radius: f64) -> f64 {
        match self {
            DivergenceFamily::Kl => -(-radius).exp_m1(),
            DivergenceFamily::Hellinger => {
                if radius >= 1.0 {
                    1.0
                } else {
                    1.0 - (1.0 - radius) * (1.0 - radius)
                }
            }
            DivergenceFamily::ChiSquared => 1.0 - 1.0 / (1.0 + radius),
            DivergenceFamily::TotalVariation => (radius / 2.0).min(1.0),
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "kl" => Some(DivergenceFamily::Kl),
            "hellinger" => Some(DivergenceFamily::Hellinger),
            "chi2" | "chi_squared" | "chisquared" => Some(DivergenceFamily::ChiSquared),
            "tv" | "total_variation" => Some(DivergenceFamily::TotalVariation),
            _ => None,
        }
    }
}

pub(crate) fn check_radius(radius: f64) -> Result<()> {
    if radius.is_nan() || radius < 0.0 {
        Err(Error::NegativeRadius)
    } else {
        Ok(())
    }
}

/// Divergence ball of radius `ε` around a nominal measure.
#[derive(Debug, Clone)]
pub struct DivergenceBall {
    family: DivergenceFamily,
    center: DiscreteMeasure,
    radius: f64,
}

impl DivergenceBall {
    pub fn new(family: DivergenceFamily, center: DiscreteMeasure, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Self { family, center, radius })
    }

    pub fn family(&self) -> DivergenceFamily {
        self.family
    }

    pub fn center(&self) -> &DiscreteMeasure {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `sup { ν(x) : D_f(ν̂ ‖ ν) ≤ ε }`.
    pub fn optimistic_likelihood(&self, x: &[f64]) -> Result<f64> {
        self.center.check_dim(x)?;
        Ok(match self.center.support_index(x) {
            None => self.family.off_support_value(self.radius),
            Some(k) => solve_on_support(self.family, &self.center, self.radius, k),
        })
    }
}

/// Convenience wrapper around [`DivergenceBall::optimistic_likelihood`].
pub fn optimistic_likelihood_divergence(
    family: DivergenceFamily,
    center: &DiscreteMeasure,
    radius: f64,
    x: &[f64],
) -> Result<f64> {
    check_radius(radius)?;
    center.check_dim(x)?;
    Ok(match center.support_index(x) {
        None => family.off_support_value(radius),
        Some(k) => solve_on_support(family, center, radius, k),
    })
}

/// Largest mass the KL ball of radius `radius` can put on atom `k` of `center`.
pub fn solve_on_support_kl(center: &DiscreteMeasure, radius: f64, k: usize) -> Result<f64> {
    check_radius(radius)?;
    if k >= center.len() {
        return Err(Error::InvalidParameter(format!(
            "support index {k} out of range for {} atoms",
            center.len()
        )));
    }
    Ok(solve_on_support(DivergenceFamily::Kl, center, radius, k))
}

/// Maximizes `y_k` over the simplex subject to `D_f(ν̂ ‖ y) ≤ ε`.
///
/// With `r = 1 − ν̂_k`, the optimum takes `y_k = ν̂_k + δ r` and scales every
/// other atom by `1 − δ`; the divergence is nondecreasing in `δ ∈ [0, 1]`.
pub(crate) fn solve_on_support(family: DivergenceFamily, center: &DiscreteMeasure, radius: f64, k: usize) -> f64 {
    let own = center.weights()[k];
    let rest = 1.0 - own;
    if rest <= 0.0 {
        return 1.0;
    }
    if shifted_divergence(family, own, rest, 1.0) <= radius {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if shifted_divergence(family, own, rest, mid) <= radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (own + lo * rest).min(1.0)
}

/// `z − log(1 + z)` without cancellation near zero.
fn log1p_gap(z: f64) -> f64 {
    if z.abs() < 1e-4 {
        z * z * (0.5 - z * (1.0 / 3.0 - z * 0.25))
    } else {
        z - z.ln_1p()
    }
}

/// Divergence of the shifted measure, written so that the first-order terms
/// in `δ` cancel analytically.
fn shifted_divergence(family: DivergenceFamily, own: f64, rest: f64, delta: f64) -> f64 {
    let keep = 1.0 - delta;
    let y = own + delta * rest;
    match family {
        DivergenceFamily::Kl => {
            if keep <= 0.0 {
                return f64::INFINITY;
            }
            own * log1p_gap(delta * rest / own) + rest * log1p_gap(-delta)
        }
        DivergenceFamily::Hellinger => {
            let gain = y.sqrt() * delta * rest / (y.sqrt() + own.sqrt());
            let loss = rest * keep.sqrt() * delta / (1.0 + keep.sqrt());
            (gain - loss).max(0.0)
        }
        DivergenceFamily::ChiSquared => {
            if keep <= 0.0 {
                return f64::INFINITY;
            }
            let step = delta * rest;
            step * step / y + delta * delta * rest / keep
        }
        DivergenceFamily::TotalVariation => 2.0 * delta * rest,
    }
}
