//! Optimistic likelihood over type-1 Wasserstein balls.
//!
//! A single observation reduces to a fractional knapsack: atoms are moved onto
//! `x` in order of increasing distance until the transport budget `ε` runs out.
//! A batch of observations gives a concave program over transport matrices,
//! solved here by projected gradient ascent.

use serde::Serialize;

use crate::divergence_ball::check_radius;
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, GroundMetric};

/// Largest support size accepted by [`lp_oracle_single`].
pub const ORACLE_MAX_ATOMS: usize = 12;

const BATCH_MAX_ITER: usize = 50_000;
const BATCH_REL_TOL: f64 = 1e-10;
const COLUMN_FLOOR: f64 = 1e-300;
const BUDGET_SLACK: f64 = 1e-9;
const CAP_SLACK: f64 = 1e-12;

/// Mass moved from each atom onto the observation(s): an `atoms × observations`
/// matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportAllocation {
    atoms: usize,
    observations: usize,
    values: Vec<f64>,
}

impl TransportAllocation {
    fn zeros(atoms: usize, observations: usize) -> Self {
        Self {
            atoms,
            observations,
            values: vec![0.0; atoms * observations],
        }
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn get(&self, atom: usize, observation: usize) -> f64 {
        self.values[atom * self.observations + observation]
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mass received by each observation.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.observations];
        for row in self.values.chunks(self.observations) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums
    }

    /// Mass taken from each atom.
    pub fn row_sums(&self) -> Vec<f64> {
        self.values
            .chunks(self.observations)
            .map(|row| row.iter().sum())
            .collect()
    }

    /// Total transport cost `Σ d_{jℓ} T_{jℓ}` for a row-major distance matrix.
    pub fn cost(&self, distances: &[f64]) -> f64 {
        self.values.iter().zip(distances).map(|(t, d)| t * d).sum()
    }

    /// Checks nonnegativity, the atom caps and the budget.
    pub fn is_feasible(&self, weights: &[f64], distances: &[f64], radius: f64) -> bool {
        self.values.iter().all(|&t| t >= 0.0)
            && self.row_sums().iter().zip(weights).all(|(s, w)| *s <= w + CAP_SLACK)
            && self.cost(distances) <= radius + BUDGET_SLACK
    }
}

/// Wasserstein ball `{ν : W(ν, ν̂) ≤ ε}` under a ground metric.
#[derive(Debug, Clone)]
pub struct WassersteinBall {
    center: DiscreteMeasure,
    radius: f64,
    metric: GroundMetric,
}

impl WassersteinBall {
    pub fn new(center: DiscreteMeasure, radius: f64, metric: GroundMetric) -> Result<Self> {
        check_radius(radius)?;
        Ok(Self { center, radius, metric })
    }

    pub fn center(&self) -> &DiscreteMeasure {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn metric(&self) -> GroundMetric {
        self.metric
    }

    fn distances_to(&self, x: &[f64]) -> Vec<f64> {
        self.center.points().iter().map(|p| self.metric.eval(x, p)).collect()
    }

    /// Greedy knapsack solution: returns `sup ν(x)` and the optimal transport
    /// allocation. Equal distances are consumed in ascending atom order.
    pub fn optimistic_likelihood(&self, x: &[f64]) -> Result<(f64, TransportAllocation)> {
        self.center.check_dim(x)?;
        let weights = self.center.weights();
        let dist = self.distances_to(x);
        let n = weights.len();
        let mut alloc = TransportAllocation::zeros(n, 1);

        let full_cost: f64 = dist.iter().zip(weights).map(|(d, w)| d * w).sum();
        if self.radius >= full_cost {
            alloc.values.copy_from_slice(weights);
            return Ok((1.0, alloc));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_unstable_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));

        let mut budget = self.radius;
        let mut value = 0.0;
        for j in order {
            let cost = dist[j] * weights[j];
            if cost <= budget {
                alloc.values[j] = weights[j];
                budget -= cost;
                value += weights[j];
            } else {
                let part = budget / dist[j];
                alloc.values[j] = part;
                value += part;
                break;
            }
        }
        Ok((value, alloc))
    }

    /// Optimistic log-likelihood `sup Σ_ℓ log ν(x_ℓ)` of a batch of observations.
    pub fn batch_log_likelihood(&self, xs: &[Vec<f64>]) -> Result<(f64, TransportAllocation)> {
        if xs.is_empty() {
            return Err(Error::EmptySamples);
        }
        for x in xs {
            self.center.check_dim(x)?;
        }
        let n = self.center.len();
        let l = xs.len();
        let weights = self.center.weights();
        // Row-major N × L.
        let mut dist = vec![0.0; n * l];
        for (j, p) in self.center.points().iter().enumerate() {
            for (k, x) in xs.iter().enumerate() {
                dist[j * l + k] = self.metric.eval(p, x);
            }
        }

        if self.radius == 0.0 {
            return zero_radius_batch(&self.center, xs);
        }

        let solver = BatchSolver {
            weights,
            dist: &dist,
            atoms: n,
            obs: l,
            radius: self.radius,
        };
        let alloc = solver.solve();
        if !alloc.is_feasible(weights, &dist, self.radius) {
            return Err(Error::InfeasibleAllocation);
        }
        let value = alloc.column_sums().iter().map(|s| s.ln()).sum();
        Ok((value, alloc))
    }
}

/// Free-function form of [`WassersteinBall::optimistic_likelihood`].
pub fn optimistic_likelihood_wasserstein(ball: &WassersteinBall, x: &[f64]) -> Result<(f64, TransportAllocation)> {
    ball.optimistic_likelihood(x)
}

/// Free-function form of [`WassersteinBall::batch_log_likelihood`].
pub fn batch_log_likelihood(ball: &WassersteinBall, xs: &[Vec<f64>]) -> Result<(f64, TransportAllocation)> {
    ball.batch_log_likelihood(xs)
}

/// With `ε = 0` only atoms coinciding with an observation can contribute; an
/// atom shared by several observations is split evenly among them.
fn zero_radius_batch(center: &DiscreteMeasure, xs: &[Vec<f64>]) -> Result<(f64, TransportAllocation)> {
    let n = center.len();
    let l = xs.len();
    let mut owner = Vec::with_capacity(l);
    for (k, x) in xs.iter().enumerate() {
        owner.push(center.support_index(x).ok_or(Error::LogLikelihoodUnbounded(k))?);
    }
    let mut shares = vec![0usize; n];
    for &j in &owner {
        shares[j] += 1;
    }
    let mut alloc = TransportAllocation::zeros(n, l);
    let mut value = 0.0;
    for (k, &j) in owner.iter().enumerate() {
        let t = center.weights()[j] / shares[j] as f64;
        alloc.values[j * l + k] = t;
        value += t.ln();
    }
    Ok((value, alloc))
}

struct BatchSolver<'a> {
    weights: &'a [f64],
    dist: &'a [f64],
    atoms: usize,
    obs: usize,
    radius: f64,
}

impl BatchSolver<'_> {
    fn objective(&self, t: &[f64]) -> f64 {
        let mut sums = vec![0.0; self.obs];
        for row in t.chunks(self.obs) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        sums.iter().map(|s| s.max(COLUMN_FLOOR).ln()).sum()
    }

    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.obs];
        for row in t.chunks(self.obs) {
            for (s, v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let col: Vec<f64> = sums.iter().map(|s| 1.0 / s.max(COLUMN_FLOOR)).collect();
        (0..self.atoms).flat_map(|_| col.iter().copied()).collect()
    }

    /// Strictly feasible start: every entry positive, half the budget used at most.
    fn initial(&self) -> Vec<f64> {
        let l = self.obs as f64;
        let mut col_cost = vec![0.0; self.obs];
        for row in self.dist.chunks(self.obs) {
            for (c, d) in col_cost.iter_mut().zip(row) {
                *c += d;
            }
        }
        let mut t = vec![0.0; self.atoms * self.obs];
        for j in 0..self.atoms {
            for k in 0..self.obs {
                let cap = self.weights[j] / l;
                let budget = self.radius / (l * col_cost[k] + f64::MIN_POSITIVE);
                t[j * self.obs + k] = 0.5 * cap.min(budget);
            }
        }
        t
    }

    fn cost(&self, t: &[f64]) -> f64 {
        t.iter().zip(self.dist).map(|(a, d)| a * d).sum()
    }

    /// Projects each row of `z` onto `{t ≥ 0, Σ t ≤ cap}`.
    fn project_rows(&self, z: &[f64], out: &mut [f64]) {
        for (j, (zrow, orow)) in z.chunks(self.obs).zip(out.chunks_mut(self.obs)).enumerate() {
            project_capped(zrow, self.weights[j], orow);
        }
    }

    /// Euclidean projection onto the transport polytope. The budget constraint
    /// is dualized: for multiplier `μ` the rows of `z − μ D` are projected
    /// independently, and `μ` is found by bisection on the (nonincreasing)
    /// transport cost.
    fn project(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        self.project_rows(z, &mut out);
        if self.cost(&out) <= self.radius {
            return out;
        }
        let shifted = |mu: f64, out: &mut [f64]| {
            let w: Vec<f64> = z.iter().zip(self.dist).map(|(a, d)| a - mu * d).collect();
            self.project_rows(&w, out);
        };
        let mut hi = 1.0;
        loop {
            shifted(hi, &mut out);
            if self.cost(&out) <= self.radius {
                break;
            }
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut probe = vec![0.0; z.len()];
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            shifted(mid, &mut probe);
            if self.cost(&probe) <= self.radius {
                hi = mid;
                std::mem::swap(&mut out, &mut probe);
            } else {
                lo = mid;
            }
        }
        out
    }

    fn solve(&self) -> TransportAllocation {
        let mut t = self.initial();
        let mut f = self.objective(&t);
        let mut step = 1.0;
        let mut calm = 0;
        for _ in 0..BATCH_MAX_ITER {
            let g = self.gradient(&t);
            let mut accepted = None;
            for _ in 0..80 {
                let z: Vec<f64> = t.iter().zip(&g).map(|(a, b)| a + step * b).collect();
                let cand = self.project(&z);
                let fc = self.objective(&cand);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for ((c, a), b) in cand.iter().zip(&t).zip(&g) {
                    lin += b * (c - a);
                    sq += (c - a) * (c - a);
                }
                if fc.is_finite() && fc >= f + lin - sq / (2.0 * step) {
                    accepted = Some((cand, fc, sq));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc, sq)) = accepted else {
                break;
            };
            let change = (fc - f).abs();
            t = cand;
            let previous = f;
            f = fc;
            step *= 2.0;
            if sq == 0.0 {
                break;
            }
            if change <= BATCH_REL_TOL * previous.abs().max(1.0) {
                calm += 1;
                if calm >= 3 {
                    break;
                }
            } else {
                calm = 0;
            }
        }
        TransportAllocation {
            atoms: self.atoms,
            observations: self.obs,
            values: t,
        }
    }
}

/// Projection of `z` onto `{t ≥ 0, Σ t ≤ cap}`.
fn project_capped(z: &[f64], cap: f64, out: &mut [f64]) {
    let clipped_sum: f64 = z.iter().map(|v| v.max(0.0)).sum();
    if clipped_sum <= cap {
        for (o, v) in out.iter_mut().zip(z) {
            *o = v.max(0.0);
        }
        return;
    }
    // Threshold τ > 0 with Σ max(z − τ, 0) = cap.
    let mut sorted: Vec<f64> = z.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        acc += v;
        let candidate = (acc - cap) / (i + 1) as f64;
        if i + 1 == sorted.len() || sorted[i + 1] <= candidate {
            tau = candidate;
            break;
        }
    }
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - tau).max(0.0);
    }
}

/// Sorted transport costs from the atoms of a measure to one observation.
/// Evaluates the greedy optimum for many radii in `O(log N)` each.
#[derive(Debug, Clone)]
pub struct TransportProfile {
    distances: Vec<f64>,
    cum_cost: Vec<f64>,
    cum_mass: Vec<f64>,
    full_cost: f64,
}

impl TransportProfile {
    pub fn new(center: &DiscreteMeasure, metric: GroundMetric, x: &[f64]) -> Result<Self> {
        center.check_dim(x)?;
        let weights = center.weights();
        let dist: Vec<f64> = center.points().iter().map(|p| metric.eval(x, p)).collect();
        let full_cost = dist.iter().zip(weights).map(|(d, w)| d * w).sum();
        let mut order: Vec<usize> = (0..dist.len()).collect();
        order.sort_unstable_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let mut cum_cost = Vec::with_capacity(order.len() + 1);
        let mut cum_mass = Vec::with_capacity(order.len() + 1);
        let (mut c, mut m) = (0.0, 0.0);
        cum_cost.push(0.0);
        cum_mass.push(0.0);
        let mut distances = Vec::with_capacity(order.len());
        for j in order {
            c += dist[j] * weights[j];
            m += weights[j];
            cum_cost.push(c);
            cum_mass.push(m);
            distances.push(dist[j]);
        }
        Ok(Self {
            distances,
            cum_cost,
            cum_mass,
            full_cost,
        })
    }

    /// Greedy optimum for radius `radius` (assumed nonnegative).
    pub fn value(&self, radius: f64) -> f64 {
        if radius >= self.full_cost {
            return 1.0;
        }
        // First prefix whose cumulative cost exceeds the budget.
        let p = self.cum_cost.partition_point(|&c| c <= radius);
        let taken = p - 1;
        if taken >= self.distances.len() {
            return self.cum_mass[taken].min(1.0);
        }
        let extra = (radius - self.cum_cost[taken]) / self.distances[taken];
        self.cum_mass[taken] + extra
    }
}

/// Exact optimum of the single-observation LP by enumerating its vertices:
/// every vertex takes some atoms in full and at most one atom fractionally.
pub fn lp_oracle_single(ball: &WassersteinBall, x: &[f64]) -> Result<f64> {
    let n = ball.center.len();
    if n > ORACLE_MAX_ATOMS {
        return Err(Error::OracleTooLarge(n));
    }
    ball.center.check_dim(x)?;
    let weights = ball.center.weights();
    let dist = ball.distances_to(x);
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let mut cost = 0.0;
        let mut mass = 0.0;
        for j in 0..n {
            if mask & (1 << j) != 0 {
                cost += dist[j] * weights[j];
                mass += weights[j];
            }
        }
        if cost > ball.radius {
            continue;
        }
        best = best.max(mass);
        let left = ball.radius - cost;
        for j in 0..n {
            if mask & (1 << j) == 0 {
                let part = if dist[j] == 0.0 {
                    weights[j]
                } else {
                    (left / dist[j]).min(weights[j])
                };
                best = best.max(mass + part);
            }
        }
    }
    Ok(best.min(1.0))
}
