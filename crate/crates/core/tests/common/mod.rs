#![allow(dead_code)]

use optilik::divergence_ball::DivergenceFamily;
use rand::Rng;

/// `q f(p/q)` written out per family, including the `q = 0` limits.
pub fn perspective(family: DivergenceFamily, p: f64, q: f64) -> f64 {
    if q == 0.0 {
        return match family {
            DivergenceFamily::Kl | DivergenceFamily::ChiSquared if p > 0.0 => f64::INFINITY,
            DivergenceFamily::Hellinger => 0.0,
            _ => p,
        };
    }
    match family {
        DivergenceFamily::Kl => {
            if p == 0.0 {
                q
            } else {
                p * (p / q).ln() - p + q
            }
        }
        DivergenceFamily::Hellinger => q - (p * q).sqrt(),
        DivergenceFamily::ChiSquared => (p - q) * (p - q) / q,
        DivergenceFamily::TotalVariation => (p - q).abs(),
    }
}

/// `Σ_z q(z) f(p(z)/q(z))`.
pub fn divergence(family: DivergenceFamily, p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| perspective(family, a, b)).sum()
}

/// Largest mass a measure on `{x, atom}` can put on an off-support `x` while
/// staying within `radius` of a single-atom nominal: a grid over the mass at
/// `x`, first at step `1e-3`, then at `1e-7` inside the bracketing cell.
pub fn off_support_grid(family: DivergenceFamily, radius: f64) -> f64 {
    let feasible = |t: f64| divergence(family, &[1.0, 0.0], &[1.0 - t, t]) <= radius;
    let coarse = (0..=1000)
        .map(|i| i as f64 * 1e-3)
        .filter(|&t| feasible(t))
        .fold(0.0, f64::max);
    let lo = coarse;
    let hi = (coarse + 1e-3).min(1.0);
    let steps = ((hi - lo) / 1e-7).round() as usize;
    (0..=steps)
        .map(|i| lo + i as f64 * 1e-7)
        .filter(|&t| feasible(t))
        .fold(lo, f64::max)
}

/// Maximizes `y[k]` over the simplex subject to `D(nominal ‖ y) ≤ radius`.
/// For each candidate mass `t` at atom `k`, the divergence is minimized over
/// how the remaining `1 − t` is split between the other atoms (a zoomed grid
/// on a convex one-dimensional function); the feasible `t` form an interval
/// whose right end is bracketed by successively finer grids. At most three
/// atoms.
pub fn on_support_grid(family: DivergenceFamily, nominal: &[f64], k: usize, radius: f64) -> f64 {
    let n = nominal.len();
    assert!((1..=3).contains(&n));
    if n == 1 {
        return 1.0;
    }
    let others: Vec<usize> = (0..n).filter(|&j| j != k).collect();
    let min_divergence = |t: f64| -> f64 {
        let rest = 1.0 - t;
        let build = |s: f64| {
            let mut y = vec![0.0; n];
            y[k] = t;
            y[others[0]] = rest * s;
            if others.len() == 2 {
                y[others[1]] = rest * (1.0 - s);
            }
            divergence(family, nominal, &y)
        };
        if others.len() == 1 {
            return build(1.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = (f64::INFINITY, 0.5);
        for _ in 0..25 {
            let step = (hi - lo) / 20.0;
            for i in 0..=20 {
                let s = lo + i as f64 * step;
                let v = build(s);
                if v < best.0 {
                    best = (v, s);
                }
            }
            lo = (best.1 - step).max(0.0);
            hi = (best.1 + step).min(1.0);
        }
        best.0
    };
    let mut feasible_max = nominal[k];
    let mut step = 1e-3;
    let mut lo = nominal[k];
    while step >= 1e-9 {
        let mut t = lo;
        while t + step <= 1.0 && min_divergence(t + step) <= radius {
            t += step;
        }
        feasible_max = feasible_max.max(t);
        lo = t;
        step /= 10.0;
    }
    if min_divergence(1.0) <= radius {
        feasible_max = 1.0;
    }
    feasible_max
}

/// Minimum transport cost of delivering `demand[ℓ]` to sink `ℓ` from sources
/// with capacities `supply`, by successive shortest augmenting paths.
/// Returns `None` when the demand cannot be met.
pub fn min_cost_flow(supply: &[f64], cost: &[Vec<f64>], demand: &[f64]) -> Option<f64> {
    let n = supply.len();
    let l = demand.len();
    // Nodes: 0 source, 1..=n atoms, n+1..=n+l sinks, n+l+1 target.
    let nodes = n + l + 2;
    let target = n + l + 1;
    let mut to = Vec::new();
    let mut cap = Vec::new();
    let mut price = Vec::new();
    let mut adj = vec![Vec::new(); nodes];
    let mut add = |u: usize, v: usize, c: f64, w: f64, adj: &mut Vec<Vec<usize>>| {
        adj[u].push(to.len());
        to.push(v);
        cap.push(c);
        price.push(w);
        adj[v].push(to.len());
        to.push(u);
        cap.push(0.0);
        price.push(-w);
    };
    for j in 0..n {
        add(0, 1 + j, supply[j], 0.0, &mut adj);
        for (s, &c) in cost[j].iter().enumerate() {
            add(1 + j, 1 + n + s, f64::INFINITY, c, &mut adj);
        }
    }
    for (s, &d) in demand.iter().enumerate() {
        add(1 + n + s, target, d, 0.0, &mut adj);
    }
    let need: f64 = demand.iter().sum();
    let mut flow = 0.0;
    let mut total = 0.0;
    while need - flow > 1e-13 {
        let mut dist = vec![f64::INFINITY; nodes];
        let mut via = vec![usize::MAX; nodes];
        dist[0] = 0.0;
        for _ in 0..nodes {
            let mut changed = false;
            for u in 0..nodes {
                if dist[u] == f64::INFINITY {
                    continue;
                }
                for &e in &adj[u] {
                    if cap[e] > 1e-15 && dist[u] + price[e] < dist[to[e]] - 1e-15 {
                        dist[to[e]] = dist[u] + price[e];
                        via[to[e]] = e;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        if dist[target] == f64::INFINITY {
            return None;
        }
        let mut push = need - flow;
        let mut v = target;
        while v != 0 {
            let e = via[v];
            push = push.min(cap[e]);
            v = to[e ^ 1];
        }
        let mut v = target;
        while v != 0 {
            let e = via[v];
            cap[e] -= push;
            cap[e ^ 1] += push;
            v = to[e ^ 1];
        }
        flow += push;
        total += push * dist[target];
    }
    Some(total)
}

/// Optimal batch log-likelihood for two observations: for each mass `m1`
/// delivered to the first, the largest feasible `m2` is found by bisection on
/// the min-cost flow; `ln m1 + ln m2` is then maximized over a zoomed grid of
/// `m1` values.
pub fn batch_grid_two(weights: &[f64], cost: &[Vec<f64>], radius: f64) -> f64 {
    let feasible = |m1: f64, m2: f64| min_cost_flow(weights, cost, &[m1, m2]).is_some_and(|c| c <= radius + 1e-12);
    let frontier = |m1: f64| -> f64 {
        if !feasible(m1, 0.0) {
            return 0.0;
        }
        let (mut lo, mut hi) = (0.0, 1.0 - m1);
        if feasible(m1, hi) {
            return hi;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(m1, mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let value = |m1: f64| {
        let m2 = frontier(m1);
        if m1 > 0.0 && m2 > 0.0 {
            m1.ln() + m2.ln()
        } else {
            f64::NEG_INFINITY
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = (f64::NEG_INFINITY, 0.5);
    for _ in 0..12 {
        let step = (hi - lo) / 40.0;
        for i in 0..=40 {
            let m1 = lo + i as f64 * step;
            let v = value(m1);
            if v > best.0 {
                best = (v, m1);
            }
        }
        lo = (best.1 - 2.0 * step).max(0.0);
        hi = (best.1 + 2.0 * step).min(1.0);
    }
    best.0
}

/// Objective `Σ q_i (ln q_i − ln π_i) − Σ q_i ln L_i`.
pub fn elbo(q: &[f64], prior: &[f64], likelihood: &[f64]) -> f64 {
    q.iter()
        .zip(prior)
        .zip(likelihood)
        .map(|((&qi, &pi), &li)| {
            if qi == 0.0 {
                0.0
            } else {
                qi * (qi.ln() - pi.ln() - li.ln())
            }
        })
        .sum()
}

/// Minimum of [`elbo`] over the 2-simplex by a zoomed grid.
pub fn posterior_grid_three(prior: &[f64], likelihood: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, [1.0 / 3.0, 1.0 / 3.0]);
    let mut step = 0.01;
    let mut center = [0.5, 0.5];
    let mut half = 50i64;
    for _ in 0..12 {
        for i in -half..=half {
            for j in -half..=half {
                let a = center[0] + i as f64 * step;
                let b = center[1] + j as f64 * step;
                let c = 1.0 - a - b;
                if a < 0.0 || b < 0.0 || c < 0.0 {
                    continue;
                }
                let v = elbo(&[a, b, c], prior, likelihood);
                if v < best.0 {
                    best = (v, [a, b]);
                }
            }
        }
        center = best.1;
        half = 10;
        step /= 4.0;
    }
    best.0
}

pub fn random_simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

pub fn random_points(rng: &mut impl Rng, n: usize, m: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..m).map(|_| (rng.random::<f64>() * 2.0 - 1.0) * scale).collect())
        .collect()
}
