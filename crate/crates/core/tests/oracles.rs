mod common;

use common::*;
use optilik::divergence_ball::{optimistic_likelihood_divergence, DivergenceFamily};
use optilik::inference::posterior_from_log_likelihoods;
use optilik::measures::{DiscreteMeasure, GroundMetric};
use optilik::rng::stream_rng;
use optilik::wasserstein_ball::{batch_log_likelihood, lp_oracle_single, WassersteinBall};
use rand::Rng;

#[test]
fn off_support_matches_one_dimensional_grid() {
    let center = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.3, 0.7]).unwrap();
    for family in DivergenceFamily::ALL {
        for radius in [0.01, 0.1, 0.5, 1.3] {
            let v = optimistic_likelihood_divergence(family, &center, radius, &[5.0]).unwrap();
            let oracle = off_support_grid(family, radius);
            assert!((v - oracle).abs() < 2e-7, "{family:?} ε={radius}: {v} vs {oracle}");
        }
    }
}

#[test]
fn on_support_matches_simplex_grid() {
    let mut rng = stream_rng(11, 0);
    for family in DivergenceFamily::ALL {
        for _ in 0..6 {
            let n = rng.random_range(2..=3);
            let weights = random_simplex(&mut rng, n);
            let points: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
            let center = DiscreteMeasure::new(points, weights.clone()).unwrap();
            let k = rng.random_range(0..n);
            let radius = 10f64.powf(rng.random_range(-3.0..0.0));
            let v = optimistic_likelihood_divergence(family, &center, radius, &[k as f64]).unwrap();
            let oracle = on_support_grid(family, &weights, k, radius);
            assert!(
                (v - oracle).abs() < 1e-5,
                "{family:?} w={weights:?} k={k} ε={radius}: {v} vs {oracle}"
            );
        }
    }
}

#[test]
fn greedy_matches_lp_oracle() {
    let mut rng = stream_rng(12, 0);
    for _ in 0..100 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=3);
        let metric = [GroundMetric::L1, GroundMetric::L2, GroundMetric::Linf][rng.random_range(0..3)];
        let center = DiscreteMeasure::new(random_points(&mut rng, n, m, 2.0), random_simplex(&mut rng, n)).unwrap();
        let x = random_points(&mut rng, 1, m, 2.0).remove(0);
        let radius = rng.random_range(0.0..3.0);
        let ball = WassersteinBall::new(center, radius, metric).unwrap();
        let (v, plan) = ball.optimistic_likelihood(&x).unwrap();
        let oracle = lp_oracle_single(&ball, &x).unwrap();
        assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");
        assert!((plan.column_sums()[0] - v).abs() < 1e-9);
    }
}

#[test]
fn min_cost_flow_oracle_agrees_with_greedy_for_one_sink() {
    // Self-check of the test oracle on the single-observation case.
    let mut rng = stream_rng(13, 0);
    for _ in 0..50 {
        let n = rng.random_range(1..=4);
        let w = random_simplex(&mut rng, n);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let demand = rng.random_range(0.0..1.0);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
        let (mut left, mut greedy): (f64, f64) = (demand, 0.0);
        for j in order {
            let take = left.min(w[j]);
            greedy += take * d[j];
            left -= take;
        }
        let cost: Vec<Vec<f64>> = d.iter().map(|&v| vec![v]).collect();
        let flow = min_cost_flow(&w, &cost, &[demand]).unwrap();
        assert!((flow - greedy).abs() < 1e-12);
    }
}

#[test]
fn batch_matches_grid_oracle() {
    let mut rng = stream_rng(14, 0);
    for _ in 0..20 {
        let n = rng.random_range(1..=3);
        let center = DiscreteMeasure::new(random_points(&mut rng, n, 1, 2.0), random_simplex(&mut rng, n)).unwrap();
        let xs = random_points(&mut rng, 2, 1, 2.0);
        let radius = rng.random_range(0.05..2.0);
        let ball = WassersteinBall::new(center.clone(), radius, GroundMetric::L1).unwrap();
        let (v, plan) = batch_log_likelihood(&ball, &xs).unwrap();
        let cost: Vec<Vec<f64>> = center
            .points()
            .iter()
            .map(|p| xs.iter().map(|x| (p[0] - x[0]).abs()).collect())
            .collect();
        let oracle = batch_grid_two(center.weights(), &cost, radius);
        assert!((v - oracle).abs() < 1e-4, "{v} vs {oracle}");
        let flat: Vec<f64> = cost.iter().flatten().copied().collect();
        assert!(plan.is_feasible(center.weights(), &flat, radius));
    }
}

#[test]
fn posterior_matches_simplex_grid() {
    let mut rng = stream_rng(15, 0);
    for _ in 0..10 {
        let prior = random_simplex(&mut rng, 3);
        let likelihood: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
        let log_l: Vec<f64> = likelihood.iter().map(|l| l.ln()).collect();
        let (q, objective) = posterior_from_log_likelihoods(&prior, &log_l).unwrap();
        let oracle = posterior_grid_three(&prior, &likelihood);
        assert!(objective <= oracle + 1e-12);
        assert!((objective - oracle).abs() < 1e-4);
        assert!((elbo(&q, &prior, &likelihood) - objective).abs() < 1e-12);
    }
}
