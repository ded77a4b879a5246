use optilik::classify::{auprc, stratified_kfold};
use optilik::divergence_ball::{optimistic_likelihood_divergence, DivergenceFamily};
use optilik::inference::{posterior_from_log_likelihoods, surrogate_posterior, ClassModel, LikelihoodSpec};
use optilik::kernel_baseline::{kernel_likelihood, KernelKind, KernelSpec};
use optilik::measures::{DiscreteMeasure, GroundMetric, ProbabilityVector};
use optilik::moment_ball::MomentSummary;
use optilik::wasserstein_ball::WassersteinBall;
use proptest::prelude::*;

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn measure(max_atoms: usize, dim: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_atoms).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, dim), n),
            weights(n),
        )
            .prop_map(|(p, w)| DiscreteMeasure::new(p, w).unwrap())
    })
}

fn family() -> impl Strategy<Value = DivergenceFamily> {
    prop::sample::select(DivergenceFamily::ALL.to_vec())
}

fn metric() -> impl Strategy<Value = GroundMetric> {
    prop::sample::select(vec![GroundMetric::L1, GroundMetric::L2, GroundMetric::Linf])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn divergence_value_is_monotone_in_radius(
        f in family(), m in measure(4, 1), on in any::<bool>(), pick in 0usize..4,
        r1 in 0.0f64..3.0, r2 in 0.0f64..3.0,
    ) {
        let x = if on { m.points()[pick % m.len()].clone() } else { vec![10.0] };
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let a = optimistic_likelihood_divergence(f, &m, lo, &x).unwrap();
        let b = optimistic_likelihood_divergence(f, &m, hi, &x).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a <= b + 1e-12, "{a} > {b}");
        prop_assert!(a + 1e-12 >= m.mass_at(&x));
    }

    #[test]
    fn wasserstein_value_is_monotone_and_plan_feasible(
        m in measure(6, 2), x in prop::collection::vec(-3.0f64..3.0, 2), d in metric(),
        r1 in 0.0f64..5.0, r2 in 0.0f64..5.0,
    ) {
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let small = WassersteinBall::new(m.clone(), lo, d).unwrap();
        let large = WassersteinBall::new(m.clone(), hi, d).unwrap();
        let (a, plan) = small.optimistic_likelihood(&x).unwrap();
        let (b, _) = large.optimistic_likelihood(&x).unwrap();
        prop_assert!(a <= b + 1e-12);
        let dist: Vec<f64> = m.points().iter().map(|p| optilik::measures::distance(d, p, &x).unwrap()).collect();
        prop_assert!(plan.is_feasible(m.weights(), &dist, lo));
    }

    #[test]
    fn wasserstein_comparative_statics(
        m in measure(6, 2), x in prop::collection::vec(-3.0f64..3.0, 2), d in metric(), r in 1e-6f64..2.0,
    ) {
        let full: f64 = m.points().iter().zip(m.weights())
            .map(|(p, w)| w * optilik::measures::distance(d, p, &x).unwrap()).sum();
        let inside = WassersteinBall::new(m.clone(), r, d).unwrap().optimistic_likelihood(&x).unwrap().0;
        prop_assert!(inside > 0.0);
        let saturated = WassersteinBall::new(m, full + r, d).unwrap().optimistic_likelihood(&x).unwrap().0;
        prop_assert_eq!(saturated, 1.0);
    }

    #[test]
    fn batch_is_bounded_by_individual_optima(
        m in measure(3, 1), xs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 1), 1..=2),
        r in 0.05f64..2.0,
    ) {
        let ball = WassersteinBall::new(m, r, GroundMetric::L1).unwrap();
        let (batch, _) = ball.batch_log_likelihood(&xs).unwrap();
        let bound: f64 = xs.iter().map(|x| ball.optimistic_likelihood(x).unwrap().0.ln()).sum();
        prop_assert!(batch <= bound + 1e-9, "{batch} > {bound}");
    }

    #[test]
    fn kernel_values_are_bounded(m in measure(5, 1), x in -5.0f64..5.0, h in 0.01f64..5.0, d in metric()) {
        for kind in [KernelKind::Exponential, KernelKind::Uniform, KernelKind::Epanechnikov] {
            let v = kernel_likelihood(&KernelSpec::new(kind, h).unwrap(), &m, d, &[x]).unwrap();
            let cap = kind.eval(0.0);
            prop_assert!((0.0..=cap + 1e-15).contains(&v));
        }
    }

    #[test]
    fn posterior_is_normalized_and_permutation_equivariant(
        p in weights(4), log_l in prop::collection::vec(-30.0f64..0.0, 4), shift in -50.0f64..50.0,
    ) {
        let (q, _) = posterior_from_log_likelihoods(&p, &log_l).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let perm = [2, 0, 3, 1];
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let pl: Vec<f64> = perm.iter().map(|&i| log_l[i]).collect();
        let (qp, _) = posterior_from_log_likelihoods(&pp, &pl).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((qp[k] - q[i]).abs() < 1e-12);
        }
        let shifted: Vec<f64> = log_l.iter().map(|l| l + shift).collect();
        let (qs, _) = posterior_from_log_likelihoods(&p, &shifted).unwrap();
        let argmax = |v: &[f64]| v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|e| e.0);
        prop_assert_eq!(argmax(&q), argmax(&qs));
        for (a, b) in q.iter().zip(qs.iter()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn moment_value_is_affine_invariant(
        samples in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 4..12),
        x in prop::collection::vec(-3.0f64..3.0, 2),
        a in prop::collection::vec(-2.0f64..2.0, 4), b in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let det = a[0] * a[3] - a[1] * a[2];
        prop_assume!(det.abs() > 0.2);
        let s = MomentSummary::from_samples(&samples, 0.0).unwrap();
        // Ridge regularization breaks invariance; keep well-conditioned sets only.
        let c = s.covariance();
        prop_assume!(c[(0, 0)] * c[(1, 1)] - c[(0, 1)] * c[(1, 0)] > 0.05);
        let map = |v: &[f64]| vec![a[0] * v[0] + a[1] * v[1] + b[0], a[2] * v[0] + a[3] * v[1] + b[1]];
        let moved: Vec<Vec<f64>> = samples.iter().map(|v| map(v)).collect();
        let t = MomentSummary::from_samples(&moved, 0.0).unwrap();
        let v0 = s.optimistic_likelihood(&x).unwrap();
        let v1 = t.optimistic_likelihood(&map(&x)).unwrap();
        prop_assert!((v0 - v1).abs() < 1e-8, "{v0} vs {v1}");
    }

    #[test]
    fn auprc_is_invariant_to_monotone_transforms(
        scores in prop::collection::vec(-5.0f64..5.0, 2..30), seed in any::<u64>(),
    ) {
        let labels: Vec<bool> = scores.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
        prop_assume!(labels.iter().any(|&l| l));
        let base = auprc(&scores, &labels).unwrap();
        let moved: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
        prop_assert!((base - auprc(&moved, &labels).unwrap()).abs() < 1e-12);
        prop_assert!(base > 0.0 && base <= 1.0 + 1e-12);
    }

    #[test]
    fn kfold_partitions_and_stratifies(
        counts in prop::collection::vec(5usize..30, 2..4), folds in 2usize..6, seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(c, n)).collect();
        let parts = stratified_kfold(&labels, folds, seed).unwrap();
        let mut seen = vec![0usize; labels.len()];
        for f in &parts {
            for &i in &f.validation {
                seen[i] += 1;
            }
            prop_assert_eq!(f.train.len() + f.validation.len(), labels.len());
            for (c, &n) in counts.iter().enumerate() {
                let got = f.validation.iter().filter(|&&i| labels[i] == c).count() as f64;
                prop_assert!((got - n as f64 / folds as f64).abs() <= 1.0);
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        prop_assert_eq!(parts, stratified_kfold(&labels, folds, seed).unwrap());
    }
}

#[test]
fn huge_radius_posterior_equals_prior() {
    let a = vec![vec![0.0, 0.0], vec![1.0, 0.5]];
    let b = vec![vec![3.0, 1.0], vec![2.0, 2.0], vec![4.0, 0.0]];
    let prior = ProbabilityVector::new(vec![0.3, 0.7]).unwrap();
    let spec = LikelihoodSpec::Wasserstein {
        radius: 1e3,
        metric: GroundMetric::L2,
    };
    let model = ClassModel::fit(vec!["a".into(), "b".into()], prior, &[a, b], &spec).unwrap();
    for x in [[0.0, 0.0], [10.0, -4.0], [2.5, 1.5]] {
        let q = surrogate_posterior(&model, &x).unwrap().posterior;
        assert!((q[0] - 0.3).abs() < 1e-9 && (q[1] - 0.7).abs() < 1e-9);
    }
}
