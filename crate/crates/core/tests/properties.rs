mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use wdro::classify::{knn_baseline, LabeledDataset, LfdClassifier};
use wdro::dist::{DiscreteDistribution, Exponent, Point};
use wdro::lfd::{solve_lfd, surrogate_risk};
use wdro::radius::{chi2_pvalue, iteration_bound, learn_radii, RadiusOptions};
use wdro::transport::{barycenter, cost_matrix, exact_ot, union_support, wasserstein};

fn instance(seed: u64, n: usize, m: usize) -> (DiscreteDistribution, DiscreteDistribution) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_distribution(&mut rng, n, 2, 2.0), random_distribution(&mut rng, m, 2, 2.0))
}

fn exponent(two: bool) -> Exponent {
    if two {
        Exponent::Two
    } else {
        Exponent::One
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_has_requested_marginals_and_zero_duality_gap(seed in any::<u64>(), n in 1usize..12, m in 1usize..12, two in any::<bool>()) {
        let (a, b) = instance(seed, n, m);
        let cost = cost_matrix(a.support(), b.support(), exponent(two)).unwrap();
        let r = exact_ot(&a, &b, &cost).unwrap();
        for (got, want) in r.coupling.row_sums().iter().zip(a.weights()) {
            prop_assert!((got - want).abs() < 1e-9);
        }
        for (got, want) in r.coupling.col_sums().iter().zip(b.weights()) {
            prop_assert!((got - want).abs() < 1e-9);
        }
        prop_assert!(r.coupling.min_entry() >= -1e-12);
        prop_assert!((r.coupling.cost(&cost) - r.value).abs() < 1e-9);
        prop_assert!((r.dual_value() - r.value).abs() < 1e-9);
        prop_assert!(r.dual_infeasibility(&cost) < 1e-9);
    }

    #[test]
    fn uniform_plans_match_best_permutation(seed in any::<u64>(), n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_cloud(&mut rng, n, 3, 1.0);
        let y = random_cloud(&mut rng, n, 3, 1.0);
        let (a, b) = (DiscreteDistribution::uniform(x.clone()).unwrap(), DiscreteDistribution::uniform(y.clone()).unwrap());
        let cost = cost_matrix(a.support(), b.support(), Exponent::Two).unwrap();
        let value = exact_ot(&a, &b, &cost).unwrap().value;
        prop_assert!((value - matching_cost(&x, &y, 2)).abs() < 1e-9);
    }

    #[test]
    fn w1_on_the_line_is_the_cdf_gap(
        x in prop::collection::vec(-5.0f64..5.0, 1..10),
        y in prop::collection::vec(-5.0f64..5.0, 1..10),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (wa, wb) = (random_weights(&mut rng, x.len()), random_weights(&mut rng, y.len()));
        let a = DiscreteDistribution::new(x.iter().map(|&v| Point::scalar(v)).collect(), wa.clone()).unwrap();
        let b = DiscreteDistribution::new(y.iter().map(|&v| Point::scalar(v)).collect(), wb.clone()).unwrap();
        let w = wasserstein(&a, &b, Exponent::One).unwrap();
        prop_assert!((w - w1_reals(&x, &wa, &y, &wb)).abs() < 1e-9);
    }

    #[test]
    fn w2_dominates_w1(seed in any::<u64>(), n in 1usize..10, m in 1usize..10) {
        let (a, b) = instance(seed, n, m);
        let w1 = wasserstein(&a, &b, Exponent::One).unwrap();
        let w2 = wasserstein(&a, &b, Exponent::Two).unwrap();
        prop_assert!(w1 <= w2 + 1e-9);
    }

    #[test]
    fn chi2_pvalue_is_a_probability(seed in any::<u64>(), n in 1usize..20, count in 1usize..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_weights(&mut rng, n), random_weights(&mut rng, n));
        let p = chi2_pvalue(&a, &b, count).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(chi2_pvalue(&a, &a, count).unwrap(), 1.0);
        // More samples can only make the same gap more significant.
        prop_assert!(chi2_pvalue(&a, &b, count * 2).unwrap() <= p + 1e-12);
    }

    #[test]
    fn baseline_knn_ignores_scale_and_translation(seed in any::<u64>(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = random_cloud(&mut rng, 12, 2, 1.0);
        let labels: Vec<u8> = (0..12).map(|i| 1 + (i % 2) as u8).collect();
        let queries = random_cloud(&mut rng, 6, 2, 1.0);
        let map = |p: &Point| Point::new(p.coords().iter().map(|c| c * scale + shift).collect()).unwrap();
        let train = LabeledDataset::new(points.clone(), labels.clone()).unwrap();
        points.iter_mut().for_each(|p| *p = map(p));
        let moved = LabeledDataset::new(points, labels).unwrap();
        for q in &queries {
            prop_assert_eq!(knn_baseline(q, &train, 3).unwrap(), knn_baseline(&map(q), &moved, 3).unwrap());
        }
    }

    #[test]
    fn barycenter_is_a_distribution_no_farther_than_the_sources_allow(seed in any::<u64>(), n in 1usize..6) {
        let (a, b) = instance(seed, n, n);
        let support = union_support(&[a.clone(), b.clone()]);
        let c = barycenter(&[a.clone(), b.clone()], &support).unwrap();
        prop_assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(c.weights().iter().all(|&w| w >= 0.0));
        let objective = |d: &DiscreteDistribution| {
            0.5 * (wasserstein(d, &a, Exponent::Two).unwrap().powi(2) + wasserstein(d, &b, Exponent::Two).unwrap().powi(2))
        };
        // Either source is a candidate on the union support.
        prop_assert!(objective(&c) <= objective(&a).min(objective(&b)) + 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lfd_stays_in_both_balls(seed in any::<u64>(), n in 1usize..6, t1 in 0.0f64..1.5, t2 in 0.0f64..1.5) {
        let (q1, q2) = instance(seed, n, n);
        let sol = solve_lfd(&q1, &q2, t1, t2, Exponent::One).unwrap();
        let (p1, p2) = (sol.lfd1().unwrap(), sol.lfd2().unwrap());
        prop_assert!(wasserstein(&p1, &q1, Exponent::One).unwrap() <= t1 + 1e-5);
        prop_assert!(wasserstein(&p2, &q2, Exponent::One).unwrap() <= t2 + 1e-5);
        prop_assert!((0.0..=2.0).contains(&sol.objective));
        prop_assert!((surrogate_risk(&sol.p1, &sol.p2).unwrap().min(2.0) - sol.objective).abs() < 1e-12);

        // The centers themselves are feasible, so the optimum is at least their risk.
        let anchored = solve_lfd(&q1, &q2, 0.0, 0.0, Exponent::One).unwrap();
        prop_assert!(sol.objective >= anchored.objective - 1e-6);
    }

    #[test]
    fn lfd_classifier_ignores_scale(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let (q1, q2) = instance(seed, 5, 5);
        let sol = solve_lfd(&q1, &q2, 0.2, 0.2, Exponent::One).unwrap();
        let mut scaled = sol.clone();
        let map = |p: &Point| Point::new(p.coords().iter().map(|c| c * scale).collect()).unwrap();
        scaled.support = sol.support.iter().map(map).collect();
        let (plain, big) = (LfdClassifier::new(&sol, 3).unwrap(), LfdClassifier::new(&scaled, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for q in random_cloud(&mut rng, 8, 2, 2.0) {
            prop_assert_eq!(plain.predict(&q).unwrap(), big.predict(&map(&q)).unwrap());
        }
    }

    #[test]
    fn radius_loop_shrinks_and_stops_within_bound(seed in any::<u64>(), t1 in 0.0f64..2.0, t2 in 0.0f64..2.0, delta in 0.1f64..1.0) {
        let (q1, q2) = instance(seed, 4, 4);
        let options = RadiusOptions::new(delta, 30);
        let trace = learn_radii(&q1, &q2, [t1, t2], &options).unwrap();
        prop_assert!(!trace.iterations.is_empty());
        prop_assert!(trace.iterations.len() <= iteration_bound([t1, t2], &options));
        for pair in trace.iterations.windows(2) {
            prop_assert!(pair[1].theta1 <= pair[0].theta1 && pair[1].theta2 <= pair[0].theta2);
            prop_assert!(!pair[0].accepted);
        }
        for it in &trace.iterations {
            prop_assert!(it.theta1 >= options.theta_floor && it.theta2 >= options.theta_floor);
        }
        prop_assert_eq!(trace.accepted, trace.iterations.last().unwrap().accepted);
    }
}
