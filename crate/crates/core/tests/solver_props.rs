use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wfrdoc::baselines::{balanced_sinkhorn, cos_plus, dirac_wfr, single_source_plan, splitting_bruteforce};
use wfrdoc::measures::{euclidean_cost, generalized_kl, wfr_cost, wfr_cost_entry, DiscreteMeasure};
use wfrdoc::solver::{dual_lower_bound, solve_wfr, SolverSchedule};
use wfrdoc::synthetic::random_measure;
use wfrdoc::Error;

fn line(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::from_points(xs.iter().map(|x| vec![*x]).collect(), ws.to_vec()).unwrap()
}

fn measure_strategy(max_len: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((-3.0f64..3.0, 0.05f64..2.0), 1..=max_len).prop_map(|pts| {
        let (xs, ws): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        line(&xs, &ws)
    })
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn dual_never_exceeds_primal(a in measure_strategy(8), b in measure_strategy(8), eta in 0.3f64..2.0) {
        let res = solve_wfr(&a, &b, eta, &SolverSchedule::default()).unwrap();
        let cost = wfr_cost(&a, &b, eta).unwrap();
        let cert = dual_lower_bound(&res.potentials, &cost, &a, &b).unwrap();
        prop_assert!(cert <= res.primal + 1e-12 * res.primal.abs().max(1.0));
        prop_assert!(res.primal >= 0.0);
        prop_assert!(res.distance >= 0.0 && res.distance.is_finite());
    }

    #[test]
    fn swapping_arguments_transposes_plan(a in measure_strategy(6), b in measure_strategy(6), eta in 0.3f64..2.0) {
        let s = SolverSchedule::default();
        let ab = solve_wfr(&a, &b, eta, &s).unwrap();
        let ba = solve_wfr(&b, &a, eta, &s).unwrap();
        prop_assert_eq!(ab.primal, ba.primal);
        prop_assert_eq!(ab.dual, ba.dual);
        prop_assert_eq!(ab.distance, ba.distance);
        for i in 0..a.len() {
            for j in 0..b.len() {
                prop_assert_eq!(ab.plan.get(i, j), ba.plan.get(j, i));
            }
        }
        prop_assert_eq!(&ab.potentials.phi, &ba.potentials.psi);
    }

    #[test]
    fn plan_vanishes_beyond_cutoff(a in measure_strategy(6), b in measure_strategy(6), eta in 0.2f64..1.0) {
        let res = solve_wfr(&a, &b, eta, &SolverSchedule::default()).unwrap();
        let cost = wfr_cost(&a, &b, eta).unwrap();
        for i in 0..a.len() {
            for j in 0..b.len() {
                if cost.get(i, j).is_infinite() {
                    prop_assert_eq!(res.plan.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn cost_is_monotone_in_distance(d1 in 0.0f64..4.0, d2 in 0.0f64..4.0, eta in 0.2f64..3.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(wfr_cost_entry(lo, eta) <= wfr_cost_entry(hi, eta));
        prop_assert!(wfr_cost_entry(lo, eta) >= 0.0);
    }

    #[test]
    fn single_source_masses_fall_with_cost(
        m in 0.1f64..3.0,
        row in prop::collection::vec((0.0f64..3.0, 0.1f64..2.0), 1..12),
    ) {
        let (cost, nu): (Vec<f64>, Vec<f64>) = row.into_iter().unzip();
        let (plan, j) = single_source_plan(m, &cost, &nu).unwrap();
        prop_assert!(j.is_finite());
        for a in 0..cost.len() {
            for b in 0..cost.len() {
                if nu[a] == nu[b] && cost[a] < cost[b] {
                    prop_assert!(plan[a] >= plan[b]);
                }
            }
        }
    }

    #[test]
    fn larger_eta_lowers_the_primal(a in measure_strategy(5), b in measure_strategy(5), eta in 0.3f64..1.5) {
        let s = SolverSchedule::high_precision(8, 1.0);
        let small = solve_wfr(&a, &b, eta, &s).unwrap().primal;
        let large = solve_wfr(&a, &b, 2.0 * eta, &s).unwrap().primal;
        prop_assert!(large <= small + 1e-3 * small.max(1e-6));
    }

    #[test]
    fn kl_is_nonnegative(pairs in prop::collection::vec((0.0f64..3.0, 0.01f64..3.0), 1..10)) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assert!(generalized_kl(&a, &b).unwrap() >= -1e-12);
        prop_assert!(generalized_kl(&b, &b).unwrap().abs() < 1e-12);
    }
}

#[test]
fn splitting_matches_dense_grid_on_two_by_two() {
    // brute force over a fine grid of plans as an independent check; the
    // (0, 1) pair lies beyond the cutoff so the plan has three free entries
    let mu = line(&[0.0, 1.0], &[0.7, 1.3]);
    let nu = line(&[0.4, 3.5], &[1.1, 0.5]);
    let eta = 1.0;
    let cost = wfr_cost(&mu, &nu, eta).unwrap();
    let objective = |r: [[f64; 2]; 2]| {
        let mut j = 0.0;
        for (i, row) in r.iter().enumerate() {
            for (k, &rik) in row.iter().enumerate() {
                if rik > 0.0 {
                    j += rik * cost.get(i, k);
                }
            }
        }
        let rows = [r[0][0] + r[0][1], r[1][0] + r[1][1]];
        let cols = [r[0][0] + r[1][0], r[0][1] + r[1][1]];
        j + generalized_kl(&rows, mu.weights()).unwrap() + generalized_kl(&cols, nu.weights()).unwrap()
    };
    let steps = 60;
    let mut best = f64::INFINITY;
    let mut arg = [[0.0; 2]; 2];
    for a in 0..=steps {
        for b in 0..=steps {
            for c in 0..=steps {
                let r = [[1.5 * a as f64 / steps as f64, 0.0], [1.5 * b as f64 / steps as f64, 1.5 * c as f64 / steps as f64]];
                let v = objective(r);
                if v < best {
                    best = v;
                    arg = r;
                }
            }
        }
    }
    // refine around the grid minimum
    let mut h = 1.5 / steps as f64;
    for _ in 0..40 {
        let mut improved = false;
        for (i, k) in [(0, 0), (1, 0), (1, 1)] {
            for d in [-h, h] {
                let mut r = arg;
                r[i][k] = (r[i][k] + d).max(0.0);
                let v = objective(r);
                if v < best {
                    best = v;
                    arg = r;
                    improved = true;
                }
            }
        }
        if !improved {
            h /= 2.0;
        }
    }
    assert!(cost.get(0, 1).is_infinite());
    let split = splitting_bruteforce(&mu, &nu, eta).unwrap();
    assert!((split - 2.0 * eta * eta * best).abs() < 1e-6 * split, "{split} vs {}", 2.0 * best);
}

#[test]
fn dirac_reference_values() {
    // equal unit masses at distance 1 with η = 1: 2(2 − 2cos ½)
    let want = (2.0 * (2.0 - 2.0 * 0.5f64.cos())).sqrt();
    assert!((dirac_wfr(1.0, &[0.0], 1.0, &[1.0], 1.0) - want).abs() < 1e-12);
    // beyond the cutoff nothing is transported
    let far = dirac_wfr(1.0, &[0.0], 2.0, &[10.0], 1.0);
    assert!((far * far - 2.0 * 3.0).abs() < 1e-12);
    assert_eq!(cos_plus(2.0), 0.0);
}

#[test]
fn unit_diracs_solve_to_closed_form() {
    let a = line(&[0.0], &[1.0]);
    let b = line(&[1.0], &[1.0]);
    let res = solve_wfr(&a, &b, 1.0, &SolverSchedule::high_precision(9, 1.0)).unwrap();
    let want = dirac_wfr(1.0, &[0.0], 1.0, &[1.0], 1.0);
    assert!((res.distance - want).abs() < 1e-4 * want);
}

#[test]
fn balanced_baseline_on_examples() {
    let s = SolverSchedule::default();
    let a = line(&[0.0, 1.0], &[0.5, 0.5]);
    let b = line(&[0.0, 1.0], &[0.5, 0.5]);
    let cost = euclidean_cost(&a, &b).unwrap();
    let res = balanced_sinkhorn(&a, &b, &cost, &s).unwrap();
    assert!(res.primal < 0.05, "identical measures should cost almost nothing, got {}", res.primal);

    let c = line(&[2.0], &[1.0]);
    let cost = euclidean_cost(&a, &c).unwrap();
    let res = balanced_sinkhorn(&a, &c, &cost, &s).unwrap();
    assert!((res.primal - 1.5).abs() < 1e-6, "{}", res.primal);
    assert!(res.marginal_error <= 1e-6);

    let heavy = line(&[2.0], &[2.0]);
    assert!(matches!(balanced_sinkhorn(&a, &heavy, &cost, &s), Err(Error::InvalidInput(_))));
}

#[test]
fn random_instances_respect_dual_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a = random_measure(&mut rng, 12, 3, 0.5, (0.1, 1.0));
        let b = random_measure(&mut rng, 9, 3, 0.5, (0.1, 1.0));
        let res = solve_wfr(&a, &b, 1.0, &SolverSchedule::default()).unwrap();
        assert!(res.gap >= -1e-9 * (1.0 + res.primal.abs()));
    }
}
