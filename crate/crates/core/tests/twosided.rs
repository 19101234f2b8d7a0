use lerw_core::rng::RngStream;
use lerw_core::stats::{chi_square_two_sample, joint_se, weighted_mean_stderr};
use lerw_core::twosided::*;
use lerw_core::walk::lerw_sample;
use lerw_core::LatticePoint;
use proptest::prelude::*;

#[test]
fn symmetry_reduced_enumeration_matches_brute_force() {
    for h in 1..=3 {
        let a = acceptance_exact::<5>(h).unwrap();
        let b = acceptance_exact_bruteforce::<5>(h).unwrap();
        assert!((a - b).abs() <= 1e-12, "h = {h}: {a} vs {b}");
    }
    for h in 1..=2 {
        let a = acceptance_exact::<6>(h).unwrap();
        let b = acceptance_exact_bruteforce::<6>(h).unwrap();
        assert!((a - b).abs() <= 1e-12, "d = 6, h = {h}: {a} vs {b}");
    }
}

#[test]
fn exact_acceptance_is_a_decreasing_positive_sequence() {
    let p: Vec<f64> = (1..=5).map(|h| acceptance_exact::<5>(h).unwrap()).collect();
    // one step: the walks collide only if they take the same first step
    assert!((p[0] - 0.9).abs() < 1e-15);
    assert!(p.iter().all(|&x| x > 0.8));
    assert!(p.windows(2).skip(1).all(|w| w[1] <= w[0] + 1e-15));
}

#[test]
fn monte_carlo_acceptance_matches_enumeration_at_six_steps() {
    let exact = acceptance_exact::<5>(6).unwrap();
    let (p, se) = acceptance_mc::<5>(6, 400_000, RngStream::new(61, 0)).unwrap();
    assert!((p - exact).abs() < 4.0 * se, "{p} +- {se} vs {exact}");
}

#[test]
fn acceptance_is_stable_as_the_horizon_doubles() {
    let mut prev: Option<(f64, f64)> = None;
    for h in [16usize, 32, 64] {
        let cfg = SamplerConfig::new(16, h).unwrap();
        let rep = acceptance_rate::<5>(&cfg, 8000, RngStream::new(62, h as u64)).unwrap();
        assert!(rep.acceptance > 0.5);
        if let Some((p, se)) = prev {
            assert!((rep.acceptance - p).abs() < 3.0 * joint_se(se, rep.acceptance_stderr), "h = {h}");
        }
        prev = Some((rep.acceptance, rep.acceptance_stderr));
    }
}

#[test]
fn shift_invariance_is_not_rejected() {
    let cfg = SamplerConfig::new(32, 32).unwrap();
    let (paths, rep) = two_sided_batch::<5>(&cfg, 6000, RngStream::new(63, 0)).unwrap();
    assert_eq!(rep.accepted, 6000);
    assert!(paths.iter().all(|p| p.is_self_avoiding()));
    let diag = stationarity_diagnostic(&paths, &[0, 1, 5, 25]).unwrap();
    assert_eq!(diag.shifts[0].statistic, 0.0);
    for t in &diag.shifts {
        assert!(t.p_value > 0.01, "shift {}: p = {}", t.k, t.p_value);
    }
}

#[test]
fn forward_side_against_plain_lerw() {
    // Reported either way: the conditioning may or may not be visible in
    // the first two steps at this sample size.
    let n = 4000;
    let cfg = SamplerConfig::new(8, 8).unwrap();
    let (paths, _) = two_sided_batch::<5>(&cfg, n, RngStream::new(64, 0)).unwrap();
    let plain: Vec<_> = (0..n)
        .map(|i| lerw_sample::<_, 5>(8, &mut RngStream::new(64, 1 + i as u64).rng()).unwrap())
        .collect();
    let a: Vec<&[LatticePoint<5>]> = paths.iter().map(|p| p.forward.points()).collect();
    let b: Vec<&[LatticePoint<5>]> = plain.iter().map(|p| p.points()).collect();
    let t = chi_square_two_sample(&two_step_counts(&a, 0).unwrap(), &two_step_counts(&b, 0).unwrap()).unwrap();
    eprintln!("forward vs plain two-step law: chi2 = {:.2}, df = {}, p = {:.4}", t.statistic, t.df, t.p_value);
    assert!((0.0..=1.0).contains(&t.p_value));
    // the straight-continuation frequency is symmetric in both laws
    let straight = |v: &[&[LatticePoint<5>]]| v.iter().filter(|p| p[2] - p[1] == p[1] - p[0]).count() as f64 / n as f64;
    eprintln!("straight second step: two-sided {:.4}, plain {:.4}", straight(&a), straight(&b));
}

#[test]
fn weighted_d4_samples_are_well_formed() {
    let s: Vec<_> = (0..12)
        .map(|i| d4_weighted_two_sided(32, 64, 64, 200, RngStream::new(65, i)).unwrap())
        .collect();
    for w in &s {
        assert_eq!(w.path.steps(), 32);
        assert!(w.weight >= 0.0);
        let x = x_hat_estimators(&w.path, 32, 200, None, RngStream::new(66, 0)).unwrap();
        assert!(x.x_hat <= x.x_hat_plus);
        assert!(x.product >= 0.0);
    }
    let weights: Vec<f64> = s.iter().map(|w| w.weight).collect();
    let summary = weighted_summary(&vec![1.0; weights.len()], &weights).unwrap();
    assert!((summary.mean - 1.0).abs() < 1e-12);
    assert!(summary.ess <= weights.len() as f64 + 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn accepted_pairs_are_rooted_and_self_avoiding(seed in any::<u64>(), side in 1usize..24) {
        let cfg = SamplerConfig::new(side, 2 * side).unwrap();
        let (paths, _) = two_sided_batch::<5>(&cfg, 3, RngStream::new(seed, 0)).unwrap();
        for p in &paths {
            prop_assert!(p.is_self_avoiding());
            let pts = p.points();
            prop_assert_eq!(pts.len(), 2 * side + 1);
            prop_assert!(pts[side].is_origin());
            prop_assert!(pts.windows(2).all(|w| w[0].direction_to(&w[1]).is_some()));
        }
    }

    #[test]
    fn self_normalized_weights_reproduce_constant_values(ws in prop::collection::vec(0.01f64..10.0, 2..40), c in -5.0f64..5.0) {
        let (m, _) = weighted_mean_stderr(&vec![c; ws.len()], &ws).unwrap();
        prop_assert!((m - c).abs() < 1e-9);
        let s = weighted_summary(&vec![c; ws.len()], &ws).unwrap();
        prop_assert!(s.ess > 0.0 && s.ess <= ws.len() as f64 + 1e-9);
        prop_assert_eq!(s.flagged, s.ess_fraction < 0.1);
    }
}
