use lerw_core::capacity::*;
use lerw_core::rng::RngStream;
use lerw_core::walk::lerw_sample;
use lerw_core::{LatticePoint, PointSet};
use proptest::prelude::*;
use rand::Rng;
use statrs::function::gamma::gamma;

type P3 = LatticePoint<3>;

/// G_{Z^3}(0,0) from the Watson integral.
const G00: f64 = 1.5163860592;

/// Closed form of the simple cubic Watson integral in gamma functions.
fn watson_closed_form() -> f64 {
    let pi = std::f64::consts::PI;
    6f64.sqrt() / (32.0 * pi.powi(3)) * gamma(1.0 / 24.0) * gamma(5.0 / 24.0) * gamma(7.0 / 24.0) * gamma(11.0 / 24.0)
}

/// G(0,0) = 1/(2 pi)^3 int 3 / (3 - cos a - cos b - cos c) over the cube,
/// reduced to a 2-d integral by integrating c in closed form:
/// int_0^pi dc / (s - cos c) = pi / sqrt(s^2 - 1).
fn watson_quadrature(n: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let h = pi / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let a = (i as f64 + 0.5) * h;
        for j in 0..n {
            let b = (j as f64 + 0.5) * h;
            let s = 3.0 - a.cos() - b.cos();
            acc += pi / (s * s - 1.0).sqrt();
        }
    }
    3.0 * acc * h * h / pi.powi(3)
}

#[test]
fn watson_oracles_agree() {
    assert!((watson_closed_form() - G00).abs() < 1e-9, "{}", watson_closed_form());
    // Midpoint rule converges slowly near the corner singularity.
    assert!((watson_quadrature(800) - G00).abs() < 2e-3);
}

#[test]
fn singleton_capacity_matches_watson() {
    let set = PointSet::from_points([P3::ORIGIN]);
    let r = capacity_mc(&set, 60.0, 200_000, RngStream::new(11, 0)).unwrap();
    assert!((r.value - 1.0 / G00).abs() < 4.0 * r.stderr + 2e-3, "{} +- {}", r.value, r.stderr);
    assert!(r.lower.unwrap() <= r.value && r.value <= r.upper.unwrap());
}

#[test]
fn two_point_capacity_matches_green_system() {
    let want = 2.0 / (G00 + (G00 - 1.0));
    let set = PointSet::from_points([P3::ORIGIN, P3::new([1, 0, 0])]);
    let r = capacity_mc(&set, 60.0, 100_000, RngStream::new(12, 0)).unwrap();
    assert!((r.value - want).abs() < 4.0 * r.stderr + 3e-3, "{} +- {}", r.value, r.stderr);
    let h = capacity_via_hitting(&set, 8.0, 200_000, RngStream::new(12, 1)).unwrap();
    assert!((h.value - want).abs() < 4.0 * h.stderr, "{} +- {}", h.value, h.stderr);
}

#[test]
fn escape_bracket_contains_watson_value() {
    let set = PointSet::from_points([P3::ORIGIN]);
    for (i, r) in [50.0, 100.0].into_iter().enumerate() {
        let e = escape_probability_mc(&set, &P3::ORIGIN, r, 200_000, RngStream::new(13, i as u64)).unwrap();
        let slack = 3.0 * e.stderr();
        assert!(e.lower - slack <= 1.0 / G00 && 1.0 / G00 <= e.upper + slack, "{e:?}");
    }
}

#[test]
fn bracket_narrows_with_radius() {
    let set = PointSet::from_points([P3::ORIGIN, P3::new([0, 2, 0])]);
    let s = RngStream::new(14, 0);
    let a = escape_probability_mc(&set, &P3::ORIGIN, 20.0, 20_000, s).unwrap();
    let b = escape_probability_mc(&set, &P3::ORIGIN, 80.0, 20_000, s).unwrap();
    assert!(b.upper - b.lower < a.upper - a.lower);
}

#[test]
fn green_function_values() {
    let s = RngStream::new(15, 0);
    let g0 = green_estimate(&P3::ORIGIN, GreenMethod::MonteCarlo, 200_000, s.child(0)).unwrap();
    assert!((g0.value - G00).abs() < 4.0 * g0.stderr + 5e-3, "{g0:?}");
    let g1 = green_estimate(&P3::new([1, 0, 0]), GreenMethod::MonteCarlo, 200_000, s.child(1)).unwrap();
    assert!((g1.value - (G00 - 1.0)).abs() < 4.0 * g1.stderr + 5e-3, "{g1:?}");
    let g2 = green_estimate(&P3::new([2, 0, 0]), GreenMethod::MonteCarlo, 200_000, s.child(2)).unwrap();
    assert!(g2.value < g1.value && g2.value > 0.0);
    let a = green_estimate(&P3::new([30, 0, 0]), GreenMethod::Asymptotic, 0, s).unwrap();
    assert!((a.value - 3.0 / (2.0 * std::f64::consts::PI * 30.0)).abs() < 1e-15);
}

#[test]
fn hitting_estimate_is_stable_in_start_radius() {
    let set = PointSet::from_points([P3::ORIGIN, P3::new([1, 1, 0]), P3::new([0, 0, 2])]);
    let a = capacity_via_hitting(&set, 8.0, 100_000, RngStream::new(16, 0)).unwrap();
    let b = capacity_via_hitting(&set, 16.0, 100_000, RngStream::new(16, 1)).unwrap();
    assert!((a.value - b.value).abs() < 3.0 * a.stderr.hypot(b.stderr), "{} {}", a.value, b.value);
}

#[test]
fn harmonic_measure_of_a_pair_is_symmetric() {
    let t = SetTarget::new(&[P3::ORIGIN, P3::new([1, 0, 0])]);
    let mut rng = RngStream::new(17, 0).rng();
    let (mut a, mut n) = (0u64, 0u64);
    while n < 4000 {
        if let Some(p) = harmonic_measure_sample(&t, 6.0, &mut rng).unwrap() {
            n += 1;
            if p == P3::ORIGIN {
                a += 1;
            }
        }
    }
    let z = (a as f64 - n as f64 / 2.0) / (n as f64 / 4.0).sqrt();
    assert!(z.abs() < 4.0, "{a}/{n}");
}

#[test]
fn capacity_factorizes_through_harmonic_measure() {
    let b_pts = [P3::ORIGIN, P3::new([1, 0, 0]), P3::new([2, 0, 0]), P3::new([2, 1, 0])];
    let a_pts = [P3::ORIGIN, P3::new([2, 1, 0])];
    let s = RngStream::new(18, 0);
    let cap_a = capacity_mc(&PointSet::from_points(a_pts), 40.0, 100_000, s.child(0)).unwrap();
    let cap_b = capacity_mc(&PointSet::from_points(b_pts), 40.0, 50_000, s.child(1)).unwrap();
    let tb = SetTarget::new(&b_pts);
    let ta = SetTarget::new(&a_pts);
    let a_set = PointSet::from_points(a_pts);
    let mut rng = s.child(2).rng();
    let mut vals = Vec::new();
    while vals.len() < 4000 {
        if let Some(b) = harmonic_measure_sample(&tb, 8.0, &mut rng).unwrap() {
            let hit = if a_set.contains(&b) {
                1.0
            } else {
                let (avoid, _) = avoidance_probability_wos(&ta, &b, WosConfig::default(), 1, RngStream::new(18, vals.len() as u64)).unwrap();
                1.0 - avoid
            };
            vals.push(hit);
        }
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    let se_m = (m * (1.0 - m) / vals.len() as f64).sqrt();
    let prod = cap_b.value * m;
    let se = (cap_b.stderr * m).hypot(cap_b.value * se_m);
    assert!((prod - cap_a.value).abs() < 3.0 * se.hypot(cap_a.stderr), "{prod} vs {}", cap_a.value);
}

#[test]
fn decomposition_total_ignores_ordering() {
    let pts = vec![P3::ORIGIN, P3::new([1, 0, 0]), P3::new([1, 1, 0]), P3::new([3, 0, 1])];
    let mut rev = pts.clone();
    rev.reverse();
    let (a, ta) = capacity_decomposition_mc(&pts, 30.0, 40_000, RngStream::new(19, 0)).unwrap();
    let (b, tb) = capacity_decomposition_mc(&rev, 30.0, 40_000, RngStream::new(19, 1)).unwrap();
    assert!((a.value - b.value).abs() < 3.0 * a.stderr.hypot(b.stderr));
    let term = |t: &DecompositionTerm| t.with_self * t.without_self;
    let spread = ta.iter().zip(&tb).map(|(x, y)| (term(x) - term(y)).abs()).fold(0.0, f64::max);
    assert!(spread > 0.05, "{spread}");
}

#[test]
fn estimators_agree_on_random_sets() {
    let mut rng = RngStream::new(20, 0).rng();
    for k in 0..3u64 {
        let n = rng.random_range(2..=6);
        let pts: Vec<P3> = (0..n)
            .map(|_| P3::new([rng.random_range(-2..=2), rng.random_range(-2..=2), rng.random_range(-2..=2)]))
            .collect();
        let set = PointSet::from_points(pts);
        let s = RngStream::new(20, 10 + k);
        let mc = capacity_mc(&set, 40.0, 20_000, s.child(0)).unwrap();
        let (dec, _) = capacity_decomposition_mc(set.points(), 40.0, 20_000, s.child(1)).unwrap();
        let wos = capacity_wos(&SetTarget::new(set.points()), 10.0, WosConfig::default(), 100_000, s.child(2)).unwrap();
        for (x, y) in [(&mc, &dec), (&mc, &wos), (&dec, &wos)] {
            assert!((x.value - y.value).abs() < 3.5 * x.stderr.hypot(y.stderr), "{} vs {}", x.value, y.value);
        }
    }
}

#[test]
fn subadditivity_within_noise() {
    let a = PointSet::from_points([P3::ORIGIN, P3::new([1, 0, 0])]);
    let b = PointSet::from_points([P3::new([1, 1, 0]), P3::new([0, 2, 0])]);
    let u = PointSet::from_points(a.iter().chain(b.iter()).copied());
    let s = RngStream::new(21, 0);
    let ca = capacity_mc(&a, 30.0, 20_000, s.child(0)).unwrap();
    let cb = capacity_mc(&b, 30.0, 20_000, s.child(1)).unwrap();
    let cu = capacity_mc(&u, 30.0, 20_000, s.child(2)).unwrap();
    let se = ca.stderr.hypot(cb.stderr).hypot(cu.stderr);
    assert!(cu.value <= ca.value + cb.value + 3.0 * se);
}

#[test]
fn sausage_capacity_grows_with_eps() {
    let mut rng = RngStream::new(22, 0).rng();
    let eta = lerw_sample::<_, 3>(30, &mut rng).unwrap();
    let t0 = SausageTarget::new(eta.points(), 0.0);
    let t2 = SausageTarget::new(eta.points(), 2.0);
    let r = 2.0 * t2.ball().1 + 2.0;
    let s = RngStream::new(22, 1);
    let a = capacity_wos(&t0, r, WosConfig::default(), 40_000, s).unwrap();
    let b = capacity_wos(&t2, r, WosConfig::default(), 40_000, s).unwrap();
    assert!(b.value > a.value - 3.0 * a.stderr.hypot(b.stderr));
}

#[test]
fn wos_tracks_plain_hitting_in_d5() {
    let mut rng = RngStream::new(23, 0).rng();
    let eta = lerw_sample::<_, 5>(12, &mut rng).unwrap();
    let set = PointSet::from_points(eta.points().iter().copied());
    let t = SetTarget::new(set.points());
    let y = 2.0 * t.ball().1 + 2.0;
    let plain = capacity_via_hitting_with(&t, y, HittingConfig { kill_factor: 2.0 }, 400_000, RngStream::new(23, 1)).unwrap();
    let fast = capacity_wos(&t, y, WosConfig::default(), 200_000, RngStream::new(23, 2)).unwrap();
    let mc = capacity_mc(&set, 4.0 * set.radius() + 4.0, 20_000, RngStream::new(23, 3)).unwrap();
    assert!((plain.value - fast.value).abs() < 3.5 * plain.stderr.hypot(fast.stderr), "{} {}", plain.value, fast.value);
    assert!((plain.value - mc.value).abs() < 3.5 * plain.stderr.hypot(mc.stderr), "{} {}", plain.value, mc.value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn escape_brackets_are_ordered_probabilities(
        pts in prop::collection::vec(prop::array::uniform3(-3i64..=3).prop_map(P3::new), 1..8),
        seed in any::<u64>(),
    ) {
        let set = PointSet::from_points(pts.clone());
        let e = escape_probability_mc(&set, &pts[0], 2.0 * set.radius() + 3.0, 200, RngStream::new(seed, 0)).unwrap();
        prop_assert!(0.0 <= e.lower && e.lower <= e.upper && e.upper <= 1.0);
        let c = capacity_mc(&set, 2.0 * set.radius() + 3.0, 50, RngStream::new(seed, 1)).unwrap();
        prop_assert!(c.value >= 0.0 && c.value <= set.len() as f64);
        prop_assert!(c.lower.unwrap() <= c.upper.unwrap());
    }
}
