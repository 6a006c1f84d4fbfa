//! Randomised checks of the exact invariants each stage promises.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Rotation3, Vector2};
use proptest::prelude::*;

use cfcw::demod::{unwrap_phase, UnwrapConfig};
use cfcw::handwriting::{fit_writing_surface, isomap_embed, IsomapConfig};
use cfcw::localize::multilaterate;
use cfcw::signal::{
    interference_error_bound, max_unambiguous_speed, phase_to_distance_delta, wrap_phase, Medium,
};
use cfcw::sim::{ArrayGeometry, Point3};
use cfcw::startpoint::{tdoa_objective, PhaseDifferenceSet, PhasePair, WrapVector};
use cfcw::tx::build_hop_schedule;

fn air() -> Medium {
    Medium::new(343.0).unwrap()
}

fn point() -> impl Strategy<Value = Point3> {
    (-0.3..0.3f64, -0.3..0.3f64, 0.05..0.6f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

/// Smallest residual after the best rotation or reflection of `a` onto `b`.
fn procrustes(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let n = a.len() as f64;
    let mean = |v: &[[f64; 2]]| v.iter().fold(Vector2::zeros(), |s, p| s + Vector2::new(p[0], p[1]) / n);
    let (ca, cb) = (mean(a), mean(b));
    let mut m = Matrix2::zeros();
    for (p, q) in a.iter().zip(b) {
        m += (Vector2::new(q[0], q[1]) - cb) * (Vector2::new(p[0], p[1]) - ca).transpose();
    }
    let svd = m.svd(true, true);
    let r = svd.u.unwrap() * svd.v_t.unwrap();
    a.iter()
        .zip(b)
        .map(|(p, q)| (r * (Vector2::new(p[0], p[1]) - ca) - (Vector2::new(q[0], q[1]) - cb)).norm_squared())
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wrapped_phase_stays_in_range_and_keeps_the_angle(x in -1e4..1e4f64) {
        let w = wrap_phase(x);
        prop_assert!((-PI..=PI).contains(&w));
        let turns = (x - w) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn distance_is_linear_in_phase_and_inverse_in_frequency(
        a in -10.0..10.0f64, b in -10.0..10.0f64, f in 20e3..90e3f64,
    ) {
        let m = air();
        let d = |p: f64, f: f64| phase_to_distance_delta(p, f, &m).unwrap();
        prop_assert!((d(a + b, f) - d(a, f) - d(b, f)).abs() < 1e-15);
        prop_assert!((d(a, 2.0 * f) - 0.5 * d(a, f)).abs() < 1e-15);
    }

    #[test]
    fn interference_bound_halves_when_frequency_doubles(r in 0.0..1.0f64, f in 20e3..45e3f64) {
        let m = air();
        let (p1, d1) = interference_error_bound(r, f, &m).unwrap();
        let (p2, d2) = interference_error_bound(r, 2.0 * f, &m).unwrap();
        prop_assert_eq!(p1, p2);
        prop_assert!((d2 - 0.5 * d1).abs() <= 1e-15);
    }

    #[test]
    fn velocity_aid_doubles_the_speed_limit(f in 20e3..90e3f64, t in 1e-3..1e-2f64) {
        let m = air();
        let classic = max_unambiguous_speed(f, t, &m, false).unwrap();
        let aided = max_unambiguous_speed(f, t, &m, true).unwrap();
        prop_assert!((aided - 2.0 * classic).abs() < 1e-12 * aided);
    }

    #[test]
    fn every_hop_slot_differs_by_the_receive_frequency(
        f_rcv in 5e3..7.9e3f64,
        base in 25e3..60e3f64,
        step in 1e3..5e3f64,
        period in 1e-3..5e-3f64,
        slots in 2usize..40,
    ) {
        let s = build_hop_schedule(f_rcv, base, step, period, slots as f64 * period).unwrap();
        prop_assert!((s.receive_frequency - f_rcv).abs() < 1e-3);
        for w in s.slots.windows(2) {
            prop_assert!(w[0].primary != w[1].primary);
        }
        for sl in &s.slots {
            prop_assert_eq!(sl.primary - sl.secondary, s.receive_frequency);
            prop_assert!(sl.primary >= 25e3);
        }
    }

    /// A beacon that speeds up from rest to a steady `v` stays exactly on
    /// its phase ramp below the aided ceiling.
    #[test]
    fn aided_unwrap_follows_ramps_below_the_ceiling(
        v in 0.05..2.8f64, ramp in 20usize..60, phase0 in -PI..PI, away in any::<bool>(),
    ) {
        let (f, t) = (40e3, 3e-3);
        let full = 2.0 * PI * f * v * t / 343.0 * if away { 1.0 } else { -1.0 };
        let mut truth = vec![phase0];
        for k in 1..200 {
            let step = full * (k as f64 / ramp as f64).min(1.0);
            truth.push(truth[k - 1] + step);
        }
        let wrapped: Vec<f64> = truth.iter().map(|p| wrap_phase(*p)).collect();
        let u = unwrap_phase(&wrapped, &UnwrapConfig::default());
        prop_assert!(u.reliable);
        let offset = u.phase[0] - truth[0];
        for (a, b) in u.phase.iter().zip(&truth) {
            prop_assert!((a - b - offset).abs() < 1e-6, "{} vs {}", a, b);
        }
    }

    #[test]
    fn objective_ignores_simultaneous_rewrap(
        p in point(), q in point(), pair in 0usize..21, turns in -3i32..3,
    ) {
        let mics = ArrayGeometry::standard().mics();
        let set = PhaseDifferenceSet::ideal(&p, &mics, 343.0 / 40e3);
        let wraps = set.best_wraps(&p);
        let mut moved = set.clone();
        let mut rewrapped = wraps.clone();
        moved.pairs[pair].theta += 2.0 * PI * turns as f64;
        rewrapped.n[pair] -= turns;
        let (a, b) = (tdoa_objective(&q, &wraps, &set), tdoa_objective(&q, &rewrapped, &moved));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
    }

    #[test]
    fn objective_is_antisymmetric_in_pair_order(p in point(), q in point(), pair in 0usize..21) {
        let mics = ArrayGeometry::standard().mics();
        let set = PhaseDifferenceSet::ideal(&p, &mics, 343.0 / 42e3);
        let wraps = set.best_wraps(&q);
        let mut swapped = set.clone();
        let mut neg = wraps.clone();
        let pp = set.pairs[pair];
        swapped.pairs[pair] = PhasePair { i: pp.j, j: pp.i, theta: -pp.theta };
        neg.n[pair] = -wraps.n[pair];
        let (a, b) = (tdoa_objective(&q, &wraps, &set), tdoa_objective(&q, &neg, &swapped));
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
        let zero = WrapVector { n: set.best_wraps(&p).n };
        prop_assert!(tdoa_objective(&p, &zero, &set) < 1e-20);
    }

    #[test]
    fn multilateration_inverts_exact_distances(
        p in point(), dx in -0.03..0.03f64, dy in -0.03..0.03f64, dz in -0.03..0.03f64,
    ) {
        let mics = ArrayGeometry::standard().mics();
        let d: Vec<Option<f64>> = mics.iter().map(|m| Some((p - m).norm())).collect();
        let seed = p + Point3::new(dx, dy, dz);
        let (est, rms) = multilaterate(&d, &mics, &seed).unwrap();
        prop_assert!((est - p).norm() < 1e-6, "{}", (est - p).norm());
        prop_assert!(rms < 1e-8);
    }

    #[test]
    fn multilateration_moves_with_the_array(
        p in point(), t in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    ) {
        let t = Point3::new(t.0, t.1, t.2);
        let mics = ArrayGeometry::standard().mics();
        let shifted: Vec<Point3> = mics.iter().map(|m| m + t).collect();
        let d: Vec<Option<f64>> = mics.iter().map(|m| Some((p - m).norm())).collect();
        let seed = p + Point3::new(0.01, -0.01, 0.01);
        let (a, _) = multilaterate(&d, &mics, &seed).unwrap();
        let (b, _) = multilaterate(&d, &shifted, &(seed + t)).unwrap();
        prop_assert!((b - a - t).norm() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn isomap_ignores_rigid_motion(
        angles in (-PI..PI, -1.4..1.4f64, -PI..PI),
        shift in (-0.5..0.5f64, -0.5..0.5f64, -0.5..0.5f64),
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point3> = (0..60)
            .map(|_| Point3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.02..0.02), 0.0))
            .map(|p| Point3::new(p.x, p.y, 0.25 + 0.3 * p.x))
            .collect();
        let rot = Rotation3::from_euler_angles(angles.0, angles.1, angles.2);
        let moved: Vec<Point3> = pts.iter().map(|p| rot * p + Point3::new(shift.0, shift.1, shift.2)).collect();
        let cfg = IsomapConfig::default();
        let a = isomap_embed(&pts, &fit_writing_surface(&pts).unwrap(), &cfg).unwrap();
        let b = isomap_embed(&moved, &fit_writing_surface(&moved).unwrap(), &cfg).unwrap();
        prop_assert!(procrustes(&a.coords, &b.coords) < 1e-6, "{}", procrustes(&a.coords, &b.coords));
    }
}
