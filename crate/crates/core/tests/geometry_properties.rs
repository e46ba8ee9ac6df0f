use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selbench_core::fixtures::arc_road;
use selbench_core::geometry::{curvature_profile, menger_curvature};
use selbench_core::model::Point;

/// Circumradius from the circumcenter, found by intersecting two
/// perpendicular bisectors. Shares no arithmetic with the Menger formula.
fn circumradius(a: Point, b: Point, c: Point) -> f64 {
    let d = 2.0 * (a.x * (b.y - c.y) + b.x * (c.y - a.y) + c.x * (a.y - b.y));
    let a2 = a.x * a.x + a.y * a.y;
    let b2 = b.x * b.x + b.y * b.y;
    let c2 = c.x * c.x + c.y * c.y;
    let ux = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d;
    let uy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d;
    ((a.x - ux).powi(2) + (a.y - uy).powi(2)).sqrt()
}

#[test]
fn menger_matches_circumcircle_on_random_triangles() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1000 {
        let p = |rng: &mut ChaCha8Rng| Point::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
        let (a, b, c) = (p(&mut rng), p(&mut rng), p(&mut rng));
        // Skip near-collinear triples, where the circumcenter itself is
        // ill-conditioned and the oracle rather than the subject is wrong.
        let area2 = ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs();
        let longest = a.distance(b).max(b.distance(c)).max(a.distance(c));
        if area2 < 1e-3 * longest * longest {
            continue;
        }
        let kappa = menger_curvature(a, b, c).unwrap();
        let oracle = 1.0 / circumradius(a, b, c);
        let rel = (kappa.abs() - oracle).abs() / oracle;
        worst = worst.max(rel);
        checked += 1;
    }
    assert!(worst <= 1e-9, "worst relative error {worst:e}");
}

#[test]
fn sign_follows_turning_direction() {
    let (a, b) = (Point::new(0.0, 0.0), Point::new(1.0, 0.0));
    assert!(menger_curvature(a, b, Point::new(2.0, 1.0)).unwrap() > 0.0);
    assert!(menger_curvature(a, b, Point::new(2.0, -1.0)).unwrap() < 0.0);
}

#[test]
fn circle_of_radius_50_sampled_at_1m() {
    let road = arc_road(1.0 / 50.0, 200, 1.0);
    let profile = curvature_profile(&road).unwrap();
    assert!((profile.mean_abs_kappa - 0.02).abs() <= 1e-4, "{}", profile.mean_abs_kappa);
    assert!(profile.kappas.iter().all(|k| *k > 0.0));
}

#[test]
fn straight_road_is_exactly_zero() {
    // Exactly representable collinear points give an exact zero.
    for (dx, dy) in [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (3.0, -2.0), (0.5, 0.25)] {
        let road: Vec<Point> = (0..50).map(|i| Point::new(i as f64 * dx, i as f64 * dy)).collect();
        let profile = curvature_profile(&road).unwrap();
        assert!(profile.kappas.iter().all(|k| *k == 0.0), "direction ({dx}, {dy})");
        assert_eq!(profile.mean_abs_kappa, 0.0);
    }
}

#[test]
fn rounded_straight_road_is_zero_up_to_rounding() {
    // 0.1 and 0.7 are not binary fractions, so the points are only
    // collinear up to one rounding of each coordinate.
    let road: Vec<Point> = (0..50).map(|i| Point::new(i as f64 * 0.1, i as f64 * 0.7)).collect();
    let profile = curvature_profile(&road).unwrap();
    assert!(profile.mean_abs_kappa < 1e-12, "{}", profile.mean_abs_kappa);
}

fn transform(points: &[Point], angle: f64, tx: f64, ty: f64) -> Vec<Point> {
    let (s, c) = angle.sin_cos();
    points.iter().map(|p| Point::new(c * p.x - s * p.y + tx, s * p.x + c * p.y + ty)).collect()
}

proptest! {
    #[test]
    fn invariant_under_rigid_motion(
        kappa in -0.2f64..0.2,
        angle in 0.0f64..std::f64::consts::TAU,
        tx in -500.0f64..500.0,
        ty in -500.0f64..500.0,
    ) {
        let road = arc_road(kappa, 25, 1.0);
        let a = curvature_profile(&road).unwrap();
        let b = curvature_profile(&transform(&road, angle, tx, ty)).unwrap();
        for (x, y) in a.kappas.iter().zip(&b.kappas) {
            prop_assert!((x - y).abs() <= 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn scaling_divides_curvature(kappa in -0.2f64..0.2, scale in 0.1f64..10.0) {
        let road = arc_road(kappa, 25, 1.0);
        let scaled: Vec<Point> = road.iter().map(|p| Point::new(p.x * scale, p.y * scale)).collect();
        let a = curvature_profile(&road).unwrap();
        let b = curvature_profile(&scaled).unwrap();
        for (x, y) in a.kappas.iter().zip(&b.kappas) {
            prop_assert!((x / scale - y).abs() <= 1e-9 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn reversal_negates_and_reverses(kappa in -0.2f64..0.2) {
        let road = arc_road(kappa, 25, 1.0);
        let mut rev = road.clone();
        rev.reverse();
        let a = curvature_profile(&road).unwrap();
        let b = curvature_profile(&rev).unwrap();
        for (x, y) in a.kappas.iter().zip(b.kappas.iter().rev()) {
            prop_assert!((x + y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn mirroring_negates(kappa in -0.2f64..0.2) {
        let road = arc_road(kappa, 25, 1.0);
        let mirrored: Vec<Point> = road.iter().map(|p| Point::new(p.x, -p.y)).collect();
        let a = curvature_profile(&road).unwrap();
        let b = curvature_profile(&mirrored).unwrap();
        for (x, y) in a.kappas.iter().zip(&b.kappas) {
            prop_assert_eq!(*x, -*y);
        }
    }
}
