//! Small deterministic suites for conformance and regression checks.
//!
//! The roads are circular arcs sampled at 1 m, so every road has a known
//! constant curvature. Labels follow a curvature rule with a few planted
//! exceptions; the suites are not trivially separable.

use crate::model::{LabeledCase, Outcome, Point, TestSuite};

/// `n` points spaced `step` meters apart along a circular arc of signed
/// curvature `kappa`, starting at the origin heading along +x. A zero
/// curvature gives a straight road.
pub fn arc_road(kappa: f64, n: usize, step: f64) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let s = i as f64 * step;
            if kappa == 0.0 {
                Point::new(s, 0.0)
            } else {
                let theta = s * kappa;
                Point::new(theta.sin() / kappa, (1.0 - theta.cos()) / kappa)
            }
        })
        .collect()
}

/// Curvature assigned to case `i` of fixture suite `k`.
pub fn fixture_kappa(k: usize, i: usize) -> f64 {
    let magnitude = 0.005 * ((i * 7 + k * 3) % 15) as f64;
    if i % 2 == 0 { magnitude } else { -magnitude }
}

/// Fixture suite number `k`: `20 + 3k` cases. A case fails when its
/// curvature magnitude exceeds 0.04, except every 11th case whose label is
/// inverted.
pub fn fixture_suite(k: usize) -> TestSuite {
    let suite_id = format!("fixture_{k:02}");
    let n = 20 + 3 * k;
    let cases = (0..n)
        .map(|i| {
            let kappa = fixture_kappa(k, i);
            let mut fail = kappa.abs() > 0.04;
            if (i + k) % 11 == 0 {
                fail = !fail;
            }
            let sim = 20.0 + ((i * 13 + k) % 17) as f64 + 0.25 * i as f64;
            LabeledCase::new(
                format!("{suite_id}_t{i:04}"),
                arc_road(kappa, 30, 1.0),
                if fail { Outcome::Fail } else { Outcome::Pass },
                sim,
            )
        })
        .collect();
    TestSuite::new(suite_id, cases)
}

/// Fixture suites `0..count`.
pub fn fixture_suites(count: usize) -> Vec<TestSuite> {
    (0..count).map(fixture_suite).collect()
}

/// A suite whose labels are exactly `|kappa| > 0.04`; a curvature threshold
/// separates it perfectly.
pub fn separable_suite() -> TestSuite {
    let cases = (0..40)
        .map(|i| {
            let kappa = fixture_kappa(1, i);
            let fail = kappa.abs() > 0.04;
            LabeledCase::new(
                format!("separable_t{i:04}"),
                arc_road(kappa, 30, 1.0),
                if fail { Outcome::Fail } else { Outcome::Pass },
                30.0,
            )
        })
        .collect();
    TestSuite::new("separable", cases)
}
