use hopper_core::trajectory::{plan_spline, rest_to_rest, PolySpline, Waypoint, ORDERS};
use proptest::prelude::*;

fn waypoints() -> impl Strategy<Value = Vec<Waypoint>> {
    prop::collection::vec((0.5f64..4.0, -3.0f64..3.0, -2.0f64..2.0, -2.4f64..-0.2), 2..7).prop_map(|rows| {
        let mut t = 0.0;
        rows.into_iter()
            .enumerate()
            .map(|(i, (dt, x, y, z))| {
                if i > 0 {
                    t += dt;
                }
                Waypoint::new(t, x, y, z)
            })
            .collect()
    })
}

/// Central difference of order `k - 1` as a stand-in for order `k`, taken
/// on the polynomial of the segment holding `t` so a knot is no obstacle.
fn central_difference(s: &PolySpline, t: f64, k: usize, h: f64) -> [f64; 3] {
    let seg = (s.knots().partition_point(|&k| k <= t) - 1).min(s.segment_count() - 1);
    let plus = s.evaluate_on_segment(seg, t + h)[k - 1];
    let minus = s.evaluate_on_segment(seg, t - h)[k - 1];
    let d = (plus - minus) / (2.0 * h);
    [d.x, d.y, d.z]
}

/// Largest magnitude of derivative `k` along the spline.
fn peak_norm(s: &PolySpline, k: usize) -> f64 {
    (0..=1000)
        .map(|i| s.sample(s.start_time() + s.duration() * i as f64 / 1000.0).derivatives[k].norm())
        .fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn passes_through_every_waypoint(w in waypoints()) {
        let s = plan_spline(&w).unwrap();
        for p in &w {
            prop_assert!((s.sample(p.t).position() - p.position).norm() < 1e-9);
        }
    }

    #[test]
    fn derivatives_continuous_at_knots(w in waypoints()) {
        let s = plan_spline(&w).unwrap();
        for seg in 1..s.segment_count() {
            let t = s.knots()[seg];
            let left = s.evaluate_on_segment(seg - 1, t);
            let right = s.evaluate_on_segment(seg, t);
            for k in 0..ORDERS {
                let jump = (left[k] - right[k]).norm();
                prop_assert!(jump < 1e-9 * left[k].norm().max(1.0), "order {} jump {} at knot {}", k, jump, seg);
            }
        }
    }

    #[test]
    fn starts_and_ends_at_rest(w in waypoints()) {
        let s = plan_spline(&w).unwrap();
        let first = s.evaluate_on_segment(0, s.start_time());
        let last = s.evaluate_on_segment(s.segment_count() - 1, s.end_time());
        for k in 1..ORDERS {
            prop_assert!(first[k].norm() < 1e-9 && last[k].norm() < 1e-9, "order {}", k);
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences(w in waypoints(), frac in 0.01f64..0.99) {
        let s = plan_spline(&w).unwrap();
        let t = s.start_time() + frac * s.duration();
        let h = 1e-5 * s.knots().windows(2).map(|k| k[1] - k[0]).fold(f64::INFINITY, f64::min);
        let exact = s.sample(t);
        for k in 1..ORDERS {
            let fd = central_difference(&s, t, k, h);
            let an = exact.derivatives[k];
            let scale = peak_norm(&s, k);
            for axis in 0..3 {
                prop_assert!(
                    (fd[axis] - an[axis]).abs() <= 1e-5 * scale,
                    "order {} axis {}: fd {} analytic {}", k, axis, fd[axis], an[axis]
                );
            }
        }
    }

    #[test]
    fn discretization_equals_analytic_samples(w in waypoints(), rate in 5.0f64..200.0) {
        let s = plan_spline(&w).unwrap();
        let rows = s.discretize(rate).unwrap();
        prop_assert_eq!(rows[0].t, s.start_time());
        prop_assert!(rows.last().unwrap().t <= s.end_time() + 1e-9);
        for r in &rows {
            prop_assert_eq!(*r, s.sample(r.t));
        }
    }

    #[test]
    fn no_more_snap_than_stopping_at_every_waypoint(w in waypoints()) {
        let s = plan_spline(&w).unwrap();
        let stop_and_go: f64 = w
            .windows(2)
            .map(|p| rest_to_rest(p[0].t, p[0].position, p[1].t - p[0].t, p[1].position).unwrap().snap_cost())
            .sum();
        prop_assert!(s.snap_cost() <= stop_and_go * (1.0 + 1e-9), "{} > {}", s.snap_cost(), stop_and_go);
    }
}
