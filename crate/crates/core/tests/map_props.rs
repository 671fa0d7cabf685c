mod common;

use pexpand::conjugacy::periodic_points;
use pexpand::map::{
    critical_orbit, detect_periodic_critical, expansivity_certificate, itinerary, FamilyCurve, PiecewiseMap,
    CRITICAL_POINT, DEFAULT_TOL_C,
};
use proptest::prelude::*;

fn image(f: &PiecewiseMap, lo: f64, hi: f64) -> (f64, f64) {
    let (a, b) = (f.value(lo), f.value(hi));
    if lo < CRITICAL_POINT && hi > CRITICAL_POINT {
        (a.min(b).min(f.critical_value()), a.max(b).max(f.critical_value()))
    } else {
        (a.min(b), a.max(b))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn certified_intervals_expand(
        pick in 0usize..4,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let f = [
            PiecewiseMap::golden_tent(),
            PiecewiseMap::full_tent(),
            common::bent_tent(0.8, 0.05),
            common::bent_tent(0.6, -0.05),
        ][pick].clone();
        let cert = expansivity_certificate(&f).unwrap();
        let (lo, hi) = (-cert.epsilon + 2.0 * cert.epsilon * a.min(b), -cert.epsilon + 2.0 * cert.epsilon * a.max(b));
        prop_assume!(hi - lo > 1e-9);
        let (mut l, mut h) = (lo, hi);
        for _ in 0..cert.n0 {
            (l, h) = image(&f, l, h);
        }
        prop_assert!(h - l > f.lambda() * (hi - lo), "{} vs {}", h - l, hi - lo);
    }

    #[test]
    fn derivative_products_grow(f in common::valid_map()) {
        let lambda = f.validate().lambda_lower;
        let orbit = critical_orbit(&f, 40, DEFAULT_TOL_C).unwrap();
        for (i, d) in orbit.log_abs_products.iter().enumerate() {
            prop_assert!(*d >= i as f64 * lambda.ln() - 1e-9);
        }
    }
}

/// All points with `f^p(x) = x` for some `p <= max_period`, by sign changes on a fine grid.
fn brute_force_periodic(f: &PiecewiseMap, max_period: usize) -> Vec<f64> {
    let iterate = |x: f64, p: usize| (0..p).fold(x, |y, _| f.value(y));
    let n = 400_000;
    let mut pts: Vec<f64> = Vec::new();
    for p in 1..=max_period {
        let g = |x: f64| iterate(x, p) - x;
        let mut prev_x = -1.0;
        let mut prev = g(prev_x);
        if prev == 0.0 {
            pts.push(prev_x);
        }
        for i in 1..=n {
            let x = -1.0 + 2.0 * i as f64 / n as f64;
            let gx = g(x);
            if gx == 0.0 {
                pts.push(x);
            } else if prev != 0.0 && gx.signum() != prev.signum() {
                let (mut a, mut b) = (prev_x, x);
                for _ in 0..60 {
                    let m = 0.5 * (a + b);
                    if g(m).signum() == g(a).signum() { a = m } else { b = m }
                }
                pts.push(0.5 * (a + b));
            }
            prev_x = x;
            prev = gx;
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    pts
}

#[test]
fn periodic_point_count_matches_brute_force() {
    for f in [PiecewiseMap::golden_tent(), PiecewiseMap::full_tent()] {
        let lib = periodic_points(&f, 8).unwrap();
        // points on the critical orbit carry a C symbol and are not enumerated
        let oracle: Vec<f64> = brute_force_periodic(&f, 8)
            .into_iter()
            .filter(|&x| itinerary(&f, x, 8, DEFAULT_TOL_C).first_critical().is_none())
            .collect();
        assert_eq!(lib.len(), oracle.len());
        for (p, q) in lib.iter().zip(&oracle) {
            assert!((p.x - q).abs() < 1e-9, "{} vs {}", p.x, q);
        }
    }
}

#[test]
fn periodic_points_have_distinct_itineraries() {
    for f in [PiecewiseMap::golden_tent(), PiecewiseMap::full_tent()] {
        let pts = brute_force_periodic(&f, 8);
        let mut words: Vec<String> = pts.iter().map(|&x| itinerary(&f, x, 24, DEFAULT_TOL_C).to_string()).collect();
        words.sort();
        let n = words.len();
        words.dedup();
        assert_eq!(words.len(), n);
    }
}

#[test]
fn golden_period_stable_across_tolerances() {
    let f = PiecewiseMap::golden_tent();
    for k in 6..=12 {
        let tol = 10f64.powi(-k);
        let det = detect_periodic_critical(&f, 20, tol).unwrap();
        assert_eq!(det.period, Some(3), "tol {tol}");
        assert!(!det.is_ambiguous());
    }
}

#[test]
fn shipped_families_valid_on_grid() {
    for fam in [
        common::golden_horizontal_family(),
        common::golden_transversal_family(),
        common::full_tent_family(),
    ] {
        let (lo, hi) = fam.domain();
        for t in pexpand::scan::parameter_grid(lo, hi, 101) {
            fam.map_at(t).unwrap();
        }
    }
}

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "json") {
            continue;
        }
        let cfg = pexpand::io::RunConfig::load(&path).unwrap();
        if cfg.map.is_some() {
            cfg.map().unwrap().require_valid().unwrap();
        }
        if cfg.family.is_some() {
            let fam = cfg.family().unwrap();
            let (lo, hi) = fam.domain();
            for t in pexpand::scan::parameter_grid(lo, hi, 101) {
                fam.map_at(t).unwrap_or_else(|e| panic!("{}: t = {t}: {e}", path.display()));
            }
        }
        seen += 1;
    }
    assert!(seen >= 5);
}
