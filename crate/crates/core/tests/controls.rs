mod common;

use std::sync::Arc;

use rand::Rng;

use common::{pvar_brute, random_polyline, rng};
use roughflow::controls::{greedy_partition, pvar_norm, pvar_norm_points, ControlFunction};
use roughflow::drivers::{FbmSampler, GaussianDriverSpec};

#[test]
fn dp_matches_brute_force_on_rough_paths() {
    let mut r = rng(11);
    for case in 0..60 {
        let n = r.random_range(2..=10);
        let d = 1 + case % 3;
        let p = r.random_range(1.0..3.0);
        let x = random_polyline(&mut r, n, d, 1.0);
        let vals = x.values();
        let brute = pvar_brute(vals.len(), p, |i, j| vals[i].distance(&vals[j]).unwrap());
        let dp = pvar_norm(&x, p, 0.0, 1.0).unwrap();
        assert!((dp - brute).abs() <= 1e-12 * (1.0 + brute), "{dp} vs {brute}");
    }
}

#[test]
fn dp_matches_brute_force_on_points() {
    let mut r = rng(12);
    for _ in 0..60 {
        let n = r.random_range(1..=11);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let p = r.random_range(1.0..4.0);
        let brute = pvar_brute(n, p, |i, j| roughflow::linalg::dist(&pts[i], &pts[j]));
        assert!((pvar_norm_points(&pts, p) - brute).abs() <= 1e-12 * (1.0 + brute));
    }
}

#[test]
fn greedy_partition_counts_on_fbm() {
    let spec = GaussianDriverSpec::new(0.4, 2, 128, 1.0, 0).unwrap();
    let sampler = FbmSampler::new(&spec).unwrap();
    for seed in 0..10 {
        let x = Arc::new(sampler.sample_path(seed).unwrap());
        let omega = ControlFunction::pvar_of_path(x.clone(), spec.p_hint());
        let total = omega.eval(0.0, 1.0);
        let mut prev = usize::MAX;
        for k in 0..10 {
            let delta = total * 0.02 * 1.6f64.powi(k);
            let part = greedy_partition(&omega, delta, x.times()).unwrap();
            assert!(delta * part.n_delta as f64 <= total * (1.0 + 1e-12));
            assert!(part.n_delta <= prev);
            prev = part.n_delta;
            // Every interval before the last one spends at least δ.
            for (a, b) in part.intervals().take(part.n_delta) {
                assert!(omega.eval(a, b) >= delta * (1.0 - 1e-9));
            }
        }
    }
}

#[test]
fn control_is_superadditive() {
    let mut r = rng(13);
    let x = Arc::new(random_polyline(&mut r, 40, 2, 0.5));
    let omega = ControlFunction::pvar_of_path(x, 2.5).with_time();
    for _ in 0..100 {
        let mut t = [r.random_range(0.0..1.0), r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
        t.sort_by(f64::total_cmp);
        let whole = omega.eval(t[0], t[2]);
        assert!(omega.eval(t[0], t[1]) + omega.eval(t[1], t[2]) <= whole * (1.0 + 1e-12) + 1e-15);
    }
}
