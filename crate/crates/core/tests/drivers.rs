mod common;

use common::{random_points, rng};
use roughflow::drivers::io::{read_points_csv, read_rough_path_csv, read_trajectory_csv, write_points_csv, write_rough_path_csv, write_trajectory_csv};
use roughflow::drivers::{lift_piecewise_linear, sample_fbm, uniform_grid, FbmSampler, GaussianDriverSpec};

#[test]
fn fbm_matches_its_covariance() {
    // E[B_s B_t] = (s^{2H} + t^{2H} − |t−s|^{2H}) / 2, checked on a coarse grid.
    let h = 0.4;
    let spec = GaussianDriverSpec::new(h, 1, 8, 1.0, 0).unwrap();
    let sampler = FbmSampler::new(&spec).unwrap();
    let times = sampler.times();
    let n = 20_000;
    let mut acc = vec![0.0; 9 * 9];
    for seed in 0..n {
        let pts = sampler.sample(seed);
        for i in 0..9 {
            for j in 0..9 {
                acc[i * 9 + j] += pts[i][0] * pts[j][0];
            }
        }
    }
    for i in 1..9 {
        for j in 1..9 {
            let (s, t) = (times[i], times[j]);
            let want = 0.5 * (s.powf(2.0 * h) + t.powf(2.0 * h) - (t - s).abs().powf(2.0 * h));
            let got = acc[i * 9 + j] / n as f64;
            // Monte-Carlo error of a product of unit-scale Gaussians.
            assert!((got - want).abs() < 0.04, "({s},{t}): {got} vs {want}");
        }
    }
}

#[test]
fn sampling_is_reproducible() {
    let spec = GaussianDriverSpec::new(0.5, 2, 32, 2.0, 9).unwrap();
    assert_eq!(sample_fbm(&spec).unwrap(), sample_fbm(&spec).unwrap());
    assert_ne!(sample_fbm(&spec).unwrap(), sample_fbm(&spec.with_seed(10)).unwrap());
}

#[test]
fn lifts_have_exact_chen_increments() {
    let mut r = rng(41);
    let pts = random_points(&mut r, 10, 3, 1.0);
    let x = lift_piecewise_linear(&pts, &uniform_grid(10, 1.0)).unwrap();
    for k in 0..10 {
        for l in k + 1..=10 {
            let g = x.increment(k, l);
            let want: Vec<f64> = (0..3).map(|i| pts[l][i] - pts[k][i]).collect();
            for i in 0..3 {
                assert!((g.level1()[i] - want[i]).abs() < 1e-14);
            }
            assert!(g.geometric_defect() < 1e-13);
        }
    }
}

#[test]
fn csv_files_round_trip() {
    let mut r = rng(42);
    let pts = random_points(&mut r, 6, 2, 1.0);
    let times = uniform_grid(6, 1.5);
    let mut buf = Vec::new();
    write_points_csv(&mut buf, &times, &pts).unwrap();
    assert_eq!(read_points_csv(buf.as_slice()).unwrap(), (times.clone(), pts.clone()));

    buf.clear();
    write_trajectory_csv(&mut buf, &times, &pts).unwrap();
    assert_eq!(read_trajectory_csv(buf.as_slice()).unwrap(), (times.clone(), pts.clone()));

    let x = lift_piecewise_linear(&pts, &times).unwrap();
    buf.clear();
    write_rough_path_csv(&mut buf, &x).unwrap();
    assert_eq!(read_rough_path_csv(buf.as_slice(), 1.0).unwrap(), x);
}
