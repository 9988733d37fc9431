#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roughflow::drivers::{lift_piecewise_linear, uniform_grid, SampledRoughPath};
use roughflow::fields::VectorFields;
use roughflow::ode::rk4;
use roughflow::GroupElement;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random geometric element: level 1 plus an antisymmetric area.
pub fn random_element(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> GroupElement {
    let v: Vec<f64> = (0..d).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    let mut anti = vec![0.0; d * d];
    for i in 0..d {
        for j in i + 1..d {
            let a = scale * scale * rng.random_range(-1.0..1.0);
            anti[i * d + j] = a;
            anti[j * d + i] = -a;
        }
    }
    GroupElement::from_level1_and_area(&v, &anti)
}

/// Chen's product written out from scratch, as `(level1, level2)`.
pub fn chen_oracle(a: &GroupElement, b: &GroupElement) -> (Vec<f64>, Vec<f64>) {
    let d = a.dim();
    let l1 = (0..d).map(|i| a.level1()[i] + b.level1()[i]).collect();
    let mut l2 = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            l2[i * d + j] = a.level2()[i * d + j] + b.level2()[i * d + j] + a.level1()[i] * b.level1()[j];
        }
    }
    (l1, l2)
}

/// Largest entry difference relative to `1 + largest entry`.
pub fn rel_err(x: &GroupElement, l1: &[f64], l2: &[f64]) -> f64 {
    let got = x.level1().iter().chain(x.level2());
    let want: Vec<f64> = l1.iter().chain(l2).copied().collect();
    let scale = 1.0 + want.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    got.zip(&want).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / scale
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, step: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]];
    for _ in 0..n {
        let last = pts.last().unwrap().clone();
        pts.push(last.iter().map(|x| x + rng.random_range(-step..step)).collect());
    }
    pts
}

pub fn random_polyline(rng: &mut ChaCha8Rng, n: usize, d: usize, step: f64) -> SampledRoughPath {
    lift_piecewise_linear(&random_points(rng, n, d, step), &uniform_grid(n, 1.0)).unwrap()
}

/// Brute-force `p`-variation over every partition keeping both end points.
pub fn pvar_brute(n: usize, p: f64, dist: impl Fn(usize, usize) -> f64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let inner = n - 2;
    let mut best = 0.0_f64;
    for mask in 0..(1u32 << inner) {
        let mut prev = 0;
        let mut sum = 0.0;
        for k in 0..inner {
            if mask & (1 << k) != 0 {
                sum += dist(prev, k + 1).powf(p);
                prev = k + 1;
            }
        }
        sum += dist(prev, n - 1).powf(p);
        best = best.max(sum);
    }
    best.powf(1.0 / p)
}

/// The classical ODE `ẏ = σ(y) v_k` on each linear piece of the polyline,
/// integrated with `steps` RK4 steps per piece; states at the vertices.
pub fn polyline_ode(fields: &Arc<dyn VectorFields>, pts: &[Vec<f64>], times: &[f64], xi: &[f64], steps: usize) -> Vec<Vec<f64>> {
    let (m, d) = (fields.state_dim(), fields.noise_dim());
    let mut y = xi.to_vec();
    let mut out = vec![y.clone()];
    for k in 0..pts.len() - 1 {
        let dt = times[k + 1] - times[k];
        let v: Vec<f64> = (0..d).map(|j| (pts[k + 1][j] - pts[k][j]) / dt).collect();
        let f = |_: f64, z: &[f64]| {
            let mut s = vec![0.0; m * d];
            fields.eval(z, &mut s);
            Ok((0..m).map(|i| (0..d).map(|j| s[i * d + j] * v[j]).sum()).collect())
        };
        y = rk4(f, times[k], times[k + 1], &y, steps).unwrap().pop().unwrap();
        out.push(y.clone());
    }
    out
}
