//! Control functions, p-variation and the greedy partition behind `N_δ(ω)`.
//!
//! All p-variations are exact suprema over the sampled grid, computed by
//! dynamic programming over grid indices.

use serde::{Deserialize, Serialize};

use crate::drivers::{SampledRoughPath, SharedPath};
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::increment_norm;

/// `sup_P (Σ dist(t_i, t_{i+1})^p)^{1/p}` over all sub-partitions of the
/// index range `0..n` that keep both end points. `O(n²)`.
pub fn pvar_dp<F>(n: usize, p: f64, dist: F) -> f64
where
    F: Fn(usize, usize) -> f64,
{
    if n < 2 {
        return 0.0;
    }
    if p == 1.0 {
        // Finest partition is optimal for a metric.
        return (0..n - 1).map(|i| dist(i, i + 1)).sum();
    }
    let mut best = vec![0.0_f64; n];
    for j in 1..n {
        let mut b = 0.0_f64;
        for k in 0..j {
            b = b.max(best[k] + dist(k, j).powf(p));
        }
        best[j] = b;
    }
    best[n - 1].powf(1.0 / p)
}

fn grid_range(path: &SampledRoughPath, s: f64, t: f64) -> Result<(usize, usize)> {
    if s > t {
        return Err(Error::domain("p-variation interval must satisfy s <= t"));
    }
    path.check_span(s, t)?;
    let tol = 1e-12 * (1.0 + path.horizon().abs());
    let times = path.times();
    let lo = times.partition_point(|&u| u < s - tol);
    let hi = times.partition_point(|&u| u <= t + tol);
    Ok((lo, hi))
}

/// `‖x‖_{p-var;[s,t]}` over the grid points of `path` inside `[s, t]`.
pub fn pvar_norm(path: &SampledRoughPath, p: f64, s: f64, t: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::domain("p must be >= 1"));
    }
    let (lo, hi) = grid_range(path, s, t)?;
    let vals = &path.values()[lo..hi];
    Ok(pvar_dp(vals.len(), p, |i, j| increment_norm(&vals[i], &vals[j])))
}

/// `d_{p-var}(x, y)` on a shared grid: increments compared with the group
/// distance `‖(x_{s,t})^{-1} ⊗ y_{s,t}‖`.
pub fn pvar_distance(x: &SampledRoughPath, y: &SampledRoughPath, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::domain("p must be >= 1"));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    let same_grid = x.len() == y.len()
        && x
            .times()
            .iter()
            .zip(y.times())
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    if !same_grid {
        return Err(Error::domain("p-variation distance needs identical grids"));
    }
    Ok(pvar_dp(x.len(), p, |i, j| {
        let xi = x.increment(i, j);
        let yi = y.increment(i, j);
        xi.distance(&yi).unwrap()
    }))
}

/// `‖x‖_{1/p-Höl}`: max over grid pairs of `d(x_u, x_v) / (v-u)^{1/p}`.
pub fn holder_norm(path: &SampledRoughPath, p: f64) -> f64 {
    let times = path.times();
    let vals = path.values();
    let mut best = 0.0_f64;
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let r = increment_norm(&vals[i], &vals[j]) / (times[j] - times[i]).powf(1.0 / p);
            best = best.max(r);
        }
    }
    best
}

/// p-variation of a point sequence in `R^m` with Euclidean increments.
pub fn pvar_norm_points(points: &[Vec<f64>], p: f64) -> f64 {
    pvar_dp(points.len(), p, |i, j| linalg::dist(&points[i], &points[j]))
}

#[derive(Debug, Clone)]
pub enum ControlFunction {
    /// `ω(s,t) = k^p |t - s|`: controls a path with `1/p`-Hölder norm `≤ k`.
    Holder { k: f64, p: f64 },
    /// `ω(s,t) = ‖x‖^p_{p-var;[s,t]}` on the grid of `path`.
    PVar { path: SharedPath, p: f64 },
    Sum(Vec<ControlFunction>),
}

impl ControlFunction {
    pub fn pvar_of_path(path: SharedPath, p: f64) -> Self {
        ControlFunction::PVar { path, p }
    }

    /// `ω̃(s,t) = ω(s,t) + |t - s|`.
    pub fn with_time(self) -> Self {
        ControlFunction::Sum(vec![ControlFunction::Holder { k: 1.0, p: 1.0 }, self])
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        if t <= s {
            return 0.0;
        }
        let mut sw = self.sweep(s);
        sw.advance(t)
    }

    /// Incremental evaluation of `u ↦ ω(anchor, u)` for nondecreasing `u`.
    pub fn sweep(&self, anchor: f64) -> ControlSweep<'_> {
        match self {
            ControlFunction::Holder { k, p } => ControlSweep::Holder {
                rate: k.powf(*p),
                anchor,
            },
            ControlFunction::PVar { path, p } => {
                let tol = 1e-12 * (1.0 + path.horizon().abs());
                let next = path.times().partition_point(|&u| u < anchor - tol);
                ControlSweep::PVar {
                    path,
                    p: *p,
                    tol,
                    next,
                    included: Vec::new(),
                    best: Vec::new(),
                }
            }
            ControlFunction::Sum(parts) => {
                ControlSweep::Sum(parts.iter().map(|c| c.sweep(anchor)).collect())
            }
        }
    }
}

pub enum ControlSweep<'a> {
    Holder {
        rate: f64,
        anchor: f64,
    },
    PVar {
        path: &'a SampledRoughPath,
        p: f64,
        tol: f64,
        next: usize,
        included: Vec<usize>,
        best: Vec<f64>,
    },
    Sum(Vec<ControlSweep<'a>>),
}

impl ControlSweep<'_> {
    pub fn advance(&mut self, u: f64) -> f64 {
        match self {
            ControlSweep::Holder { rate, anchor } => *rate * (u - *anchor).max(0.0),
            ControlSweep::PVar {
                path,
                p,
                tol,
                next,
                included,
                best,
            } => {
                let times = path.times();
                let vals = path.values();
                while *next < times.len() && times[*next] <= u + *tol {
                    let j = *next;
                    let b = if included.is_empty() {
                        0.0
                    } else if *p == 1.0 {
                        let last = *included.last().unwrap();
                        best.last().unwrap() + increment_norm(&vals[last], &vals[j])
                    } else {
                        included
                            .iter()
                            .zip(best.iter())
                            .map(|(&k, &bk)| bk + increment_norm(&vals[k], &vals[j]).powf(*p))
                            .fold(0.0_f64, f64::max)
                    };
                    included.push(j);
                    best.push(b);
                    *next += 1;
                }
                best.last().copied().unwrap_or(0.0)
            }
            ControlSweep::Sum(parts) => parts.iter_mut().map(|s| s.advance(u)).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyPartition {
    pub delta: f64,
    /// `τ_0 < τ_1 < … ≤ T`, always starting at the first grid time and
    /// ending at the last one.
    pub times: Vec<f64>,
    /// Grid indices of `times`.
    pub indices: Vec<usize>,
    /// `N_δ(ω) = sup { n : τ_n < T }`.
    pub n_delta: usize,
}

impl GreedyPartition {
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Grid-restricted greedy stopping times: `τ_{n+1}` is the first grid time
/// with `ω(τ_n, ·) ≥ δ`, else the end of the grid.
pub fn greedy_partition(
    control: &ControlFunction,
    delta: f64,
    grid: &[f64],
) -> Result<GreedyPartition> {
    if !(delta > 0.0) {
        return Err(Error::domain("delta must be positive"));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("partition grid must be strictly increasing"));
    }
    // Relative slack so that exact hits like ω = 0.3 on a decimal grid count.
    let threshold = delta * (1.0 - 1e-12);
    let last = grid.len() - 1;
    let mut times = vec![grid[0]];
    let mut indices = vec![0];
    let mut cur = 0;
    while cur < last {
        let mut sweep = control.sweep(grid[cur]);
        let mut stop = last;
        for (j, &u) in grid.iter().enumerate().skip(cur + 1) {
            if sweep.advance(u) >= threshold {
                stop = j;
                break;
            }
        }
        times.push(grid[stop]);
        indices.push(stop);
        cur = stop;
    }
    let n_delta = times.len().saturating_sub(2);
    Ok(GreedyPartition {
        delta,
        times,
        indices,
        n_delta,
    })
}

/// `N_1(ω)` for the p-variation control of `path` on its own grid.
pub fn n_one(path: &SharedPath, p: f64) -> Result<usize> {
    let omega = ControlFunction::pvar_of_path(path.clone(), p);
    Ok(greedy_partition(&omega, 1.0, path.times())?.n_delta)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::drivers::{lift_piecewise_linear, uniform_grid};

    fn scalar_path(vals: &[f64]) -> SampledRoughPath {
        let pts: Vec<Vec<f64>> = vals.iter().map(|v| vec![*v]).collect();
        let times = uniform_grid(vals.len() - 1, 1.0);
        lift_piecewise_linear(&pts, &times).unwrap()
    }

    #[test]
    fn tent_path_two_variation() {
        let x = scalar_path(&[0.0, 1.0, 0.0]);
        let v = pvar_norm(&x, 2.0, 0.0, 1.0).unwrap();
        assert!((v - 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn one_variation_of_polyline() {
        let x = scalar_path(&[0.0, 1.0, -0.5, 0.25]);
        let v = pvar_norm(&x, 1.0, 0.0, 1.0).unwrap();
        assert!((v - 3.25).abs() < 1e-15);
    }

    #[test]
    fn constant_path_has_zero_variation() {
        let x = scalar_path(&[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(pvar_norm(&x, 2.5, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(holder_norm(&x, 2.0), 0.0);
    }

    #[test]
    fn interval_outside_grid_is_error() {
        let x = scalar_path(&[0.0, 1.0]);
        assert!(pvar_norm(&x, 2.0, 0.0, 2.0).is_err());
        assert!(pvar_norm(&x, 2.0, 0.5, 0.2).is_err());
        assert!(pvar_norm(&x, 0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn holder_norm_of_line() {
        let x = lift_piecewise_linear(&[vec![0.0, 0.0], vec![3.0, 4.0]], &[0.0, 1.0]).unwrap();
        let refined = x.refine(1.0, 0.1).unwrap();
        assert!((holder_norm(&refined, 1.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pvar_distance_collapses_to_norm() {
        let x = scalar_path(&[0.0, 0.4, -0.3, 0.9, 0.1]);
        let zero = SampledRoughPath::constant(1, x.times().to_vec(), 1.0).unwrap();
        for p in [1.0, 2.0, 2.5] {
            let a = pvar_distance(&x, &zero, p).unwrap();
            let b = pvar_norm(&x, p, 0.0, 1.0).unwrap();
            assert!((a - b).abs() < 1e-14);
            assert_eq!(pvar_distance(&x, &x, p).unwrap(), 0.0);
        }
        let other = scalar_path(&[0.0, 1.0]);
        assert!(pvar_distance(&x, &other, 2.0).is_err());
    }

    #[test]
    fn greedy_linear_time_control() {
        let omega = ControlFunction::Holder { k: 1.0, p: 1.0 };
        let grid = uniform_grid(100, 1.0);
        let part = greedy_partition(&omega, 0.3, &grid).unwrap();
        let expected = [0.0, 0.3, 0.6, 0.9, 1.0];
        assert_eq!(part.times.len(), expected.len());
        for (a, b) in part.times.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(part.n_delta, 3);
    }

    #[test]
    fn greedy_large_delta_is_single_interval() {
        let omega = ControlFunction::Holder { k: 1.0, p: 1.0 };
        let grid = uniform_grid(10, 1.0);
        let part = greedy_partition(&omega, 1.5, &grid).unwrap();
        assert_eq!(part.times, vec![0.0, 1.0]);
        assert_eq!(part.n_delta, 0);
        assert!(greedy_partition(&omega, 0.0, &grid).is_err());
        assert!(greedy_partition(&omega, -1.0, &grid).is_err());
    }

    #[test]
    fn sweep_agrees_with_eval() {
        let x = Arc::new(scalar_path(&[0.0, 0.5, -0.2, 0.7, 0.3, 0.35, -0.6]));
        let omega = ControlFunction::pvar_of_path(x.clone(), 2.0).with_time();
        let mut sw = omega.sweep(x.times()[1]);
        for &u in &x.times()[1..] {
            let inc = sw.advance(u);
            assert!((inc - omega.eval(x.times()[1], u)).abs() < 1e-14);
        }
    }
}
