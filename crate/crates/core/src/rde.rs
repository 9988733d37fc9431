//! The driftless flow `ψ(s,t,ξ)` of `dy = σ(y) dx` and its Jacobian.
//!
//! The scheme is the explicit step-2 Euler (Davie) step
//!
//! ```text
//! y ← y + σ_k(y) a^k + (Dσ_l σ_k)(y) B^{kl}
//! ```
//!
//! for each increment `(a, B)` of the driver. Before solving, every cell of
//! the driver is split into Chen-consistent pieces with
//! `ν^p ‖piece‖^p ≤ step_budget`. The Jacobian is the exact derivative of the
//! discrete map, so it agrees with finite differences of [`flow_psi`] up to
//! the difference quotient error.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::drivers::SampledRoughPath;
use crate::error::{check_dim, Error, Result};
use crate::fields::VectorFields;
use crate::linalg;
use crate::tensor::GroupElement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Upper bound for `ν^p ω(step)` on every step.
    pub step_budget: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { step_budget: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.values.last().expect("trajectory is never empty")
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| linalg::norm(v)).fold(0.0, f64::max)
    }

    /// `sup_t |y_t - z_t|` for trajectories on the same grid.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        check_dim(self.values.len(), other.values.len())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| linalg::dist(a, b))
            .fold(0.0, f64::max))
    }
}

/// A driftless solver bound to one vector field and one (refined) driver.
#[derive(Clone)]
pub struct RdeSolver {
    fields: Arc<dyn VectorFields>,
    path: SampledRoughPath,
    cells: Vec<GroupElement>,
    /// Refined grid indices that are grid points of the original driver.
    original: Vec<bool>,
    config: SolverConfig,
}

impl std::fmt::Debug for RdeSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RdeSolver")
            .field("m", &self.fields.state_dim())
            .field("d", &self.fields.noise_dim())
            .field("cells", &self.cells.len())
            .field("config", &self.config)
            .finish()
    }
}

/// Scratch buffers for one step.
struct Work {
    sig: Vec<f64>,
    jac: Vec<f64>,
    hess: Vec<f64>,
    has_hess: bool,
    step: Vec<f64>,
    tmp: Vec<f64>,
}

impl RdeSolver {
    pub fn new(fields: Arc<dyn VectorFields>, path: &SampledRoughPath, config: SolverConfig) -> Result<Self> {
        check_dim(fields.noise_dim(), path.dim())?;
        if !(config.step_budget > 0.0) {
            return Err(Error::Config("step_budget must be positive".into()));
        }
        let refined = path.refine(fields.nu(), config.step_budget)?;
        let mut original = vec![false; refined.len()];
        let mut j = 0;
        for (i, t) in refined.times().iter().enumerate() {
            if j < path.len() && *t == path.times()[j] {
                original[i] = true;
                j += 1;
            }
        }
        let cells = (0..refined.len() - 1).map(|k| refined.increment(k, k + 1)).collect();
        Ok(RdeSolver {
            fields,
            path: refined,
            cells,
            original,
            config,
        })
    }

    pub fn fields(&self) -> &Arc<dyn VectorFields> {
        &self.fields
    }

    /// The refined driver actually used for stepping.
    pub fn path(&self) -> &SampledRoughPath {
        &self.path
    }

    pub fn config(&self) -> SolverConfig {
        self.config
    }

    pub fn state_dim(&self) -> usize {
        self.fields.state_dim()
    }

    /// Refined grid times that belong to the original driver's grid.
    /// Whether `u` is one of the refined cell boundaries.
    pub fn is_grid_time(&self, u: f64) -> bool {
        self.path.times().binary_search_by(|v| v.total_cmp(&u)).is_ok()
    }

    pub fn original_times(&self) -> Vec<f64> {
        self.path
            .times()
            .iter()
            .zip(&self.original)
            .filter(|(_, o)| **o)
            .map(|(t, _)| *t)
            .collect()
    }

    fn work(&self) -> Work {
        let m = self.fields.state_dim();
        let d = self.fields.noise_dim();
        Work {
            sig: vec![0.0; m * d],
            jac: vec![0.0; m * d * m],
            hess: vec![0.0; m * d * m * m],
            has_hess: true,
            step: vec![0.0; m * m],
            tmp: vec![0.0; m],
        }
    }

    /// `f(y):B`, the level-2 correction, written into `out`.
    fn level2_term(&self, sig: &[f64], jac: &[f64], b: &[f64], out: &mut [f64]) {
        let m = self.fields.state_dim();
        let d = self.fields.noise_dim();
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..d {
                for l in 0..d {
                    let bkl = b[k * d + l];
                    if bkl == 0.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for j in 0..m {
                        s += jac[(i * d + l) * m + j] * sig[j * d + k];
                    }
                    acc += bkl * s;
                }
            }
            *o = acc;
        }
    }

    /// One step from `y` with increment `g`; updates `y` and, when given,
    /// left-multiplies `mat` by the derivative of the step map.
    fn step(&self, w: &mut Work, y: &mut [f64], g: &GroupElement, mat: Option<&mut Vec<f64>>) {
        let m = self.fields.state_dim();
        let d = self.fields.noise_dim();
        let a = g.level1();
        let b = g.level2();
        self.fields.eval(y, &mut w.sig);
        self.fields.jacobian(y, &mut w.jac);
        if let Some(mat) = mat {
            self.step_derivative(w, y, a, b);
            *mat = linalg::matmul(m, &w.step, mat);
        }
        self.level2_term(&w.sig, &w.jac, b, &mut w.tmp);
        for i in 0..m {
            let mut acc = w.tmp[i];
            for k in 0..d {
                acc += w.sig[i * d + k] * a[k];
            }
            y[i] += acc;
        }
    }

    /// Invert one forward step: find `z` with `step(z, g) = y` by Newton's
    /// method, started from the step with the inverse increment. Backward
    /// solves are then exact inverses of forward ones, so the discrete `ψ`
    /// composes and inverts on grid times.
    fn unstep(&self, w: &mut Work, y: &mut [f64], g: &GroupElement, mat: Option<&mut Vec<f64>>) -> Result<()> {
        const MAX_NEWTON: usize = 30;
        let m = self.fields.state_dim();
        let (a, b) = (g.level1(), g.level2());
        let target = y.to_vec();
        let mut z = target.clone();
        self.step(w, &mut z, &g.inverse(), None);
        let mut fz = vec![0.0; m];
        let mut converged = false;
        for _ in 0..MAX_NEWTON {
            fz.copy_from_slice(&z);
            // Leaves σ and Dσ evaluated at `z` in `w`.
            self.step(w, &mut fz, g, None);
            let r: Vec<f64> = fz.iter().zip(&target).map(|(f, t)| f - t).collect();
            self.step_derivative(w, &z, a, b);
            let dz = linalg::solve(m, &w.step, &r)?;
            for i in 0..m {
                z[i] -= dz[i];
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical("backward step diverged".into()));
            }
            if linalg::norm(&dz) <= 4.0 * f64::EPSILON * (1.0 + linalg::norm(&z)) {
                converged = true;
                break;
            }
        }
        if !converged {
            // Accept a stalled iteration only if the residual is at rounding level.
            fz.copy_from_slice(&z);
            self.step(w, &mut fz, g, None);
            if linalg::dist(&fz, &target) > 1e-12 * (1.0 + linalg::norm(&target)) {
                return Err(Error::Numerical("backward step did not converge".into()));
            }
        }
        if let Some(mat) = mat {
            self.fields.eval(&z, &mut w.sig);
            self.fields.jacobian(&z, &mut w.jac);
            self.step_derivative(w, &z, a, b);
            *mat = linalg::matmul(m, &linalg::inverse(m, &w.step)?, mat);
        }
        y.copy_from_slice(&z);
        Ok(())
    }

    fn step_derivative(&self, w: &mut Work, y: &[f64], a: &[f64], b: &[f64]) {
        let m = self.fields.state_dim();
        let d = self.fields.noise_dim();
        w.step.fill(0.0);
        for i in 0..m {
            w.step[i * m + i] = 1.0;
            for q in 0..m {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += w.jac[(i * d + k) * m + q] * a[k];
                }
                w.step[i * m + q] += acc;
            }
        }
        if b.iter().all(|v| *v == 0.0) {
            return;
        }
        w.has_hess = w.has_hess && self.fields.hessian(y, &mut w.hess);
        if w.has_hess {
            for i in 0..m {
                for q in 0..m {
                    let mut acc = 0.0;
                    for k in 0..d {
                        for l in 0..d {
                            let bkl = b[k * d + l];
                            if bkl == 0.0 {
                                continue;
                            }
                            let mut s = 0.0;
                            for j in 0..m {
                                s += w.hess[((i * d + l) * m + j) * m + q] * w.sig[j * d + k]
                                    + w.jac[(i * d + l) * m + j] * w.jac[(j * d + k) * m + q];
                            }
                            acc += bkl * s;
                        }
                    }
                    w.step[i * m + q] += acc;
                }
            }
        } else {
            // Central differences of the level-2 coefficient.
            const H: f64 = 1e-6;
            let mut yp = y.to_vec();
            let mut sig = vec![0.0; m * d];
            let mut jac = vec![0.0; m * d * m];
            let mut fp = vec![0.0; m];
            let mut fm = vec![0.0; m];
            for q in 0..m {
                yp[q] = y[q] + H;
                self.fields.eval(&yp, &mut sig);
                self.fields.jacobian(&yp, &mut jac);
                self.level2_term(&sig, &jac, b, &mut fp);
                yp[q] = y[q] - H;
                self.fields.eval(&yp, &mut sig);
                self.fields.jacobian(&yp, &mut jac);
                self.level2_term(&sig, &jac, b, &mut fm);
                yp[q] = y[q];
                for i in 0..m {
                    w.step[i * m + q] += (fp[i] - fm[i]) / (2.0 * H);
                }
            }
        }
    }

    /// Walk the driver from `s` to `t` (either direction), calling `visit`
    /// after every step with the current time, state and Jacobian (identity
    /// when `with_jac` is false). Returns the final state and Jacobian.
    pub fn sweep<F>(&self, s: f64, t: f64, xi: &[f64], with_jac: bool, mut visit: F) -> Result<(Vec<f64>, Vec<f64>)>
    where
        F: FnMut(f64, bool, &[f64], &[f64]),
    {
        let m = self.fields.state_dim();
        check_dim(m, xi.len())?;
        self.path.check_span(s, t)?;
        let mut y = xi.to_vec();
        let mut mat = linalg::identity(m);
        if s == t || self.cells.is_empty() {
            return Ok((y, mat));
        }
        let times = self.path.times();
        let mut w = self.work();
        let forward = t > s;
        let (lo, hi) = if forward { (s, t) } else { (t, s) };
        let k0 = self.path.cell_of(lo);
        let k1 = self.path.cell_of(hi);
        let mut run = |k: usize, y: &mut Vec<f64>, mat: &mut Vec<f64>| -> Result<()> {
            let (c0, c1) = (times[k], times[k + 1]);
            let a = lo.max(c0);
            let b = hi.min(c1);
            if b <= a {
                return Ok(());
            }
            let full = a == c0 && b == c1;
            let piece = if full {
                self.cells[k].clone()
            } else {
                self.cells[k].fraction((b - a) / (c1 - c0))
            };
            let jac = if with_jac { Some(&mut *mat) } else { None };
            if forward {
                self.step(&mut w, y, &piece, jac);
            } else {
                self.unstep(&mut w, y, &piece, jac)?;
            }
            let now = if forward { b } else { a };
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Explosion { time: now });
            }
            let on_grid = if forward {
                b == c1 && self.original[k + 1]
            } else {
                a == c0 && self.original[k]
            };
            visit(now, on_grid, y, mat);
            Ok(())
        };
        if forward {
            for k in k0..=k1 {
                run(k, &mut y, &mut mat)?;
            }
        } else {
            for k in (k0..=k1).rev() {
                run(k, &mut y, &mut mat)?;
            }
        }
        Ok((y, mat))
    }

    pub fn psi(&self, s: f64, t: f64, xi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.sweep(s, t, xi, false, |_, _, _, _| {})?.0)
    }

    /// `(ψ(s,t,ξ), D_ξ ψ(s,t,ξ))` with the Jacobian row-major `m × m`.
    pub fn psi_jac(&self, s: f64, t: f64, xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.sweep(s, t, xi, true, |_, _, _, _| {})
    }

    /// `(ψ(s,t,ξ), J(s,t,ξ))` with `J = (D_ξ ψ)^{-1}`.
    pub fn psi_inv_jac(&self, s: f64, t: f64, xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (y, d) = self.psi_jac(s, t, xi)?;
        let j = linalg::inverse(self.state_dim(), &d)?;
        Ok((y, j))
    }

    /// Solution sampled at `s`, every original grid time strictly between,
    /// and `t`.
    pub fn trajectory(&self, s: f64, t: f64, xi: &[f64]) -> Result<Trajectory> {
        let mut times = vec![s];
        let mut values = vec![xi.to_vec()];
        let (y, _) = self.sweep(s, t, xi, false, |u, on_grid, y, _| {
            if on_grid && u != t {
                times.push(u);
                values.push(y.to_vec());
            }
        })?;
        if t != s {
            times.push(t);
            values.push(y);
        }
        Ok(Trajectory { times, values })
    }
}

/// Solve `dy = σ(y) dx`, `y_s = ξ`, up to `t` (`t < s` solves backwards).
pub fn solve_rde(
    fields: Arc<dyn VectorFields>,
    path: &SampledRoughPath,
    xi: &[f64],
    s: f64,
    t: f64,
    config: SolverConfig,
) -> Result<Trajectory> {
    RdeSolver::new(fields, path, config)?.trajectory(s, t, xi)
}

pub fn flow_psi(
    fields: Arc<dyn VectorFields>,
    path: &SampledRoughPath,
    s: f64,
    t: f64,
    xi: &[f64],
    config: SolverConfig,
) -> Result<Vec<f64>> {
    RdeSolver::new(fields, path, config)?.psi(s, t, xi)
}

/// `D_ξ ψ(s,t,ξ)`, row-major `m × m`.
pub fn jacobian_flow(
    fields: Arc<dyn VectorFields>,
    path: &SampledRoughPath,
    s: f64,
    t: f64,
    xi: &[f64],
    config: SolverConfig,
) -> Result<Vec<f64>> {
    Ok(RdeSolver::new(fields, path, config)?.psi_jac(s, t, xi)?.1)
}

/// `J(s,t,ξ) = (D_ξ ψ(s,t,ξ))^{-1}`.
pub fn inverse_jacobian(
    fields: Arc<dyn VectorFields>,
    path: &SampledRoughPath,
    s: f64,
    t: f64,
    xi: &[f64],
    config: SolverConfig,
) -> Result<Vec<f64>> {
    Ok(RdeSolver::new(fields, path, config)?.psi_inv_jac(s, t, xi)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{lift_piecewise_linear, uniform_grid};
    use crate::fields::{ConstantFields, SinScalar, TrigFields, ZeroFields};

    fn driver2() -> SampledRoughPath {
        let pts = vec![vec![0.0, 0.0], vec![0.4, -0.2], vec![0.1, 0.5], vec![-0.3, 0.2], vec![0.2, 0.1]];
        lift_piecewise_linear(&pts, &uniform_grid(4, 1.0)).unwrap()
    }

    #[test]
    fn constant_fields_translate() {
        let x = driver2();
        let f: Arc<dyn VectorFields> = Arc::new(ConstantFields::new(3, 2, vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.5]).unwrap());
        let solver = RdeSolver::new(f, &x, SolverConfig::default()).unwrap();
        let (y, jac) = solver.psi_jac(0.0, 1.0, &[1.0, 1.0, 1.0]).unwrap();
        let a = x.values().last().unwrap().level1().to_vec();
        let expect = [1.0 + a[0] + 2.0 * a[1], 1.0 - a[1], 1.0 + 0.5 * a[0] + 0.5 * a[1]];
        for i in 0..3 {
            assert!((y[i] - expect[i]).abs() < 1e-14);
        }
        assert_eq!(jac, linalg::identity(3));
    }

    #[test]
    fn zero_fields_and_empty_interval() {
        let x = driver2();
        let f: Arc<dyn VectorFields> = Arc::new(ZeroFields { m: 2, d: 2 });
        assert_eq!(flow_psi(f, &x, 0.1, 0.9, &[3.0, -1.0], SolverConfig::default()).unwrap(), vec![3.0, -1.0]);
        let g: Arc<dyn VectorFields> = Arc::new(TrigFields::sin_rotation(1.0));
        let s = RdeSolver::new(g, &x, SolverConfig::default()).unwrap();
        let (y, j) = s.psi_jac(0.3, 0.3, &[0.5, 0.5]).unwrap();
        assert_eq!(y, vec![0.5, 0.5]);
        assert_eq!(j, linalg::identity(2));
    }

    #[test]
    fn flow_property_and_inversion() {
        let x = driver2();
        let g: Arc<dyn VectorFields> = Arc::new(TrigFields::sin_rotation(1.0));
        let s = RdeSolver::new(g, &x, SolverConfig { step_budget: 1e-3 }).unwrap();
        let xi = [0.3, -0.7];
        let mid = s.psi(0.1, 0.55, &xi).unwrap();
        let direct = s.psi(0.1, 0.85, &xi).unwrap();
        let composed = s.psi(0.55, 0.85, &mid).unwrap();
        let gap = linalg::dist(&direct, &composed);
        assert!(gap < 1e-6, "{gap}");
        let back = s.psi(0.85, 0.1, &direct).unwrap();
        let back_gap = linalg::dist(&back, &xi);
        assert!(back_gap < 1e-6, "{back_gap}");
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let x = driver2();
        let g: Arc<dyn VectorFields> = Arc::new(TrigFields::sin_rotation(1.0));
        let s = RdeSolver::new(g, &x, SolverConfig::default()).unwrap();
        let xi = [0.3, -0.7];
        let (_, jac) = s.psi_jac(0.0, 1.0, &xi).unwrap();
        let h = 1e-5;
        for q in 0..2 {
            let mut p = xi;
            let mut mn = xi;
            p[q] += h;
            mn[q] -= h;
            let yp = s.psi(0.0, 1.0, &p).unwrap();
            let ym = s.psi(0.0, 1.0, &mn).unwrap();
            for i in 0..2 {
                assert!(((yp[i] - ym[i]) / (2.0 * h) - jac[i * 2 + q]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn scalar_case_is_exact_for_monotone_lines() {
        // For m = d = 1 and a single segment the solution is the autonomous
        // flow of σ for time a; compare with a very fine classical solve.
        let x = lift_piecewise_linear(&[vec![0.0], vec![0.8]], &[0.0, 1.0]).unwrap();
        let f: Arc<dyn VectorFields> = Arc::new(SinScalar::default());
        let y = flow_psi(f, &x, 0.0, 1.0, &[0.2], SolverConfig { step_budget: 1e-4 }).unwrap();
        let exact = crate::ode::rk4(|_, y| Ok(vec![0.8 * (2.0 + y[0].sin())]), 0.0, 1.0, &[0.2], 10_000).unwrap();
        assert!((y[0] - exact[10_000][0]).abs() < 1e-6);
    }

    #[test]
    fn trajectory_hits_original_grid() {
        let x = driver2();
        let g: Arc<dyn VectorFields> = Arc::new(TrigFields::sin_rotation(1.0));
        let tr = solve_rde(g, &x, &[0.0, 0.0], 0.0, 1.0, SolverConfig { step_budget: 1e-2 }).unwrap();
        assert_eq!(tr.times, x.times());
        let tr = solve_rde(
            Arc::new(TrigFields::sin_rotation(1.0)),
            &x,
            &[0.0, 0.0],
            0.9,
            0.1,
            SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(tr.times, vec![0.9, 0.75, 0.5, 0.25, 0.1]);
    }
}
