//! The transformed ODE `ż = J(t,z) b(ψ(t,z))` with abstract `ψ`, `J`:
//! a-priori growth records and the perturbation gap between two systems.

use serde::{Deserialize, Serialize};

use super::{ball_points, DriftField};
use crate::error::{check_dim, Result};
use crate::linalg;
use crate::ode::{dopri45, rk4, OdeOptions};
use crate::rde::RdeSolver;

/// A pair `(ψ, J)` on `[0, T]`, with `t` measured from the anchor.
pub trait FlowHandle: Send + Sync {
    fn dim(&self) -> usize;
    fn psi_inv_jac(&self, t: f64, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// The driftless flow started at `anchor`: `ψ(anchor, anchor + t, ·)`.
#[derive(Debug, Clone, Copy)]
pub struct AnchoredFlow<'a> {
    pub rde: &'a RdeSolver,
    pub anchor: f64,
}

impl FlowHandle for AnchoredFlow<'_> {
    fn dim(&self) -> usize {
        self.rde.state_dim()
    }
    fn psi_inv_jac(&self, t: f64, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let end = (self.anchor + t).min(self.rde.path().horizon());
        self.rde.psi_inv_jac(self.anchor, end, z)
    }
}

/// `ψ + ε v(t,z)` and `J + ε W(t,z)` with smooth `|v| ≤ 1`, `|W| ≤ 1`.
#[derive(Debug, Clone, Copy)]
pub struct Perturbed<H> {
    pub base: H,
    pub eps: f64,
}

impl<H: FlowHandle> FlowHandle for Perturbed<H> {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn psi_inv_jac(&self, t: f64, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (mut y, mut j) = self.base.psi_inv_jac(t, z)?;
        let m = y.len();
        let scale = 1.0 / (m as f64).sqrt();
        for i in 0..m {
            y[i] += self.eps * scale * (z[(i + 1) % m] + t + i as f64).sin();
            j[i * m + i] += self.eps * (z[i] + 2.0 * t).cos();
        }
        Ok((y, j))
    }
}

/// A synthetic pair with `|ψ(t,z) − z| ≤ amplitude` and `|J − I| ≤ ½`:
/// `ψ_i = z_i + amplitude·sin(ωt + z_{i+1} + i)/√m`,
/// `J = I + ½ diag(cos(ωt + z_i + 0.3i))`.
#[derive(Debug, Clone, Copy)]
pub struct ProbeFlow {
    pub m: usize,
    pub amplitude: f64,
    pub frequency: f64,
}

impl FlowHandle for ProbeFlow {
    fn dim(&self) -> usize {
        self.m
    }
    fn psi_inv_jac(&self, t: f64, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.m, z.len())?;
        let m = self.m;
        let scale = self.amplitude / (m as f64).sqrt();
        let y = (0..m)
            .map(|i| z[i] + scale * (self.frequency * t + z[(i + 1) % m] + i as f64).sin())
            .collect();
        let mut j = linalg::identity(m);
        for i in 0..m {
            j[i * m + i] += 0.5 * (self.frequency * t + z[i] + 0.3 * i as f64).cos();
        }
        Ok((y, j))
    }
}

fn rhs<H: FlowHandle + ?Sized>(b: &DriftField, h: &H, t: f64, z: &[f64]) -> Result<Vec<f64>> {
    let (y, j) = h.psi_inv_jac(t, z)?;
    Ok(linalg::matvec(z.len(), &j, &b.eval(&y)))
}

/// `sup_t |z¹_t − z²_t|` for the two systems driven by `h1`, `h2` from `xi1`,
/// `xi2`, integrated with the same fixed RK4 grid of `steps` steps.
#[allow(clippy::too_many_arguments)]
pub fn perturbation_gap<H1: FlowHandle, H2: FlowHandle>(
    b: &DriftField,
    h1: &H1,
    h2: &H2,
    xi1: &[f64],
    xi2: &[f64],
    horizon: f64,
    steps: usize,
) -> Result<f64> {
    check_dim(b.dim(), h1.dim())?;
    check_dim(b.dim(), h2.dim())?;
    let z1 = rk4(|t, z| rhs(b, h1, t, z), 0.0, horizon, xi1, steps)?;
    let z2 = rk4(|t, z| rhs(b, h2, t, z), 0.0, horizon, xi2, steps)?;
    Ok(z1
        .iter()
        .zip(&z2)
        .map(|(a, c)| linalg::dist(a, c))
        .fold(0.0, f64::max))
}

/// `Ĉ = (C₃ + 1) ∨ 4C₃`, with `C₃ ≥ sup |ψ(t,ξ) − ξ|`.
pub fn c_hat(c3: f64) -> f64 {
    (c3 + 1.0).max(4.0 * c3)
}

/// Sampled `C₄ = sup { |b(ξ)| : |ξ| ≤ (2C₃+1) ∨ 5C₃ + 1 }`.
pub fn c4(b: &DriftField, c3: f64, samples: usize) -> f64 {
    let radius = (2.0 * c3 + 1.0).max(5.0 * c3) + 1.0;
    ball_points(b.dim(), radius, samples, 99)
        .iter()
        .map(|x| linalg::norm(&b.eval(x)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct APrioriRecord {
    pub xi_norm: f64,
    pub horizon: f64,
    pub sup_norm: f64,
    pub one_variation: f64,
    pub end_norm: f64,
}

impl APrioriRecord {
    /// Smallest `C ≥ 0` with `‖z‖_∞ ≤ (CT + |ξ|) e^{CT}`.
    pub fn required_sup_c(&self) -> f64 {
        let f = |c: f64| (c * self.horizon + self.xi_norm) * (c * self.horizon).exp();
        if f(0.0) >= self.sup_norm {
            return 0.0;
        }
        let mut hi = 1.0;
        while f(hi) < self.sup_norm {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if f(mid) >= self.sup_norm {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Smallest `C ≥ 0` with
    /// `‖z‖_{1-var} ≤ C(1 + ‖z‖_∞)T + (|ξ| − Ĉ)⁺ − (|z_T| − Ĉ)⁺`.
    pub fn required_var_c(&self, c_hat: f64) -> f64 {
        let slack = (self.xi_norm - c_hat).max(0.0) - (self.end_norm - c_hat).max(0.0);
        ((self.one_variation - slack) / ((1.0 + self.sup_norm) * self.horizon)).max(0.0)
    }

    pub fn holds(&self, c: f64, c_hat: f64) -> bool {
        let tol = 1e-9;
        let sup_ok = self.sup_norm
            <= (c * self.horizon + self.xi_norm) * (c * self.horizon).exp() * (1.0 + tol);
        let slack = (self.xi_norm - c_hat).max(0.0) - (self.end_norm - c_hat).max(0.0);
        let var_ok = self.one_variation
            <= c * (1.0 + self.sup_norm) * self.horizon + slack + tol * (1.0 + self.one_variation);
        sup_ok && var_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APrioriFit {
    pub c: f64,
    pub c_hat: f64,
    pub records: Vec<APrioriRecord>,
}

/// Solve `ż = J b(ψ)` on `[0, horizon]` from `xi` and record its sup-norm,
/// 1-variation (measured on a grid of at least `resolution` steps) and end
/// point.
pub fn a_priori_record<H: FlowHandle>(
    b: &DriftField,
    h: &H,
    xi: &[f64],
    horizon: f64,
    resolution: usize,
    opts: &OdeOptions,
) -> Result<APrioriRecord> {
    check_dim(b.dim(), xi.len())?;
    let outs: Vec<f64> = (1..=resolution).map(|k| horizon * k as f64 / resolution as f64).collect();
    let sol = dopri45(|t, z| rhs(b, h, t, z), 0.0, xi, &outs, opts)?;
    Ok(APrioriRecord {
        xi_norm: linalg::norm(xi),
        horizon,
        sup_norm: sol.sup_norm,
        one_variation: sol.one_variation,
        end_norm: linalg::norm(sol.values.last().map_or(xi, |v| v.as_slice())),
    })
}

/// The smallest single `C` making both a-priori bounds hold for all records.
pub fn fit_a_priori(records: Vec<APrioriRecord>, c_hat: f64) -> APrioriFit {
    let c = records
        .iter()
        .map(|r| r.required_sup_c().max(r.required_var_c(c_hat)))
        .fold(0.0, f64::max);
    APrioriFit { c, c_hat, records }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_systems_have_zero_gap() {
        let b = DriftField::cubic_inward(2);
        let h = ProbeFlow {
            m: 2,
            amplitude: 1.0,
            frequency: 3.0,
        };
        let g = perturbation_gap(&b, &h, &h, &[1.0, 2.0], &[1.0, 2.0], 1.0, 500).unwrap();
        assert_eq!(g, 0.0);
        let p = Perturbed { base: h, eps: 0.0 };
        assert_eq!(perturbation_gap(&b, &h, &p, &[1.0, 2.0], &[1.0, 2.0], 1.0, 500).unwrap(), 0.0);
    }

    #[test]
    fn probe_flow_respects_its_bounds() {
        let h = ProbeFlow {
            m: 3,
            amplitude: 1.0,
            frequency: 2.0,
        };
        for z in ball_points(3, 10.0, 200, 4) {
            for t in [0.0, 0.3, 0.9] {
                let (y, j) = h.psi_inv_jac(t, &z).unwrap();
                assert!(linalg::dist(&y, &z) <= 1.0 + 1e-12);
                assert!(linalg::op_norm_minus_identity(3, &j) <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn constants() {
        assert_eq!(c_hat(1.0), 4.0);
        assert_eq!(c_hat(0.2), 1.2);
        // With C₃ = 1 the radius is 6 and sup |ξ − |ξ|²ξ| = 6·35 = 210.
        let c = c4(&DriftField::cubic_inward(1), 1.0, 4000);
        assert!((c - 210.0).abs() < 1e-9);
    }

    #[test]
    fn required_constants_make_bounds_tight() {
        let r = APrioriRecord {
            xi_norm: 2.0,
            horizon: 1.0,
            sup_norm: 3.0,
            one_variation: 5.0,
            end_norm: 1.0,
        };
        let c = r.required_sup_c().max(r.required_var_c(4.0));
        assert!(r.holds(c, 4.0));
        assert!(!r.holds(0.9 * c, 4.0));
    }
}
