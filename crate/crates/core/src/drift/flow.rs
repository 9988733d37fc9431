use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DriftField, GrowthMode};
use crate::controls::{greedy_partition, pvar_norm_points, ControlFunction, GreedyPartition};
use crate::drivers::SampledRoughPath;
use crate::error::{check_dim, Error, Result};
use crate::fields::VectorFields;
use crate::linalg;
use crate::ode::{dopri45, OdeOptions, OdeSolution};
use crate::rde::{RdeSolver, SolverConfig, Trajectory};

/// Initial conditions used to check the smallness conditions that the
/// partition level `δ` must guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSet {
    pub points: Vec<Vec<f64>>,
    /// Each probe `ξ` is also paired with `ξ + pair_offset·e_1` for the
    /// one-sided contraction check.
    pub pair_offset: f64,
}

impl ProbeSet {
    /// The origin plus four fixed pseudo-random points of `[-2, 2]^m`.
    pub fn default_for(m: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut points = vec![vec![0.0; m]];
        for _ in 0..4 {
            points.push((0..m).map(|_| rng.random_range(-2.0..2.0)).collect());
        }
        ProbeSet {
            points,
            pair_offset: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub solver: SolverConfig,
    pub ode: OdeOptions,
    /// Skip the δ sweep and use this partition level.
    pub delta: Option<f64>,
    pub probes: Option<ProbeSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalDiagnostic {
    pub start: f64,
    pub end: f64,
    /// `ω̃(start, end)`.
    pub omega: f64,
    /// Largest `|J − I|` seen by the χ integrator.
    pub jac_deviation: f64,
    pub chi_one_variation: f64,
    pub chi_sup: f64,
    pub ode_steps: usize,
    pub ode_rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub s: f64,
    pub t: f64,
    pub xi: Vec<f64>,
    pub delta: f64,
    pub p: f64,
    pub partition: GreedyPartition,
    /// Ordered from `s` to `t`.
    pub trajectory: Trajectory,
    pub sup_norm: f64,
    pub pvar_norm: f64,
    pub diagnostics: Vec<IntervalDiagnostic>,
}

impl FlowResult {
    pub fn end(&self) -> &[f64] {
        self.trajectory.last()
    }

    /// State at one of the trajectory times.
    pub fn at(&self, u: f64) -> Option<&[f64]> {
        let tol = 1e-12 * (1.0 + u.abs());
        self.trajectory
            .times
            .iter()
            .position(|&v| (v - u).abs() <= tol)
            .map(|i| self.trajectory.values[i].as_slice())
    }
}

/// Everything needed to evaluate `φ` for one `(σ, b, x)` triple: the refined
/// driftless solver, the control `ω̃ = ω + |t−s|` and the partition level `δ`.
#[derive(Debug, Clone)]
pub struct FlowSolver {
    rde: RdeSolver,
    drift: DriftField,
    control: ControlFunction,
    p: f64,
    delta: f64,
    config: FlowConfig,
}

impl FlowSolver {
    pub fn new(
        fields: Arc<dyn VectorFields>,
        drift: DriftField,
        path: &SampledRoughPath,
        config: FlowConfig,
    ) -> Result<Self> {
        check_dim(fields.state_dim(), drift.dim())?;
        let rde = RdeSolver::new(fields, path, config.solver)?;
        let p = path.p_hint();
        let control = ControlFunction::pvar_of_path(Arc::new(rde.path().clone()), p).with_time();
        let mut solver = FlowSolver {
            rde,
            drift,
            control,
            p,
            delta: 1.0,
            config,
        };
        match solver.config.delta {
            Some(d) if d > 0.0 => {
                solver.fit_cells(path, d)?;
                solver.delta = d;
            }
            Some(_) => return Err(Error::Config("delta must be positive".into())),
            None => {
                let probes = solver
                    .config
                    .probes
                    .clone()
                    .unwrap_or_else(|| ProbeSet::default_for(solver.drift.dim()));
                solver.delta = solver.sweep_delta(path, &probes)?;
            }
        }
        Ok(solver)
    }

    /// Refine further, if needed, so that every cell has `ω ≤ δ/4` and the
    /// greedy partition at level `δ` can resolve the driver.
    fn fit_cells(&mut self, path: &SampledRoughPath, delta: f64) -> Result<()> {
        let nu = self.rde.fields().nu();
        if nu == 0.0 {
            return Ok(());
        }
        let needed = nu.powf(self.p) * delta / 4.0;
        if needed < self.rde.config().step_budget {
            let cfg = SolverConfig { step_budget: needed };
            self.rde = RdeSolver::new(self.rde.fields().clone(), path, cfg)?;
            self.control = ControlFunction::pvar_of_path(Arc::new(self.rde.path().clone()), self.p).with_time();
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn rde(&self) -> &RdeSolver {
        &self.rde
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn control(&self) -> &ControlFunction {
        &self.control
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn partition(&self, lo: f64, hi: f64, delta: f64) -> Result<GreedyPartition> {
        let grid = self.grid_between(lo, hi);
        greedy_partition(&self.control, delta, &grid)
    }

    fn grid_between(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut grid = vec![lo];
        grid.extend(self.rde.path().times().iter().copied().filter(|&u| u > lo && u < hi));
        grid.push(hi);
        grid
    }

    fn analytic_ok(&self, delta: f64) -> bool {
        match self.drift.mode() {
            GrowthMode::Linear { kappa1, kappa2 } => 2.0 * (kappa1 + kappa2) * delta <= 1.0,
            GrowthMode::OneSided { .. } => true,
        }
    }

    /// Check `sup |ψ − ξ| ≤ 1`, `sup |J − I| ≤ ½` and, for one-sided drifts,
    /// the pair contraction `≤ ¼|ξ − ζ|` on every interval of the partition
    /// of the whole driver at level `delta`.
    fn probes_ok(&self, delta: f64, probes: &ProbeSet) -> Result<bool> {
        if self.rde.fields().nu() == 0.0 {
            return Ok(true);
        }
        let span = (self.rde.path().start(), self.rde.path().horizon());
        let part = self.partition(span.0, span.1, delta)?;
        let m = self.drift.dim();
        let one_sided = !self.drift.mode().is_linear();
        for (a, b) in part.intervals() {
            let mut states: Vec<Vec<Vec<f64>>> = Vec::new();
            for xi in &probes.points {
                check_dim(m, xi.len())?;
                let mut ok = true;
                let mut traj = Vec::new();
                self.rde.sweep(a, b, xi, true, |_, _, y, mat| {
                    if !ok {
                        return;
                    }
                    if linalg::dist(y, xi) > 1.0 {
                        ok = false;
                        return;
                    }
                    match linalg::inverse(m, mat) {
                        Ok(j) if linalg::op_norm_minus_identity(m, &j) <= 0.5 => {}
                        _ => ok = false,
                    }
                    if one_sided {
                        traj.push(y.to_vec());
                    }
                })?;
                if !ok {
                    return Ok(false);
                }
                if one_sided {
                    states.push(traj);
                    let mut partner = xi.clone();
                    partner[0] += probes.pair_offset;
                    let mut traj = Vec::new();
                    self.rde.sweep(a, b, &partner, false, |_, _, y, _| traj.push(y.to_vec()))?;
                    states.push(traj);
                }
            }
            if one_sided {
                let starts: Vec<Vec<f64>> = probes
                    .points
                    .iter()
                    .flat_map(|xi| {
                        let mut partner = xi.clone();
                        partner[0] += probes.pair_offset;
                        [xi.clone(), partner]
                    })
                    .collect();
                for i in 0..starts.len() {
                    for j in i + 1..starts.len() {
                        let gap = linalg::dist(&starts[i], &starts[j]);
                        for (yi, yj) in states[i].iter().zip(&states[j]) {
                            let dev: Vec<f64> = (0..m)
                                .map(|c| yi[c] - starts[i][c] - yj[c] + starts[j][c])
                                .collect();
                            if linalg::norm(&dev) > 0.25 * gap {
                                return Ok(false);
                            }
                        }
                    }
                }
            }
        }
        Ok(true)
    }

    fn sweep_delta(&mut self, path: &SampledRoughPath, probes: &ProbeSet) -> Result<f64> {
        let mut delta = 1.0;
        while delta >= 1e-6 {
            if !self.analytic_ok(delta) {
                delta *= 0.5;
                continue;
            }
            self.fit_cells(path, delta)?;
            if self.probes_ok(delta, probes)? {
                return Ok(delta);
            }
            delta *= 0.5;
        }
        Err(Error::Config(
            "no partition level delta >= 1e-6 satisfies the smallness conditions; \
             the driver is too rough for the declared nu"
                .into(),
        ))
    }

    /// `χ` on one interval: `ż_u = J(a,u,z) b(ψ(a,u,z))` from the anchor `a`
    /// towards `b` (either direction), reported at `outputs` (ordered from
    /// `a` to `b`).
    fn chi_interval(
        &self,
        a: f64,
        b: f64,
        z0: &[f64],
        outputs: &[f64],
    ) -> Result<(Vec<Vec<f64>>, OdeSolution, f64)> {
        let m = self.drift.dim();
        let sign = if b >= a { 1.0 } else { -1.0 };
        let rel: Vec<f64> = outputs.iter().map(|u| (u - a) * sign).collect();
        let mut dev = 0.0_f64;
        let zero_drift = self.drift.is_zero();
        let rhs = |v: f64, z: &[f64]| -> Result<Vec<f64>> {
            if zero_drift {
                return Ok(vec![0.0; m]);
            }
            let u = (a + sign * v).clamp(a.min(b), a.max(b));
            let (y, j) = self.rde.psi_inv_jac(a, u, z)?;
            dev = dev.max(linalg::op_norm_minus_identity(m, &j));
            let bv = self.drift.eval(&y);
            Ok(linalg::matvec(m, &j, &bv).into_iter().map(|v| sign * v).collect())
        };
        let sol = dopri45(rhs, 0.0, z0, &rel, &self.config.ode)
            .map_err(|e| shift_time(e, |v| a + sign * v))?;
        Ok((sol.values.clone(), sol, dev))
    }

    /// `χ_s(·, ξ)` on `[s, t]` at the original grid times in between and `t`.
    pub fn chi(&self, s: f64, t: f64, xi: &[f64]) -> Result<Trajectory> {
        check_dim(self.drift.dim(), xi.len())?;
        self.rde.path().check_span(s, t)?;
        let mut outs = vec![s];
        outs.extend(self.inner_original_times(s, t));
        if t != s {
            outs.push(t);
        }
        let (values, _, _) = self.chi_interval(s, t, xi, &outs)?;
        Ok(Trajectory { times: outs, values })
    }

    fn inner_original_times(&self, s: f64, t: f64) -> Vec<f64> {
        let (lo, hi) = (s.min(t), s.max(t));
        let mut v: Vec<f64> = self
            .rde
            .original_times()
            .into_iter()
            .filter(|&u| u > lo && u < hi)
            .collect();
        if t < s {
            v.reverse();
        }
        v
    }

    pub fn flow(&self, s: f64, t: f64, xi: &[f64]) -> Result<FlowResult> {
        self.flow_with_times(s, t, xi, &[])
    }

    /// `φ(s,·,ξ)` on `[s,t]`, also reported at `extra` times inside the span.
    pub fn flow_with_times(&self, s: f64, t: f64, xi: &[f64], extra: &[f64]) -> Result<FlowResult> {
        let m = self.drift.dim();
        check_dim(m, xi.len())?;
        self.rde.path().check_span(s, t)?;
        let backward = t < s;
        if backward && !self.drift.mode().is_linear() {
            return Err(Error::domain(
                "one-sided drifts only generate a forward semiflow; backward solves are refused",
            ));
        }
        let (lo, hi) = (s.min(t), s.max(t));
        let partition = if lo < hi {
            self.partition(lo, hi, self.delta)?
        } else {
            GreedyPartition {
                delta: self.delta,
                times: vec![lo],
                indices: vec![0],
                n_delta: 0,
            }
        };
        let mut outs: Vec<f64> = self.inner_original_times(lo, hi);
        outs.extend(partition.times.iter().copied());
        outs.extend(extra.iter().copied().filter(|&u| u >= lo && u <= hi));
        outs.sort_by(f64::total_cmp);
        outs.dedup();
        if backward {
            outs.reverse();
        }

        let mut times = vec![s];
        let mut values = vec![xi.to_vec()];
        let mut diagnostics = Vec::new();
        let mut intervals: Vec<(f64, f64)> = partition.intervals().collect();
        if backward {
            intervals = intervals.into_iter().rev().map(|(a, b)| (b, a)).collect();
        }
        let mut state = xi.to_vec();
        let zero_drift = self.drift.is_zero();
        for (a, b) in intervals {
            let (ilo, ihi) = (a.min(b), a.max(b));
            let local: Vec<f64> = outs
                .iter()
                .copied()
                .filter(|&u| u >= ilo && u <= ihi && u != a)
                .collect();
            let (chi_vals, sol, dev) = self.chi_interval(a, b, &state, &local)?;
            // Without drift χ is constant, so ψ can be chained from the last
            // refined grid time instead of re-solved from `a` every time.
            let mut anchor = (a, state.clone());
            for (u, z) in local.iter().zip(&chi_vals) {
                let y = if zero_drift {
                    let y = self.rde.psi(anchor.0, *u, &anchor.1)?;
                    if self.rde.is_grid_time(*u) {
                        anchor = (*u, y.clone());
                    }
                    y
                } else {
                    self.rde.psi(a, *u, z)?
                };
                times.push(*u);
                values.push(y);
            }
            state = values.last().unwrap().clone();
            diagnostics.push(IntervalDiagnostic {
                start: a,
                end: b,
                omega: self.control.eval(ilo, ihi),
                jac_deviation: dev,
                chi_one_variation: sol.one_variation,
                chi_sup: sol.sup_norm,
                ode_steps: sol.accepted,
                ode_rejected: sol.rejected,
            });
        }
        let trajectory = Trajectory { times, values };
        let sup_norm = trajectory.sup_norm();
        let pvar_norm = pvar_norm_points(&trajectory.values, self.p);
        Ok(FlowResult {
            s,
            t,
            xi: xi.to_vec(),
            delta: self.delta,
            p: self.p,
            partition,
            trajectory,
            sup_norm,
            pvar_norm,
            diagnostics,
        })
    }
}

fn shift_time(e: Error, map: impl Fn(f64) -> f64) -> Error {
    match e {
        Error::Explosion { time } => Error::Explosion { time: map(time) },
        Error::Stiffness { time, step } => Error::Stiffness {
            time: map(time),
            step,
        },
        other => other,
    }
}

/// `χ_s(·,ξ)` on `[s,t]`; the caller is responsible for `ω̃(s,t) ≤ δ`.
pub fn chi_solve(
    drift: DriftField,
    fields: Arc<dyn VectorFields>,
    path: &SampledRoughPath,
    s: f64,
    t: f64,
    xi: &[f64],
    config: FlowConfig,
) -> Result<Trajectory> {
    let config = FlowConfig {
        delta: Some(config.delta.unwrap_or(1.0)),
        ..config
    };
    FlowSolver::new(fields, drift, path, config)?.chi(s, t, xi)
}

/// Largest `δ = 2^{-k} ≥ 1e-6` passing the probe and analytic conditions.
pub fn select_delta(
    fields: Arc<dyn VectorFields>,
    drift: DriftField,
    path: &SampledRoughPath,
    config: FlowConfig,
) -> Result<f64> {
    let config = FlowConfig { delta: None, ..config };
    Ok(FlowSolver::new(fields, drift, path, config)?.delta())
}

/// `φ(s,·,ξ)` for a single query.
pub fn flow_phi(
    drift: DriftField,
    fields: Arc<dyn VectorFields>,
    path: &SampledRoughPath,
    s: f64,
    t: f64,
    xi: &[f64],
    config: FlowConfig,
) -> Result<FlowResult> {
    FlowSolver::new(fields, drift, path, config)?.flow(s, t, xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{lift_piecewise_linear, uniform_grid};
    use crate::fields::{SinScalar, TrigFields, ZeroFields};

    fn driver(d: usize) -> SampledRoughPath {
        let pts: Vec<Vec<f64>> = (0..=8)
            .map(|i| (0..d).map(|c| (0.7 * i as f64 + c as f64).sin() * 0.4).collect())
            .collect();
        lift_piecewise_linear(&pts, &uniform_grid(8, 1.0)).unwrap()
    }

    #[test]
    fn zero_noise_decay_is_exponential() {
        let x = driver(2);
        let f: Arc<dyn VectorFields> = Arc::new(ZeroFields { m: 2, d: 2 });
        let b = super::super::preset("decay", 2, None).unwrap();
        let solver = FlowSolver::new(f, b, &x, FlowConfig::default()).unwrap();
        assert_eq!(solver.delta(), 0.5);
        let r = solver.flow(0.0, 1.0, &[1.0, -2.0]).unwrap();
        for (t, v) in r.trajectory.times.iter().zip(&r.trajectory.values) {
            assert!((v[0] - (-t).exp()).abs() < 1e-8);
            assert!((v[1] + 2.0 * (-t).exp()).abs() < 1e-8);
        }
        assert!((r.sup_norm - 5f64.sqrt()).abs() < 1e-12);
        let back = solver.flow(1.0, 0.0, r.end()).unwrap();
        assert!(linalg::dist(back.end(), &[1.0, -2.0]) < 1e-8);
    }

    #[test]
    fn zero_drift_reduces_to_psi() {
        let x = driver(2);
        let f: Arc<dyn VectorFields> = Arc::new(TrigFields::sin_rotation(1.0));
        let solver = FlowSolver::new(f, DriftField::zero(2), &x, FlowConfig::default()).unwrap();
        let r = solver.flow(0.0, 1.0, &[0.2, 0.1]).unwrap();
        let psi = solver.rde().psi(0.0, 1.0, &[0.2, 0.1]).unwrap();
        assert!(linalg::dist(r.end(), &psi) < 1e-6);
    }

    #[test]
    fn one_sided_refuses_backward() {
        let x = driver(1);
        let f: Arc<dyn VectorFields> = Arc::new(SinScalar::default());
        let solver = FlowSolver::new(f, DriftField::cubic_inward(1), &x, FlowConfig::default()).unwrap();
        assert!(matches!(solver.flow(1.0, 0.0, &[0.5]), Err(Error::Domain(_))));
        let r = solver.flow(0.0, 1.0, &[3.0]).unwrap();
        assert!(r.end()[0].is_finite());
        assert!(!r.diagnostics.is_empty());
        assert!(r.diagnostics.iter().all(|d| d.jac_deviation <= 0.5 + 1e-9));
    }

    #[test]
    fn zero_noise_analytic_delta() {
        let x = driver(1);
        let f: Arc<dyn VectorFields> = Arc::new(ZeroFields { m: 1, d: 1 });
        let b = DriftField::linear(1, vec![3.0]).unwrap();
        // 1 / (2·3) = 0.1667 → largest power of two below is 0.125.
        assert_eq!(select_delta(f, b, &x, FlowConfig::default()).unwrap(), 0.125);
    }
}
