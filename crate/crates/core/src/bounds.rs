//! Empirical growth checks for `φ`: sup-norm, p-variation and Hölder
//! bounds along sweeps of `|ξ|`, `N₁(ω)` (via driver dilation) and the
//! horizon, plus convergence along polyline approximations of a driver.
//!
//! The bounds carry unknown constants, so every check is a trend check:
//! log-log slopes of the measured quantity against the swept variable.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{greedy_partition, holder_norm, n_one, ControlFunction};
use crate::drift::{DriftField, FlowConfig, FlowResult, FlowSolver};
use crate::drivers::{lift_piecewise_linear, SampledRoughPath, SharedPath};
use crate::error::{check_dim, Error, Result};
use crate::fields::VectorFields;
use crate::linalg;

/// Tolerance added to the linear-growth slope limit.
pub const SLOPE_TOLERANCE: f64 = 0.1;

#[derive(Clone)]
pub struct BoundScenario {
    pub fields: Arc<dyn VectorFields>,
    pub drift: DriftField,
    /// One driver per replicate.
    pub drivers: Vec<SharedPath>,
    /// Initial condition direction; normalized on use.
    pub xi_direction: Vec<f64>,
    /// `|ξ|` for sweeps that do not vary it.
    pub xi_norm: f64,
    pub config: FlowConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// `|ξ|` takes the sweep values.
    XiNorm,
    /// The driver is dilated by each sweep value `ε`, moving `N₁(ω)`.
    N1,
    /// The driver is restricted to `[0, T]` for each sweep value `T`.
    Horizon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Sup,
    PVar,
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub replicate: usize,
    pub xi_norm: f64,
    pub n1: usize,
    pub horizon: f64,
    /// Variation exponent of the driver.
    pub p: f64,
    /// `1/p`-Hölder norm of the driver.
    pub holder: f64,
    pub sup_norm: f64,
    pub pvar_norm: f64,
    /// `sup |φ_t − φ_s| / (|t−s| ∨ |t−s|^{1/p})` over trajectory times.
    pub holder_lhs: f64,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn quantity(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Sup => self.sup_norm,
            Quantity::PVar => self.pvar_norm,
            Quantity::Holder => self.holder_lhs,
        }
    }

    /// `1 + N₁ + |ξ| + T`.
    pub fn shape(&self) -> f64 {
        1.0 + self.n1 as f64 + self.xi_norm + self.horizon
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub quantity: Quantity,
    pub variable: SweepVariable,
    pub points: Vec<SweepPoint>,
    /// Log-log slope of the quantity against the sweep regressor (for
    /// horizon sweeps: slope of `log(quantity / shape)` against `T`).
    pub slope: f64,
    /// Approximate 95% interval for `slope`.
    pub slope_ci: [f64; 2],
    /// Fit of the quantity against `1 + N₁ + |ξ| + T`.
    pub shape_slope: f64,
    pub shape_intercept: f64,
    pub max_ratio: f64,
    /// `None` for horizon sweeps, which allow exponential growth.
    pub slope_limit: Option<f64>,
    pub failures: usize,
    pub passed: bool,
}

impl FitReport {
    /// `|slope| ≤ tol`.
    pub fn is_flat(&self, tol: f64) -> bool {
        self.slope.abs() <= tol
    }
}

/// Restriction of a driver to the grid points in `[start, horizon]`.
pub fn truncate(path: &SampledRoughPath, horizon: f64) -> Result<SampledRoughPath> {
    let tol = 1e-12 * (1.0 + horizon.abs());
    let idx: Vec<usize> = (0..path.len()).filter(|&i| path.times()[i] <= horizon + tol).collect();
    if idx.len() < 2 {
        return Err(Error::domain(format!("horizon {horizon} leaves fewer than 2 grid points")));
    }
    path.subsample(&idx)
}

/// `sup |y_t − y_s| / (|t−s| ∨ |t−s|^{1/p})` over all pairs of samples.
pub fn holder_lhs(times: &[f64], values: &[Vec<f64>], p: f64) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let dt = (times[j] - times[i]).abs();
            if dt == 0.0 {
                continue;
            }
            let denom = dt.max(dt.powf(1.0 / p));
            best = best.max(linalg::dist(&values[i], &values[j]) / denom);
        }
    }
    best
}

fn direction(v: &[f64]) -> Result<Vec<f64>> {
    let n = linalg::norm(v);
    if !(n > 0.0) {
        return Err(Error::Config("xi direction must be nonzero".into()));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn run_one(scenario: &BoundScenario, variable: SweepVariable, value: f64, replicate: usize) -> SweepPoint {
    let base = &scenario.drivers[replicate];
    let mut point = SweepPoint {
        value,
        replicate,
        xi_norm: scenario.xi_norm,
        n1: 0,
        horizon: base.horizon(),
        p: base.p_hint(),
        holder: 0.0,
        sup_norm: f64::NAN,
        pvar_norm: f64::NAN,
        holder_lhs: f64::NAN,
        error: None,
    };
    let result = (|| -> Result<()> {
        let dir = direction(&scenario.xi_direction)?;
        check_dim(scenario.drift.dim(), dir.len())?;
        let path: SharedPath = match variable {
            SweepVariable::XiNorm => {
                point.xi_norm = value;
                base.clone()
            }
            SweepVariable::N1 => Arc::new(base.dilate(value)),
            SweepVariable::Horizon => Arc::new(truncate(base, value)?),
        };
        let p = path.p_hint();
        point.horizon = path.horizon();
        point.n1 = n_one(&path, p)?;
        point.holder = holder_norm(&path, p);
        let xi: Vec<f64> = dir.iter().map(|d| d * point.xi_norm).collect();
        let solver = FlowSolver::new(scenario.fields.clone(), scenario.drift.clone(), &path, scenario.config.clone())?;
        let r = solver.flow(path.start(), path.horizon(), &xi)?;
        point.sup_norm = r.sup_norm;
        point.pvar_norm = r.pvar_norm;
        point.holder_lhs = holder_lhs(&r.trajectory.times, &r.trajectory.values, p);
        Ok(())
    })();
    if let Err(e) = result {
        point.error = Some(e.to_string());
    }
    point
}

/// Run every `(value, replicate)` pair; replicates run in parallel and the
/// output is ordered by value, then replicate.
pub fn run_sweep(scenario: &BoundScenario, sweep: &Sweep) -> Result<Vec<SweepPoint>> {
    if scenario.drivers.is_empty() {
        return Err(Error::Config("scenario has no drivers".into()));
    }
    if sweep.values.windows(2).any(|w| !(w[1] > w[0])) || sweep.values.len() < 2 {
        return Err(Error::Config("sweep values must be increasing with at least 2 entries".into()));
    }
    let jobs: Vec<(f64, usize)> = sweep
        .values
        .iter()
        .flat_map(|&v| (0..scenario.drivers.len()).map(move |r| (v, r)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(v, r)| run_one(scenario, sweep.variable, v, r))
        .collect())
}

/// `(slope, [lo, hi])` of a least-squares line with a normal-approximation
/// 95% interval.
pub fn slope_with_ci(x: &[f64], y: &[f64]) -> (f64, [f64; 2]) {
    let (slope, intercept) = linalg::linear_fit(x, y);
    let n = x.len() as f64;
    if x.len() < 3 {
        return (slope, [slope, slope]);
    }
    let mx = x.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let se = (ssr / (n - 2.0) / sxx).sqrt();
    (slope, [slope - 1.96 * se, slope + 1.96 * se])
}

/// Fit a sweep for one quantity.
pub fn fit(quantity: Quantity, variable: SweepVariable, points: Vec<SweepPoint>) -> FitReport {
    let ok: Vec<&SweepPoint> = points
        .iter()
        .filter(|p| p.error.is_none() && p.quantity(quantity) > 0.0 && p.quantity(quantity).is_finite())
        .collect();
    let failures = points.iter().filter(|p| p.error.is_some()).count();
    let regressor = |p: &SweepPoint| -> f64 {
        match (variable, quantity) {
            (SweepVariable::XiNorm, _) => p.xi_norm.ln(),
            (SweepVariable::N1, Quantity::Holder) => p.holder.max(p.holder.powf(p.p)).ln(),
            (SweepVariable::N1, _) => (1.0 + p.n1 as f64).ln(),
            (SweepVariable::Horizon, _) => p.horizon,
        }
    };
    let response = |p: &SweepPoint| -> f64 {
        match variable {
            SweepVariable::Horizon => (p.quantity(quantity) / p.shape()).ln(),
            _ => p.quantity(quantity).ln(),
        }
    };
    let x: Vec<f64> = ok.iter().map(|p| regressor(p)).collect();
    let y: Vec<f64> = ok.iter().map(|p| response(p)).collect();
    let spread = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    let (slope, slope_ci) = if ok.len() >= 2 && spread > 0.0 {
        slope_with_ci(&x, &y)
    } else {
        (0.0, [0.0, 0.0])
    };
    let sx: Vec<f64> = ok.iter().map(|p| p.shape()).collect();
    let sy: Vec<f64> = ok.iter().map(|p| p.quantity(quantity)).collect();
    let (shape_slope, shape_intercept) = if ok.len() >= 2 { linalg::linear_fit(&sx, &sy) } else { (0.0, 0.0) };
    let max_ratio = ok.iter().map(|p| p.quantity(quantity) / p.shape()).fold(0.0, f64::max);
    let slope_limit = match variable {
        SweepVariable::Horizon => None,
        _ => Some(1.0 + SLOPE_TOLERANCE),
    };
    let passed = failures == 0 && !ok.is_empty() && slope_limit.is_none_or(|l| slope <= l) && slope.is_finite();
    FitReport {
        quantity,
        variable,
        points,
        slope,
        slope_ci,
        shape_slope,
        shape_intercept,
        max_ratio,
        slope_limit,
        failures,
        passed,
    }
}

pub fn verify_sup_bound(scenario: &BoundScenario, sweep: &Sweep) -> Result<FitReport> {
    Ok(fit(Quantity::Sup, sweep.variable, run_sweep(scenario, sweep)?))
}

pub fn verify_pvar_bound(scenario: &BoundScenario, sweep: &Sweep) -> Result<FitReport> {
    Ok(fit(Quantity::PVar, sweep.variable, run_sweep(scenario, sweep)?))
}

/// Hölder bound for linear drifts. For `N1` (dilation) sweeps the regressor
/// is `‖x‖_{Höl} ∨ ‖x‖^p_{Höl}`.
pub fn verify_holder_bound(scenario: &BoundScenario, sweep: &Sweep) -> Result<FitReport> {
    if !scenario.drift.mode().is_linear() {
        return Err(Error::Config(
            "the Hölder bound is only asserted for linear-growth drifts".into(),
        ));
    }
    Ok(fit(Quantity::Holder, sweep.variable, run_sweep(scenario, sweep)?))
}

/// Both sup and p-variation reports from a single sweep.
pub fn verify_sup_and_pvar(scenario: &BoundScenario, sweep: &Sweep) -> Result<(FitReport, FitReport)> {
    let points = run_sweep(scenario, sweep)?;
    Ok((
        fit(Quantity::Sup, sweep.variable, points.clone()),
        fit(Quantity::PVar, sweep.variable, points),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Number of cells of each approximant.
    pub levels: Vec<usize>,
    /// `sup_t |φ^n_t − φ_t|` over the approximant's grid times.
    pub distances: Vec<f64>,
    /// `distances / max(1, ‖φ‖_∞)`.
    pub relative: Vec<f64>,
    pub monotone: bool,
    pub final_relative: f64,
    pub reference_sup: f64,
}

/// Solve with polyline approximants of `reference` built from its level-1
/// points on coarser uniform sub-grids with `levels[i]` cells each
/// (`levels[i]` must divide the reference cell count), and compare with the
/// solution driven by `reference` itself.
pub fn polyline_consistency(
    drift: DriftField,
    fields: Arc<dyn VectorFields>,
    reference: &SampledRoughPath,
    xi: &[f64],
    levels: &[usize],
    config: FlowConfig,
) -> Result<ConvergenceReport> {
    let n = reference.len() - 1;
    let pts = reference.level1_points();
    let mut approximants = Vec::new();
    for &level in levels {
        if level == 0 || !n.is_multiple_of(level) {
            return Err(Error::Config(format!("level {level} does not divide {n} reference cells")));
        }
        let stride = n / level;
        let idx: Vec<usize> = (0..=level).map(|k| k * stride).collect();
        let times: Vec<f64> = idx.iter().map(|&i| reference.times()[i]).collect();
        let sub: Vec<Vec<f64>> = idx.iter().map(|&i| pts[i].clone()).collect();
        approximants.push(lift_piecewise_linear(&sub, &times)?.with_p(reference.p_hint())?);
    }
    let (s, t) = (reference.start(), reference.horizon());
    let reference_solver = FlowSolver::new(fields.clone(), drift.clone(), reference, config.clone())?;
    let results: Vec<Result<(f64, f64)>> = approximants
        .par_iter()
        .map(|approx| {
            let solver = FlowSolver::new(fields.clone(), drift.clone(), approx, config.clone())?;
            let coarse = solver.flow(s, t, xi)?;
            let fine: FlowResult = reference_solver.flow_with_times(s, t, xi, approx.times())?;
            let mut dist = 0.0_f64;
            for &u in approx.times() {
                let a = coarse.at(u).ok_or_else(|| Error::Numerical(format!("missing time {u}")))?;
                let b = fine.at(u).ok_or_else(|| Error::Numerical(format!("missing time {u}")))?;
                dist = dist.max(linalg::dist(a, b));
            }
            Ok((dist, fine.sup_norm))
        })
        .collect();
    let mut distances = Vec::new();
    let mut reference_sup = 0.0_f64;
    for r in results {
        let (d, sup) = r?;
        distances.push(d);
        reference_sup = reference_sup.max(sup);
    }
    let scale = reference_sup.max(1.0);
    let relative: Vec<f64> = distances.iter().map(|d| d / scale).collect();
    let monotone = distances.windows(2).all(|w| w[1] <= w[0]);
    Ok(ConvergenceReport {
        levels: levels.to_vec(),
        final_relative: relative.last().copied().unwrap_or(0.0),
        distances,
        relative,
        monotone,
        reference_sup,
    })
}

/// `(N_δ(ω̃), 4N₁(ω)/δ + 2/δ + 2T/δ + 2)` for `ω` the p-variation control
/// of `path` and `ω̃ = ω + |t−s|`.
pub fn n_delta_inequality(path: &SharedPath, delta: f64) -> Result<(usize, f64)> {
    let p = path.p_hint();
    let n1 = n_one(path, p)? as f64;
    let tilde = ControlFunction::pvar_of_path(path.clone(), p).with_time();
    let lhs = greedy_partition(&tilde, delta, path.times())?.n_delta;
    let horizon = path.horizon() - path.start();
    Ok((lhs, 4.0 * n1 / delta + 2.0 / delta + 2.0 * horizon / delta + 2.0))
}

/// CSV table of sweep points, one row per point, columns named after the
/// fields of [`SweepPoint`] (an empty `error` means success).
pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(input: R) -> Result<Vec<SweepPoint>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}
