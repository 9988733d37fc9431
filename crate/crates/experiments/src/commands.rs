//! The subcommands. Each one runs its replicates on the current rayon pool,
//! merges results in seed order and writes CSV/JSON files under `out`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use roughflow::bounds::{self, BoundScenario, FitReport, Quantity, Sweep};
use roughflow::drift::{FlowResult, FlowSolver};
use roughflow::drivers::{io, lift_piecewise_linear};
use roughflow::ode::dopri45;
use roughflow::drivers::SampledRoughPath;
use roughflow::linalg;

use crate::config::Scenario;
use crate::error::{CliError, CliResult};
use crate::ldp::{tail_spread, LdpRow};
use crate::tails::{fit_weibull_tail, shape_threshold, survival_curve, TailFit};

/// Fewest replicates accepted by `tails`.
pub const MIN_TAIL_REPLICATES: usize = 1000;

/// Largest relative spread of `q` over the last three `ε`.
pub const LDP_SPREAD: f64 = 0.5;

/// One `(seed, ξ)` run of `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub xi_index: usize,
    pub ok: bool,
    pub delta: Option<f64>,
    pub intervals: Option<usize>,
    pub sup_norm: Option<f64>,
    pub pvar_norm: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub runs: usize,
    pub failed: usize,
    pub records: Vec<RunRecord>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub xi_index: usize,
    pub xi: Vec<f64>,
    pub replicates: usize,
    pub failures: usize,
    pub rho: f64,
    pub threshold: f64,
    pub fit: TailFit,
    /// Degenerate tails pass trivially.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub xi_index: usize,
    pub radius: f64,
    pub rows: Vec<LdpRow>,
    pub spread: Option<f64>,
    pub passed: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub fits: Vec<FitReport>,
    pub skipped: Vec<String>,
    pub passed: bool,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn flow_solver(s: &Scenario, x: &SampledRoughPath) -> CliResult<FlowSolver> {
    Ok(FlowSolver::new(s.fields.clone(), s.drift.clone(), x, s.flow.clone())?)
}

/// Map `f` over seeds `0..n` in parallel, keeping seed order.
fn per_seed<T: Send>(n: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..n as u64).into_par_iter().map(f).collect()
}

/// `φ(0, T, ξ)` for every seed and initial condition; writes
/// `trajectories/traj_s{seed}_x{k}.csv` and `runs.csv`.
pub fn solve(s: &Scenario, out: &Path, seeds: usize) -> CliResult<SolveSummary> {
    let dir = out.join("trajectories");
    fs::create_dir_all(&dir)?;
    let xis = &s.config.xi;
    let batches = per_seed(s.replicates(seeds), |seed| -> Vec<(RunRecord, Option<PathBuf>)> {
        let fail = |k: usize, e: String| {
            let rec = RunRecord {
                seed,
                xi_index: k,
                ok: false,
                delta: None,
                intervals: None,
                sup_norm: None,
                pvar_norm: None,
                error: Some(e),
            };
            (rec, None)
        };
        let solver = match s.driver(seed).and_then(|x| flow_solver(s, &x)) {
            Ok(v) => v,
            Err(e) => return (0..xis.len()).map(|k| fail(k, e.to_string())).collect(),
        };
        xis.iter()
            .enumerate()
            .map(|(k, xi)| {
                let run = || -> CliResult<(FlowResult, PathBuf)> {
                    let r = solver.flow(0.0, s.horizon, xi)?;
                    if r.trajectory.values.iter().flatten().any(|v| !v.is_finite()) {
                        return Err(roughflow::Error::Explosion { time: s.horizon }.into());
                    }
                    let path = dir.join(format!("traj_s{seed:04}_x{k:02}.csv"));
                    io::write_trajectory_csv(BufWriter::new(File::create(&path)?), &r.trajectory.times, &r.trajectory.values)?;
                    Ok((r, path))
                };
                match run() {
                    Ok((r, path)) => (
                        RunRecord {
                            seed,
                            xi_index: k,
                            ok: true,
                            delta: Some(r.delta),
                            intervals: Some(r.partition.times.len() - 1),
                            sup_norm: Some(r.sup_norm),
                            pvar_norm: Some(r.pvar_norm),
                            error: None,
                        },
                        Some(path),
                    ),
                    Err(e) => fail(k, e.to_string()),
                }
            })
            .collect()
    });
    let (records, files): (Vec<RunRecord>, Vec<Option<PathBuf>>) = batches.into_iter().flatten().unzip();
    write_csv(&out.join("runs.csv"), &records)?;
    let failed = records.iter().filter(|r| !r.ok).count();
    if failed == records.len() {
        return Err(CliError::AllFailed {
            runs: records.len(),
            first: records.first().and_then(|r| r.error.clone()).unwrap_or_default(),
        });
    }
    Ok(SolveSummary {
        runs: records.len(),
        failed,
        records,
        files: files.into_iter().flatten().collect(),
    })
}

/// `‖φ(0,·,ξ)‖_∞` over `replicates` Gaussian drivers for every `ξ`, with a
/// Weibull fit of the top decile. Writes `survival_x{k}.csv`,
/// `sup_norms_x{k}.csv` and `tails.json`.
pub fn tails(s: &Scenario, out: &Path, replicates: usize) -> CliResult<Vec<TailReport>> {
    let rho = s
        .rho()
        .ok_or_else(|| CliError::config("driver: tails needs a Gaussian (fbm) driver"))?;
    if replicates < MIN_TAIL_REPLICATES {
        return Err(CliError::config(format!(
            "seeds: tails needs at least {MIN_TAIL_REPLICATES} replicates, got {replicates}"
        )));
    }
    fs::create_dir_all(out)?;
    let xis = &s.config.xi;
    let per: Vec<Vec<Result<f64, String>>> = per_seed(replicates, |seed| {
        let solver = s.driver(seed).and_then(|x| flow_solver(s, &x));
        xis.iter()
            .map(|xi| match &solver {
                Ok(f) => f
                    .flow(0.0, s.horizon, xi)
                    .map(|r| r.sup_norm)
                    .map_err(|e| e.to_string())
                    .and_then(|v| if v.is_finite() { Ok(v) } else { Err("non-finite sup norm".into()) }),
                Err(e) => Err(e.to_string()),
            })
            .collect()
    });
    let mut reports = Vec::new();
    for (k, xi) in xis.iter().enumerate() {
        let samples: Vec<f64> = per.iter().filter_map(|v| v[k].clone().ok()).collect();
        if samples.is_empty() {
            return Err(CliError::AllFailed {
                runs: replicates,
                first: per[0][k].clone().err().unwrap_or_default(),
            });
        }
        let rows: Vec<SupRow> = per
            .iter()
            .enumerate()
            .filter_map(|(seed, v)| v[k].clone().ok().map(|sup_norm| SupRow { seed: seed as u64, sup_norm }))
            .collect();
        write_csv(&out.join(format!("sup_norms_x{k:02}.csv")), &rows)?;
        write_csv(&out.join(format!("survival_x{k:02}.csv")), &survival_curve(&samples))?;
        let fit = fit_weibull_tail(&samples);
        let threshold = shape_threshold(rho);
        let passed = fit.deterministic || fit.shape.is_some_and(|sh| sh >= threshold);
        reports.push(TailReport {
            xi_index: k,
            xi: xi.clone(),
            replicates,
            failures: replicates - samples.len(),
            rho,
            threshold,
            fit,
            passed,
        });
    }
    write_json(&out.join("tails.json"), &reports)?;
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupRow {
    pub seed: u64,
    pub sup_norm: f64,
}

/// The drift-only trajectory `y⁰` at `times` (which start at 0).
fn zero_noise_path(s: &Scenario, xi: &[f64], times: &[f64]) -> CliResult<Vec<Vec<f64>>> {
    let b = &s.drift;
    let sol = dopri45(|_, z| Ok(b.eval(z)), 0.0, xi, times, &s.flow.ode)?;
    Ok(sol.values)
}

/// `P̂(sup |Y^ε − y⁰| ≥ r)` on the driver grid over the configured `ε`
/// grid, with `Y^ε` driven by the dilated driver `εX`. Writes `ldp.csv` and
/// `ldp.json`.
pub fn ldp(s: &Scenario, out: &Path, replicates: usize) -> CliResult<Vec<LdpReport>> {
    let cfg = s
        .config
        .ldp
        .clone()
        .ok_or_else(|| CliError::config("ldp: section missing"))?;
    if !s.is_gaussian() {
        return Err(CliError::config("driver: ldp needs a Gaussian (fbm) driver"));
    }
    fs::create_dir_all(out)?;
    let grid = s.grid();
    let mut reports = Vec::new();
    for (k, xi) in s.config.xi.iter().enumerate() {
        let y0 = zero_noise_path(s, xi, &grid)?;
        let mut rows = Vec::new();
        let mut warnings = Vec::new();
        for &eps in &cfg.eps {
            let runs = per_seed(replicates, |seed| -> CliResult<bool> {
                let x = s.driver(seed)?.dilate(eps);
                let r = flow_solver(s, &x)?.flow(0.0, s.horizon, xi)?;
                let mut dev: f64 = 0.0;
                for (u, y) in grid.iter().zip(&y0) {
                    let v = r
                        .at(*u)
                        .ok_or_else(|| roughflow::Error::Numerical(format!("no state at grid time {u}")))?;
                    dev = dev.max(linalg::dist(v, y));
                }
                Ok(dev >= cfg.radius)
            });
            let failures = runs.iter().filter(|r| r.is_err()).count();
            let hits = runs.iter().filter(|r| matches!(r, Ok(true))).count();
            let done = replicates - failures;
            if done == 0 {
                return Err(CliError::AllFailed {
                    runs: replicates,
                    first: runs.into_iter().find_map(|r| r.err()).map(|e| e.to_string()).unwrap_or_default(),
                });
            }
            if failures > 0 {
                warnings.push(format!("eps {eps}: {failures} runs failed and were dropped"));
            }
            if hits == 0 {
                warnings.push(format!("eps {eps}: no hits, q recorded as infinite"));
            }
            rows.push(LdpRow::new(k, eps, hits, done));
        }
        let spread = tail_spread(&rows);
        if spread.is_none() {
            warnings.push("fewer than three finite q values; spread not checked".into());
        }
        reports.push(LdpReport {
            xi_index: k,
            radius: cfg.radius,
            passed: spread.is_some_and(|v| v <= LDP_SPREAD),
            spread,
            rows,
            warnings,
        });
    }
    let all: Vec<LdpRow> = reports.iter().flat_map(|r| r.rows.clone()).collect();
    write_csv(&out.join("ldp.csv"), &all)?;
    write_json(&out.join("ldp.json"), &reports)?;
    Ok(reports)
}

/// Run the configured sweeps with one driver per seed and fit each quantity.
/// Writes `sweep_{variable}_{i}.csv` and `bounds.json`.
pub fn bounds(s: &Scenario, out: &Path, seeds: usize) -> CliResult<BoundsReport> {
    let cfg = s
        .config
        .bounds
        .clone()
        .ok_or_else(|| CliError::config("bounds: section missing"))?;
    fs::create_dir_all(out)?;
    let drivers = per_seed(s.replicates(seeds), |seed| s.driver(seed))
        .into_iter()
        .collect::<CliResult<Vec<_>>>()?;
    let scenario = BoundScenario {
        fields: s.fields.clone(),
        drift: s.drift.clone(),
        drivers,
        xi_direction: s.config.xi[0].clone(),
        xi_norm: cfg.xi_norm,
        config: s.flow.clone(),
    };
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    let mut total = 0;
    let mut failed = 0;
    for (i, sw) in cfg.sweeps.iter().enumerate() {
        let sweep = Sweep {
            variable: sw.variable,
            values: sw.values.clone(),
        };
        let points = bounds::run_sweep(&scenario, &sweep)?;
        total += points.len();
        failed += points.iter().filter(|p| p.error.is_some()).count();
        let name = serde_json::to_value(sw.variable)?;
        let name = name.as_str().unwrap_or("sweep");
        bounds::write_sweep_csv(BufWriter::new(File::create(out.join(format!("sweep_{name}_{i}.csv")))?), &points)?;
        for &q in &cfg.quantities {
            if q == Quantity::Holder && !s.drift.mode().is_linear() {
                skipped.push(format!("sweep {i}: holder bound needs a linear-growth drift"));
                continue;
            }
            fits.push(bounds::fit(q, sw.variable, points.clone()));
        }
    }
    if total > 0 && failed == total {
        return Err(CliError::AllFailed {
            runs: total,
            first: "every sweep point failed".into(),
        });
    }
    let report = BoundsReport {
        passed: fits.iter().all(|f| f.passed),
        fits,
        skipped,
    };
    write_json(&out.join("bounds.json"), &report)?;
    Ok(report)
}

/// Lift a points CSV to a rough-path CSV.
pub fn lift(input: &Path, output: &Path) -> CliResult<SampledRoughPath> {
    let f = File::open(input).map_err(|e| CliError::config(format!("input: {}: {e}", input.display())))?;
    let (times, pts) = io::read_points_csv(f).map_err(|e| CliError::config(format!("input: {e}")))?;
    let x = lift_piecewise_linear(&pts, &times).map_err(|e| CliError::config(format!("input: {e}")))?;
    if let Some(dir) = output.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    io::write_rough_path_csv(BufWriter::new(File::create(output)?), &x)?;
    Ok(x)
}
