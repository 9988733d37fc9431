//! Classical ODE integrators: adaptive Dormand–Prince 5(4) and fixed-step RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Steps below this size abort with [`Error::Stiffness`].
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub accepted: usize,
    pub rejected: usize,
    /// Total length `Σ |z_{k+1} - z_k|` over accepted steps, a lower bound
    /// for the 1-variation of the exact solution.
    pub one_variation: f64,
    /// Largest `|z|` over accepted steps.
    pub sup_norm: f64,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Differences between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] = y[i] + h * acc;
    }
}

fn check_finite(t: f64, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Explosion { time: t })
    }
}

/// Integrate `ż = f(t, z)` forward from `t0`, reporting the state at each of
/// `outputs` (nondecreasing, all `≥ t0`). Steps are clipped so that every
/// output time is hit exactly.
pub fn dopri45<F>(mut f: F, t0: f64, y0: &[f64], outputs: &[f64], opts: &OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let n = y0.len();
    let mut sol = OdeSolution::default();
    check_finite(t0, y0)?;
    let mut t = t0;
    let mut y = y0.to_vec();
    sol.sup_norm = crate::linalg::norm(&y);
    let t_end = outputs.last().copied().unwrap_or(t0);
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs.first().is_some_and(|&u| u < t0) {
        return Err(Error::domain("output times must be nondecreasing and start after t0"));
    }
    let mut out_idx = 0;
    let emit = |sol: &mut OdeSolution, idx: &mut usize, t: f64, y: &[f64]| {
        while *idx < outputs.len() && outputs[*idx] <= t {
            sol.times.push(outputs[*idx]);
            sol.values.push(y.to_vec());
            *idx += 1;
        }
    };
    emit(&mut sol, &mut out_idx, t, &y);
    if t_end <= t0 {
        return Ok(sol);
    }

    let mut k1 = f(t, &y)?;
    check_finite(t, &k1)?;
    // Initial step from the usual scale heuristic.
    let scale: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = rms(&y, &scale);
    let d1 = rms(&k1, &scale);
    let mut h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h = h.min(t_end - t0).max(opts.h_min);

    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Stiffness { time: t, step: h });
        }
        let target = outputs[out_idx];
        let mut hit = false;
        if t + h >= target || target - (t + h) < 1e-12 * (1.0 + target.abs()) {
            h = target - t;
            hit = true;
        }
        axpy(&mut tmp, &y, h, &[(A21, &k1)]);
        let k2 = f(t + C2 * h, &tmp)?;
        axpy(&mut tmp, &y, h, &[(A31, &k1), (A32, &k2)]);
        let k3 = f(t + C3 * h, &tmp)?;
        axpy(&mut tmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = f(t + C4 * h, &tmp)?;
        axpy(&mut tmp, &y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = f(t + C5 * h, &tmp)?;
        axpy(&mut tmp, &y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = f(t + h, &tmp)?;
        axpy(&mut y_new, &y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let finite = y_new.iter().all(|v| v.is_finite());
        let k7 = if finite { f(t + h, &y_new)? } else { vec![f64::NAN; n] };
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let sc: Vec<f64> = (0..n)
            .map(|i| opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs()))
            .collect();
        let e = rms(&err, &sc);
        if e.is_finite() && e <= 1.0 && k7.iter().all(|v| v.is_finite()) {
            sol.accepted += 1;
            sol.one_variation += crate::linalg::dist(&y, &y_new);
            t = if hit { target } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k1 = k7;
            sol.sup_norm = sol.sup_norm.max(crate::linalg::norm(&y));
            emit(&mut sol, &mut out_idx, t, &y);
            let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            sol.rejected += 1;
            if !e.is_finite() && h <= opts.h_min {
                return Err(Error::Explosion { time: t });
            }
            let fac = if e.is_finite() { (0.9 * e.powf(-0.25)).clamp(0.1, 0.5) } else { 0.1 };
            h *= fac;
        }
        if t < t_end && h < opts.h_min {
            // Do not give up on a step that is only short because an output
            // time is very close.
            let gap = outputs[out_idx] - t;
            if gap > opts.h_min {
                return Err(Error::Stiffness { time: t, step: h });
            }
            h = gap;
        }
    }
    Ok(sol)
}

fn rms(v: &[f64], scale: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().zip(scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Classical RK4 with `steps` equal steps on `[t0, t1]`, returning the whole
/// grid of states (`steps + 1` entries).
pub fn rk4<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], steps: usize) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    if steps == 0 {
        return Err(Error::domain("rk4 needs at least one step"));
    }
    let n = y0.len();
    let h = (t1 - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut y = y0.to_vec();
    out.push(y.clone());
    let mut tmp = vec![0.0; n];
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = f(t, &y)?;
        axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k1)]);
        let k2 = f(t + 0.5 * h, &tmp)?;
        axpy(&mut tmp, &y, 0.5 * h, &[(1.0, &k2)]);
        let k3 = f(t + 0.5 * h, &tmp)?;
        axpy(&mut tmp, &y, h, &[(1.0, &k3)]);
        let k4 = f(t + h, &tmp)?;
        for i in 0..n {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check_finite(t + h, &y)?;
        out.push(y.clone());
    }
    Ok(out)
}
