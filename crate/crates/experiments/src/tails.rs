//! Weibull-type fits of empirical survival functions.

use serde::{Deserialize, Serialize};

use roughflow::bounds::slope_with_ci;

/// Relative width below which a sample is treated as a single point mass.
const DEGENERATE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub r: f64,
    pub survival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub samples: usize,
    /// Points used by the regression (the top decile).
    pub fitted: usize,
    /// Slope of `log(−log S)` against `log r`; `None` when deterministic.
    pub shape: Option<f64>,
    pub shape_ci: Option<[f64; 2]>,
    pub intercept: Option<f64>,
    /// All samples coincide: the tail is degenerate.
    pub deterministic: bool,
}

/// Empirical survival at the order statistics, ascending in `r`, using the
/// plotting positions `S(r_(k)) = k/(n+1)` for the `k`-th largest sample.
pub fn survival_curve(samples: &[f64]) -> Vec<SurvivalRow> {
    let mut v = samples.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let n = v.len() as f64;
    let mut rows: Vec<SurvivalRow> = v
        .iter()
        .enumerate()
        .map(|(k, &r)| SurvivalRow {
            r,
            survival: (k + 1) as f64 / (n + 1.0),
        })
        .collect();
    rows.reverse();
    rows
}

/// Regress `log(−log S)` on `log r` over the top decile of `samples`.
pub fn fit_weibull_tail(samples: &[f64]) -> TailFit {
    let n = samples.len();
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = TailFit {
        samples: n,
        fitted: 0,
        shape: None,
        shape_ci: None,
        intercept: None,
        deterministic: true,
    };
    if n == 0 || hi - lo <= DEGENERATE * (1.0 + hi.abs()) {
        return degenerate;
    }
    let curve = survival_curve(samples);
    let top = (n / 10).max(3);
    let (x, y): (Vec<f64>, Vec<f64>) = curve[n - top..]
        .iter()
        .filter(|row| row.r > 0.0)
        .map(|row| (row.r.ln(), (-row.survival.ln()).ln()))
        .unzip();
    let spread = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
    if x.len() < 3 || spread <= DEGENERATE {
        // The top decile itself is a point mass.
        return TailFit {
            fitted: x.len(),
            ..degenerate
        };
    }
    let (shape, ci) = slope_with_ci(&x, &y);
    let mx = x.iter().sum::<f64>() / x.len() as f64;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    TailFit {
        samples: n,
        fitted: x.len(),
        shape: Some(shape),
        shape_ci: Some(ci),
        intercept: Some(my - shape * mx),
        deterministic: false,
    }
}

/// The desk-scale requirement on the fitted shape: `2/ρ − 0.4`.
pub fn shape_threshold(rho: f64) -> f64 {
    2.0 / rho - 0.4
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn survival_positions() {
        let c = survival_curve(&[3.0, 1.0, 2.0]);
        assert_eq!(c.iter().map(|r| r.r).collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        assert_eq!(c[0].survival, 0.75);
        assert_eq!(c[2].survival, 0.25);
    }

    #[test]
    fn exact_weibull_quantiles_recover_the_shape() {
        // Samples placed at the exact quantiles of S(r) = exp(−(r/λ)^k).
        let n = 5000;
        for k in [1.0, 2.0, 3.5] {
            let s: Vec<f64> = (1..=n)
                .map(|i| {
                    let surv = i as f64 / (n as f64 + 1.0);
                    1.7 * (-surv.ln()).powf(1.0 / k)
                })
                .collect();
            let fit = fit_weibull_tail(&s);
            assert!((fit.shape.unwrap() - k).abs() < 1e-9, "{k} {:?}", fit.shape);
            assert!((fit.intercept.unwrap() + k * 1.7f64.ln()).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_samples_are_deterministic() {
        let fit = fit_weibull_tail(&[2.0; 2000]);
        assert!(fit.deterministic && fit.shape.is_none());
    }
}
