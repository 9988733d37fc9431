//! `ε²`-log scaling of small-noise deviation probabilities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub xi_index: usize,
    pub eps: f64,
    pub hits: usize,
    pub replicates: usize,
    pub p_hat: f64,
    /// `−ε² log P̂`; infinite when nothing hit the target set.
    pub q: f64,
}

impl LdpRow {
    pub fn new(xi_index: usize, eps: f64, hits: usize, replicates: usize) -> Self {
        let p_hat = hits as f64 / replicates as f64;
        let q = if hits == 0 {
            f64::INFINITY
        } else {
            // `+ 0.0` turns `−0` into `0` when every run hits.
            -eps * eps * p_hat.ln() + 0.0
        };
        LdpRow {
            xi_index,
            eps,
            hits,
            replicates,
            p_hat,
            q,
        }
    }
}

/// `(max − min)/min` of `q` over the last three rows with finite `q`
/// (in grid order); `None` if there are fewer than three.
pub fn tail_spread(rows: &[LdpRow]) -> Option<f64> {
    let finite: Vec<f64> = rows.iter().map(|r| r.q).filter(|q| q.is_finite()).collect();
    if finite.len() < 3 {
        return None;
    }
    let last = &finite[finite.len() - 3..];
    let lo = last.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Some(0.0);
    }
    Some((hi - lo) / lo)
}

/// `P(sup_{t≤T} |W_t| ≥ a)` for a standard Brownian motion.
///
/// Large barriers use the method of images,
/// `4 Σ_{k≥1} (−1)^{k−1} Φ̄((2k−1)a/√T)`, which keeps relative accuracy in
/// the far tail; small ones use the exit-time eigenfunction series
/// `1 − (4/π) Σ_k (−1)^k/(2k+1) exp(−(2k+1)²π²T/(8a²))`.
pub fn reflection_exit_probability(a: f64, horizon: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    if a >= horizon.sqrt() {
        images_series(a, horizon)
    } else {
        eigen_series(a, horizon)
    }
}

fn gaussian_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn images_series(a: f64, horizon: f64) -> f64 {
    let z = a / horizon.sqrt();
    let mut sum = 0.0;
    for k in 1..200 {
        let term = gaussian_tail((2 * k - 1) as f64 * z);
        sum += if k % 2 == 1 { term } else { -term };
        if term <= 1e-17 * sum.abs() {
            break;
        }
    }
    (4.0 * sum).clamp(0.0, 1.0)
}

fn eigen_series(a: f64, horizon: f64) -> f64 {
    let rate = PI * PI * horizon / (8.0 * a * a);
    let mut stay = 0.0;
    for k in 0..10_000 {
        let j = (2 * k + 1) as f64;
        let term = (-j * j * rate).exp() / j;
        stay += if k % 2 == 0 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (1.0 - 4.0 / PI * stay).clamp(0.0, 1.0)
}

/// `−ε² log P(sup_{t≤T} |εcW_t| ≥ r)` for the driver `εcW`.
pub fn reflection_q(eps: f64, scale: f64, radius: f64, horizon: f64) -> f64 {
    -eps * eps * reflection_exit_probability(radius / (eps * scale), horizon).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_of_rows() {
        assert_eq!(LdpRow::new(0, 0.5, 10, 10).q, 0.0);
        assert!(LdpRow::new(0, 0.5, 0, 10).q.is_infinite());
        assert!((LdpRow::new(0, 0.5, 1, 10).q - 0.25 * 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn spread_uses_the_last_three_finite() {
        let rows: Vec<LdpRow> = [(10, 0.6), (5, 0.5), (4, 0.4), (0, 0.3)]
            .iter()
            .map(|&(h, e)| LdpRow::new(0, e, h, 100))
            .collect();
        let q: Vec<f64> = rows[..3].iter().map(|r| r.q).collect();
        let lo = q.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = q.iter().copied().fold(0.0, f64::max);
        assert_eq!(tail_spread(&rows), Some((hi - lo) / lo));
        assert_eq!(tail_spread(&rows[..2]), None);
    }

    #[test]
    fn exit_probability_limits() {
        assert!(reflection_exit_probability(1e-3, 1.0) > 1.0 - 1e-12);
        assert!(reflection_exit_probability(10.0, 1.0) < 1e-20);
        for a in [0.5, 1.0, 1.5, 2.5] {
            let (x, y) = (images_series(a, 1.3), eigen_series(a, 1.3));
            assert!((x - y).abs() < 1e-12 * x.max(1e-3), "{a}: {x} vs {y}");
        }
        // Large deviations: −ε² log P(sup|εW| ≥ 1) → 1/2.
        let q = reflection_q(0.05, 1.0, 1.0, 1.0);
        assert!((q - 0.5).abs() < 0.05, "{q}");
    }
}
