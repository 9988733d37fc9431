//! Drift fields and the decomposition `φ(s,t,ξ) = ψ(s,t,χ_s(t,ξ))`.

mod flow;
mod stability;

pub use flow::{
    chi_solve, flow_phi, select_delta, FlowConfig, FlowResult, FlowSolver, IntervalDiagnostic, ProbeSet,
};
pub use stability::{
    a_priori_record, c4, c_hat, fit_a_priori, perturbation_gap, AnchoredFlow, APrioriFit, APrioriRecord,
    FlowHandle, Perturbed, ProbeFlow,
};

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

pub type DriftFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Declared growth regime of a drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GrowthMode {
    /// `|b(ξ)| ≤ κ₁ + κ₂|ξ|`; yields a two-sided flow.
    Linear { kappa1: f64, kappa2: f64 },
    /// Radial bound `⟨b(ξ),ξ⟩ ≤ C₁(1+|ξ|²)`, tangential bound
    /// `|b − ⟨b,ξ⟩ξ/|ξ|²| ≤ C₂(1+|ξ|)` and `C₃ = sup_{|ξ|≤6} |b(ξ)|`;
    /// yields a forward semiflow only.
    OneSided { c1: f64, c2: f64, c3: f64 },
}

impl GrowthMode {
    pub fn is_linear(&self) -> bool {
        matches!(self, GrowthMode::Linear { .. })
    }
}

#[derive(Clone)]
pub struct DriftField {
    m: usize,
    name: String,
    f: DriftFn,
    mode: GrowthMode,
}

impl fmt::Debug for DriftField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftField")
            .field("m", &self.m)
            .field("name", &self.name)
            .field("mode", &self.mode)
            .finish()
    }
}

/// Sampled local constants of a drift on a ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConstants {
    pub radius: f64,
    /// `sup |b(ξ) − b(ζ)| / |ξ − ζ|`.
    pub lipschitz: f64,
    /// `sup ⟨b(ξ) − b(ζ), ξ − ζ⟩ / |ξ − ζ|²`.
    pub one_sided: f64,
    /// `sup |tangential part of b(ξ) − b(ζ)| / |ξ − ζ|`.
    pub tangential: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthEstimate {
    /// `sup ⟨b(ξ),ξ⟩ / (1+|ξ|²)`.
    pub c1: f64,
    /// `sup |b(ξ) − ⟨b(ξ),ξ⟩ξ/|ξ|²| / (1+|ξ|)`.
    pub c2: f64,
    /// `|b(0)|`.
    pub kappa1: f64,
    /// `sup |b(ξ) − b(0)| / |ξ|`.
    pub kappa2: f64,
    /// `sup |b(ξ)| / (1+|ξ|)`.
    pub growth: f64,
    /// A sampled point broke the declared constants.
    pub violation: bool,
}

impl DriftField {
    pub fn new(m: usize, name: impl Into<String>, f: DriftFn, mode: GrowthMode) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("drift dimension must be >= 1"));
        }
        Ok(DriftField {
            m,
            name: name.into(),
            f,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mode(&self) -> GrowthMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: GrowthMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn eval(&self, xi: &[f64]) -> Vec<f64> {
        (self.f)(xi)
    }

    pub fn is_zero(&self) -> bool {
        self.name == "zero"
    }

    /// `ξ ↦ −b(ξ)`, the drift of the time-reversed equation.
    pub fn negated(&self) -> DriftField {
        let f = self.f.clone();
        DriftField {
            m: self.m,
            name: format!("-{}", self.name),
            f: Arc::new(move |x| f(x).into_iter().map(|v| -v).collect()),
            mode: self.mode,
        }
    }

    pub fn zero(m: usize) -> Self {
        DriftField {
            m,
            name: "zero".into(),
            f: Arc::new(move |_| vec![0.0; m]),
            mode: GrowthMode::Linear {
                kappa1: 0.0,
                kappa2: 0.0,
            },
        }
    }

    /// `b(ξ) = Aξ` with `A` row-major `m × m`; `κ₂ = ‖A‖`.
    pub fn linear(m: usize, a: Vec<f64>) -> Result<Self> {
        check_dim(m * m, a.len())?;
        let kappa2 = linalg::op_norm(m, &a);
        Ok(DriftField {
            m,
            name: "linear".into(),
            f: Arc::new(move |x| linalg::matvec(m, &a, x)),
            mode: GrowthMode::Linear { kappa1: 0.0, kappa2 },
        })
    }

    /// `b(ξ) = ξ − |ξ|²ξ`.
    pub fn cubic_inward(m: usize) -> Self {
        DriftField {
            m,
            name: "cubic_inward".into(),
            f: Arc::new(|x| {
                let r2 = linalg::dot(x, x);
                x.iter().map(|v| v - r2 * v).collect()
            }),
            mode: GrowthMode::OneSided {
                c1: 1.0,
                c2: 0.0,
                c3: 210.0,
            },
        }
    }

    /// `b(ξ) = −ξ / √(1+|ξ|²)`: bounded, `κ₁ = 1`, `κ₂ = 0`.
    pub fn bounded_inward(m: usize) -> Self {
        DriftField {
            m,
            name: "bounded_inward".into(),
            f: Arc::new(|x| {
                let s = (1.0 + linalg::dot(x, x)).sqrt();
                x.iter().map(|v| -v / s).collect()
            }),
            mode: GrowthMode::Linear {
                kappa1: 1.0,
                kappa2: 0.0,
            },
        }
    }

    /// Sample `n` points in the ball of radius `radius` and compare against
    /// the declared constants.
    pub fn validate(&self, radius: f64, n: usize, seed: u64) -> Result<GrowthEstimate> {
        let est = estimate_growth_constants(self, radius, n, seed)?;
        if est.violation {
            return Err(Error::Config(format!(
                "drift '{}' violates its declared growth constants {:?} (sampled {:?})",
                self.name, self.mode, est
            )));
        }
        Ok(est)
    }

    /// Sampled local constants over `pairs` random pairs in `B(0, radius)`.
    pub fn local_lipschitz(&self, radius: f64, pairs: usize, seed: u64) -> LocalConstants {
        let pts = ball_points(self.m, radius, 2 * pairs, seed);
        let mut out = LocalConstants {
            radius,
            lipschitz: 0.0,
            one_sided: f64::NEG_INFINITY,
            tangential: 0.0,
        };
        for pair in pts.chunks(2) {
            let (x, z) = (&pair[0], &pair[1]);
            let h: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
            let h2 = linalg::dot(&h, &h);
            if h2 < 1e-24 {
                continue;
            }
            let db: Vec<f64> = self.eval(x).iter().zip(self.eval(z)).map(|(a, b)| a - b).collect();
            let proj = linalg::dot(&db, &h);
            let tang: Vec<f64> = db.iter().zip(&h).map(|(d, hh)| d - proj / h2 * hh).collect();
            let hn = h2.sqrt();
            out.lipschitz = out.lipschitz.max(linalg::norm(&db) / hn);
            out.one_sided = out.one_sided.max(proj / h2);
            out.tangential = out.tangential.max(linalg::norm(&tang) / hn);
        }
        out
    }
}

/// `(radial, tangential)` with `radial = ⟨b,ξ⟩/|ξ|` and
/// `tangential = b − ⟨b,ξ⟩ξ/|ξ|²`.
pub fn radial_decompose(b: &DriftField, xi: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_dim(b.dim(), xi.len())?;
    let r2 = linalg::dot(xi, xi);
    if r2 == 0.0 {
        return Err(Error::domain("radial decomposition is undefined at the origin"));
    }
    let v = b.eval(xi);
    let proj = linalg::dot(&v, xi);
    let tangential = v.iter().zip(xi).map(|(bv, x)| bv - proj / r2 * x).collect();
    Ok((proj / r2.sqrt(), tangential))
}

/// Points uniform in the ball, plus points on the boundary sphere (a quarter
/// of the total), deterministic in `seed`.
pub(crate) fn ball_points(m: usize, radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let g: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let gn = linalg::norm(&g).max(1e-300);
            let r = if i % 4 == 3 {
                radius
            } else {
                radius * rng.random::<f64>().powf(1.0 / m as f64)
            };
            g.iter().map(|v| v * r / gn).collect()
        })
        .collect()
}

/// Empirical growth constants over `n ≥ 100` points of `B(0, radius)`;
/// points closer than `1e-8` to the origin are skipped for the radial and
/// tangential ratios.
pub fn estimate_growth_constants(b: &DriftField, radius: f64, n: usize, seed: u64) -> Result<GrowthEstimate> {
    if !(radius > 0.0) || n < 100 {
        return Err(Error::domain("need radius > 0 and at least 100 samples"));
    }
    let b0 = b.eval(&vec![0.0; b.dim()]);
    let mut est = GrowthEstimate {
        c1: 0.0,
        c2: 0.0,
        kappa1: linalg::norm(&b0),
        kappa2: 0.0,
        growth: 0.0,
        violation: false,
    };
    let tol = |scale: f64| 1e-9 * (1.0 + scale);
    for x in ball_points(b.dim(), radius, n, seed) {
        let r = linalg::norm(&x);
        let v = b.eval(&x);
        let bn = linalg::norm(&v);
        est.growth = est.growth.max(bn / (1.0 + r));
        if r < 1e-8 {
            continue;
        }
        let diff: Vec<f64> = v.iter().zip(&b0).map(|(a, c)| a - c).collect();
        est.kappa2 = est.kappa2.max(linalg::norm(&diff) / r);
        let (radial, tang) = radial_decompose(b, &x)?;
        let inner = radial * r;
        let tn = linalg::norm(&tang);
        est.c1 = est.c1.max(inner / (1.0 + r * r));
        est.c2 = est.c2.max(tn / (1.0 + r));
        match b.mode() {
            GrowthMode::Linear { kappa1, kappa2 } => {
                let bound = kappa1 + kappa2 * r;
                if bn > bound + tol(bound) {
                    est.violation = true;
                }
            }
            GrowthMode::OneSided { c1, c2, c3 } => {
                if inner > c1 * (1.0 + r * r) + tol(r * r)
                    || tn > c2 * (1.0 + r) + tol(r)
                    || (r <= 6.0 && bn > c3 + tol(c3))
                {
                    est.violation = true;
                }
            }
        }
    }
    Ok(est)
}

/// Build a named drift. Recognized names: `zero`, `linear` (needs `matrix`),
/// `decay` (`b = −ξ`), `cubic_inward`, `bounded_inward`.
pub fn preset(name: &str, m: usize, matrix: Option<Vec<f64>>) -> Result<DriftField> {
    let b = match name {
        "zero" => DriftField::zero(m),
        "linear" => {
            let a = matrix.ok_or_else(|| Error::Config("drift 'linear' needs a matrix".into()))?;
            DriftField::linear(m, a)?
        }
        "decay" => {
            let a: Vec<f64> = (0..m * m).map(|i| if i / m == i % m { -1.0 } else { 0.0 }).collect();
            let mut b = DriftField::linear(m, a)?;
            b.name = "decay".into();
            b
        }
        "cubic_inward" => DriftField::cubic_inward(m),
        "bounded_inward" => DriftField::bounded_inward(m),
        other => return Err(Error::Config(format!("unknown drift preset '{other}'"))),
    };
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_examples() {
        let b = preset("decay", 3, None).unwrap();
        let (r, t) = radial_decompose(&b, &[1.0, 2.0, 2.0]).unwrap();
        assert!((r + 3.0).abs() < 1e-14);
        assert!(t.iter().all(|v| v.abs() < 1e-14));
        let rot = DriftField::linear(2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
        let (r, t) = radial_decompose(&rot, &[0.3, 0.4]).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(t, vec![-0.4, 0.3]);
        assert!(radial_decompose(&rot, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn presets_respect_their_constants() {
        for (name, m) in [("zero", 2), ("decay", 2), ("cubic_inward", 2), ("cubic_inward", 1), ("bounded_inward", 3)] {
            preset(name, m, None).unwrap().validate(8.0, 2000, 5).unwrap();
        }
        let est = estimate_growth_constants(&DriftField::cubic_inward(2), 10.0, 1000, 1).unwrap();
        assert!(est.c1 <= 1.0 && est.c2 < 1e-12);
        let zero = estimate_growth_constants(&DriftField::zero(2), 10.0, 100, 1).unwrap();
        assert_eq!((zero.c1, zero.c2, zero.kappa1, zero.kappa2), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn understated_constants_are_flagged() {
        let b = DriftField::cubic_inward(2).with_mode(GrowthMode::Linear {
            kappa1: 1.0,
            kappa2: 1.0,
        });
        assert!(b.validate(5.0, 500, 0).is_err());
    }

    #[test]
    fn local_constants_of_cubic() {
        let c = DriftField::cubic_inward(1).local_lipschitz(2.0, 2000, 3);
        // b'(ξ) = 1 − 3ξ², so the one-sided constant is at most 1 and the
        // Lipschitz constant is at most 11 on [-2, 2].
        assert!(c.one_sided <= 1.0 + 1e-12 && c.lipschitz <= 11.0 + 1e-9 && c.lipschitz > 5.0);
        assert!(c.tangential < 1e-9);
    }
}
