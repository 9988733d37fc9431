use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::tensor::{increment_norm, GroupElement};

/// A rough path sampled on a grid: group values `x_{t_k}` with `x_{t_0} = 1`.
///
/// Between grid points the path is interpolated cell by cell with
/// [`GroupElement::fraction`], which keeps Chen's relation exact for any
/// intermediate time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledRoughPath {
    dim: usize,
    times: Vec<f64>,
    values: Vec<GroupElement>,
    p_hint: f64,
}

pub type SharedPath = Arc<SampledRoughPath>;

impl SampledRoughPath {
    pub fn new(times: Vec<f64>, values: Vec<GroupElement>, p_hint: f64) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain("a sampled path needs at least 2 grid points"));
        }
        check_dim(times.len(), values.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("grid times must be finite and strictly increasing"));
        }
        if !(p_hint >= 1.0) {
            return Err(Error::domain("p must be >= 1"));
        }
        let dim = values[0].dim();
        for v in &values {
            check_dim(dim, v.dim())?;
        }
        if values[0].homogeneous_norm() > 1e-12 {
            return Err(Error::domain("path must start at the identity"));
        }
        Ok(SampledRoughPath {
            dim,
            times,
            values,
            p_hint,
        })
    }

    /// The constant identity path on the given grid.
    pub fn constant(dim: usize, times: Vec<f64>, p_hint: f64) -> Result<Self> {
        let values = vec![GroupElement::identity(dim); times.len()];
        Self::new(times, values, p_hint)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[GroupElement] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn p_hint(&self) -> f64 {
        self.p_hint
    }

    pub fn with_p(mut self, p: f64) -> Result<Self> {
        if !(p >= 1.0) {
            return Err(Error::domain("p must be >= 1"));
        }
        self.p_hint = p;
        Ok(self)
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `x_{t_k}^{-1} ⊗ x_{t_l}`.
    pub fn increment(&self, k: usize, l: usize) -> GroupElement {
        self.values[k].inverse().chen_mul(&self.values[l]).unwrap()
    }

    /// Homogeneous norm of `increment(k, l)`.
    pub fn increment_norm(&self, k: usize, l: usize) -> f64 {
        increment_norm(&self.values[k], &self.values[l])
    }

    /// Index `k` of the cell `[t_k, t_{k+1}]` containing `u` (clamped).
    pub fn cell_of(&self, u: f64) -> usize {
        let n = self.times.len();
        match self.times.partition_point(|&t| t <= u) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    pub fn check_span(&self, s: f64, t: f64) -> Result<()> {
        let (lo, hi) = (s.min(t), s.max(t));
        let tol = 1e-12 * (1.0 + self.horizon().abs());
        if lo < self.start() - tol || hi > self.horizon() + tol || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::domain(format!(
                "interval [{lo}, {hi}] is outside the path span [{}, {}]",
                self.start(),
                self.horizon()
            )));
        }
        Ok(())
    }

    /// Path value at an arbitrary time inside the span.
    pub fn value_at(&self, u: f64) -> GroupElement {
        let k = self.cell_of(u);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let theta = ((u - t0) / (t1 - t0)).clamp(0.0, 1.0);
        if theta == 0.0 {
            return self.values[k].clone();
        }
        if theta == 1.0 {
            return self.values[k + 1].clone();
        }
        let cell = self.increment(k, k + 1);
        self.values[k].chen_mul(&cell.fraction(theta)).unwrap()
    }

    /// `x_s^{-1} ⊗ x_t` at arbitrary times.
    pub fn increment_between(&self, s: f64, t: f64) -> GroupElement {
        self.value_at(s).inverse().chen_mul(&self.value_at(t)).unwrap()
    }

    /// Level-1 trace as points in `R^d`.
    pub fn level1_points(&self) -> Vec<Vec<f64>> {
        self.values.iter().map(|g| g.level1().to_vec()).collect()
    }

    /// Dilated driver `δ_ε x` (replaces `dx` by `ε dx`).
    pub fn dilate(&self, eps: f64) -> SampledRoughPath {
        SampledRoughPath {
            dim: self.dim,
            times: self.times.clone(),
            values: self.values.iter().map(|g| g.dilate(eps)).collect(),
            p_hint: self.p_hint,
        }
    }

    /// The time-reversed path `u ↦ x_{T-u}` re-based at the identity, on
    /// `[start, horizon]` with mirrored grid.
    pub fn reversed(&self) -> SampledRoughPath {
        let n = self.times.len();
        let (a, b) = (self.start(), self.horizon());
        let last_inv = self.values[n - 1].inverse();
        let times = (0..n).map(|k| a + b - self.times[n - 1 - k]).collect();
        let values = (0..n)
            .map(|k| last_inv.chen_mul(&self.values[n - 1 - k]).unwrap())
            .collect();
        SampledRoughPath {
            dim: self.dim,
            times,
            values,
            p_hint: self.p_hint,
        }
    }

    /// Sub-sample at the given grid indices (which must include 0 and the
    /// last index). Values are kept exactly, so the result is the restriction
    /// of this path, not a new lift.
    pub fn subsample(&self, indices: &[usize]) -> Result<SampledRoughPath> {
        let times = indices.iter().map(|&i| self.times[i]).collect();
        let values = indices.iter().map(|&i| self.values[i].clone()).collect();
        SampledRoughPath::new(times, values, self.p_hint)
    }

    /// Split every cell into equal Chen-consistent pieces until each piece
    /// satisfies `ν^p ‖piece‖^p ≤ budget`.
    pub fn refine(&self, nu: f64, budget: f64) -> Result<SampledRoughPath> {
        if !(budget > 0.0) {
            return Err(Error::domain("step budget must be positive"));
        }
        const MAX_PIECES: usize = 1 << 22;
        let radius = budget.powf(1.0 / self.p_hint) / nu;
        let mut times = vec![self.times[0]];
        let mut values = vec![self.values[0].clone()];
        for k in 0..self.times.len() - 1 {
            let cell = self.increment(k, k + 1);
            let pieces = if nu > 0.0 && radius.is_finite() {
                let l1 = crate::linalg::norm(cell.level1());
                let area = frobenius(&cell.anti());
                let need = (l1 / radius).max(2.0 * area / (radius * radius));
                if need > MAX_PIECES as f64 {
                    return Err(Error::Numerical(format!(
                        "cell {k} needs {need:.3e} sub-steps for the step budget"
                    )));
                }
                (need.ceil() as usize).max(1)
            } else {
                1
            };
            let (t0, t1) = (self.times[k], self.times[k + 1]);
            for j in 1..pieces {
                let theta = j as f64 / pieces as f64;
                times.push(t0 + theta * (t1 - t0));
                values.push(self.values[k].chen_mul(&cell.fraction(theta))?);
            }
            times.push(t1);
            values.push(self.values[k + 1].clone());
        }
        SampledRoughPath::new(times, values, self.p_hint)
    }
}

fn frobenius(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::lift_piecewise_linear;

    fn zigzag() -> SampledRoughPath {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.5],
            vec![0.2, 1.5],
            vec![-0.4, 0.3],
        ];
        lift_piecewise_linear(&pts, &[0.0, 0.2, 0.7, 1.0]).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        let v = vec![GroupElement::identity(1); 3];
        assert!(SampledRoughPath::new(vec![0.0, 0.5, 0.5], v.clone(), 1.0).is_err());
        assert!(SampledRoughPath::new(vec![0.0, 0.5, 1.0], v.clone(), 0.5).is_err());
        assert!(SampledRoughPath::new(vec![0.0], v[..1].to_vec(), 1.0).is_err());
        let mut shifted = v;
        shifted[0] = GroupElement::segment(&[1.0]);
        assert!(SampledRoughPath::new(vec![0.0, 0.5, 1.0], shifted, 1.0).is_err());
    }

    #[test]
    fn reversed_increments_are_inverses() {
        let x = zigzag();
        let r = x.reversed();
        let n = x.len();
        let fwd = x.increment(0, n - 1);
        let back = r.increment(0, n - 1);
        let prod = fwd.chen_mul(&back).unwrap();
        // The norm takes a square root of level 2, so compare entries.
        assert!(prod.level1().iter().chain(prod.level2()).all(|v| v.abs() < 1e-14));
        assert_eq!(r.times()[0], 0.0);
        assert!((r.times()[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn value_at_grid_points_is_exact() {
        let x = zigzag();
        for (t, v) in x.times().iter().zip(x.values()) {
            assert!(x.value_at(*t).distance(v).unwrap() < 1e-14);
        }
    }

    #[test]
    fn refine_keeps_grid_values_and_respects_budget() {
        let x = zigzag().with_p(2.0).unwrap();
        let nu = 2.0;
        let budget = 0.05;
        let r = x.refine(nu, budget).unwrap();
        assert!(r.len() > x.len());
        for w in 0..r.len() - 1 {
            let n = r.increment_norm(w, w + 1);
            assert!(nu.powf(2.0) * n.powf(2.0) <= budget * (1.0 + 1e-9));
        }
        let end = r.values().last().unwrap();
        assert!(end.distance(x.values().last().unwrap()).unwrap() < 1e-12);
    }

    #[test]
    fn check_span_rejects_outside() {
        let x = zigzag();
        assert!(x.check_span(0.0, 1.0).is_ok());
        assert!(x.check_span(-0.1, 0.5).is_err());
        assert!(x.check_span(0.5, 1.2).is_err());
    }
}
