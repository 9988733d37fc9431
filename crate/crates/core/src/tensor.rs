//! Step-2 truncated tensor algebra over `R^d`.
//!
//! A [`GroupElement`] is a point of the free step-2 nilpotent group `G²(R^d)`:
//! a level-1 vector `a` together with a `d×d` level-2 block `B` whose symmetric
//! part is forced by level 1, `B + Bᵀ = a ⊗ a`. The group product is Chen's
//! product `(a, B) ⊗ (a', B') = (a + a', B + B' + a ⊗ a')`.
//!
//! Distances use the homogeneous norm `max(|a|, sqrt(2 |Anti(B)|_F))`. It is
//! equivalent to the Carnot–Carathéodory norm up to dimension-dependent
//! constants, symmetric under inversion, and subadditive under the product,
//! so `distance` is a genuine left-invariant metric.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupElement {
    dim: usize,
    level1: Vec<f64>,
    /// Row-major `dim × dim`.
    level2: Vec<f64>,
}

impl GroupElement {
    pub fn identity(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        GroupElement {
            dim,
            level1: vec![0.0; dim],
            level2: vec![0.0; dim * dim],
        }
    }

    /// Build an element from raw levels, checking shape, finiteness and the
    /// geometric constraint (relative tolerance `1e-9`).
    pub fn new(level1: Vec<f64>, level2: Vec<f64>) -> Result<Self> {
        let dim = level1.len();
        if dim == 0 {
            return Err(Error::domain("group element needs dim >= 1"));
        }
        check_dim(dim * dim, level2.len())?;
        if level1.iter().chain(&level2).any(|v| !v.is_finite()) {
            return Err(Error::domain("group element has non-finite entries"));
        }
        let g = GroupElement {
            dim,
            level1,
            level2,
        };
        if g.geometric_defect() > 1e-9 * (1.0 + g.scale()) {
            return Err(Error::domain(
                "level2 + level2^T must equal level1 ⊗ level1",
            ));
        }
        Ok(g)
    }

    /// The signature of the straight line with increment `v`: `(v, v⊗v/2)`.
    pub fn segment(v: &[f64]) -> Self {
        Self::from_level1_and_area(v, &vec![0.0; v.len() * v.len()])
    }

    /// `(v, v⊗v/2 + anti)` for an antisymmetric `anti`.
    pub fn from_level1_and_area(v: &[f64], anti: &[f64]) -> Self {
        let d = v.len();
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                level2[i * d + j] = 0.5 * v[i] * v[j] + anti[i * d + j];
            }
        }
        GroupElement {
            dim: d,
            level1: v.to_vec(),
            level2,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level1(&self) -> &[f64] {
        &self.level1
    }

    pub fn level2(&self) -> &[f64] {
        &self.level2
    }

    pub fn level2_entry(&self, i: usize, j: usize) -> f64 {
        self.level2[i * self.dim + j]
    }

    /// Antisymmetric part `(B - Bᵀ)/2` of level 2 (the Lévy area).
    pub fn anti(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = 0.5 * (self.level2[i * d + j] - self.level2[j * d + i]);
            }
        }
        out
    }

    /// Max entry of `|B + Bᵀ - a⊗a|`.
    pub fn geometric_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let r = self.level2[i * d + j] + self.level2[j * d + i]
                    - self.level1[i] * self.level1[j];
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    fn scale(&self) -> f64 {
        self.level1
            .iter()
            .chain(&self.level2)
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn chen_mul(&self, other: &GroupElement) -> Result<GroupElement> {
        check_dim(self.dim, other.dim)?;
        let d = self.dim;
        let mut level1 = self.level1.clone();
        let mut level2 = self.level2.clone();
        for i in 0..d {
            level1[i] += other.level1[i];
            for j in 0..d {
                level2[i * d + j] += other.level2[i * d + j] + self.level1[i] * other.level1[j];
            }
        }
        Ok(GroupElement {
            dim: d,
            level1,
            level2,
        })
    }

    pub fn inverse(&self) -> GroupElement {
        let d = self.dim;
        let level1: Vec<f64> = self.level1.iter().map(|v| -v).collect();
        let mut level2 = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                level2[i * d + j] = -self.level2[i * d + j] + self.level1[i] * self.level1[j];
            }
        }
        GroupElement {
            dim: d,
            level1,
            level2,
        }
    }

    /// Dilation `δ_ε`: level 1 scaled by `ε`, level 2 by `ε²`.
    pub fn dilate(&self, eps: f64) -> GroupElement {
        GroupElement {
            dim: self.dim,
            level1: self.level1.iter().map(|v| v * eps).collect(),
            level2: self.level2.iter().map(|v| v * eps * eps).collect(),
        }
    }

    /// The piece of this increment covering a fraction `theta ∈ [0,1]` of it,
    /// with level 1 and area both split linearly. Chen-consistent:
    /// `fraction(θ) ⊗ fraction(1-θ) = self`.
    pub fn fraction(&self, theta: f64) -> GroupElement {
        let v: Vec<f64> = self.level1.iter().map(|x| x * theta).collect();
        let anti: Vec<f64> = self.anti().iter().map(|x| x * theta).collect();
        Self::from_level1_and_area(&v, &anti)
    }

    pub fn homogeneous_norm(&self) -> f64 {
        let l1 = linalg::norm(&self.level1);
        let d = self.dim;
        let mut frob2 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let a = 0.5 * (self.level2[i * d + j] - self.level2[j * d + i]);
                frob2 += a * a;
            }
        }
        l1.max((2.0 * frob2.sqrt()).sqrt())
    }

    /// `‖g⁻¹ ⊗ h‖`.
    pub fn distance(&self, other: &GroupElement) -> Result<f64> {
        check_dim(self.dim, other.dim)?;
        Ok(increment_norm(self, other))
    }
}

/// `‖g⁻¹ ⊗ h‖` without allocating, for hot loops. Dimensions must agree.
pub(crate) fn increment_norm(g: &GroupElement, h: &GroupElement) -> f64 {
    let d = g.dim;
    // g⁻¹ ⊗ h has level1 = h1 - g1 and level2 = -g2 + g1⊗g1 + h2 - g1⊗h1.
    // Its antisymmetric part is Anti(h2 - g2) - Anti(g1 ⊗ h1).
    let mut l1 = 0.0;
    for i in 0..d {
        let v = h.level1[i] - g.level1[i];
        l1 += v * v;
    }
    let mut frob2 = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            let b = (h.level2[i * d + j] - g.level2[i * d + j])
                - (h.level2[j * d + i] - g.level2[j * d + i]);
            let c = g.level1[i] * h.level1[j] - g.level1[j] * h.level1[i];
            let a = 0.5 * (b - c);
            frob2 += 2.0 * a * a;
        }
    }
    l1.sqrt().max((2.0 * frob2.sqrt()).sqrt())
}
