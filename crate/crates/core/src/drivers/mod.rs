//! Driving signals: exact step-2 lifts of polylines, fractional Brownian
//! samplers and dilation.

mod fbm;
pub mod io;
mod path;

pub use fbm::{sample_fbm, FbmSampler, GaussianDriverSpec};
pub use path::{SampledRoughPath, SharedPath};

use crate::error::{Error, Result};
use crate::tensor::GroupElement;

/// Exact step-2 signature of the polyline through `points` at `times`.
///
/// Each linear piece with increment `v` contributes `(v, v⊗v/2)` and pieces
/// are glued with Chen's product. The lifted path has `p_hint = 1`.
pub fn lift_piecewise_linear(points: &[Vec<f64>], times: &[f64]) -> Result<SampledRoughPath> {
    if points.len() < 2 {
        return Err(Error::domain("a polyline needs at least 2 points"));
    }
    if points.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: times.len(),
        });
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::domain("points must have dimension >= 1"));
    }
    let mut values = Vec::with_capacity(points.len());
    let mut current = GroupElement::identity(d);
    values.push(current.clone());
    for w in points.windows(2) {
        if w[1].len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: w[1].len(),
            });
        }
        let v: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        current = current.chen_mul(&GroupElement::segment(&v))?;
        values.push(current.clone());
    }
    SampledRoughPath::new(times.to_vec(), values, 1.0)
}

/// `n + 1` equally spaced times on `[0, horizon]`.
pub fn uniform_grid(n: usize, horizon: f64) -> Vec<f64> {
    (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

/// Scale a driver by `ε`: level 1 by `ε`, level 2 by `ε²`.
pub fn dilate(path: &SampledRoughPath, eps: f64) -> SampledRoughPath {
    path.dilate(eps)
}
