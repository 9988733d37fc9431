//! Diffusion vector fields `σ = (σ_1, …, σ_d)` on `R^m`.
//!
//! Storage conventions (row-major):
//! * `eval`:     `out[i*d + k]           = σ_k(y)_i`
//! * `jacobian`: `out[(i*d + k)*m + j]   = ∂_j σ_k(y)_i`
//! * `hessian`:  `out[((i*d + k)*m + j)*m + l] = ∂_j ∂_l σ_k(y)_i`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub trait VectorFields: Send + Sync {
    /// State dimension `m`.
    fn state_dim(&self) -> usize;
    /// Driver dimension `d`.
    fn noise_dim(&self) -> usize;
    fn eval(&self, y: &[f64], out: &mut [f64]);
    fn jacobian(&self, y: &[f64], out: &mut [f64]);
    /// Second derivatives; returns `false` when not available, in which case
    /// the solver falls back to finite differences.
    fn hessian(&self, _y: &[f64], _out: &mut [f64]) -> bool {
        false
    }
    /// Declared bound `ν ≥ |σ|_{Lip^γ}`.
    fn nu(&self) -> f64;
    fn gamma(&self) -> f64 {
        3.0
    }
}

/// Sample `probes` points uniformly in the box `[-radius, radius]^m` and check
/// `|σ_k(y)| ≤ ν` and `|Dσ_k(y)|_F ≤ ν` for every `k`.
pub fn check_nu(fields: &dyn VectorFields, radius: f64, probes: usize, seed: u64) -> Result<()> {
    let m = fields.state_dim();
    let d = fields.noise_dim();
    let nu = fields.nu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = vec![0.0; m * d];
    let mut j = vec![0.0; m * d * m];
    let slack = 1e-12 * (1.0 + nu);
    for _ in 0..probes {
        let y: Vec<f64> = (0..m).map(|_| rng.random_range(-radius..=radius)).collect();
        fields.eval(&y, &mut s);
        fields.jacobian(&y, &mut j);
        for k in 0..d {
            let val: f64 = (0..m).map(|i| s[i * d + k].powi(2)).sum::<f64>().sqrt();
            let der: f64 = (0..m)
                .flat_map(|i| (0..m).map(move |jj| (i, jj)))
                .map(|(i, jj)| j[(i * d + k) * m + jj].powi(2))
                .sum::<f64>()
                .sqrt();
            if val > nu + slack || der > nu + slack {
                return Err(Error::Config(format!(
                    "declared nu = {nu} is below the sampled bound at y = {y:?} (|σ_{k}| = {val}, |Dσ_{k}| = {der})"
                )));
            }
        }
    }
    Ok(())
}

/// `σ ≡ 0`.
#[derive(Debug, Clone)]
pub struct ZeroFields {
    pub m: usize,
    pub d: usize,
}

impl VectorFields for ZeroFields {
    fn state_dim(&self) -> usize {
        self.m
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn eval(&self, _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _y: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn nu(&self) -> f64 {
        0.0
    }
}

/// Constant fields `σ(y) = M` (additive noise).
#[derive(Debug, Clone)]
pub struct ConstantFields {
    m: usize,
    d: usize,
    matrix: Vec<f64>,
    nu: f64,
}

impl ConstantFields {
    /// `matrix` is `m × d` row-major.
    pub fn new(m: usize, d: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                got: matrix.len(),
            });
        }
        let nu = (0..d)
            .map(|k| (0..m).map(|i| matrix[i * d + k].powi(2)).sum::<f64>().sqrt())
            .fold(0.0_f64, f64::max);
        Ok(ConstantFields { m, d, matrix, nu })
    }
}

impl VectorFields for ConstantFields {
    fn state_dim(&self) -> usize {
        self.m
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn eval(&self, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.matrix);
    }
    fn jacobian(&self, _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _y: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        true
    }
    fn nu(&self) -> f64 {
        self.nu
    }
}

/// Scalar field `σ(y) = a + b sin(y)` with `m = d = 1`.
#[derive(Debug, Clone)]
pub struct SinScalar {
    pub offset: f64,
    pub amplitude: f64,
}

impl Default for SinScalar {
    fn default() -> Self {
        SinScalar {
            offset: 2.0,
            amplitude: 1.0,
        }
    }
}

impl VectorFields for SinScalar {
    fn state_dim(&self) -> usize {
        1
    }
    fn noise_dim(&self) -> usize {
        1
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.offset + self.amplitude * y[0].sin();
    }
    fn jacobian(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.amplitude * y[0].cos();
    }
    fn hessian(&self, y: &[f64], out: &mut [f64]) -> bool {
        out[0] = -self.amplitude * y[0].sin();
        true
    }
    fn nu(&self) -> f64 {
        self.offset.abs() + self.amplitude.abs()
    }
}

/// Componentwise trigonometric fields
/// `σ_k(y)_i = s · cos(y_{(i+k+1) mod m} + φ_{ik})`, `φ_{ik} = (i·d + k)·π/4`.
///
/// Bounded with all derivatives bounded by `s·√m`. For `m = d = 2` this is
/// the `sin-rotation` preset.
#[derive(Debug, Clone)]
pub struct TrigFields {
    m: usize,
    d: usize,
    scale: f64,
}

impl TrigFields {
    pub fn new(m: usize, d: usize, scale: f64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::domain("trig fields need m, d >= 1"));
        }
        Ok(TrigFields { m, d, scale })
    }

    pub fn sin_rotation(scale: f64) -> Self {
        TrigFields { m: 2, d: 2, scale }
    }

    fn arg_index(&self, i: usize, k: usize) -> usize {
        (i + k + 1) % self.m
    }

    fn phase(&self, i: usize, k: usize) -> f64 {
        (i * self.d + k) as f64 * std::f64::consts::FRAC_PI_4
    }
}

impl VectorFields for TrigFields {
    fn state_dim(&self) -> usize {
        self.m
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        for i in 0..self.m {
            for k in 0..self.d {
                let a = y[self.arg_index(i, k)] + self.phase(i, k);
                out[i * self.d + k] = self.scale * a.cos();
            }
        }
    }
    fn jacobian(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let m = self.m;
        for i in 0..m {
            for k in 0..self.d {
                let j = self.arg_index(i, k);
                let a = y[j] + self.phase(i, k);
                out[(i * self.d + k) * m + j] = -self.scale * a.sin();
            }
        }
    }
    fn hessian(&self, y: &[f64], out: &mut [f64]) -> bool {
        out.fill(0.0);
        let m = self.m;
        for i in 0..m {
            for k in 0..self.d {
                let j = self.arg_index(i, k);
                let a = y[j] + self.phase(i, k);
                out[((i * self.d + k) * m + j) * m + j] = -self.scale * a.cos();
            }
        }
        true
    }
    fn nu(&self) -> f64 {
        self.scale.abs() * (self.m as f64).sqrt()
    }
}

/// Build a named preset. Recognized names: `zero`, `constant`, `sin-scalar`,
/// `sin-rotation`, `trig`.
pub fn preset(
    name: &str,
    m: usize,
    d: usize,
    scale: f64,
    matrix: Option<Vec<f64>>,
) -> Result<Box<dyn VectorFields>> {
    let fields: Box<dyn VectorFields> = match name {
        "zero" => Box::new(ZeroFields { m, d }),
        "constant" => {
            let mat = matrix.unwrap_or_else(|| {
                (0..m * d)
                    .map(|idx| if idx / d == idx % d { scale } else { 0.0 })
                    .collect()
            });
            Box::new(ConstantFields::new(m, d, mat)?)
        }
        "sin-scalar" => {
            if m != 1 || d != 1 {
                return Err(Error::Config("sin-scalar needs m = d = 1".into()));
            }
            Box::new(SinScalar {
                offset: 2.0 * scale,
                amplitude: scale,
            })
        }
        "sin-rotation" => {
            if m != 2 || d != 2 {
                return Err(Error::Config("sin-rotation needs m = d = 2".into()));
            }
            Box::new(TrigFields::sin_rotation(scale))
        }
        "trig" => Box::new(TrigFields::new(m, d, scale)?),
        other => return Err(Error::Config(format!("unknown sigma preset '{other}'"))),
    };
    check_nu(fields.as_ref(), 10.0, 1000, 0)?;
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: &dyn VectorFields) {
        let m = f.state_dim();
        let d = f.noise_dim();
        let y: Vec<f64> = (0..m).map(|i| 0.3 + 0.7 * i as f64).collect();
        let mut jac = vec![0.0; m * d * m];
        f.jacobian(&y, &mut jac);
        let mut hess = vec![0.0; m * d * m * m];
        assert!(f.hessian(&y, &mut hess));
        let h = 1e-6;
        for j in 0..m {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[j] += h;
            ym[j] -= h;
            let mut sp = vec![0.0; m * d];
            let mut sm = vec![0.0; m * d];
            f.eval(&yp, &mut sp);
            f.eval(&ym, &mut sm);
            let mut jp = vec![0.0; m * d * m];
            let mut jm = vec![0.0; m * d * m];
            f.jacobian(&yp, &mut jp);
            f.jacobian(&ym, &mut jm);
            for ik in 0..m * d {
                let fd = (sp[ik] - sm[ik]) / (2.0 * h);
                assert!((fd - jac[ik * m + j]).abs() < 1e-8);
                for l in 0..m {
                    let fd2 = (jp[ik * m + l] - jm[ik * m + l]) / (2.0 * h);
                    assert!((fd2 - hess[(ik * m + l) * m + j]).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(&SinScalar::default());
        fd_check(&TrigFields::sin_rotation(1.0));
        fd_check(&TrigFields::new(3, 2, 0.7).unwrap());
    }

    #[test]
    fn presets_pass_their_bounds() {
        for (name, m, d) in [("zero", 2, 3), ("constant", 2, 2), ("sin-scalar", 1, 1), ("sin-rotation", 2, 2), ("trig", 3, 2)] {
            preset(name, m, d, 1.0, None).unwrap();
        }
        assert!(preset("sin-rotation", 3, 2, 1.0, None).is_err());
        assert!(preset("nope", 1, 1, 1.0, None).is_err());
    }

    #[test]
    fn understated_nu_is_caught() {
        struct Liar;
        impl VectorFields for Liar {
            fn state_dim(&self) -> usize {
                1
            }
            fn noise_dim(&self) -> usize {
                1
            }
            fn eval(&self, y: &[f64], out: &mut [f64]) {
                out[0] = 2.0 + y[0].sin();
            }
            fn jacobian(&self, y: &[f64], out: &mut [f64]) {
                out[0] = y[0].cos();
            }
            fn nu(&self) -> f64 {
                1.0
            }
        }
        assert!(check_nu(&Liar, 5.0, 1000, 1).is_err());
    }
}
