//! JSON scenario documents and their validation.
//!
//! A scenario names a driver, a diffusion preset `σ`, a drift preset `b`,
//! initial conditions and the settings of each subcommand. Validation
//! errors always start with the offending field.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use roughflow::bounds::{Quantity, SweepVariable};
use roughflow::drift::{self, DriftField, FlowConfig, GrowthMode};
use roughflow::drivers::{io, lift_piecewise_linear, FbmSampler, GaussianDriverSpec, SampledRoughPath};
use roughflow::fields::{self, VectorFields};
use roughflow::rde::SolverConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    /// Fractional Brownian motion (`hurst = 0.5` is Brownian motion) on a
    /// uniform grid of `n` cells over `[0, horizon]`.
    Fbm {
        hurst: f64,
        #[serde(default = "default_grid")]
        n: usize,
        /// Defaults to the state dimension.
        #[serde(default)]
        dim: Option<usize>,
    },
    /// A fixed polyline read from a points CSV (`t,x_1,..,x_d`); relative
    /// paths are resolved against the config file.
    Polyline { file: PathBuf },
}

fn default_grid() -> usize {
    128
}

fn default_scale() -> f64 {
    1.0
}

fn default_seeds() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaConfig {
    /// `zero | constant | sin-scalar | sin-rotation | trig`.
    pub preset: String,
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Row-major `m × d` matrix for `constant`.
    #[serde(default)]
    pub matrix: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftConfig {
    /// `zero | linear | decay | cubic_inward | bounded_inward`.
    pub preset: String,
    /// Row-major `m × m` matrix for `linear`.
    #[serde(default)]
    pub matrix: Option<Vec<f64>>,
    /// Replace the preset's growth constants.
    #[serde(default)]
    pub constants: Option<GrowthMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Linear,
    OneSided,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSettings {
    #[serde(default)]
    pub step_budget: Option<f64>,
    /// Fixed partition level; selected automatically when absent.
    #[serde(default)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpConfig {
    pub eps: Vec<f64>,
    /// Deviation radius `r` of the target set `{sup |Y^ε − y⁰| ≥ r}`.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub sweeps: Vec<SweepConfig>,
    #[serde(default = "default_quantities")]
    pub quantities: Vec<Quantity>,
    /// `|ξ|` for sweeps over other variables; the direction is `xi[0]`.
    #[serde(default = "default_scale")]
    pub xi_norm: f64,
}

fn default_quantities() -> Vec<Quantity> {
    vec![Quantity::Sup, Quantity::PVar]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub driver: DriverConfig,
    pub sigma: SigmaConfig,
    pub drift: DriftConfig,
    /// Initial conditions; all share the state dimension `m`.
    pub xi: Vec<Vec<f64>>,
    /// Time horizon: the fBm horizon, or a truncation of a polyline.
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Variation exponent override for the driver.
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub mode: Option<ModeName>,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub flow: FlowSettings,
    #[serde(default)]
    pub ldp: Option<LdpConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
}

pub enum DriverSource {
    Gaussian(FbmSampler),
    Fixed(Arc<SampledRoughPath>),
}

/// A validated scenario with its fields, drift and driver source built.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub fields: Arc<dyn VectorFields>,
    pub drift: DriftField,
    pub driver: DriverSource,
    pub flow: FlowConfig,
    pub horizon: f64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        if let DriverConfig::Polyline { file } = &mut cfg.driver {
            if file.is_relative() {
                if let Some(dir) = path.parent() {
                    *file = dir.join(&*file);
                }
            }
        }
        Ok(cfg)
    }

    pub fn state_dim(&self) -> usize {
        self.xi.first().map_or(0, Vec::len)
    }

    fn check(&self) -> CliResult<()> {
        let m = self.state_dim();
        if m == 0 {
            return Err(CliError::config("xi: need at least one non-empty initial condition"));
        }
        for (k, x) in self.xi.iter().enumerate() {
            if x.len() != m {
                return Err(CliError::config(format!("xi[{k}]: dimension {} differs from {m}", x.len())));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(CliError::config(format!("xi[{k}]: entries must be finite")));
            }
        }
        if let DriverConfig::Fbm { hurst, n, .. } = &self.driver {
            if !(*hurst > 1.0 / 3.0 && *hurst <= 1.0) {
                return Err(CliError::config(format!("driver.hurst: {hurst} must lie in (1/3, 1]")));
            }
            if *n == 0 {
                return Err(CliError::config("driver.n: must be positive"));
            }
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::config(format!("horizon: {t} must be positive")));
            }
        }
        if let Some(p) = self.p {
            if !(1.0..3.0).contains(&p) {
                return Err(CliError::config(format!("p: {p} must lie in [1, 3)")));
            }
        }
        if !(self.sigma.scale.is_finite()) {
            return Err(CliError::config("sigma.scale: must be finite"));
        }
        if self.seeds == 0 {
            return Err(CliError::config("seeds: must be positive"));
        }
        if let Some(b) = self.flow.step_budget {
            if !(b > 0.0) {
                return Err(CliError::config("flow.step_budget: must be positive"));
            }
        }
        if let Some(d) = self.flow.delta {
            if !(d > 0.0 && d <= 1.0) {
                return Err(CliError::config("flow.delta: must lie in (0, 1]"));
            }
        }
        if let Some(l) = &self.ldp {
            if l.eps.is_empty() || l.eps.iter().any(|e| !(*e > 0.0)) {
                return Err(CliError::config("ldp.eps: need positive values"));
            }
            if !(l.radius >= 0.0) {
                return Err(CliError::config("ldp.radius: must be nonnegative"));
            }
        }
        if let Some(b) = &self.bounds {
            if b.sweeps.is_empty() {
                return Err(CliError::config("bounds.sweeps: need at least one sweep"));
            }
            if b.sweeps.iter().any(|s| s.values.len() < 2) {
                return Err(CliError::config("bounds.sweeps: each sweep needs at least 2 values"));
            }
        }
        Ok(())
    }

    fn build_drift(&self) -> CliResult<DriftField> {
        let m = self.state_dim();
        let mut b = drift::preset(&self.drift.preset, m, self.drift.matrix.clone())
            .map_err(|e| CliError::config(format!("drift.preset: {e}")))?;
        if let Some(c) = self.drift.constants {
            b = b.with_mode(c);
        }
        let natural = if b.mode().is_linear() {
            ModeName::Linear
        } else {
            ModeName::OneSided
        };
        if self.drift.preset == "cubic_inward" && natural != ModeName::OneSided {
            return Err(CliError::config("drift.constants: cubic_inward only admits one_sided constants"));
        }
        if let Some(mode) = self.mode {
            if mode != natural {
                return Err(CliError::config(format!(
                    "mode: {mode:?} is inconsistent with drift '{}', which needs {natural:?}",
                    self.drift.preset
                )));
            }
        }
        Ok(b)
    }

    /// Validate and build everything a subcommand needs.
    pub fn build(self) -> CliResult<Scenario> {
        self.check()?;
        let m = self.state_dim();
        let b = self.build_drift()?;
        let (driver, d, horizon) = match &self.driver {
            DriverConfig::Fbm { hurst, n, dim } => {
                let d = dim.unwrap_or(m);
                let horizon = self.horizon.unwrap_or(1.0);
                let spec = GaussianDriverSpec::new(*hurst, d, *n, horizon, 0)
                    .map_err(|e| CliError::config(format!("driver: {e}")))?;
                (DriverSource::Gaussian(FbmSampler::new(&spec)?), d, horizon)
            }
            DriverConfig::Polyline { file } => {
                let f = std::fs::File::open(file)
                    .map_err(|e| CliError::config(format!("driver.file: {}: {e}", file.display())))?;
                let (times, pts) = io::read_points_csv(f)
                    .map_err(|e| CliError::config(format!("driver.file: {e}")))?;
                let mut x = lift_piecewise_linear(&pts, &times)
                    .map_err(|e| CliError::config(format!("driver.file: {e}")))?;
                if let Some(t) = self.horizon {
                    x = roughflow::bounds::truncate(&x, t)
                        .map_err(|e| CliError::config(format!("horizon: {e}")))?;
                }
                if let Some(p) = self.p {
                    x = x.with_p(p)?;
                }
                let (d, horizon) = (x.dim(), x.horizon());
                (DriverSource::Fixed(Arc::new(x)), d, horizon)
            }
        };
        let sigma = fields::preset(&self.sigma.preset, m, d, self.sigma.scale, self.sigma.matrix.clone())
            .map_err(|e| CliError::config(format!("sigma.preset: {e}")))?;
        let mut flow = FlowConfig {
            delta: self.flow.delta,
            ..FlowConfig::default()
        };
        if let Some(budget) = self.flow.step_budget {
            flow.solver = SolverConfig { step_budget: budget };
        }
        Ok(Scenario {
            fields: Arc::from(sigma),
            drift: b,
            driver,
            flow,
            horizon,
            config: self,
        })
    }
}

impl Scenario {
    pub fn is_gaussian(&self) -> bool {
        matches!(self.driver, DriverSource::Gaussian(_))
    }

    /// `ρ = 1/(2H)` for Gaussian drivers.
    pub fn rho(&self) -> Option<f64> {
        match &self.driver {
            DriverSource::Gaussian(s) => Some(s.spec().rho()),
            DriverSource::Fixed(_) => None,
        }
    }

    /// The driver for replicate `seed`; fixed drivers ignore the seed.
    pub fn driver(&self, seed: u64) -> CliResult<Arc<SampledRoughPath>> {
        match &self.driver {
            DriverSource::Gaussian(s) => {
                let mut x = s.sample_path(seed)?;
                if let Some(p) = self.config.p {
                    x = x.with_p(p)?;
                }
                Ok(Arc::new(x))
            }
            DriverSource::Fixed(x) => Ok(x.clone()),
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        match &self.driver {
            DriverSource::Gaussian(s) => s.times(),
            DriverSource::Fixed(x) => x.times().to_vec(),
        }
    }

    /// Number of independent drivers available for `requested` replicates.
    pub fn replicates(&self, requested: usize) -> usize {
        if self.is_gaussian() {
            requested
        } else {
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "driver": {"kind": "fbm", "hurst": 0.4, "n": 32},
            "sigma": {"preset": "sin-rotation"},
            "drift": {"preset": "cubic_inward"},
            "xi": [[0.5, 0.0]]
        })
    }

    fn build(v: serde_json::Value) -> CliResult<Scenario> {
        ScenarioConfig::from_json(&v.to_string())?.build()
    }

    fn config_message(r: CliResult<Scenario>) -> String {
        match r {
            Err(CliError::Config(m)) => m,
            Err(e) => panic!("expected a config error, got {e}"),
            Ok(_) => panic!("expected a config error"),
        }
    }

    #[test]
    fn minimal_config_builds() {
        let s = build(base()).unwrap();
        assert!(s.is_gaussian());
        assert_eq!(s.rho(), Some(1.25));
        assert_eq!(s.grid().len(), 33);
        assert!(!s.drift.mode().is_linear());
    }

    #[test]
    fn errors_name_the_field() {
        let mut v = base();
        v.as_object_mut().unwrap().remove("driver");
        assert!(config_message(build(v)).contains("driver"));

        let mut v = base();
        v["driver"]["hurst"] = 0.3.into();
        assert!(config_message(build(v)).starts_with("driver.hurst"));

        let mut v = base();
        v["mode"] = "linear".into();
        assert!(config_message(build(v)).starts_with("mode"));

        let mut v = base();
        v["xi"] = serde_json::json!([[1.0, 0.0], [1.0]]);
        assert!(config_message(build(v)).starts_with("xi[1]"));

        let mut v = base();
        v["sigma"]["preset"] = "nope".into();
        assert!(config_message(build(v)).starts_with("sigma.preset"));

        let mut v = base();
        v["drift"]["constants"] = serde_json::json!({"kind": "linear", "kappa1": 1.0, "kappa2": 1.0});
        assert!(config_message(build(v)).starts_with("drift.constants"));

        let mut v = base();
        v["extra"] = 1.into();
        assert!(config_message(build(v)).contains("extra"));
    }

    #[test]
    fn linear_mode_matches_linear_drift() {
        let mut v = base();
        v["drift"]["preset"] = "decay".into();
        v["mode"] = "linear".into();
        assert!(build(v).unwrap().drift.mode().is_linear());
    }
}
