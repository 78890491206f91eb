//! Run configuration: a single human-editable TOML file, any field
//! overridable from the command line via dotted keys
//! (`--set solver.dt=1e-3`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveError, Trajectory};
use crate::params::{BarrierParams, ExponentConfig, SearchOptions};
use crate::sample::SampleGrid;
use crate::solver::{GridMode, InitialData, Scheme, StepperOptions};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid override `{0}`: expected key=value with a dotted key")]
    BadOverride(String),
    #[error("config field error: {0}")]
    Field(String),
    #[error("curve: {0}")]
    Curve(#[from] CurveError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub exponents: Exponents,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default)]
    pub curve: Curve,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exponents {
    pub n: u32,
    pub p: f64,
    pub lambda: f64,
    pub lambda_prime: f64,
    pub k: f64,
    pub k_prime: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tuning {
    pub k_margin: f64,
    pub c_xi_init: f64,
    pub sigma_init: f64,
    pub a_init: f64,
    pub c_xi: Option<f64>,
    pub sigma: Option<f64>,
    pub a: Option<f64>,
    pub c_xi_budget: u32,
    pub sigma_budget: u32,
    pub a_budget: u32,
    pub residual_margin: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub r_samples: usize,
    pub t_positive_min: f64,
    pub t_max: f64,
    pub t_samples: usize,
}

impl Default for Tuning {
    fn default() -> Self {
        let s = SearchOptions::default();
        Self {
            k_margin: s.k_margin,
            c_xi_init: s.c_xi_init,
            sigma_init: s.sigma_init,
            a_init: s.a_init,
            c_xi: None,
            sigma: None,
            a: None,
            c_xi_budget: s.c_xi_budget,
            sigma_budget: s.sigma_budget,
            a_budget: s.a_budget,
            residual_margin: s.residual_margin,
            r_min: 1e-4,
            r_max: 1e3,
            r_samples: 200,
            t_positive_min: 1e-3,
            t_max: 100.0,
            t_samples: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Curve {
    /// stationary | log_drift | spiral | linear | polyline
    pub kind: String,
    pub origin: Vec<f64>,
    /// Drift amplitude; ignored when `speed_rel` is set.
    pub speed: f64,
    /// Drift amplitude as a fraction of the tuned `C_ξ`.
    pub speed_rel: Option<f64>,
    pub direction: Vec<f64>,
    pub omega: f64,
    pub velocity: Vec<f64>,
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

impl Default for Curve {
    fn default() -> Self {
        Self {
            kind: "stationary".into(),
            origin: vec![0.0, 0.0],
            speed: 0.0,
            speed_rel: None,
            direction: vec![1.0, 0.0],
            omega: 1.0,
            velocity: vec![0.0, 0.0],
            times: Vec::new(),
            points: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub mode: GridMode,
    pub i_min: u32,
    pub i_max: u32,
    pub radial_cells: usize,
    pub angular_cells: usize,
    pub scheme: Scheme,
    pub dt: f64,
    pub epsilon: Option<f64>,
    pub inner_tol: f64,
    pub inner_max_iter: u32,
    pub horizon: f64,
    pub initial_data: InitialData,
    pub snapshot_stride: usize,
}

impl Default for Solver {
    fn default() -> Self {
        let s = StepperOptions::default();
        Self {
            mode: GridMode::Radial,
            i_min: 3,
            i_max: 3,
            radial_cells: 512,
            angular_cells: 64,
            scheme: s.scheme,
            dt: s.dt,
            epsilon: s.epsilon,
            inner_tol: s.inner_tol,
            inner_max_iter: s.inner_max_iter,
            horizon: 1.0,
            initial_data: InitialData::GeometricMean,
            snapshot_stride: s.snapshot_stride,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analysis {
    /// Fit window `[lo, hi]`; empty for the grid's inner decade.
    pub fit_window: Vec<f64>,
    /// Continuity tolerance relative to the initial data scale.
    pub continuity_tol_rel: f64,
    /// Probe spacing for reconstructions; 0 → inner hole radius.
    pub probe_spacing: f64,
    /// Probe half width; 0 → outer radius.
    pub probe_half_width: f64,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            fit_window: Vec::new(),
            continuity_tol_rel: 0.05,
            probe_spacing: 0.0,
            probe_half_width: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub directory: String,
    pub write_csv: bool,
    pub write_binary: bool,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            write_csv: true,
            write_binary: true,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_with_overrides(&text, overrides)
    }

    pub fn from_str_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value: toml::Value = toml::from_str(text)?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        Ok(value.try_into()?)
    }

    pub fn exponent_config(&self) -> ExponentConfig {
        let e = &self.exponents;
        ExponentConfig {
            n: e.n,
            p: e.p,
            lambda: e.lambda,
            lambda_prime: e.lambda_prime,
            k: e.k,
            k_prime: e.k_prime,
        }
    }

    pub fn search_options(&self) -> SearchOptions {
        let t = &self.tuning;
        SearchOptions {
            k_margin: t.k_margin,
            c_xi_init: t.c_xi_init,
            sigma_init: t.sigma_init,
            a_init: t.a_init,
            c_xi_override: t.c_xi,
            sigma_override: t.sigma,
            a_override: t.a,
            c_xi_budget: t.c_xi_budget,
            sigma_budget: t.sigma_budget,
            a_budget: t.a_budget,
            residual_margin: t.residual_margin,
        }
    }

    pub fn sample_grid(&self) -> SampleGrid {
        let t = &self.tuning;
        SampleGrid::new(
            t.r_min,
            t.r_max,
            t.r_samples,
            t.t_positive_min,
            t.t_max,
            t.t_samples,
        )
    }

    pub fn stepper_options(&self) -> StepperOptions {
        let s = &self.solver;
        StepperOptions {
            scheme: s.scheme,
            dt: s.dt,
            epsilon: s.epsilon,
            inner_tol: s.inner_tol,
            inner_max_iter: s.inner_max_iter,
            snapshot_stride: s.snapshot_stride,
        }
    }

    /// Builds the trajectory; drift curves inherit the tuned time scale
    /// `A` and, with `speed_rel`, a fraction of the tuned `C_ξ`.
    pub fn trajectory(&self, params: &BarrierParams) -> Result<Trajectory, ConfigError> {
        let c = &self.curve;
        let speed = match c.speed_rel {
            Some(rel) => rel * params.c_xi,
            None => c.speed,
        };
        let traj = match c.kind.as_str() {
            "stationary" => Trajectory::stationary(c.origin.clone()),
            "log_drift" => {
                Trajectory::log_drift(c.origin.clone(), speed, params.a_time, c.direction.clone())?
            }
            "spiral" => Trajectory::spiral(c.origin.clone(), speed, params.a_time, c.omega)?,
            "linear" => Trajectory::linear(c.origin.clone(), c.velocity.clone())?,
            "polyline" => Trajectory::polyline(c.times.clone(), c.points.clone())?,
            other => {
                return Err(ConfigError::Field(format!(
                    "curve.kind: unknown kind `{other}` (expected stationary, log_drift, spiral, linear or polyline)"
                )))
            }
        };
        Ok(traj)
    }
}

/// Applies one `key.path=value` override onto the parsed document. The
/// value is parsed as TOML, so numbers, booleans, strings and arrays all
/// work.
fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.is_empty() || path.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::BadOverride(spec.to_string()));
    }
    let parsed: toml::Value = toml::from_str(&format!("v = {}", raw.trim()))
        .or_else(|_| toml::from_str(&format!("v = \"{}\"", raw.trim())))
        .map_err(|_| ConfigError::BadOverride(spec.to_string()))?;
    let parsed = parsed["v"].clone();
    let mut cur = doc;
    for part in &path[..path.len() - 1] {
        if !cur.is_table() {
            return Err(ConfigError::BadOverride(spec.to_string()));
        }
        let table = cur.as_table_mut().unwrap();
        cur = table
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    match cur.as_table_mut() {
        Some(table) => {
            table.insert(path[path.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(ConfigError::BadOverride(spec.to_string())),
    }
}

/// The reference configuration shipped with the repository.
pub fn reference_toml() -> &'static str {
    r#"# Reference run: n = 2, p = 4 with the exponent pair (0.5, 0.8).

[exponents]
n = 2
p = 4.0
lambda = 0.5
lambda_prime = 0.8
k = 2.0
k_prime = 1.0

[tuning]
k_margin = 1.05
r_min = 1e-4
r_max = 1e3
r_samples = 200
t_max = 100.0
t_samples = 100

[curve]
kind = "stationary"
origin = [0.0, 0.0]

[solver]
mode = "radial"
i_min = 3
i_max = 3
radial_cells = 512
dt = 0.001953125
horizon = 1.0
initial_data = "geometric_mean"

[output]
directory = "out"
"#
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_config_parses() {
        let cfg = RunConfig::from_str_with_overrides(reference_toml(), &[]).unwrap();
        assert_eq!(cfg.exponents.n, 2);
        assert_eq!(cfg.solver.radial_cells, 512);
        assert_eq!(cfg.tuning.r_samples, 200);
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let cfg = RunConfig::from_str_with_overrides(
            reference_toml(),
            &[
                "solver.dt=0.5".to_string(),
                "tuning.c_xi=0.99".to_string(),
                "curve.kind=log_drift".to_string(),
                "curve.speed_rel=0.5".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.solver.dt, 0.5);
        assert_eq!(cfg.tuning.c_xi, Some(0.99));
        assert_eq!(cfg.curve.kind, "log_drift");
        assert_eq!(cfg.curve.speed_rel, Some(0.5));
    }

    #[test]
    fn missing_field_names_the_field() {
        let err = RunConfig::from_str_with_overrides("[exponents]\nn = 2\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("p"), "diagnostic should name the field: {msg}");
    }

    #[test]
    fn unknown_field_is_rejected_with_location() {
        let bad = format!("{}\n[solver]\nnot_a_field = 1\n", "[exponents]\nn = 2\np = 4.0\nlambda = 0.5\nlambda_prime = 0.8\nk = 2.0\nk_prime = 1.0");
        let err = RunConfig::from_str_with_overrides(&bad, &[]).unwrap_err();
        assert!(err.to_string().contains("not_a_field"));
    }

    #[test]
    fn bad_override_is_rejected() {
        assert!(RunConfig::from_str_with_overrides(reference_toml(), &["nonsense".into()]).is_err());
    }
}
