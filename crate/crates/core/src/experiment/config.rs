use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::heavy_tail::GapDistribution;
use crate::limit::LimitResolution;
use crate::walker::WalkSpec;

/// One offending key of a configuration file.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<FieldError>),
}

/// Flat key-value description of an experiment. Every key is optional and
/// defaults to the reference experiment: alpha = 1/2, Pareto gaps with
/// `x_min = 1`, simple symmetric walk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    /// `"pareto"` or `"tabulated:z1=s1,z2=s2,..."` (survival function points).
    pub gap_law: String,
    pub x_min: f64,
    /// `"simple-symmetric"` or `"pmf:-1=0.5,1=0.5"`.
    pub walk: String,
    pub master_seed: u64,
    pub n_trajectories: usize,
    /// Step counts `n` at which walk statistics are recorded.
    pub scales: Vec<usize>,
    /// Physical times at which `X(t)` is recorded.
    pub x_times: Vec<f64>,
    /// Scaling parameter of the rescaled process `X(s q) / q^{1/(alpha+1)}`.
    pub x_bar_q: f64,
    /// Rescaled times `s` for the rescaled process and the composite limit.
    pub s_points: Vec<f64>,
    pub limit_draws: usize,
    /// Times `t` at which `Delta(t)` is recorded.
    pub limit_times: Vec<f64>,
    /// Initial horizon of the Brownian path.
    pub limit_t_max: f64,
    /// Defaults to `1e-5 * limit_t_max`.
    pub limit_dt: Option<f64>,
    /// Defaults to `sqrt(v_xi * limit_t_max) / 50`.
    pub limit_dx: Option<f64>,
    pub calibration_block: usize,
    pub calibration_samples: usize,
    pub calibration_ceiling: f64,
    pub quantile_levels: Vec<f64>,
    pub verify_instances: usize,
    pub verify_steps: usize,
    /// Step budget when simulating up to a physical time.
    pub max_steps: usize,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            gap_law: "pareto".into(),
            x_min: 1.0,
            walk: "simple-symmetric".into(),
            master_seed: 20_240_611,
            n_trajectories: 1000,
            scales: vec![1000, 3162, 10_000, 31_623, 100_000],
            x_times: vec![1e3, 10f64.powf(3.5), 1e4, 10f64.powf(4.5), 1e5],
            x_bar_q: 1e4,
            s_points: vec![1.0],
            limit_draws: 1000,
            limit_times: vec![0.5, 1.0, 2.0],
            limit_t_max: 2.0,
            limit_dt: None,
            limit_dx: None,
            calibration_block: 10_000,
            calibration_samples: 1000,
            calibration_ceiling: 0.05,
            quantile_levels: vec![0.25, 0.5, 0.75],
            verify_instances: 1000,
            verify_steps: 10_000,
            max_steps: 10_000_000,
            output_dir: PathBuf::from("out"),
            workers: 1,
        }
    }
}

fn parse_pairs<K: std::str::FromStr>(body: &str) -> Option<Vec<(K, f64)>> {
    body.split(',')
        .map(|item| {
            let (k, v) = item.split_once('=')?;
            Some((k.trim().parse().ok()?, v.trim().parse().ok()?))
        })
        .collect()
}

fn increasing<T: PartialOrd>(xs: &[T]) -> bool {
    xs.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to toml")
    }

    pub fn gap_distribution(&self) -> crate::Result<GapDistribution> {
        match self.gap_law.trim() {
            "pareto" => GapDistribution::pareto(self.alpha, self.x_min),
            law => {
                let body = law.strip_prefix("tabulated:").ok_or_else(|| crate::Error::InvalidParameter {
                    name: "gap_law",
                    reason: format!("expected \"pareto\" or \"tabulated:z=s,...\", got {law:?}"),
                })?;
                let points = parse_pairs::<f64>(body).ok_or_else(|| crate::Error::InvalidParameter {
                    name: "gap_law",
                    reason: format!("malformed point list {body:?}"),
                })?;
                GapDistribution::tabulated(self.alpha, points)
            }
        }
    }

    pub fn walk_spec(&self) -> crate::Result<WalkSpec> {
        match self.walk.trim() {
            "simple-symmetric" => Ok(WalkSpec::simple_symmetric()),
            walk => {
                let body = walk.strip_prefix("pmf:").ok_or_else(|| crate::Error::InvalidParameter {
                    name: "walk",
                    reason: format!("expected \"simple-symmetric\" or \"pmf:k=p,...\", got {walk:?}"),
                })?;
                let pmf = parse_pairs::<i64>(body).ok_or_else(|| crate::Error::InvalidParameter {
                    name: "walk",
                    reason: format!("malformed pmf {body:?}"),
                })?;
                WalkSpec::new(&pmf)
            }
        }
    }

    /// Resolution of the limit sampler for a walk with increment variance `v_xi`.
    pub fn limit_resolution(&self, v_xi: f64) -> LimitResolution {
        let d = LimitResolution::default_for(v_xi, self.limit_t_max);
        LimitResolution {
            t_max: self.limit_t_max,
            dt: self.limit_dt.unwrap_or(d.dt),
            dx: self.limit_dx.unwrap_or(d.dx),
        }
    }

    /// Checks every key and reports all offending ones at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut bad = |field: &'static str, reason: String| errs.push(FieldError { field, reason });

        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bad("alpha", format!("must lie in (0, 1), got {}", self.alpha));
        } else if let Err(e) = self.gap_distribution() {
            bad("gap_law", e.to_string());
        }
        if !(self.x_min > 0.0 && self.x_min.is_finite()) {
            bad("x_min", format!("must be positive, got {}", self.x_min));
        }
        match self.walk_spec() {
            Ok(spec) if self.alpha > 0.0 && !spec.satisfies_moment_condition(self.alpha) => {
                bad("walk", "increments lack the moment of order > 2/alpha".into())
            }
            Ok(_) => {}
            Err(e) => bad("walk", e.to_string()),
        }
        if self.n_trajectories == 0 {
            bad("n_trajectories", "must be at least 1".into());
        }
        if self.scales.is_empty() || self.scales[0] == 0 || !increasing(&self.scales) {
            bad("scales", "must be a nonempty, strictly increasing list of positive step counts".into());
        }
        if self.x_times.iter().any(|&t| !(t > 0.0 && t.is_finite())) || !increasing(&self.x_times) {
            bad("x_times", "must be strictly increasing positive times".into());
        }
        if !(self.x_bar_q > 0.0 && self.x_bar_q.is_finite()) {
            bad("x_bar_q", format!("must be positive, got {}", self.x_bar_q));
        }
        if self.s_points.iter().any(|&s| !(s >= 0.0 && s.is_finite())) || !increasing(&self.s_points) {
            bad("s_points", "must be strictly increasing nonnegative values".into());
        }
        if self.limit_draws == 0 {
            bad("limit_draws", "must be at least 1".into());
        }
        if self.limit_times.iter().any(|&t| !(t > 0.0 && t.is_finite())) || !increasing(&self.limit_times) {
            bad("limit_times", "must be strictly increasing positive times".into());
        }
        if !(self.limit_t_max > 0.0 && self.limit_t_max.is_finite()) {
            bad("limit_t_max", format!("must be positive, got {}", self.limit_t_max));
        } else if self.limit_times.last().is_some_and(|&t| t > self.limit_t_max) {
            bad("limit_t_max", "must cover every entry of limit_times".into());
        }
        if let Some(dt) = self.limit_dt {
            if !(dt > 0.0 && dt <= self.limit_t_max / 100.0) {
                bad("limit_dt", format!("must lie in (0, limit_t_max / 100], got {dt}"));
            }
        }
        if let Some(dx) = self.limit_dx {
            if !(dx > 0.0 && dx.is_finite()) {
                bad("limit_dx", format!("must be positive, got {dx}"));
            }
        }
        if self.calibration_block < 10_000 {
            bad("calibration_block", "must be at least 10000".into());
        }
        if self.calibration_samples < 1000 {
            bad("calibration_samples", "must be at least 1000".into());
        }
        if !(self.calibration_ceiling > 0.0 && self.calibration_ceiling < 1.0) {
            bad("calibration_ceiling", "must lie in (0, 1)".into());
        }
        if self.quantile_levels.is_empty() || self.quantile_levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            bad("quantile_levels", "must be a nonempty list of levels in (0, 1)".into());
        }
        if self.verify_instances == 0 {
            bad("verify_instances", "must be at least 1".into());
        }
        if self.verify_steps == 0 {
            bad("verify_steps", "must be at least 1".into());
        }
        if self.max_steps == 0 {
            bad("max_steps", "must be at least 1".into());
        }
        if self.output_dir.as_os_str().is_empty() {
            bad("output_dir", "must not be empty".into());
        }
        if self.workers == 0 {
            bad("workers", "must be at least 1".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }
}
