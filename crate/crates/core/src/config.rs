//! TOML run configuration and library presets.
//!
//! A config file has optional `[library]`, `[index]`, `[planner]` and
//! `[simulator]` tables. Anything omitted takes its default; `[library]` may
//! name a `preset` and override individual fields.
//!
//! ```toml
//! [library]
//! radii = [6, 8, 12, 20, 36, 78, "inf"]
//! start_angles = [0, -10, -20, 0, -10, -20, 0]
//! rotation_step = 30
//! length = 5
//! v_max = 3
//! a_max = 6
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Vector2, Vector3};
use serde::Deserialize;
use thiserror::Error;

use crate::collision::{IndexParams, DEFAULT_ROBOT_RADIUS, DEFAULT_VOXEL_SIZE};
use crate::library::LibraryConfig;
use crate::path_library::{PathLibrarySpec, Radius, DEFAULT_PATH_SAMPLES};
use crate::planner::PlannerConfig;
use crate::sim::{default_bounds_box, SimConfig};
use crate::topp::{Bounds, ToppOptions};

/// Inflation added to the query distance unless configured otherwise (m).
pub const DEFAULT_R_INFLATED: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("invalid `{field}`: {message}")]
    Field { field: String, message: String },
}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// r = {8, 20, ∞}: 25 paths.
    Low,
    /// r = {6, 12, 36, ∞}: 37 paths.
    Medium,
    /// r = {6, 8, 12, 20, 36, 78, ∞}: 73 paths.
    High,
    /// Ten radii, 3 m long, 2 m/s: 109 paths.
    RealWorld,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Low, Preset::Medium, Preset::High, Preset::RealWorld];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Low => "low",
            Preset::Medium => "medium",
            Preset::High => "high",
            Preset::RealWorld => "realworld",
        }
    }

    pub fn library_config(self) -> LibraryConfig {
        let (radii, angles, length, v, a): (&[f64], &[f64], f64, f64, f64) = match self {
            Preset::Low => (&[8.0, 20.0], &[-10.0, 0.0], 5.0, 3.0, 6.0),
            Preset::Medium => (&[6.0, 12.0, 36.0], &[0.0, -20.0, -10.0], 5.0, 3.0, 6.0),
            Preset::High => (&[6.0, 8.0, 12.0, 20.0, 36.0, 78.0], &[0.0, -10.0, -20.0, 0.0, -10.0, -20.0], 5.0, 3.0, 6.0),
            Preset::RealWorld => (
                &[2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 20.0, 36.0, 78.0],
                &[0.0, -10.0, -20.0, 0.0, -10.0, -20.0, 0.0, -10.0, -20.0],
                3.0,
                2.0,
                6.0,
            ),
        };
        let mut radii: Vec<Radius> = radii.iter().map(|&r| Radius::Finite(r)).collect();
        radii.push(Radius::Infinite);
        let mut start_angles = angles.to_vec();
        start_angles.push(0.0);
        LibraryConfig {
            paths: PathLibrarySpec { radii, start_angles, rotation_step: 30.0, length },
            path_samples: DEFAULT_PATH_SAMPLES,
            bounds: Bounds::symmetric(v, a),
            speed_step: 0.1,
            topp: ToppOptions::default(),
        }
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| field_err("library.preset", format!("unknown preset {s:?} (expected low, medium, high, realworld)")))
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A radius entry: a number, or `inf` as a string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RadiusValue {
    Number(f64),
    Text(String),
}

/// Radii as an array, or a single comma-separated string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RadiiValue {
    List(Vec<RadiusValue>),
    Text(String),
}

fn parse_radius(text: &str) -> Result<Radius, ConfigError> {
    let t = text.trim();
    if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
        return Ok(Radius::Infinite);
    }
    t.parse::<f64>()
        .map(Radius::from)
        .map_err(|_| field_err("library.radii", format!("{t:?} is neither a number nor `inf`")))
}

impl RadiiValue {
    fn resolve(&self) -> Result<Vec<Radius>, ConfigError> {
        let radii = match self {
            RadiiValue::Text(s) => s.split(',').map(parse_radius).collect::<Result<Vec<_>, _>>()?,
            RadiiValue::List(items) => items
                .iter()
                .map(|v| match v {
                    RadiusValue::Number(r) => Ok(Radius::from(*r)),
                    RadiusValue::Text(s) => parse_radius(s),
                })
                .collect::<Result<Vec<_>, _>>()?,
        };
        for r in &radii {
            if let Radius::Finite(v) = r {
                if !(v.is_finite() && *v > 0.0) {
                    return Err(field_err("library.radii", format!("radius {v} must be > 0")));
                }
            }
        }
        Ok(radii)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibrarySection {
    preset: Option<String>,
    radii: Option<RadiiValue>,
    start_angles: Option<Vec<f64>>,
    rotation_step: Option<f64>,
    length: Option<f64>,
    v_max: Option<f64>,
    a_max: Option<f64>,
    speed_step: Option<f64>,
    stages: Option<usize>,
    sample_step: Option<f64>,
    path_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexSection {
    voxel_size: Option<f64>,
    robot_radius: Option<f64>,
    r_inflated: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlannerSection {
    tick_rate_hz: Option<f64>,
    lambda_goal: Option<f64>,
    lambda_bound: Option<f64>,
    constant_penalty: Option<f64>,
    bounds_min: Option<[f64; 3]>,
    bounds_max: Option<[f64; 3]>,
    eps_v: Option<f64>,
    goal_tolerance: Option<f64>,
    sample_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulatorSection {
    n_obs: Option<usize>,
    extent: Option<[f64; 2]>,
    r_obs_mean: Option<f64>,
    start: Option<[f64; 3]>,
    goal: Option<[f64; 3]>,
    clear_radius: Option<f64>,
    sensor_range: Option<f64>,
    fov_deg: Option<f64>,
    angular_resolution_deg: Option<f64>,
    vertical_half_fov_deg: Option<f64>,
    vertical_resolution_deg: Option<f64>,
    sensor_rate_hz: Option<f64>,
    frames: Option<usize>,
    sim_step: Option<f64>,
    timeout: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    library: Option<LibrarySection>,
    index: Option<IndexSection>,
    planner: Option<PlannerSection>,
    simulator: Option<SimulatorSection>,
}

/// Fully resolved configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub library: LibraryConfig,
    pub index: IndexParams,
    pub planner: PlannerConfig,
    pub sim: SimConfig,
    /// Obstacle count for single episodes.
    pub n_obs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_preset(Preset::High)
    }
}

fn positive(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(field_err(field, format!("{v} must be a finite number > 0")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(field_err(field, format!("{v} must be a finite number >= 0")))
    }
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let sim = SimConfig::default();
        let planner = PlannerConfig::with_box(default_bounds_box(&sim.map));
        Self {
            library: preset.library_config(),
            index: IndexParams::with_robot_radius(DEFAULT_VOXEL_SIZE, DEFAULT_ROBOT_RADIUS, DEFAULT_R_INFLATED),
            planner,
            sim,
            n_obs: 200,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        let lib = file.library.unwrap_or_default();
        let preset = match &lib.preset {
            Some(name) => name.parse()?,
            None => Preset::High,
        };
        let mut cfg = Self::from_preset(preset);
        cfg.apply_library(&lib)?;
        cfg.apply_index(&file.index.unwrap_or_default())?;
        let sim = file.simulator.unwrap_or_default();
        cfg.apply_simulator(&sim)?;
        cfg.planner.bounds_box = default_bounds_box(&cfg.sim.map);
        cfg.apply_planner(&file.planner.unwrap_or_default())?;
        Ok(cfg)
    }

    fn apply_library(&mut self, s: &LibrarySection) -> Result<(), ConfigError> {
        let c = &mut self.library;
        if let Some(r) = &s.radii {
            c.paths.radii = r.resolve()?;
            if s.start_angles.is_none() {
                c.paths.start_angles = vec![0.0; c.paths.radii.len()];
            }
        }
        if let Some(a) = &s.start_angles {
            c.paths.start_angles = a.clone();
        }
        if c.paths.radii.len() != c.paths.start_angles.len() {
            return Err(field_err(
                "library.start_angles",
                format!("{} angles given for {} radii", c.paths.start_angles.len(), c.paths.radii.len()),
            ));
        }
        if let Some(v) = s.rotation_step {
            c.paths.rotation_step = positive("library.rotation_step", v)?;
            let n = 360.0 / v;
            if (n - n.round()).abs() > 1e-9 {
                return Err(field_err("library.rotation_step", format!("{v} does not divide 360")));
            }
        }
        if let Some(v) = s.length {
            c.paths.length = positive("library.length", v)?;
        }
        for r in &c.paths.radii {
            if let Radius::Finite(r) = r {
                if c.paths.length / r >= std::f64::consts::PI {
                    return Err(field_err("library.radii", format!("radius {r} is too small for length {}", c.paths.length)));
                }
            }
        }
        let v = s.v_max.map(|v| non_negative("library.v_max", v)).transpose()?.unwrap_or(c.bounds.v_norm);
        let a = s.a_max.map(|a| positive("library.a_max", a)).transpose()?.unwrap_or(c.bounds.a_max.x);
        c.bounds = Bounds::symmetric(v, a);
        if let Some(v) = s.speed_step {
            c.speed_step = positive("library.speed_step", v)?;
        }
        if let Some(n) = s.stages {
            if n < 2 {
                return Err(field_err("library.stages", "must be >= 2"));
            }
            c.topp.stages = n;
        }
        if let Some(v) = s.sample_step {
            c.topp.sample_step = positive("library.sample_step", v)?;
        }
        if let Some(n) = s.path_samples {
            if n < 2 {
                return Err(field_err("library.path_samples", "must be >= 2"));
            }
            c.path_samples = n;
        }
        Ok(())
    }

    fn apply_index(&mut self, s: &IndexSection) -> Result<(), ConfigError> {
        let voxel = s.voxel_size.map(|v| positive("index.voxel_size", v)).transpose()?.unwrap_or(self.index.voxel_size);
        let robot = s.robot_radius.map(|v| non_negative("index.robot_radius", v)).transpose()?.unwrap_or(DEFAULT_ROBOT_RADIUS);
        let inflated = s.r_inflated.map(|v| non_negative("index.r_inflated", v)).transpose()?.unwrap_or(self.index.r_inflated);
        self.index = IndexParams::with_robot_radius(voxel, robot, inflated);
        self.sim.robot_radius = robot;
        Ok(())
    }

    fn apply_planner(&mut self, s: &PlannerSection) -> Result<(), ConfigError> {
        let p = &mut self.planner;
        if let Some(v) = s.tick_rate_hz {
            p.tick_rate_hz = positive("planner.tick_rate_hz", v)?;
        }
        if let Some(v) = s.lambda_goal {
            p.lambda_goal = non_negative("planner.lambda_goal", v)?;
        }
        if let Some(v) = s.lambda_bound {
            p.lambda_bound = non_negative("planner.lambda_bound", v)?;
        }
        if let Some(v) = s.constant_penalty {
            p.constant_penalty = non_negative("planner.constant_penalty", v)?;
        }
        if let Some(v) = s.bounds_min {
            p.bounds_box.min = vec3(v);
        }
        if let Some(v) = s.bounds_max {
            p.bounds_box.max = vec3(v);
        }
        if p.bounds_box.is_empty() {
            return Err(field_err("planner.bounds_min", "bounds box is empty"));
        }
        if let Some(v) = s.eps_v {
            p.eps_v = non_negative("planner.eps_v", v)?;
        }
        if let Some(v) = s.goal_tolerance {
            p.goal_tolerance = positive("planner.goal_tolerance", v)?;
        }
        if let Some(n) = s.sample_size {
            if n == 0 {
                return Err(field_err("planner.sample_size", "must be > 0"));
            }
            p.sample_size = n;
        }
        Ok(())
    }

    fn apply_simulator(&mut self, s: &SimulatorSection) -> Result<(), ConfigError> {
        let m = &mut self.sim.map;
        if let Some(n) = s.n_obs {
            self.n_obs = n;
        }
        if let Some([x, y]) = s.extent {
            m.extent = Vector2::new(positive("simulator.extent", x)?, positive("simulator.extent", y)?);
        }
        if let Some(v) = s.r_obs_mean {
            m.r_obs_mean = positive("simulator.r_obs_mean", v)?;
        }
        if let Some(v) = s.start {
            m.start = vec3(v);
        }
        if let Some(v) = s.goal {
            m.goal = vec3(v);
        }
        if let Some(v) = s.clear_radius {
            m.clear_radius = non_negative("simulator.clear_radius", v)?;
        }
        let sensor = &mut self.sim.sensor;
        if let Some(v) = s.sensor_range {
            sensor.range = positive("simulator.sensor_range", v)?;
        }
        if let Some(v) = s.fov_deg {
            if !(v > 0.0 && v <= 360.0) {
                return Err(field_err("simulator.fov_deg", format!("{v} must be in (0, 360]")));
            }
            sensor.fov_deg = v;
        }
        if let Some(v) = s.angular_resolution_deg {
            sensor.angular_resolution_deg = positive("simulator.angular_resolution_deg", v)?;
        }
        if let Some(v) = s.vertical_half_fov_deg {
            if !(0.0..90.0).contains(&v) {
                return Err(field_err("simulator.vertical_half_fov_deg", format!("{v} must be in [0, 90)")));
            }
            sensor.vertical_half_fov_deg = v;
        }
        if let Some(v) = s.vertical_resolution_deg {
            sensor.vertical_resolution_deg = positive("simulator.vertical_resolution_deg", v)?;
        }
        if let Some(v) = s.sensor_rate_hz {
            sensor.rate_hz = positive("simulator.sensor_rate_hz", v)?;
        }
        if let Some(n) = s.frames {
            if n == 0 {
                return Err(field_err("simulator.frames", "must be > 0"));
            }
            self.sim.frames = n;
        }
        if let Some(v) = s.sim_step {
            self.sim.sim_step = positive("simulator.sim_step", v)?;
        }
        if let Some(v) = s.timeout {
            self.sim.timeout = positive("simulator.timeout", v)?;
        }
        Ok(())
    }
}
