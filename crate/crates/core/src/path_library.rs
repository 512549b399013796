//! Geometric path library: fixed-length arcs tangent to the local x-axis,
//! swept around that axis at evenly spaced roll angles.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Rotation3, Vector3};
use thiserror::Error;

/// Number of geometric samples per path (1000 intervals).
pub const DEFAULT_PATH_SAMPLES: usize = 1001;

/// Two paths whose end points are closer than this are considered duplicates.
pub const DUPLICATE_END_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("invalid arc: {0}")]
    InvalidArc(String),
    #[error("path needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("duplicate path: radius {radius} at roll {roll_a}° and {roll_b}° end at the same point")]
    Duplicate { radius: Radius, roll_a: f64, roll_b: f64 },
}

/// Arc radius; `Infinite` denotes the straight segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Finite(f64),
    Infinite,
}

impl Radius {
    pub fn curvature(self) -> f64 {
        match self {
            Radius::Finite(r) => 1.0 / r,
            Radius::Infinite => 0.0,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Radius::Infinite)
    }
}

impl fmt::Display for Radius {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Radius::Finite(r) => write!(f, "{r}"),
            Radius::Infinite => f.write_str("inf"),
        }
    }
}

impl From<f64> for Radius {
    fn from(r: f64) -> Self {
        if r.is_infinite() {
            Radius::Infinite
        } else {
            Radius::Finite(r)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcSpec {
    pub radius: Radius,
    /// Arc length in meters.
    pub length: f64,
    /// Roll offset in degrees applied before the sweep.
    pub start_angle: f64,
    /// Sweep increment in degrees; must divide 360.
    pub rotation_step: f64,
}

impl ArcSpec {
    pub fn validate(&self) -> Result<(), PathError> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(PathError::InvalidArc(format!("length must be > 0, got {}", self.length)));
        }
        if let Radius::Finite(r) = self.radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(PathError::InvalidArc(format!("radius must be > 0, got {r}")));
            }
            if self.length / r >= PI {
                return Err(PathError::InvalidArc(format!(
                    "arc of length {} on radius {r} subtends at least a half circle",
                    self.length
                )));
            }
        }
        if !self.start_angle.is_finite() {
            return Err(PathError::InvalidArc("start angle must be finite".into()));
        }
        sweep_count(self.rotation_step)?;
        Ok(())
    }
}

/// Number of roll positions for a sweep step, or an error if the step does not divide 360°.
pub fn sweep_count(rotation_step: f64) -> Result<usize, PathError> {
    if !(rotation_step.is_finite() && rotation_step > 0.0) {
        return Err(PathError::InvalidArc(format!("rotation step must be > 0, got {rotation_step}")));
    }
    let n = 360.0 / rotation_step;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-9 {
        return Err(PathError::InvalidArc(format!("rotation step {rotation_step}° does not divide 360°")));
    }
    Ok(rounded as usize)
}

/// One sample of a geometric path: parameter `s`, position and its first two derivatives in `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub q: Vector3<f64>,
    pub dq: Vector3<f64>,
    pub ddq: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeometricPath {
    pub id: usize,
    pub arc: ArcSpec,
    /// Total roll about the x-axis in degrees (start angle plus sweep offset).
    pub roll: f64,
    pub samples: Vec<PathSample>,
}

impl GeometricPath {
    pub fn end_point(&self) -> Vector3<f64> {
        self.samples.last().expect("path has samples").q
    }

    /// Length of the sampled polyline.
    pub fn polyline_length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].q - w[0].q).norm()).sum()
    }

    /// Analytic evaluation of the path at parameter `s` in [0, 1].
    pub fn eval(&self, s: f64) -> PathSample {
        eval_arc(&self.arc, self.roll, s)
    }
}

fn eval_arc(arc: &ArcSpec, roll_deg: f64, u: f64) -> PathSample {
    let l = arc.length;
    let (q, dq, ddq) = match arc.radius {
        Radius::Infinite => (
            Vector3::new(l * u, 0.0, 0.0),
            Vector3::new(l, 0.0, 0.0),
            Vector3::zeros(),
        ),
        Radius::Finite(r) => {
            let phi = u * l / r;
            let (sin, cos) = phi.sin_cos();
            (
                Vector3::new(r * sin, r * (1.0 - cos), 0.0),
                Vector3::new(l * cos, l * sin, 0.0),
                Vector3::new(-l * l / r * sin, l * l / r * cos, 0.0),
            )
        }
    };
    let rot = Rotation3::from_axis_angle(&Vector3::x_axis(), roll_deg.to_radians());
    PathSample { s: u, q: rot * q, dq: rot * dq, ddq: rot * ddq }
}

/// Samples an arc (or the straight segment) rolled about the x-axis by `start_angle + roll`.
pub fn generate_arc(spec: &ArcSpec, roll: f64, n_samples: usize) -> Result<GeometricPath, PathError> {
    spec.validate()?;
    if n_samples < 2 {
        return Err(PathError::TooFewSamples(n_samples));
    }
    if !roll.is_finite() {
        return Err(PathError::InvalidArc("roll must be finite".into()));
    }
    let total_roll = spec.start_angle + roll;
    let last = (n_samples - 1) as f64;
    let samples = (0..n_samples)
        .map(|i| {
            // Exact endpoints so s_0 = 0 and s_N = 1 bit-for-bit.
            let u = if i == n_samples - 1 { 1.0 } else { i as f64 / last };
            eval_arc(spec, total_roll, u)
        })
        .collect();
    Ok(GeometricPath { id: 0, arc: *spec, roll: total_roll, samples })
}

/// Radii, start angles, sweep step and arc length describing a path library.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLibrarySpec {
    pub radii: Vec<Radius>,
    pub start_angles: Vec<f64>,
    pub rotation_step: f64,
    pub length: f64,
}

impl PathLibrarySpec {
    /// Expected number of paths: one sweep per finite radius, one straight path.
    pub fn expected_count(&self) -> Result<usize, PathError> {
        let sweep = sweep_count(self.rotation_step)?;
        let finite = self.radii.iter().filter(|r| !r.is_infinite()).count();
        let straight = usize::from(self.radii.iter().any(|r| r.is_infinite()));
        Ok(finite * sweep + straight)
    }
}

/// Builds the full path library, ids dense from 0 in (radius, roll) order.
pub fn build_path_library(spec: &PathLibrarySpec, n_samples: usize) -> Result<Vec<GeometricPath>, PathError> {
    if spec.radii.len() != spec.start_angles.len() {
        return Err(PathError::Config(format!(
            "{} radii but {} start angles",
            spec.radii.len(),
            spec.start_angles.len()
        )));
    }
    if spec.radii.is_empty() {
        return Err(PathError::Config("no radii given".into()));
    }
    if spec.radii.iter().filter(|r| r.is_infinite()).count() > 1 {
        return Err(PathError::Config("more than one infinite radius".into()));
    }
    let sweep = sweep_count(spec.rotation_step)?;

    let mut paths: Vec<GeometricPath> = Vec::with_capacity(spec.expected_count()?);
    for (&radius, &start_angle) in spec.radii.iter().zip(&spec.start_angles) {
        let arc = ArcSpec { radius, length: spec.length, start_angle, rotation_step: spec.rotation_step };
        if radius.is_infinite() {
            // A straight segment is invariant under roll; angles are ignored.
            let arc = ArcSpec { start_angle: 0.0, ..arc };
            paths.push(generate_arc(&arc, 0.0, n_samples)?);
            continue;
        }
        for k in 0..sweep {
            paths.push(generate_arc(&arc, k as f64 * spec.rotation_step, n_samples)?);
        }
    }

    for i in 0..paths.len() {
        for j in 0..i {
            let same_radius = paths[i].arc.radius == paths[j].arc.radius;
            if same_radius && (paths[i].end_point() - paths[j].end_point()).norm() < DUPLICATE_END_TOLERANCE {
                return Err(PathError::Duplicate {
                    radius: paths[i].arc.radius,
                    roll_a: paths[j].roll,
                    roll_b: paths[i].roll,
                });
            }
        }
    }
    for (id, p) in paths.iter_mut().enumerate() {
        p.id = id;
    }
    Ok(paths)
}
