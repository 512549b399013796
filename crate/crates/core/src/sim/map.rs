//! Random cylinder forests.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;

const MAX_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cylinder {
    pub center: Vector2<f64>,
    pub radius: f64,
    /// Infinite for collision purposes; kept for reporting.
    pub height: f64,
}

impl Cylinder {
    /// Horizontal distance from `p` to the axis.
    pub fn axis_distance(&self, p: &Vector3<f64>) -> f64 {
        (p.xy() - self.center).norm()
    }
}

/// Map generation parameters. The obstacle field is centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSpec {
    pub extent: Vector2<f64>,
    pub r_obs_mean: f64,
    pub start: Vector3<f64>,
    pub goal: Vector3<f64>,
    /// Radius of the obstacle-free disks around start and goal.
    pub clear_radius: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            extent: Vector2::new(26.0, 20.0),
            r_obs_mean: 0.6,
            start: Vector3::new(-18.0, -9.0, 1.0),
            goal: Vector3::new(18.0, 9.0, 1.0),
            clear_radius: 1.0,
        }
    }
}

impl MapSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.extent.x > 0.0 && self.extent.y > 0.0 && self.r_obs_mean > 0.0 && self.clear_radius >= 0.0) {
            return Err(SimError::Config("map extent, r_obs_mean must be > 0 and clear_radius >= 0".into()));
        }
        if !(self.start.iter().chain(self.goal.iter()).all(|v| v.is_finite())) {
            return Err(SimError::Config("start and goal must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    pub spec: MapSpec,
    pub obstacles: Vec<Cylinder>,
    pub seed: u64,
}

impl WorldMap {
    pub fn half_extent(&self) -> Vector2<f64> {
        self.spec.extent / 2.0
    }

    /// Smallest clearance `axis distance − radius` over all obstacles.
    pub fn clearance(&self, p: &Vector3<f64>) -> f64 {
        self.obstacles.iter().map(|c| c.axis_distance(p) - c.radius).fold(f64::INFINITY, f64::min)
    }

    pub fn collides(&self, p: &Vector3<f64>, robot_radius: f64) -> bool {
        self.obstacles.iter().any(|c| c.axis_distance(p) < c.radius + robot_radius)
    }
}

/// Uniform centers inside the extent, radii uniform in [0.8, 1.2]·r_obs_mean.
/// Obstacles touching the start or goal disk are redrawn.
pub fn generate_map(seed: u64, n_obs: usize, spec: &MapSpec) -> Result<WorldMap, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = spec.extent / 2.0;
    let mut obstacles = Vec::with_capacity(n_obs);
    for _ in 0..n_obs {
        let mut placed = None;
        for _ in 0..MAX_REDRAWS {
            let center = Vector2::new(rng.random_range(-half.x..=half.x), rng.random_range(-half.y..=half.y));
            let radius = spec.r_obs_mean * rng.random_range(0.8..=1.2);
            let clear = |p: &Vector3<f64>| (p.xy() - center).norm() >= radius + spec.clear_radius;
            if clear(&spec.start) && clear(&spec.goal) {
                placed = Some(Cylinder { center, radius, height: f64::INFINITY });
                break;
            }
        }
        obstacles.push(placed.ok_or(SimError::Overcrowded { placed: obstacles.len(), requested: n_obs })?);
    }
    Ok(WorldMap { spec: *spec, obstacles, seed })
}
