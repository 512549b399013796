//! Forward-facing range sensor over vertical cylinders.

use nalgebra::{Vector2, Vector3};

use super::map::WorldMap;
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    pub range: f64,
    /// Full horizontal field of view, degrees.
    pub fov_deg: f64,
    pub angular_resolution_deg: f64,
    /// Half vertical field of view, degrees.
    pub vertical_half_fov_deg: f64,
    pub vertical_resolution_deg: f64,
    pub rate_hz: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            range: 5.0,
            fov_deg: 180.0,
            angular_resolution_deg: 1.0,
            vertical_half_fov_deg: 30.0,
            vertical_resolution_deg: 2.0,
            rate_hz: 30.0,
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.range > 0.0
            && self.fov_deg > 0.0
            && self.fov_deg <= 360.0
            && self.angular_resolution_deg > 0.0
            && (0.0..90.0).contains(&self.vertical_half_fov_deg)
            && self.vertical_resolution_deg > 0.0
            && self.rate_hz > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::Config("sensor parameters out of range".into()))
        }
    }

    fn angles(half: f64, step: f64) -> Vec<f64> {
        let n = (2.0 * half / step + 1e-9).floor() as usize;
        (0..=n).map(|k| (-half + k as f64 * step).to_radians()).collect()
    }
}

/// Distance along a horizontal ray to the first cylinder surface, if any.
fn cast_2d(origin: &Vector2<f64>, dir: &Vector2<f64>, nearby: &[(Vector2<f64>, f64)]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (center, radius) in nearby {
        let f = origin - center;
        let b = f.dot(dir);
        let disc = b * b - (f.norm_squared() - radius * radius);
        if disc < 0.0 {
            continue;
        }
        let t = -b - disc.sqrt();
        if t >= 0.0 && best.is_none_or(|bt| t < bt) {
            best = Some(t);
        }
    }
    best
}

/// Ray-cast points on visible cylinder surfaces, in the world frame.
///
/// Rays fan out around the horizontal projection of `heading`. Obstacles are
/// vertical and unbounded, so each horizontal hit is lifted to every elevation
/// whose slant range stays inside the sensor range.
pub fn sense(pose: &Vector3<f64>, heading: &Vector3<f64>, map: &WorldMap, spec: &SensorSpec) -> Vec<Vector3<f64>> {
    let h = heading.xy();
    let yaw = if h.norm() > 1e-12 { h.y.atan2(h.x) } else { 0.0 };
    let origin = pose.xy();
    let nearby: Vec<(Vector2<f64>, f64)> = map
        .obstacles
        .iter()
        .filter(|c| (c.center - origin).norm() <= spec.range + c.radius)
        .map(|c| (c.center, c.radius))
        .collect();
    if nearby.is_empty() {
        return Vec::new();
    }
    let elevations = SensorSpec::angles(spec.vertical_half_fov_deg, spec.vertical_resolution_deg);
    let mut points = Vec::new();
    for az in SensorSpec::angles(spec.fov_deg / 2.0, spec.angular_resolution_deg) {
        let dir = Vector2::new((yaw + az).cos(), (yaw + az).sin());
        let Some(t) = cast_2d(&origin, &dir, &nearby) else { continue };
        if t > spec.range {
            continue;
        }
        let hit = origin + dir * t;
        for &el in &elevations {
            if t / el.cos() <= spec.range {
                points.push(Vector3::new(hit.x, hit.y, pose.z + t * el.tan()));
            }
        }
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::map::{Cylinder, MapSpec};

    fn world(obstacles: Vec<Cylinder>) -> WorldMap {
        WorldMap { spec: MapSpec::default(), obstacles, seed: 0 }
    }

    fn cyl(x: f64, y: f64, r: f64) -> Cylinder {
        Cylinder { center: Vector2::new(x, y), radius: r, height: f64::INFINITY }
    }

    #[test]
    fn nothing_in_range() {
        let m = world(vec![cyl(20.0, 0.0, 0.6)]);
        assert!(sense(&Vector3::new(0.0, 0.0, 1.0), &Vector3::x(), &m, &SensorSpec::default()).is_empty());
    }

    #[test]
    fn points_on_surface() {
        let m = world(vec![cyl(3.6, 0.0, 0.6)]);
        let pts = sense(&Vector3::new(0.0, 0.0, 1.0), &Vector3::x(), &m, &SensorSpec::default());
        assert!(!pts.is_empty());
        for p in &pts {
            assert!(((p.xy() - Vector2::new(3.6, 0.0)).norm() - 0.6).abs() < 1e-6);
            assert!((p - Vector3::new(0.0, 0.0, 1.0)).norm() <= 5.0 + 1e-9);
        }
    }

    #[test]
    fn behind_not_sensed() {
        let m = world(vec![cyl(-3.0, 0.0, 0.6)]);
        assert!(sense(&Vector3::new(0.0, 0.0, 1.0), &Vector3::x(), &m, &SensorSpec::default()).is_empty());
        assert!(!sense(&Vector3::new(0.0, 0.0, 1.0), &-Vector3::x(), &m, &SensorSpec::default()).is_empty());
    }

    #[test]
    fn occlusion() {
        let m = world(vec![cyl(2.0, 0.0, 0.6), cyl(4.0, 0.0, 0.3)]);
        let pts = sense(&Vector3::new(0.0, 0.0, 1.0), &Vector3::x(), &m, &SensorSpec::default());
        assert!(pts.iter().all(|p| (p.xy() - Vector2::new(4.0, 0.0)).norm() > 0.3 + 1e-6));
    }
}
