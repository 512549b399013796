//! Receding-horizon primitive selection.
//!
//! Every tick the sensed points are moved into the velocity frame {V}
//! (x-axis along the current velocity, origin at the current position), the
//! primitives of the current speed slice are collision-checked, and the
//! cheapest safe one is mapped back to the world frame. Because all
//! primitives leave the origin tangent to +x, the new trajectory continues
//! the current velocity direction.

use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::collision::{check, CollisionIndex, IndexError, SafetyMask};
use crate::library::PrimitiveLibrary;
use crate::topp::{sample_times, Trajectory, TrajectoryKnot};

/// Speeds below this are treated as hovering (m/s).
pub const DEFAULT_EPS_V: f64 = 0.05;

/// Path id carried by emergency-stop trajectories.
pub const EMERGENCY_PATH_ID: usize = usize::MAX;

const VERTICAL_COS: f64 = 0.999_847_695_156_391_2; // cos(1°)
const COST_TIE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no heading: goal coincides with the current position while hovering")]
    NoHeading,
    #[error("speed slice {0} has no primitives")]
    EmptySlice(usize),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("invalid planner config: {0}")]
    Config(String),
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|j| self.min[j] <= p[j] && p[j] <= self.max[j])
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|j| !(self.min[j] <= self.max[j]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    pub tick_rate_hz: f64,
    pub lambda_goal: f64,
    pub lambda_bound: f64,
    pub constant_penalty: f64,
    pub bounds_box: Aabb,
    pub eps_v: f64,
    pub goal_tolerance: f64,
    /// Fixed number of points sampled for each collision check.
    pub sample_size: usize,
    /// Spacing of the hover heading grid, anchored at the goal direction (degrees).
    pub hover_yaw_step_deg: f64,
    /// Hover headings farther than this from the current yaw are not tried,
    /// since the sensor has not looked there (degrees).
    pub hover_span_deg: f64,
    /// Yaw turned in place when nothing is safe while hovering (degrees).
    pub scan_step_deg: f64,
    /// Points closer than this to the vehicle are dropped before checking.
    /// Every primitive starts at the vehicle, so such a point would veto all
    /// of them and pin the vehicle in place.
    pub self_radius: f64,
}

impl PlannerConfig {
    pub fn with_box(bounds_box: Aabb) -> Self {
        Self {
            tick_rate_hz: 10.0,
            lambda_goal: 1.0,
            lambda_bound: 1.0,
            constant_penalty: 100.0,
            bounds_box,
            eps_v: DEFAULT_EPS_V,
            goal_tolerance: 0.5,
            sample_size: crate::point_cloud::DEFAULT_SAMPLE_SIZE,
            hover_yaw_step_deg: 30.0,
            hover_span_deg: 45.0,
            scan_step_deg: 60.0,
            self_radius: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        let err = |m: &str| Err(PlannerError::Config(m.to_string()));
        if !(self.tick_rate_hz.is_finite() && self.tick_rate_hz > 0.0) {
            return err("tick_rate_hz must be > 0");
        }
        if !(self.lambda_goal >= 0.0 && self.lambda_bound >= 0.0 && self.constant_penalty >= 0.0) {
            return err("weights must be >= 0");
        }
        if self.bounds_box.is_empty() {
            return err("bounds box is empty");
        }
        if !(self.self_radius >= 0.0) {
            return err("self_radius must be >= 0");
        }
        if !(self.eps_v >= 0.0 && self.goal_tolerance > 0.0) {
            return err("eps_v must be >= 0 and goal_tolerance > 0");
        }
        if self.sample_size == 0 {
            return err("sample_size must be > 0");
        }
        if !(self.hover_yaw_step_deg > 0.0 && self.hover_span_deg >= 0.0 && self.scan_step_deg.is_finite()) {
            return err("hover_yaw_step_deg must be > 0 and hover_span_deg >= 0");
        }
        Ok(())
    }

    pub fn tick_period(&self) -> f64 {
        1.0 / self.tick_rate_hz
    }
}

/// Rigid transform from {V} to {W}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityFrame {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl VelocityFrame {
    pub fn x_axis(&self) -> Vector3<f64> {
        self.rotation.column(0).into()
    }

    pub fn y_axis(&self) -> Vector3<f64> {
        self.rotation.column(1).into()
    }

    pub fn to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn to_local(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Maps a {V} trajectory into {W}; times are unchanged.
    pub fn transform_trajectory(&self, traj: &Trajectory) -> Trajectory {
        let knots = traj
            .knots
            .iter()
            .map(|k| TrajectoryKnot {
                t: k.t,
                position: self.to_world(&k.position),
                velocity: self.rotation * k.velocity,
                acceleration: self.rotation * k.acceleration,
            })
            .collect();
        Trajectory { knots, ..traj.clone() }
    }
}

/// Builds {V} at `p_start` with x along `v_current`.
///
/// While hovering (speed below `eps_v`) the x-axis points horizontally at the
/// goal. When the velocity is within 1° of vertical the usual construction
/// `y = x × (0,0,−1)` degenerates; `y` then follows `previous_y` (or world
/// +y) projected orthogonal to `x`.
pub fn velocity_frame(
    v_current: &Vector3<f64>,
    p_start: &Vector3<f64>,
    p_goal: &Vector3<f64>,
    eps_v: f64,
    previous_y: Option<&Vector3<f64>>,
) -> Result<VelocityFrame, PlannerError> {
    let speed = v_current.norm();
    let x = if speed < eps_v || speed == 0.0 {
        let to_goal = Vector3::new(p_goal.x - p_start.x, p_goal.y - p_start.y, 0.0);
        if to_goal.norm() < 1e-9 {
            return Err(PlannerError::NoHeading);
        }
        to_goal.normalize()
    } else {
        v_current / speed
    };
    let down = Vector3::new(0.0, 0.0, -1.0);
    let y = if x.z.abs() >= VERTICAL_COS {
        let reference = previous_y.copied().unwrap_or_else(Vector3::y);
        let mut y = reference - x * reference.dot(&x);
        if y.norm() < 1e-9 {
            y = Vector3::x() - x * x.x;
        }
        y.normalize()
    } else {
        x.cross(&down).normalize()
    };
    let z = x.cross(&y);
    Ok(VelocityFrame { rotation: Matrix3::from_columns(&[x, y, z]), translation: *p_start })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    Primitive(usize),
    EmergencyStop,
}

/// Goal and bound cost of ending at `p_end_world`.
pub fn primitive_cost(p_end_world: &Vector3<f64>, p_start: &Vector3<f64>, p_goal: &Vector3<f64>, cfg: &PlannerConfig) -> f64 {
    let c_goal = (p_end_world - p_goal).norm() - (p_start - p_goal).norm();
    let c_bound = if cfg.bounds_box.contains(p_end_world) { 0.0 } else { cfg.constant_penalty };
    cfg.lambda_goal * c_goal + cfg.lambda_bound * c_bound
}

/// Best safe primitive as `(cost, id)`; ties go to the straighter path, then
/// the lower path id.
fn best_safe(
    mask: &SafetyMask,
    lib: &PrimitiveLibrary,
    frame: &VelocityFrame,
    p_goal: &Vector3<f64>,
    cfg: &PlannerConfig,
) -> Result<Option<(f64, usize)>, PlannerError> {
    if lib.slice_primitives(mask.speed_index).is_empty() {
        return Err(PlannerError::EmptySlice(mask.speed_index));
    }
    let mut best: Option<(f64, f64, usize, usize)> = None;
    for id in mask.safe_ids() {
        let prim = lib.primitive(id);
        let end = frame.to_world(&prim.trajectory.end().position);
        let cost = primitive_cost(&end, &frame.translation, p_goal, cfg);
        let curvature = lib.paths[prim.path_id].arc.radius.curvature();
        let better = match best {
            None => true,
            Some((c, k, pid, _)) => {
                if cost < c - COST_TIE {
                    true
                } else if cost <= c + COST_TIE {
                    (curvature, prim.path_id) < (k, pid)
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((cost, curvature, prim.path_id, id));
        }
    }
    Ok(best.map(|(c, _, _, id)| (c, id)))
}

/// Cheapest safe primitive in the mask's slice, or an emergency stop when
/// none is safe.
pub fn select_trajectory(
    mask: &SafetyMask,
    lib: &PrimitiveLibrary,
    frame: &VelocityFrame,
    p_goal: &Vector3<f64>,
    cfg: &PlannerConfig,
) -> Result<Selection, PlannerError> {
    Ok(best_safe(mask, lib, frame, p_goal, cfg)?.map_or(Selection::EmergencyStop, |(_, id)| Selection::Primitive(id)))
}

/// Straight-line stop at constant deceleration `decel` from the given state.
pub fn emergency_stop(position: &Vector3<f64>, velocity: &Vector3<f64>, decel: f64, sample_step: f64) -> Trajectory {
    let speed = velocity.norm();
    if speed == 0.0 || decel <= 0.0 {
        let knot = TrajectoryKnot { t: 0.0, position: *position, velocity: Vector3::zeros(), acceleration: Vector3::zeros() };
        return Trajectory { path_id: EMERGENCY_PATH_ID, v_start: 0.0, v_end: 0.0, knots: vec![knot] };
    }
    let dir = velocity / speed;
    let duration = speed / decel;
    let knots = sample_times(duration, sample_step)
        .into_iter()
        .map(|t| {
            let v = (speed - decel * t).max(0.0);
            let travelled = speed * t - 0.5 * decel * t * t;
            TrajectoryKnot { t, position: position + dir * travelled, velocity: dir * v, acceleration: -dir * decel }
        })
        .collect();
    Trajectory { path_id: EMERGENCY_PATH_ID, v_start: speed, v_end: 0.0, knots }
}

/// Vehicle state as seen by the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub goal: Vector3<f64>,
    /// y-axis of the previous velocity frame, for the near-vertical case.
    pub previous_y: Option<Vector3<f64>>,
    /// Direction the sensor faces; only its horizontal part is used.
    pub yaw: Option<Vector3<f64>>,
}

#[derive(Debug, Clone)]
pub struct ReplanOutcome {
    pub selection: Selection,
    /// Horizontal unit vector the vehicle should face next.
    pub heading: Vector3<f64>,
    /// World-frame trajectory starting at the current position (times from 0).
    pub trajectory: Trajectory,
    pub frame: VelocityFrame,
    pub speed_index: usize,
    pub mask: SafetyMask,
    pub check_us: f64,
    pub select_us: f64,
}

fn horizontal(v: &Vector3<f64>) -> Option<Vector3<f64>> {
    let h = Vector3::new(v.x, v.y, 0.0);
    (h.norm() > 1e-12).then(|| h.normalize())
}

fn rotate_yaw(frame: &VelocityFrame, yaw: f64) -> VelocityFrame {
    let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw);
    VelocityFrame { rotation: rot.matrix() * frame.rotation, translation: frame.translation }
}

/// Yaw offsets from the goal direction on a `step` grid, nearest first
/// (positive before negative), keeping those within `span` of `facing`.
fn hover_yaws(goal_dir: &Vector3<f64>, facing: &Vector3<f64>, step: f64, span: f64) -> Vec<f64> {
    let k_max = (std::f64::consts::PI / step + 1e-9).floor() as i64;
    let mut offsets = vec![0i64];
    for k in 1..=k_max {
        offsets.push(k);
        if (k as f64) * step < std::f64::consts::PI - 1e-9 {
            offsets.push(-k);
        }
    }
    offsets
        .into_iter()
        .map(|k| k as f64 * step)
        .filter(|&yaw| {
            let dir = nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw) * goal_dir;
            dir.dot(facing).clamp(-1.0, 1.0).acos() <= span + 1e-9
        })
        .collect()
}

/// One planning tick: transform points, check the current speed slice, select, map to {W}.
///
/// While hovering the frame's yaw is free: headings on a grid anchored at the
/// goal direction and within the sensed sector are checked, and the cheapest
/// safe primitive over all of them wins (nearer headings win ties). When none
/// is safe the vehicle holds and turns to look elsewhere.
pub fn replan(
    state: &PlannerState,
    cloud: &[Vector3<f64>],
    lib: &PrimitiveLibrary,
    index: &CollisionIndex,
    cfg: &PlannerConfig,
) -> Result<ReplanOutcome, PlannerError> {
    let r2 = cfg.self_radius * cfg.self_radius;
    let cloud: Vec<Vector3<f64>> = cloud.iter().filter(|p| (*p - state.position).norm_squared() >= r2).copied().collect();
    let base = velocity_frame(&state.velocity, &state.position, &state.goal, cfg.eps_v, state.previous_y.as_ref())?;
    let speed_index = lib.speed_index_for(state.velocity.norm());
    let hovering = state.velocity.norm() < cfg.eps_v;
    let base_dir = base.x_axis();
    let facing = state.yaw.as_ref().and_then(horizontal).or_else(|| horizontal(&base_dir)).unwrap_or_else(Vector3::x);
    let yaws = if hovering {
        hover_yaws(&base_dir, &facing, cfg.hover_yaw_step_deg.to_radians(), cfg.hover_span_deg.to_radians())
    } else {
        vec![0.0]
    };

    let (mut check_us, mut select_us) = (0.0, 0.0);
    let mut chosen: Option<(f64, usize, VelocityFrame, SafetyMask)> = None;
    let mut first: Option<SafetyMask> = None;
    for yaw in yaws {
        let frame = if yaw == 0.0 { base } else { rotate_yaw(&base, yaw) };
        let started = Instant::now();
        let local: Vec<Vector3<f64>> = cloud.iter().map(|p| frame.to_local(p)).collect();
        let mask = check(index, &local, speed_index)?;
        check_us += started.elapsed().as_secs_f64() * 1e6;

        let started = Instant::now();
        let best = best_safe(&mask, lib, &frame, &state.goal, cfg)?;
        select_us += started.elapsed().as_secs_f64() * 1e6;
        if let Some((cost, id)) = best {
            if chosen.as_ref().is_none_or(|c| cost < c.0 - COST_TIE) {
                chosen = Some((cost, id, frame, mask.clone()));
            }
        }
        if first.is_none() {
            first = Some(mask);
        }
    }

    let out = match chosen {
        Some((_, id, frame, mask)) => {
            let trajectory = frame.transform_trajectory(&lib.primitive(id).trajectory);
            let heading = horizontal(&frame.x_axis()).unwrap_or(facing);
            ReplanOutcome { selection: Selection::Primitive(id), heading, trajectory, frame, speed_index, mask, check_us, select_us }
        }
        None => {
            let mask = match first {
                Some(m) => m,
                None => check(index, &[], speed_index)?,
            };
            let heading = if hovering {
                nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), cfg.scan_step_deg.to_radians()) * facing
            } else {
                horizontal(&state.velocity).unwrap_or(facing)
            };
            let trajectory =
                emergency_stop(&state.position, &state.velocity, lib.bounds().min_abs_accel(), lib.config.topp.sample_step);
            ReplanOutcome { selection: Selection::EmergencyStop, heading, trajectory, frame: base, speed_index, mask, check_us, select_us }
        }
    };
    Ok(out)
}
