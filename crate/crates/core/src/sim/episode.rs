//! Closed-loop episodes under perfect tracking.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::map::{generate_map, MapSpec, WorldMap};
use super::sensor::{sense, SensorSpec};
use super::SimError;
use crate::collision::CollisionIndex;
use crate::library::PrimitiveLibrary;
use crate::planner::{emergency_stop, replan, Aabb, PlannerConfig, PlannerState, Selection};
use crate::point_cloud::{CloudStack, DEFAULT_FRAMES};
use crate::topp::{Trajectory, TrajectoryKnot};

const SAMPLER_STREAM: u64 = 0x5eed_c10d;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub map: MapSpec,
    pub sensor: SensorSpec,
    pub frames: usize,
    pub sim_step: f64,
    pub timeout: f64,
    pub robot_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            map: MapSpec::default(),
            sensor: SensorSpec::default(),
            frames: DEFAULT_FRAMES,
            sim_step: 0.01,
            timeout: 60.0,
            robot_radius: crate::collision::DEFAULT_ROBOT_RADIUS,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.map.validate()?;
        self.sensor.validate()?;
        if self.frames == 0 || !(self.sim_step > 0.0) || !(self.timeout > 0.0) || !(self.robot_radius >= 0.0) {
            return Err(SimError::Config("frames, sim_step and timeout must be > 0, robot_radius >= 0".into()));
        }
        Ok(())
    }
}

/// Hull of the obstacle field, start and goal, grown by 1 m, with z in [0.5, 2.5].
pub fn default_bounds_box(map: &MapSpec) -> Aabb {
    let half = map.extent / 2.0;
    let lo_x = (-half.x).min(map.start.x).min(map.goal.x) - 1.0;
    let hi_x = half.x.max(map.start.x).max(map.goal.x) + 1.0;
    let lo_y = (-half.y).min(map.start.y).min(map.goal.y) - 1.0;
    let hi_y = half.y.max(map.start.y).max(map.goal.y) + 1.0;
    Aabb::new(Vector3::new(lo_x, lo_y, 0.5), Vector3::new(hi_x, hi_y, 2.5))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Reached,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub n_obs: usize,
    pub n_paths: usize,
    pub outcome: Outcome,
    pub success: bool,
    pub collision: bool,
    pub t_total: f64,
    pub d_total: f64,
    pub emergency_stops: usize,
    pub replans: usize,
    /// Per-tick wall-clock timings, microseconds.
    pub check_us: Vec<f64>,
    pub select_us: Vec<f64>,
    /// Largest angle between the tracked velocity and the new trajectory's
    /// start velocity at a replan, over ticks with speed above ε_v.
    pub max_direction_jump: f64,
    pub max_position_jump: f64,
    /// (time, speed) at every sim step.
    pub speed_trace: Vec<(f64, f64)>,
    pub path: Vec<Vector3<f64>>,
}

impl EpisodeResult {
    pub fn mean_check_us(&self) -> f64 {
        mean(&self.check_us)
    }

    pub fn p99_check_us(&self) -> f64 {
        percentile(&self.check_us, 0.99)
    }

    pub fn mean_select_us(&self) -> f64 {
        mean(&self.select_us)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Nearest-rank percentile.
pub(crate) fn percentile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}

fn hold(position: Vector3<f64>) -> Trajectory {
    emergency_stop(&position, &Vector3::zeros(), 1.0, 1.0)
}

/// Runs one episode on a freshly generated map.
pub fn run_episode(
    seed: u64,
    n_obs: usize,
    lib: &PrimitiveLibrary,
    index: &CollisionIndex,
    planner: &PlannerConfig,
    sim: &SimConfig,
) -> Result<EpisodeResult, SimError> {
    let map = generate_map(seed, n_obs, &sim.map)?;
    run_on_map(&map, lib, index, planner, sim)
}

/// Runs one episode on `map`.
///
/// Each sim step: take a frame when due, replan when due, then advance along
/// the active trajectory. Reaching the goal tolerance switches to a stop; the
/// episode succeeds once the vehicle is at rest.
pub fn run_on_map(
    map: &WorldMap,
    lib: &PrimitiveLibrary,
    index: &CollisionIndex,
    planner: &PlannerConfig,
    sim: &SimConfig,
) -> Result<EpisodeResult, SimError> {
    sim.validate()?;
    planner.validate()?;
    index.verify(lib)?;

    let goal = map.spec.goal;
    let dt = sim.sim_step;
    let steps_per_tick = ((planner.tick_period() / dt).round() as usize).max(1);
    let sense_period = 1.0 / sim.sensor.rate_hz;
    let max_steps = (sim.timeout / dt).round() as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(map.seed ^ SAMPLER_STREAM);
    let mut stack = CloudStack::new(sim.frames);
    let mut state = TrajectoryKnot { t: 0.0, position: map.spec.start, velocity: Vector3::zeros(), acceleration: Vector3::zeros() };
    let mut active = hold(state.position);
    let mut active_t0 = 0.0;
    let mut previous_y = None;
    let mut heading = Vector3::new(goal.x - state.position.x, goal.y - state.position.y, 0.0);
    let mut next_sense = 0.0;
    let mut stopping = false;

    let mut result = EpisodeResult {
        seed: map.seed,
        n_obs: map.obstacles.len(),
        n_paths: lib.paths.len(),
        outcome: Outcome::Timeout,
        success: false,
        collision: false,
        t_total: sim.timeout,
        d_total: 0.0,
        emergency_stops: 0,
        replans: 0,
        check_us: Vec::new(),
        select_us: Vec::new(),
        max_direction_jump: 0.0,
        max_position_jump: 0.0,
        speed_trace: vec![(0.0, 0.0)],
        path: vec![state.position],
    };

    for step in 0..max_steps {
        let t = step as f64 * dt;
        if state.velocity.norm() >= planner.eps_v {
            heading = Vector3::new(state.velocity.x, state.velocity.y, 0.0);
        }
        if t + 1e-9 >= next_sense {
            stack.push_frame(sense(&state.position, &heading, map, &sim.sensor), state.position);
            next_sense += sense_period;
        }
        if !stopping && step % steps_per_tick == 0 {
            let cloud = stack.sample_fixed(planner.sample_size, &mut rng);
            let ps = PlannerState { position: state.position, velocity: state.velocity, goal, previous_y, yaw: Some(heading) };
            let out = replan(&ps, &cloud, lib, index, planner)?;
            result.replans += 1;
            result.check_us.push(out.check_us);
            result.select_us.push(out.select_us);
            if out.selection == Selection::EmergencyStop {
                result.emergency_stops += 1;
            }
            let start = out.trajectory.start();
            result.max_position_jump = result.max_position_jump.max((start.position - state.position).norm());
            let (va, vb) = (state.velocity, start.velocity);
            if va.norm() >= planner.eps_v && vb.norm() > 0.0 {
                let angle = va.normalize().dot(&vb.normalize()).clamp(-1.0, 1.0).acos();
                result.max_direction_jump = result.max_direction_jump.max(angle);
            }
            previous_y = Some(out.frame.y_axis());
            heading = out.heading;
            active = out.trajectory;
            active_t0 = t;
        }

        let next = active.sample(t + dt - active_t0);
        result.d_total += (next.position - state.position).norm();
        state = next;
        let now = (step + 1) as f64 * dt;
        result.speed_trace.push((now, state.velocity.norm()));
        result.path.push(state.position);

        if map.collides(&state.position, sim.robot_radius) {
            result.collision = true;
            result.outcome = Outcome::Collision;
            result.t_total = now;
            return Ok(result);
        }
        if !stopping && (state.position - goal).norm() <= planner.goal_tolerance {
            stopping = true;
            active = emergency_stop(&state.position, &state.velocity, lib.bounds().min_abs_accel(), lib.config.topp.sample_step);
            active_t0 = now;
        }
        if stopping && now - active_t0 >= active.duration() - 1e-12 {
            result.outcome = Outcome::Reached;
            result.success = true;
            result.t_total = now;
            return Ok(result);
        }
    }
    Ok(result)
}
