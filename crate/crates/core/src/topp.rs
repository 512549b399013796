//! Time-optimal path parameterization by reachability analysis.
//!
//! The path parameter `s ∈ [0, 1]` is discretized uniformly into `N`
//! intervals. Decision variables per stage are the squared path speed
//! `x = ṡ²` and the path acceleration `u = s̈`, linked between stages by
//! `x_{i+1} = x_i + 2Δ·u_i`. A backward pass computes, for every stage, the
//! interval of squared speeds from which the end state is still reachable
//! (the control sets); a forward pass then greedily picks the largest
//! reachable speed at every stage. Both passes solve tiny 2D LPs.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::lp::{minimize_lp_2d, solve_lp_2d, HalfPlane, LpError, LpOutcome};
use crate::path_library::GeometricPath;
use crate::spline::{HermiteKnot, HermiteSpline};

/// Default number of discretization intervals.
pub const DEFAULT_STAGES: usize = 1000;

/// Default spacing of stored trajectory knots in seconds.
pub const DEFAULT_SAMPLE_STEP: f64 = 0.01;

/// Relative slack accepted when re-validating sampled trajectories.
pub const FEASIBILITY_SLACK: f64 = 0.02;

const POINT_WIDTH: f64 = 1e-12;
const EMPTY_WIDTH: f64 = -1e-10;
const STALL_SPEED: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToppError {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),
    #[error("need at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("degenerate path: zero tangent at s = {0}")]
    DegeneratePath(f64),
    #[error("negative or non-finite speed {0}")]
    InvalidSpeed(f64),
    #[error("end speed² {end_speed_sq} infeasible at the final stage (max {max})")]
    InfeasibleEnd { end_speed_sq: f64, max: f64 },
    #[error("control set empty at stage {stage}")]
    EmptyControlSet { stage: usize },
    #[error("start speed unreachable: ṡ² = {start_speed_sq} outside K_0 = [{lo}, {hi}]")]
    InfeasibleStart { start_speed_sq: f64, lo: f64, hi: f64 },
    #[error("forward pass found no admissible acceleration at stage {stage}")]
    ForwardInfeasible { stage: usize },
    #[error("stalled profile: zero average speed on interval {interval}")]
    StalledProfile { interval: usize },
    #[error("lp failure at stage {stage}: {source}")]
    Lp { stage: usize, source: LpError },
}

/// Kinematic limits of the vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub v_min: Vector3<f64>,
    pub v_max: Vector3<f64>,
    pub a_min: Vector3<f64>,
    pub a_max: Vector3<f64>,
    pub v_norm: f64,
}

impl Bounds {
    /// Symmetric per-axis limits `±v`, `±a` and speed-norm limit `v`.
    pub fn symmetric(v: f64, a: f64) -> Self {
        Self {
            v_min: Vector3::repeat(-v),
            v_max: Vector3::repeat(v),
            a_min: Vector3::repeat(-a),
            a_max: Vector3::repeat(a),
            v_norm: v,
        }
    }

    pub fn validate(&self) -> Result<(), ToppError> {
        for j in 0..3 {
            if !(self.v_min[j] <= 0.0 && 0.0 <= self.v_max[j]) {
                return Err(ToppError::InvalidBounds(format!("velocity bound axis {j} must straddle 0")));
            }
            if !(self.a_min[j] < 0.0 && 0.0 < self.a_max[j]) {
                return Err(ToppError::InvalidBounds(format!("acceleration bound axis {j} must straddle 0")));
            }
        }
        let finite = self.v_min.iter().chain(self.v_max.iter()).chain(self.a_min.iter()).chain(self.a_max.iter()).all(|x| x.is_finite());
        if !finite {
            return Err(ToppError::InvalidBounds("bounds must be finite".into()));
        }
        if !(self.v_norm.is_finite() && self.v_norm > 0.0) {
            return Err(ToppError::InvalidBounds(format!("v_norm must be > 0, got {}", self.v_norm)));
        }
        Ok(())
    }

    /// Largest scalar deceleration satisfying every per-axis bound.
    pub fn min_abs_accel(&self) -> f64 {
        self.a_max.iter().chain(self.a_min.iter()).fold(f64::INFINITY, |m, a| m.min(a.abs()))
    }
}

/// Linear constraint coefficients at one grid point.
///
/// Acceleration rows read `a_min <= a·u + b_acc·x + c <= a_max`; the norm row
/// reads `b_norm·x <= v_norm²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConstraints {
    pub s: f64,
    pub a: Vector3<f64>,
    pub b_acc: Vector3<f64>,
    pub b_norm: f64,
    pub c: Vector3<f64>,
    /// Upper bound on `ṡ²` from the per-axis velocity limits.
    pub sdot_sq_max: f64,
    pub v_norm_sq: f64,
    pub a_min: Vector3<f64>,
    pub a_max: Vector3<f64>,
    pub delta: f64,
}

impl StageConstraints {
    /// Half-planes in `(x, u)` describing this stage alone.
    pub fn halfplanes(&self) -> Vec<HalfPlane> {
        let mut hs = Vec::with_capacity(9);
        hs.push(HalfPlane::new(-1.0, 0.0, 0.0));
        hs.push(HalfPlane::new(1.0, 0.0, self.sdot_sq_max));
        hs.push(HalfPlane::new(self.b_norm, 0.0, self.v_norm_sq));
        // F = [I, -I]ᵀ, g = [a_maxᵀ, -a_minᵀ]ᵀ
        for j in 0..3 {
            hs.push(HalfPlane::new(self.b_acc[j], self.a[j], self.a_max[j] - self.c[j]));
            hs.push(HalfPlane::new(-self.b_acc[j], -self.a[j], -(self.a_min[j] - self.c[j])));
        }
        hs
    }
}

/// Interval of admissible squared path speeds at a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSet {
    pub lo: f64,
    pub hi: f64,
}

impl ControlSet {
    pub fn point(x: f64) -> Self {
        Self { lo: x, hi: x }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_superset_of(&self, other: &ControlSet, tol: f64) -> bool {
        self.lo <= other.lo + tol && other.hi <= self.hi + tol
    }
}

/// Per-stage constraints on the uniform grid `s_i = i / n`.
pub fn formulate_stages(path: &GeometricPath, bounds: &Bounds, n: usize) -> Result<Vec<StageConstraints>, ToppError> {
    bounds.validate()?;
    if n < 2 {
        return Err(ToppError::TooFewStages(n));
    }
    let delta = 1.0 / n as f64;
    (0..=n)
        .map(|i| {
            let s = if i == n { 1.0 } else { i as f64 * delta };
            let smp = path.eval(s);
            let dq = smp.dq;
            let norm_sq = dq.norm_squared();
            if !(norm_sq > 0.0) {
                return Err(ToppError::DegeneratePath(s));
            }
            // v_min <= q'·ṡ <= v_max with ṡ >= 0, per axis.
            let mut sdot_max = f64::INFINITY;
            for j in 0..3 {
                if dq[j] > 0.0 {
                    sdot_max = sdot_max.min(bounds.v_max[j] / dq[j]);
                } else if dq[j] < 0.0 {
                    sdot_max = sdot_max.min(bounds.v_min[j] / dq[j]);
                }
            }
            Ok(StageConstraints {
                s,
                a: dq,
                b_acc: smp.ddq,
                b_norm: norm_sq,
                c: Vector3::zeros(),
                sdot_sq_max: sdot_max * sdot_max,
                v_norm_sq: bounds.v_norm * bounds.v_norm,
                a_min: bounds.a_min,
                a_max: bounds.a_max,
                delta,
            })
        })
        .collect()
}

fn lp(stage: usize, maximize: bool, objective: Vector2<f64>, hs: &[HalfPlane]) -> Result<Option<Vector2<f64>>, ToppError> {
    let out = if maximize { solve_lp_2d(objective, hs) } else { minimize_lp_2d(objective, hs) };
    match out {
        Ok(LpOutcome::Optimal(p)) => Ok(Some(p)),
        Ok(LpOutcome::Infeasible) => Ok(None),
        Err(source) => Err(ToppError::Lp { stage, source }),
    }
}

fn transition_rows(delta: f64, next: &ControlSet) -> [HalfPlane; 2] {
    [
        HalfPlane::new(1.0, 2.0 * delta, next.hi),
        HalfPlane::new(-1.0, -2.0 * delta, -next.lo),
    ]
}

/// Backward reachability: control sets `K_0..=K_N` given the final squared speed.
pub fn backward_pass(stages: &[StageConstraints], end_speed_sq: f64) -> Result<Vec<ControlSet>, ToppError> {
    if !(end_speed_sq.is_finite() && end_speed_sq >= 0.0) {
        return Err(ToppError::InvalidSpeed(end_speed_sq));
    }
    let n = stages.len() - 1;
    let last = &stages[n];
    let end_max = last.sdot_sq_max.min(last.v_norm_sq / last.b_norm);
    if end_speed_sq > end_max * (1.0 + 1e-9) + 1e-12 {
        return Err(ToppError::InfeasibleEnd { end_speed_sq, max: end_max });
    }

    let mut sets = vec![ControlSet::point(end_speed_sq); n + 1];
    for i in (0..n).rev() {
        let mut hs = stages[i].halfplanes();
        hs.extend(transition_rows(stages[i].delta, &sets[i + 1]));
        let x_axis = Vector2::new(1.0, 0.0);
        let hi = lp(i, true, x_axis, &hs)?;
        let lo = lp(i, false, x_axis, &hs)?;
        let (Some(hi), Some(lo)) = (hi, lo) else {
            return Err(ToppError::EmptyControlSet { stage: i });
        };
        let (lo, hi) = (lo.x.max(0.0), hi.x);
        let width = hi - lo;
        sets[i] = if width < EMPTY_WIDTH {
            return Err(ToppError::EmptyControlSet { stage: i });
        } else if width < POINT_WIDTH {
            ControlSet::point(lo.max(hi).max(0.0))
        } else {
            ControlSet { lo, hi }
        };
    }
    Ok(sets)
}

/// Greedy forward pass: the largest reachable squared speed at every stage.
pub fn forward_pass(stages: &[StageConstraints], sets: &[ControlSet], start_speed_sq: f64) -> Result<Vec<f64>, ToppError> {
    if !(start_speed_sq.is_finite() && start_speed_sq >= 0.0) {
        return Err(ToppError::InvalidSpeed(start_speed_sq));
    }
    let k0 = sets[0];
    let tol = 1e-9 * k0.hi.max(1.0);
    if start_speed_sq < k0.lo - tol || start_speed_sq > k0.hi + tol {
        return Err(ToppError::InfeasibleStart { start_speed_sq, lo: k0.lo, hi: k0.hi });
    }
    let n = stages.len() - 1;
    let mut xs = Vec::with_capacity(n + 1);
    xs.push(start_speed_sq.clamp(k0.lo, k0.hi));
    for i in 0..n {
        let x = xs[i];
        let delta = stages[i].delta;
        let mut hs = stages[i].halfplanes();
        hs.push(HalfPlane::new(1.0, 0.0, x));
        hs.push(HalfPlane::new(-1.0, 0.0, -x));
        hs.extend(transition_rows(delta, &sets[i + 1]));
        let best = lp(i, true, Vector2::new(1.0, 2.0 * delta), &hs)?.ok_or(ToppError::ForwardInfeasible { stage: i })?;
        let next = sets[i + 1];
        xs.push((x + 2.0 * delta * best.y).clamp(next.lo, next.hi));
    }
    Ok(xs)
}

/// One stored sample of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryKnot {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

/// A time-parameterized primitive sampled at fixed time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub path_id: usize,
    pub v_start: f64,
    pub v_end: f64,
    pub knots: Vec<TrajectoryKnot>,
}

impl Trajectory {
    pub fn duration(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.t)
    }

    pub fn start(&self) -> &TrajectoryKnot {
        &self.knots[0]
    }

    pub fn end(&self) -> &TrajectoryKnot {
        self.knots.last().expect("trajectory has knots")
    }

    /// State at time `t` (clamped to the trajectory's span). Position and
    /// velocity are Hermite-interpolated between stored knots; acceleration is
    /// interpolated linearly.
    pub fn sample(&self, t: f64) -> TrajectoryKnot {
        let first = self.knots[0];
        if self.knots.len() == 1 || t <= first.t {
            return TrajectoryKnot { t: t.max(first.t), ..first };
        }
        let last = *self.end();
        if t >= last.t {
            return TrajectoryKnot { t: last.t, ..last };
        }
        let seg = self.knots.partition_point(|k| k.t <= t) - 1;
        let (k0, k1) = (&self.knots[seg], &self.knots[seg + 1]);
        if t == k0.t {
            return *k0;
        }
        let h0 = HermiteKnot { t: k0.t, position: k0.position, velocity: k0.velocity };
        let h1 = HermiteKnot { t: k1.t, position: k1.position, velocity: k1.velocity };
        let st = crate::spline::eval_segment(&h0, &h1, t);
        let w = (t - k0.t) / (k1.t - k0.t);
        TrajectoryKnot {
            t,
            position: st.position,
            velocity: st.velocity,
            acceleration: k0.acceleration * (1.0 - w) + k1.acceleration * w,
        }
    }

    /// Checks speed-norm and per-axis velocity/acceleration limits with relative `slack`.
    pub fn check_feasible(&self, bounds: &Bounds, slack: f64) -> Result<(), String> {
        let grow = 1.0 + slack;
        for k in &self.knots {
            let speed = k.velocity.norm();
            if speed > bounds.v_norm * grow {
                return Err(format!("speed {speed:.6} exceeds {} at t = {}", bounds.v_norm, k.t));
            }
            for j in 0..3 {
                let (v, a) = (k.velocity[j], k.acceleration[j]);
                if v > bounds.v_max[j] * grow || v < bounds.v_min[j] * grow {
                    return Err(format!("velocity axis {j} = {v:.6} out of bounds at t = {}", k.t));
                }
                if a > bounds.a_max[j] * grow || a < bounds.a_min[j] * grow {
                    return Err(format!("acceleration axis {j} = {a:.6} out of bounds at t = {}", k.t));
                }
            }
        }
        Ok(())
    }
}

/// Sample times `0, step, 2·step, …` plus the exact end time.
pub(crate) fn sample_times(duration: f64, step: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = Vec::new();
    let mut k = 0usize;
    loop {
        let t = k as f64 * step;
        if t >= duration - 1e-6 {
            break;
        }
        ts.push(t);
        k += 1;
    }
    if ts.is_empty() || duration > 0.0 {
        ts.push(duration);
    }
    ts
}

/// Options for [`parameterize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToppOptions {
    pub stages: usize,
    pub sample_step: f64,
}

impl Default for ToppOptions {
    fn default() -> Self {
        Self { stages: DEFAULT_STAGES, sample_step: DEFAULT_SAMPLE_STEP }
    }
}

/// Squared path speed profile together with its stage grid.
#[derive(Debug, Clone)]
pub struct SpeedProfile {
    pub stages: Vec<StageConstraints>,
    pub control_sets: Vec<ControlSet>,
    pub sdot_sq: Vec<f64>,
    /// Time at each stage.
    pub times: Vec<f64>,
}

/// Runs the backward and forward passes and assigns times by average speed.
pub fn speed_profile(path: &GeometricPath, v_start: f64, v_end: f64, bounds: &Bounds, stages: usize) -> Result<SpeedProfile, ToppError> {
    for v in [v_start, v_end] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(ToppError::InvalidSpeed(v));
        }
    }
    let st = formulate_stages(path, bounds, stages)?;
    let n = st.len() - 1;
    let end_sq = (v_end * v_end) / st[n].b_norm;
    let start_sq = (v_start * v_start) / st[0].b_norm;
    let sets = backward_pass(&st, end_sq)?;
    let xs = forward_pass(&st, &sets, start_sq)?;

    let mut times = Vec::with_capacity(n + 1);
    times.push(0.0);
    for i in 1..=n {
        let avg = 0.5 * (xs[i - 1].sqrt() + xs[i].sqrt());
        if avg < STALL_SPEED {
            return Err(ToppError::StalledProfile { interval: i - 1 });
        }
        let dt = (st[i].s - st[i - 1].s) / avg;
        times.push(times[i - 1] + dt);
    }
    Ok(SpeedProfile { stages: st, control_sets: sets, sdot_sq: xs, times })
}

/// Time-optimal trajectory along `path` from tangential speed `v_start` to `v_end`.
pub fn parameterize(
    path: &GeometricPath,
    v_start: f64,
    v_end: f64,
    bounds: &Bounds,
    options: &ToppOptions,
) -> Result<Trajectory, ToppError> {
    let profile = speed_profile(path, v_start, v_end, bounds, options.stages)?;
    let n = profile.stages.len() - 1;
    let knots: Vec<HermiteKnot> = (0..=n)
        .map(|i| {
            let st = &profile.stages[i];
            let smp = path.eval(st.s);
            let sdot = profile.sdot_sq[i].sqrt();
            let velocity = if i == 0 {
                st.a.normalize() * v_start
            } else if i == n {
                st.a.normalize() * v_end
            } else {
                st.a * sdot
            };
            HermiteKnot { t: profile.times[i], position: smp.q, velocity }
        })
        .collect();
    let spline = HermiteSpline::new(knots);
    let duration = spline.end_time();
    let knots = sample_times(duration, options.sample_step)
        .into_iter()
        .map(|t| {
            let s = spline.eval(t);
            TrajectoryKnot { t, position: s.position, velocity: s.velocity, acceleration: s.acceleration }
        })
        .collect();
    Ok(Trajectory { path_id: path.id, v_start, v_end, knots })
}
