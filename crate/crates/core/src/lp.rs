//! Exact two-variable linear programming (Seidel's incremental algorithm).
//!
//! Constraints are processed in the order given, without shuffling, so the
//! result is a deterministic function of the input. The problem sizes used by
//! the parameterization (at most a couple of dozen half-planes) make the
//! worst-case quadratic cost irrelevant.

use nalgebra::Vector2;
use thiserror::Error;

/// Absolute slack allowed when testing half-plane satisfaction.
pub const FEASIBILITY_TOL: f64 = 1e-10;

/// Coordinates beyond this magnitude are treated as unbounded.
const BOX_LIMIT: f64 = 1e9;

/// The half-plane `normal · p <= offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub normal: Vector2<f64>,
    pub offset: f64,
}

impl HalfPlane {
    pub fn new(a: f64, b: f64, offset: f64) -> Self {
        Self { normal: Vector2::new(a, b), offset }
    }

    fn violation(&self, p: &Vector2<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LpOutcome {
    Optimal(Vector2<f64>),
    Infeasible,
}

impl LpOutcome {
    pub fn point(self) -> Option<Vector2<f64>> {
        match self {
            LpOutcome::Optimal(p) => Some(p),
            LpOutcome::Infeasible => None,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum LpError {
    #[error("linear program is unbounded in direction ({0}, {1})")]
    Unbounded(f64, f64),
    #[error("non-finite coefficient in linear program")]
    NonFinite,
}

/// Maximizes `objective · p` subject to every half-plane.
///
/// Infeasibility is a regular outcome. An optimum that would run off to
/// infinity is reported as [`LpError::Unbounded`].
pub fn solve_lp_2d(objective: Vector2<f64>, halfplanes: &[HalfPlane]) -> Result<LpOutcome, LpError> {
    if !objective.iter().all(|c| c.is_finite())
        || halfplanes.iter().any(|h| !(h.normal.iter().all(|c| c.is_finite()) && h.offset.is_finite()))
    {
        return Err(LpError::NonFinite);
    }

    // Artificial bounding box; hitting it means the real problem is unbounded.
    let bounding = [
        HalfPlane::new(1.0, 0.0, BOX_LIMIT),
        HalfPlane::new(-1.0, 0.0, BOX_LIMIT),
        HalfPlane::new(0.0, 1.0, BOX_LIMIT),
        HalfPlane::new(0.0, -1.0, BOX_LIMIT),
    ];
    let corner = |c: f64| if c >= 0.0 { BOX_LIMIT } else { -BOX_LIMIT };
    let mut best = Vector2::new(corner(objective.x), corner(objective.y));

    for (i, h) in halfplanes.iter().enumerate() {
        if h.violation(&best) <= FEASIBILITY_TOL {
            continue;
        }
        let previous = bounding.iter().chain(&halfplanes[..i]);
        match optimize_on_line(&objective, h, previous) {
            Some(p) => best = p,
            None => return Ok(LpOutcome::Infeasible),
        }
    }

    let bound = BOX_LIMIT * (1.0 - 1e-9);
    let unbounded_x = best.x.abs() >= bound && objective.x != 0.0;
    let unbounded_y = best.y.abs() >= bound && objective.y != 0.0;
    if unbounded_x || unbounded_y {
        return Err(LpError::Unbounded(objective.x, objective.y));
    }
    Ok(LpOutcome::Optimal(best))
}

/// Convenience: minimize `objective · p`.
pub fn minimize_lp_2d(objective: Vector2<f64>, halfplanes: &[HalfPlane]) -> Result<LpOutcome, LpError> {
    solve_lp_2d(-objective, halfplanes)
}

/// One-dimensional LP on the boundary line of `h`, constrained by `others`.
fn optimize_on_line<'a>(
    objective: &Vector2<f64>,
    h: &HalfPlane,
    others: impl Iterator<Item = &'a HalfPlane>,
) -> Option<Vector2<f64>> {
    let nn = h.normal.norm_squared();
    if nn == 0.0 {
        // 0 <= offset with offset < 0: empty.
        return None;
    }
    // Line: origin + t * dir.
    let origin = h.normal * (h.offset / nn);
    let dir = Vector2::new(-h.normal.y, h.normal.x);
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for g in others {
        let slope = g.normal.dot(&dir);
        let rest = g.offset - g.normal.dot(&origin);
        // slope * t <= rest
        if slope.abs() <= 1e-14 * g.normal.norm() * dir.norm() {
            if rest < -FEASIBILITY_TOL {
                return None;
            }
        } else if slope > 0.0 {
            hi = hi.min(rest / slope);
        } else {
            lo = lo.max(rest / slope);
        }
    }
    let width = hi - lo;
    if width < 0.0 {
        // Allow near-touching constraints within tolerance (measured along the line).
        if width * dir.norm() < -FEASIBILITY_TOL {
            return None;
        }
        let mid = 0.5 * (lo + hi);
        lo = mid;
        hi = mid;
    }
    let gain = objective.dot(&dir);
    let t = if gain > 0.0 {
        hi
    } else if gain < 0.0 {
        lo
    } else if lo.is_finite() {
        // Objective orthogonal to the line: any point is optimal; take the low end.
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    };
    Some(origin + dir * t)
}
