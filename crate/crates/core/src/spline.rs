//! Piecewise cubic Hermite interpolation of 3D positions over time.

use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermiteKnot {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

/// Position, velocity and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

/// C1 cubic spline through knots with prescribed velocities.
///
/// End slopes are clamped to the first and last knot velocity. Each segment
/// depends only on its two end knots, so a kink in the underlying
/// acceleration does not ring into neighbouring segments.
#[derive(Debug, Clone)]
pub struct HermiteSpline {
    knots: Vec<HermiteKnot>,
}

impl HermiteSpline {
    /// Knot times must be strictly increasing; panics otherwise.
    pub fn new(knots: Vec<HermiteKnot>) -> Self {
        assert!(!knots.is_empty(), "spline needs at least one knot");
        assert!(knots.windows(2).all(|w| w[1].t > w[0].t), "knot times must be strictly increasing");
        Self { knots }
    }

    pub fn start_time(&self) -> f64 {
        self.knots[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.knots[self.knots.len() - 1].t
    }

    pub fn knots(&self) -> &[HermiteKnot] {
        &self.knots
    }

    /// Evaluates the spline; times outside the knot range are clamped.
    pub fn eval(&self, t: f64) -> SplineState {
        if self.knots.len() == 1 {
            let k = self.knots[0];
            return SplineState { position: k.position, velocity: k.velocity, acceleration: Vector3::zeros() };
        }
        let t = t.clamp(self.start_time(), self.end_time());
        // Segment whose left knot is the last knot with time <= t.
        let seg = self.knots.partition_point(|k| k.t <= t).clamp(1, self.knots.len() - 1) - 1;
        let k0 = &self.knots[seg];
        let k1 = &self.knots[seg + 1];
        eval_segment(k0, k1, t)
    }
}

pub(crate) fn eval_segment(k0: &HermiteKnot, k1: &HermiteKnot, t: f64) -> SplineState {
    let h = k1.t - k0.t;
    let u = (t - k0.t) / h;
    let (p0, p1) = (k0.position, k1.position);
    let (m0, m1) = (k0.velocity * h, k1.velocity * h);
    let u2 = u * u;
    let u3 = u2 * u;

    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    let position = p0 * h00 + m0 * h10 + p1 * h01 + m1 * h11;

    let d00 = 6.0 * u2 - 6.0 * u;
    let d10 = 3.0 * u2 - 4.0 * u + 1.0;
    let d01 = -6.0 * u2 + 6.0 * u;
    let d11 = 3.0 * u2 - 2.0 * u;
    let velocity = (p0 * d00 + m0 * d10 + p1 * d01 + m1 * d11) / h;

    let a00 = 12.0 * u - 6.0;
    let a10 = 6.0 * u - 4.0;
    let a01 = -12.0 * u + 6.0;
    let a11 = 6.0 * u - 2.0;
    let acceleration = (p0 * a00 + m0 * a10 + p1 * a01 + m1 * a11) / (h * h);

    SplineState { position, velocity, acceleration }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_quadratic_motion() {
        // x(t) = 1 + 2t + 1.5t² sampled with exact velocities.
        let f = |t: f64| Vector3::new(1.0 + 2.0 * t + 1.5 * t * t, 0.0, -t);
        let df = |t: f64| Vector3::new(2.0 + 3.0 * t, 0.0, -1.0);
        let ts = [0.0, 0.3, 0.35, 1.0];
        let spline = HermiteSpline::new(ts.iter().map(|&t| HermiteKnot { t, position: f(t), velocity: df(t) }).collect());
        for &t in &[0.0, 0.1, 0.32, 0.7, 1.0] {
            let s = spline.eval(t);
            assert!((s.position - f(t)).norm() < 1e-12);
            assert!((s.velocity - df(t)).norm() < 1e-12);
            assert!((s.acceleration - Vector3::new(3.0, 0.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn clamps_outside_range() {
        let spline = HermiteSpline::new(vec![
            HermiteKnot { t: 0.0, position: Vector3::zeros(), velocity: Vector3::x() },
            HermiteKnot { t: 1.0, position: Vector3::x(), velocity: Vector3::x() },
        ]);
        assert_eq!(spline.eval(-1.0).position, Vector3::zeros());
        assert_eq!(spline.eval(2.0).position, Vector3::x());
    }
}
