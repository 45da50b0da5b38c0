//! Embedded Euler–Heun / third-order Runge–Kutta pair with adaptive steps,
//! used to follow streamlines of the force field.

use crate::error::{Error, Result};
use crate::gravity::ForceField2D;
use crate::image::Vec2;

/// Explicit three-stage tableau with an embedded lower-order solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorTableau {
    pub c: [f64; 3],
    /// Strictly lower triangular stage coefficients.
    pub a: [[f64; 3]; 3],
    pub b_high: [f64; 3],
    pub b_low: [f64; 3],
}

/// Third-order weights with the embedded Euler–Heun (second-order) pair.
pub const EULER_HEUN_3: IntegratorTableau = IntegratorTableau {
    c: [0.0, 1.0, 0.5],
    a: [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.25, 0.25, 0.0]],
    b_high: [1.0 / 6.0, 1.0 / 6.0, 4.0 / 6.0],
    b_low: [0.5, 0.5, 0.0],
};

impl IntegratorTableau {
    /// Stage derivatives for an autonomous system.
    #[inline]
    pub fn stages(&self, y: Vec2, h: f64, f: impl Fn(Vec2) -> Vec2) -> [Vec2; 3] {
        let k1 = f(y);
        let k2 = f(y + k1 * (h * self.a[1][0]));
        let k3 = f(y + (k1 * self.a[2][0] + k2 * self.a[2][1]) * h);
        [k1, k2, k3]
    }

    #[inline]
    pub fn combine(y: Vec2, h: f64, k: &[Vec2; 3], b: &[f64; 3]) -> Vec2 {
        y + (k[0] * b[0] + k[1] * b[1] + k[2] * b[2]) * h
    }
}

/// Which way streamlines are followed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Along the force, toward attracting masses (potential minima).
    Descent,
    /// Against the force, toward potential maxima.
    Ascent,
}

impl Direction {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            Direction::Descent => 1.0,
            Direction::Ascent => -1.0,
        }
    }
}

/// Adaptive integration settings, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Force magnitude below which a streamline is considered stuck.
    pub stagnation_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            h_init: 0.5,
            h_min: 1e-3,
            h_max: 2.0,
            max_steps: 10_000,
            stagnation_tol: 1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::param("integrator.tol", "must be > 0"));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(Error::param(
                "integrator.h_init",
                "need 0 < h_min <= h_init <= h_max",
            ));
        }
        if self.max_steps == 0 {
            return Err(Error::param("integrator.max_steps", "must be >= 1"));
        }
        if !(self.stagnation_tol >= 0.0) {
            return Err(Error::param("integrator.stagnation_tol", "must be >= 0"));
        }
        Ok(())
    }
}

/// One embedded step. Returns the third-order state and the distance
/// between the third- and second-order solutions.
#[inline]
pub fn integrate_step(
    state: Vec2,
    field: impl Fn(Vec2) -> Vec2,
    h: f64,
    direction: Direction,
) -> (Vec2, f64) {
    let s = direction.sign();
    let k = EULER_HEUN_3.stages(state, h, |p| field(p) * s);
    let high = IntegratorTableau::combine(state, h, &k, &EULER_HEUN_3.b_high);
    let low = IntegratorTableau::combine(state, h, &k, &EULER_HEUN_3.b_low);
    (high, (high - low).norm())
}

/// Step-size controller for a third-order error estimate.
#[inline]
pub fn adapt_step(error: f64, h: f64, cfg: &IntegratorConfig) -> (bool, f64) {
    let accept = error <= cfg.tol || h <= cfg.h_min;
    let factor = 0.9 * (cfg.tol / error.max(1e-12)).cbrt();
    (accept, (h * factor).clamp(cfg.h_min, cfg.h_max))
}

/// Why a streamline stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The caller's stop predicate fired.
    Stopped,
    /// Force magnitude fell below the stagnation tolerance.
    Stagnated,
    /// Position stopped moving (converged onto a critical point).
    Stalled,
    /// The streamline left the image and was clamped onto the border.
    Border,
    /// Step budget exhausted.
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Accepted positions, starting with the initial state. Only the start
    /// and end are kept when recording is off.
    pub points: Vec<Vec2>,
    pub termination: Termination,
    pub steps: usize,
}

impl Trajectory {
    pub fn end(&self) -> Vec2 {
        *self.points.last().expect("trajectory has a start point")
    }
}

const BORDER_EXCESS: f64 = 1e-6;
const STALL_WINDOW: usize = 16;
const STALL_DISTANCE: f64 = 1e-3;
/// Net over travelled distance in one window below which the walk is
/// treated as oscillating about a critical point.
const STALL_RATIO: f64 = 0.25;

/// Unit vector along `v`, zero for the zero vector.
#[inline]
fn direction_of(v: Vec2) -> Vec2 {
    let n = v.norm();
    if n > 0.0 {
        v * (1.0 / n)
    } else {
        Vec2::ZERO
    }
}

/// Follows the streamline through `start` with adaptive steps until the
/// stop predicate fires or a termination condition is met.
///
/// The streamline is parametrized by arc length, so step sizes and the
/// error tolerance are in pixels. This traces the same orbits as `x' = f`
/// (hence the same basins) while weak far-field regions are crossed at
/// the same pace as strong ones.
pub fn follow(
    field: &ForceField2D,
    start: Vec2,
    direction: Direction,
    cfg: &IntegratorConfig,
    record: bool,
    mut stop: impl FnMut(Vec2) -> bool,
) -> Trajectory {
    let max_x = (field.width() - 1) as f64;
    let max_y = (field.height() - 1) as f64;
    let mut pos = Vec2::new(start.x.clamp(0.0, max_x), start.y.clamp(0.0, max_y));
    let mut points = vec![pos];
    let mut window = [pos; STALL_WINDOW];
    let mut lengths = [0.0f64; STALL_WINDOW];
    let mut travelled = 0.0;
    let mut accepted = 0usize;
    let mut h = cfg.h_init;
    let sample = |p: Vec2| direction_of(field.sample(p));

    let finish = |mut points: Vec<Vec2>, pos: Vec2, termination, steps| {
        if !record && points.len() == 1 && points[0] != pos {
            points.push(pos);
        }
        Trajectory {
            points,
            termination,
            steps,
        }
    };

    let sign = direction.sign();
    // Force at `pos`, reused as the first stage until the step is accepted.
    let mut here = field.sample(pos);
    for step in 0..cfg.max_steps {
        if here.norm() < cfg.stagnation_tol {
            return finish(points, pos, Termination::Stagnated, step);
        }
        let t = &EULER_HEUN_3;
        let k1 = direction_of(here) * sign;
        let k2 = sample(pos + k1 * (h * t.a[1][0])) * sign;
        let k3 = sample(pos + (k1 * t.a[2][0] + k2 * t.a[2][1]) * h) * sign;
        let k = [k1, k2, k3];
        let next = IntegratorTableau::combine(pos, h, &k, &t.b_high);
        let err = (next - IntegratorTableau::combine(pos, h, &k, &t.b_low)).norm();
        let (accept, h_next) = adapt_step(err, h, cfg);
        h = h_next;
        if !accept {
            continue;
        }
        let clamped = Vec2::new(next.x.clamp(0.0, max_x), next.y.clamp(0.0, max_y));
        // Rounding noise across an edge is clamped silently; a real
        // outward flow ends the streamline.
        let left_domain = clamped.distance(next) > BORDER_EXCESS;
        let step_len = clamped.distance(pos);
        pos = clamped;
        here = field.sample(pos);
        if record {
            points.push(pos);
        }
        if left_domain {
            return finish(points, pos, Termination::Border, step + 1);
        }
        if stop(pos) {
            return finish(points, pos, Termination::Stopped, step + 1);
        }
        let slot = accepted % STALL_WINDOW;
        travelled += step_len - lengths[slot];
        lengths[slot] = step_len;
        if accepted >= STALL_WINDOW {
            let net = window[slot].distance(pos);
            if net < STALL_DISTANCE || net < STALL_RATIO * travelled {
                return finish(points, pos, Termination::Stalled, step + 1);
            }
        }
        window[slot] = pos;
        accepted += 1;
    }
    finish(points, pos, Termination::MaxSteps, cfg.max_steps)
}

/// Fixed-step solutions of `y' = f(y)` from the high- and low-order weights,
/// each propagated on its own.
pub fn integrate_fixed(
    f: impl Fn(Vec2) -> Vec2,
    y0: Vec2,
    t_end: f64,
    steps: usize,
) -> (Vec2, Vec2) {
    let h = t_end / steps as f64;
    let mut high = y0;
    let mut low = y0;
    for _ in 0..steps {
        let k = EULER_HEUN_3.stages(high, h, &f);
        high = IntegratorTableau::combine(high, h, &k, &EULER_HEUN_3.b_high);
        let k = EULER_HEUN_3.stages(low, h, &f);
        low = IntegratorTableau::combine(low, h, &k, &EULER_HEUN_3.b_low);
    }
    (high, low)
}
