//! Casting action space and gripper trajectory generation.
//!
//! An [`Action`] describes two sweeping arcs of the held cable end in polar
//! coordinates around the robot base: from the reset pose `(r0, 0)` to
//! `(r1, theta1)`, then back across the symmetry axis to `(r2, theta2)`, with a
//! wrist offset `alpha` applied over the second arc. [`build_trajectory`] turns
//! an action into a uniformly sampled [`GripperTrajectory`].

mod grid;
mod scurve;
mod spline;
mod trajectory;

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grid::{grid_sample_actions, linspace, ActionGrid, ParamRange};
pub use scurve::{scurve_profile, ScurveProfile};
pub use spline::{radial_spline, RadialSpline};
pub use trajectory::{
    build_trajectory, check_feasible, CastPlan, Feasibility, FeasibilityRule, GripperTrajectory,
    TrajectorySample, Violation, MIN_ARC_DURATION,
};

/// Planar vector in meters (positions) or meters/second (velocities).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

/// A position on the work surface, robot base at the origin.
pub type CartesianPoint = Vec2;

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c, y: s }
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    /// Reflection across the workspace symmetry axis (the x axis).
    #[inline]
    pub fn reflect(self) -> Vec2 {
        Vec2::new(self.x, -self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn to_polar(self) -> PolarPoint {
        PolarPoint {
            r: self.norm(),
            theta: self.y.atan2(self.x),
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Polar coordinates around the robot base; `theta` is measured from the
/// workspace symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub r: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn new(r: f64, theta: f64) -> Result<Self> {
        if !(r.is_finite() && theta.is_finite()) || r < 0.0 {
            return Err(Error::invalid(format!("polar point ({r}, {theta}) needs finite r >= 0")));
        }
        if theta.abs() > std::f64::consts::PI {
            return Err(Error::invalid(format!("theta {theta} outside [-pi, pi]")));
        }
        Ok(Self { r, theta })
    }

    pub fn to_cartesian(self) -> CartesianPoint {
        Vec2::from_angle(self.theta) * self.r
    }

    pub fn mirrored(self) -> PolarPoint {
        PolarPoint {
            r: self.r,
            theta: -self.theta,
        }
    }
}

/// The six-parameter casting command `(theta1, r1, theta2, r2, alpha, v_max)`.
///
/// Angles are radians, radii meters, `v_max` radians/second. Canonical actions
/// have `theta1 > 0`, `theta2 < 0` and `alpha >= 0`; [`mirror_action`] maps
/// them onto the other half of the workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub theta1: f64,
    pub r1: f64,
    pub theta2: f64,
    pub r2: f64,
    pub alpha: f64,
    pub v_max: f64,
}

impl Action {
    pub const DIM: usize = 6;

    pub fn new(theta1: f64, r1: f64, theta2: f64, r2: f64, alpha: f64, v_max: f64) -> Self {
        Self {
            theta1,
            r1,
            theta2,
            r2,
            alpha,
            v_max,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.theta1, self.r1, self.theta2, self.r2, self.alpha, self.v_max]
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!("non-finite action {self:?}")));
        }
        if self.r1 <= 0.0 || self.r2 <= 0.0 || self.v_max <= 0.0 {
            return Err(Error::invalid(format!(
                "action needs r1 > 0, r2 > 0, v_max > 0: {self:?}"
            )));
        }
        Ok(())
    }

    /// Left-half convention used for all sampled datasets.
    pub fn is_canonical(&self) -> bool {
        self.theta1 > 0.0 && self.theta2 < 0.0 && self.alpha >= 0.0
    }

    /// True for actions whose first arc swings toward negative theta, i.e. the
    /// mirror image of a canonical action.
    pub fn is_mirrored_half(&self) -> bool {
        self.theta1 < 0.0
    }
}

/// Reflect an action across the workspace symmetry axis.
pub fn mirror_action(a: &Action) -> Action {
    Action {
        theta1: -a.theta1,
        r1: a.r1,
        theta2: -a.theta2,
        r2: a.r2,
        alpha: -a.alpha,
        v_max: a.v_max,
    }
}

/// Polar workspace box standing in for the arm's reachability and joint limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    /// meters
    pub r_min: f64,
    /// meters
    pub r_max: f64,
    /// rad/s
    pub v_joint_max: f64,
    /// rad/s^2
    pub a_max: f64,
    /// rad/s^3
    pub j_max: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            r_min: 0.55,
            r_max: 0.90,
            v_joint_max: std::f64::consts::PI,
            a_max: 8.0,
            j_max: 80.0,
        }
    }
}

impl Workspace {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.r_min, self.r_max, self.v_joint_max, self.a_max, self.j_max];
        if !vals.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::invalid(format!("workspace limits must be positive: {self:?}")));
        }
        if self.r_min >= self.r_max {
            return Err(Error::invalid(format!(
                "workspace needs r_min < r_max, got {} >= {}",
                self.r_min, self.r_max
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    #[test]
    fn mirror_flips_signed_fields() {
        let a = Action::new(deg(30.0), 0.6, deg(-40.0), 0.5, deg(45.0), 2.0);
        let m = mirror_action(&a);
        assert_eq!(m, Action::new(deg(-30.0), 0.6, deg(40.0), 0.5, deg(-45.0), 2.0));
        assert_eq!(mirror_action(&m), a);
    }

    #[test]
    fn zero_angles_are_a_fixed_point() {
        let a = Action::new(0.0, 0.6, 0.0, 0.5, 0.0, 2.0);
        let m = mirror_action(&a);
        assert_eq!(m.to_array().map(f64::abs), a.to_array());
    }

    #[test]
    fn polar_roundtrip() {
        let p = PolarPoint::new(1.1, 0.4).unwrap();
        let q = p.to_cartesian().to_polar();
        assert!((q.r - p.r).abs() < 1e-15 && (q.theta - p.theta).abs() < 1e-15);
        assert!(PolarPoint::new(-0.1, 0.0).is_err());
        assert!(PolarPoint::new(1.0, 4.0).is_err());
    }

    #[test]
    fn action_validation() {
        assert!(Action::new(0.1, 0.6, -0.1, 0.6, 0.0, 2.0).validate().is_ok());
        assert!(Action::new(0.1, 0.0, -0.1, 0.6, 0.0, 2.0).validate().is_err());
        assert!(Action::new(f64::NAN, 0.6, -0.1, 0.6, 0.0, 2.0).validate().is_err());
        assert!(Action::new(0.1, 0.6, -0.1, 0.6, 0.0, 0.0).validate().is_err());
    }

    #[test]
    fn workspace_validation() {
        assert!(Workspace::default().validate().is_ok());
        let bad = Workspace {
            r_min: 0.9,
            r_max: 0.5,
            ..Workspace::default()
        };
        assert!(bad.validate().is_err());
    }
}
