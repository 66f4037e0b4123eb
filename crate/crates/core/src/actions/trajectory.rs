use std::fmt;

use serde::{Deserialize, Serialize};

use super::{radial_spline, scurve_profile, Action, RadialSpline, ScurveProfile, Workspace};
use crate::error::{Error, Result};

/// Shortest time spent on either arc. Arcs whose angular move finishes sooner
/// hold their angle for the rest of the segment so the radial spline always
/// has a non-degenerate knot spacing.
pub const MIN_ARC_DURATION: f64 = 0.25;

/// Held-end pose: polar position plus the wrist heading (direction in which
/// the cable leaves the gripper), all in the base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub r: f64,
    pub theta: f64,
    pub heading: f64,
}

/// Continuous-time description of a cast, from which samples are drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct CastPlan {
    pub arc1: ScurveProfile,
    pub arc2: ScurveProfile,
    pub radial: RadialSpline,
    pub theta1: f64,
    pub alpha: f64,
    pub t_switch: f64,
    pub duration: f64,
}

impl CastPlan {
    pub fn theta(&self, t: f64) -> f64 {
        if t <= self.t_switch {
            self.arc1.position(t)
        } else {
            self.theta1 + self.arc2.position(t - self.t_switch)
        }
    }

    pub fn angular_velocity(&self, t: f64) -> f64 {
        if t < self.t_switch {
            self.arc1.velocity(t)
        } else {
            self.arc2.velocity(t - self.t_switch)
        }
    }

    pub fn angular_acceleration(&self, t: f64) -> f64 {
        if t < self.t_switch {
            self.arc1.acceleration(t)
        } else {
            self.arc2.acceleration(t - self.t_switch)
        }
    }

    /// Fraction of the wrist offset applied at time `t`: zero over the first
    /// arc, then a linear ramp to one over the second.
    fn wrist_ramp(&self, t: f64) -> f64 {
        if t <= self.t_switch {
            0.0
        } else {
            ((t - self.t_switch) / (self.duration - self.t_switch)).min(1.0)
        }
    }

    pub fn pose(&self, t: f64) -> TrajectorySample {
        let t = t.clamp(0.0, self.duration);
        let theta = self.theta(t);
        TrajectorySample {
            r: self.radial.eval(t),
            theta,
            heading: theta + self.alpha * self.wrist_ramp(t),
        }
    }
}

/// Uniformly sampled held-end motion for one action.
#[derive(Debug, Clone, PartialEq)]
pub struct GripperTrajectory {
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
    pub t_switch: f64,
    /// `(samples.len() - 1) * dt`; the last sample may sit slightly past the
    /// end of the planned motion, holding its final pose.
    pub duration: f64,
    pub plan: CastPlan,
}

/// Convert an action into a sampled gripper trajectory starting at `(r0, 0)`.
pub fn build_trajectory(a: &Action, r0: f64, dt: f64, ws: &Workspace) -> Result<GripperTrajectory> {
    a.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::invalid(format!("r0 must be positive, got {r0}")));
    }
    let v_cap = a.v_max.min(ws.v_joint_max);
    let arc1 = scurve_profile(a.theta1, v_cap, ws.a_max, ws.j_max);
    let arc2 = scurve_profile(a.theta2 - a.theta1, v_cap, ws.a_max, ws.j_max);
    let t_switch = arc1.duration().max(MIN_ARC_DURATION);
    let duration = t_switch + arc2.duration().max(MIN_ARC_DURATION);
    let radial = radial_spline(r0, a.r1, a.r2, t_switch, duration)?;
    let plan = CastPlan {
        arc1,
        arc2,
        radial,
        theta1: a.theta1,
        alpha: a.alpha,
        t_switch,
        duration,
    };

    let steps = (duration / dt - 1e-9).ceil() as usize;
    let samples = (0..=steps).map(|i| plan.pose(i as f64 * dt)).collect();
    Ok(GripperTrajectory {
        dt,
        samples,
        t_switch,
        duration: steps as f64 * dt,
        plan,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeasibilityRule {
    RadiusBelowMin,
    RadiusAboveMax,
    AngularSpeed,
    AngularAcceleration,
}

impl fmt::Display for FeasibilityRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FeasibilityRule::RadiusBelowMin => "r < r_min",
            FeasibilityRule::RadiusAboveMax => "r > r_max",
            FeasibilityRule::AngularSpeed => "angular speed > v_joint_max",
            FeasibilityRule::AngularAcceleration => "angular acceleration > a_max",
        };
        f.write_str(s)
    }
}

/// First sample index at which a rule is broken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: FeasibilityRule,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl Feasibility {
    pub fn describe(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{} at sample {}", v.rule, v.index))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

const LIMIT_RTOL: f64 = 1e-6;

/// Check every sample against the polar workspace box and the angular speed
/// and acceleration caps (finite differences).
pub fn check_feasible(traj: &GripperTrajectory, ws: &Workspace) -> Feasibility {
    let mut first: Vec<Violation> = Vec::new();
    let mut flag = |rule: FeasibilityRule, index: usize| {
        if !first.iter().any(|v| v.rule == rule) {
            first.push(Violation { rule, index });
        }
    };
    let s = &traj.samples;
    let dt = traj.dt;
    for (i, p) in s.iter().enumerate() {
        if p.r < ws.r_min {
            flag(FeasibilityRule::RadiusBelowMin, i);
        }
        if p.r > ws.r_max {
            flag(FeasibilityRule::RadiusAboveMax, i);
        }
        if i + 1 < s.len() {
            let w = (s[i + 1].theta - p.theta) / dt;
            if w.abs() > ws.v_joint_max * (1.0 + LIMIT_RTOL) {
                flag(FeasibilityRule::AngularSpeed, i);
            }
        }
        if i >= 1 && i + 1 < s.len() {
            let acc = (s[i + 1].theta - 2.0 * p.theta + s[i - 1].theta) / (dt * dt);
            if acc.abs() > ws.a_max * (1.0 + LIMIT_RTOL) + 1e-9 {
                flag(FeasibilityRule::AngularAcceleration, i);
            }
        }
    }
    first.sort_by_key(|v| v.index);
    Feasibility {
        feasible: first.is_empty(),
        violations: first,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::mirror_action;

    const DT: f64 = 1.0 / 240.0;

    fn deg(d: f64) -> f64 {
        d.to_radians()
    }

    fn stationary(r: f64, n: usize) -> GripperTrajectory {
        let a = Action::new(0.0, r, 0.0, r, 0.0, 2.0);
        let mut t = build_trajectory(&a, r, DT, &Workspace::default()).unwrap();
        t.samples.truncate(n);
        t.duration = (n - 1) as f64 * DT;
        t
    }

    #[test]
    fn zero_arcs_keep_gripper_on_axis() {
        let a = Action::new(0.0, 0.6, 0.0, 0.7, 0.0, 2.0);
        let t = build_trajectory(&a, 0.6, DT, &Workspace::default()).unwrap();
        assert!(t.samples.iter().all(|s| s.theta == 0.0 && s.heading == 0.0));
        assert!((t.samples.last().unwrap().r - 0.7).abs() < 1e-12);
        assert_eq!(t.t_switch, MIN_ARC_DURATION);
    }

    #[test]
    fn switch_velocity_is_zero() {
        let a = Action::new(deg(40.0), 0.6, deg(-50.0), 0.7, deg(45.0), 2.2);
        let t = build_trajectory(&a, 0.6, DT, &Workspace::default()).unwrap();
        assert!(t.plan.angular_velocity(t.t_switch).abs() < 1e-9);
        assert!(t.plan.angular_velocity(t.t_switch - 1e-12).abs() < 1e-9);
    }

    #[test]
    fn typical_cast_lasts_about_two_seconds() {
        let a = Action::new(deg(40.0), 0.6, deg(-50.0), 0.7, deg(45.0), 2.25);
        let t = build_trajectory(&a, 0.6, DT, &Workspace::default()).unwrap();
        assert!(t.duration > 1.0 && t.duration < 3.0, "duration {}", t.duration);
        assert!((t.duration - (t.samples.len() - 1) as f64 * DT).abs() < 1e-12);
    }

    #[test]
    fn mirrored_action_negates_angles_exactly() {
        let a = Action::new(deg(33.0), 0.6, deg(-61.0), 0.73, deg(41.0), 2.4);
        let t = build_trajectory(&a, 0.6, DT, &Workspace::default()).unwrap();
        let m = build_trajectory(&mirror_action(&a), 0.6, DT, &Workspace::default()).unwrap();
        assert_eq!(t.samples.len(), m.samples.len());
        for (p, q) in t.samples.iter().zip(&m.samples) {
            assert_eq!(p.r, q.r);
            assert_eq!(p.theta, -q.theta);
            assert_eq!(p.heading, -q.heading);
        }
    }

    #[test]
    fn heading_reaches_alpha_offset() {
        let a = Action::new(deg(20.0), 0.6, deg(-30.0), 0.7, deg(50.0), 2.0);
        let t = build_trajectory(&a, 0.6, DT, &Workspace::default()).unwrap();
        let last = t.samples.last().unwrap();
        assert!((last.heading - (last.theta + deg(50.0))).abs() < 1e-12);
    }

    #[test]
    fn radius_below_min_is_infeasible() {
        let ws = Workspace::default();
        let t = stationary(ws.r_min / 2.0, 20);
        let f = check_feasible(&t, &ws);
        assert!(!f.feasible);
        assert_eq!(f.violations[0].rule, FeasibilityRule::RadiusBelowMin);
        assert_eq!(f.violations[0].index, 0);
    }

    #[test]
    fn stationary_at_reset_is_feasible() {
        let t = stationary(0.6, 20);
        assert!(check_feasible(&t, &Workspace::default()).feasible);
    }

    #[test]
    fn violations_report_first_index() {
        let ws = Workspace::default();
        let a = Action::new(deg(40.0), 0.6, deg(-50.0), 0.4, 0.0, 2.0);
        let t = build_trajectory(&a, 0.6, DT, &ws).unwrap();
        let f = check_feasible(&t, &ws);
        assert!(!f.feasible);
        let v = f.violations[0];
        assert_eq!(v.rule, FeasibilityRule::RadiusBelowMin);
        assert!(t.samples[v.index].r < ws.r_min);
        assert!(t.samples[..v.index].iter().all(|s| s.r >= ws.r_min));
    }

    #[test]
    fn slow_joint_limit_caps_speed() {
        let ws = Workspace {
            v_joint_max: 1.0,
            ..Workspace::default()
        };
        let a = Action::new(deg(60.0), 0.6, deg(-60.0), 0.7, 0.0, 2.5);
        let t = build_trajectory(&a, 0.6, DT, &ws).unwrap();
        let vmax = t
            .samples
            .windows(2)
            .map(|w| ((w[1].theta - w[0].theta) / DT).abs())
            .fold(0.0, f64::max);
        assert!(vmax <= 1.0 * (1.0 + 1e-6));
        assert!(check_feasible(&t, &ws).feasible);
    }
}
