//! Planar segmented-cable dynamics.
//!
//! The cable is a chain of `n_links + 1` particles joined by inextensible
//! links. Particle 0 is the held end and particle 1 is clamped along the
//! gripper heading; both are kinematic. The rest are integrated with
//! position-based dynamics: Coulomb planar friction on velocities, then
//! repeated projection of the link-length and joint-friction constraints,
//! then damping of relative link rotation.

mod record;
mod rollout;
mod solver;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::Vec2;
use crate::error::{Error, Result};

pub use record::{read_records, write_records, RecordMeta, Source, TrajectoryRecord};
pub use rollout::{
    perturb_state, pull_rollout, pull_traced, reflect_record, rollout, rollout_from, settle,
    PullTrace, RolloutOptions,
};
pub use solver::{step, CableModel, Simulator};

/// Physics step and gripper sampling period.
pub const DT: f64 = 1.0 / 240.0;
/// Constraint projection sweeps per step.
pub const ITERATIONS: usize = 20;
/// Below this speed a particle may stick.
pub const V_STICK: f64 = 1e-3;
pub const GRAVITY: f64 = 9.81;
pub const MAX_LINKS: usize = 30;
/// Waypoint sampling period (seconds).
pub const WAYPOINT_PERIOD: f64 = 0.1;
/// A cable counts as settled after every particle stayed below this speed ...
pub const SETTLE_SPEED: f64 = 1e-3;
/// ... for this long.
pub const SETTLE_HOLD: f64 = 0.5;
pub const SETTLE_TIMEOUT: f64 = 10.0;
/// Radial speed of the quasistatic pull (m/s).
pub const PULL_SPEED: f64 = 0.05;

/// Tunable physics of the segmented cable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Joint friction as a position-based constraint stiffness in [0, 1]:
    /// the fraction of each joint's rotation removed per step.
    pub bend_stiffness: f64,
    /// Viscous damping of relative link rotation, kg/s.
    pub joint_damping: f64,
    /// Total cable mass excluding the endpoint weight, kg.
    pub cable_mass: f64,
    /// Mass attached at the free end, kg.
    pub endpoint_mass: f64,
    pub mu_d: f64,
    pub mu_s: f64,
    pub n_links: usize,
    /// meters
    pub cable_length: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            bend_stiffness: 0.05,
            joint_damping: 0.004,
            cable_mass: 0.05,
            endpoint_mass: 0.02,
            mu_d: 0.3,
            mu_s: 0.4,
            n_links: 18,
            cable_length: 0.65,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.bend_stiffness,
            self.joint_damping,
            self.cable_mass,
            self.endpoint_mass,
            self.mu_d,
            self.mu_s,
            self.cable_length,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid(format!("non-finite sim params {self:?}")));
        }
        if self.cable_mass <= 0.0 || self.endpoint_mass <= 0.0 {
            return Err(Error::invalid("cable and endpoint masses must be positive"));
        }
        if !(0.0..=1.0).contains(&self.bend_stiffness) {
            return Err(Error::invalid(format!(
                "bend_stiffness {} outside [0, 1]",
                self.bend_stiffness
            )));
        }
        if self.mu_d < 0.0 || self.mu_d > self.mu_s {
            return Err(Error::invalid(format!(
                "friction needs 0 <= mu_d <= mu_s, got mu_d={} mu_s={}",
                self.mu_d, self.mu_s
            )));
        }
        if self.joint_damping < 0.0 {
            return Err(Error::invalid("joint_damping must be >= 0"));
        }
        if self.n_links < 2 {
            return Err(Error::invalid("n_links must be >= 2"));
        }
        if self.cable_length <= 0.0 {
            return Err(Error::invalid("cable_length must be positive"));
        }
        Ok(())
    }

    /// Link count actually simulated.
    pub fn effective_links(&self) -> usize {
        if self.n_links > MAX_LINKS {
            log::warn!(
                "n_links={} exceeds {MAX_LINKS}; capping (longer chains lose stability)",
                self.n_links
            );
            MAX_LINKS
        } else {
            self.n_links
        }
    }

    pub fn link_length(&self) -> f64 {
        self.cable_length / self.effective_links() as f64
    }

    /// Short stable digest used to tag records with the parameters that
    /// produced them.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Particle chain configuration; index 0 is the held end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CableState {
    pub positions: Vec<Vec2>,
    pub velocities: Vec<Vec2>,
    pub time: f64,
}

impl CableState {
    pub fn free_end(&self) -> Vec2 {
        *self.positions.last().expect("non-empty chain")
    }

    pub fn held_end(&self) -> Vec2 {
        self.positions[0]
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Largest relative deviation of a link from its rest length.
    pub fn max_link_error(&self, link_length: f64) -> f64 {
        self.positions
            .windows(2)
            .map(|w| ((w[1] - w[0]).norm() - link_length).abs() / link_length)
            .fold(0.0, f64::max)
    }

    pub fn reflected(&self) -> CableState {
        CableState {
            positions: self.positions.iter().map(|p| p.reflect()).collect(),
            velocities: self.velocities.iter().map(|p| p.reflect()).collect(),
            time: self.time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().chain(&self.velocities).all(|p| p.is_finite())
    }
}

/// Straight cable along the `theta = 0` ray with the held end at `(r0, 0)`.
pub fn reset_state(params: &SimParams, r0: f64) -> Result<CableState> {
    reset_state_along(params, r0, 0.0)
}

/// Reset outcome rotated to bearing `theta`.
pub fn reset_state_along(params: &SimParams, r0: f64, theta: f64) -> Result<CableState> {
    params.validate()?;
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(Error::invalid(format!("r0 must be positive, got {r0}")));
    }
    let n = params.effective_links();
    let len = params.link_length();
    let dir = Vec2::from_angle(theta);
    let positions = (0..=n).map(|i| dir * (r0 + i as f64 * len)).collect();
    Ok(CableState {
        positions,
        velocities: vec![Vec2::ZERO; n + 1],
        time: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reset_places_free_end_on_axis() {
        let p = SimParams::default();
        let s = reset_state(&p, 0.6).unwrap();
        assert_eq!(s.positions.len(), 19);
        let end = s.free_end();
        assert!((end.x - 1.25).abs() < 1e-12 && end.y == 0.0);
        assert_eq!(s.held_end(), Vec2::new(0.6, 0.0));
        assert!(s.velocities.iter().all(|v| *v == Vec2::ZERO));
        assert_eq!(s.time, 0.0);
        let l = p.link_length();
        for w in s.positions.windows(2) {
            assert!(((w[1] - w[0]).norm() - l).abs() < 1e-15);
        }
    }

    #[test]
    fn params_validation() {
        assert!(SimParams::default().validate().is_ok());
        let bad = [
            SimParams { cable_mass: 0.0, ..Default::default() },
            SimParams { mu_d: 0.5, mu_s: 0.4, ..Default::default() },
            SimParams { bend_stiffness: 1.5, ..Default::default() },
            SimParams { n_links: 1, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
    }

    #[test]
    fn link_count_is_capped() {
        let p = SimParams { n_links: 45, ..Default::default() };
        assert_eq!(p.effective_links(), MAX_LINKS);
        assert_eq!(reset_state(&p, 0.6).unwrap().positions.len(), MAX_LINKS + 1);
    }

    #[test]
    fn digest_tracks_values() {
        let a = SimParams::default();
        let b = SimParams { mu_d: 0.31, ..a };
        assert_eq!(a.digest(), SimParams::default().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
