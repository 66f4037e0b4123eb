use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{
    reset_state, CableState, RecordMeta, SimParams, Simulator, Source, TrajectoryRecord, DT,
    PULL_SPEED, SETTLE_HOLD, SETTLE_SPEED, SETTLE_TIMEOUT, WAYPOINT_PERIOD,
};
use crate::actions::{
    build_trajectory, check_feasible, mirror_action, Action, TrajectorySample, Vec2, Workspace,
};
use crate::error::{Error, Result};

/// Setup shared by every cast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOptions {
    /// Radius of the held end at the start of the cast, on the `theta = 0` ray.
    pub r0: f64,
    pub workspace: Workspace,
    /// Run the settle phase after the driven motion.
    pub settle: bool,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            r0: 0.6,
            workspace: Workspace::default(),
            settle: true,
        }
    }
}

/// Cast from the straight reset configuration.
pub fn rollout(a: &Action, params: &SimParams, opts: &RolloutOptions) -> Result<TrajectoryRecord> {
    let start = reset_state(params, opts.r0)?;
    rollout_from(start, a, params, opts)
}

/// Cast from an arbitrary starting configuration whose held end sits at
/// `(opts.r0, 0)`.
pub fn rollout_from(
    start: CableState,
    a: &Action,
    params: &SimParams,
    opts: &RolloutOptions,
) -> Result<TrajectoryRecord> {
    let traj = build_trajectory(a, opts.r0, DT, &opts.workspace)?;
    let feas = check_feasible(&traj, &opts.workspace);
    if !feas.feasible {
        return Err(Error::Infeasible(feas.describe()));
    }
    let mut sim = Simulator::new(params, start, DT)?;

    let stride = (WAYPOINT_PERIOD / DT).round() as usize;
    let duration_ms = (traj.duration * 1000.0 + 1e-6).floor() as u64;
    let count = (duration_ms / 100) as usize;
    let mut waypoints = Vec::with_capacity(count);
    for (i, pose) in traj.samples.iter().enumerate().skip(1) {
        sim.step(pose)?;
        if i % stride == 0 && waypoints.len() < count {
            waypoints.push(sim.state().free_end());
        }
    }
    debug_assert_eq!(waypoints.len(), count);

    let settled = if opts.settle {
        let hold = *traj.samples.last().expect("non-empty trajectory");
        settle(&mut sim, &hold)?
    } else {
        true
    };

    Ok(TrajectoryRecord {
        action: *a,
        waypoints,
        final_pos: sim.state().free_end(),
        duration_ms,
        meta: RecordMeta {
            params_hash: params.digest(),
            seed: None,
            source: Source::Simulated,
            settled,
        },
    })
}

/// Hold the gripper at `pose` until every particle stays slower than
/// [`SETTLE_SPEED`] for [`SETTLE_HOLD`] seconds. Returns false on timeout.
pub fn settle(sim: &mut Simulator, pose: &TrajectorySample) -> Result<bool> {
    let need = (SETTLE_HOLD / sim.dt()).round() as usize;
    let max_steps = (SETTLE_TIMEOUT / sim.dt()).round() as usize;
    let mut calm = 0;
    for _ in 0..max_steps {
        if calm >= need {
            return Ok(true);
        }
        sim.step(pose)?;
        if sim.state().max_speed() < SETTLE_SPEED {
            calm += 1;
        } else {
            calm = 0;
        }
    }
    if calm >= need {
        return Ok(true);
    }
    log::debug!("cable did not settle within {SETTLE_TIMEOUT} s");
    Ok(false)
}

/// Free-end path of a radial pull.
#[derive(Debug, Clone, PartialEq)]
pub struct PullTrace {
    pub state: CableState,
    /// Free-end positions every 100 ms of the driven pull.
    pub waypoints: Vec<Vec2>,
    pub duration_ms: u64,
    pub settled: bool,
}

/// Drag the held end radially toward the base by `pull_distance` at
/// [`PULL_SPEED`], keeping the wrist heading, then let the cable settle.
pub fn pull_rollout(
    start: CableState,
    pull_distance: f64,
    params: &SimParams,
    ws: &Workspace,
) -> Result<CableState> {
    pull_traced(start, pull_distance, params, ws).map(|t| t.state)
}

/// [`pull_rollout`] that also samples the free end during the pull.
pub fn pull_traced(
    start: CableState,
    pull_distance: f64,
    params: &SimParams,
    ws: &Workspace,
) -> Result<PullTrace> {
    if !(pull_distance.is_finite() && pull_distance >= 0.0) {
        return Err(Error::invalid(format!(
            "pull distance must be >= 0, got {pull_distance}"
        )));
    }
    let held = start.held_end();
    let r_start = held.norm();
    let max_pull = (r_start - ws.r_min).max(0.0);
    if pull_distance > max_pull + 1e-12 {
        return Err(Error::Workspace {
            requested: pull_distance,
            max_pull,
        });
    }
    let theta = held.y.atan2(held.x);
    let first = start.positions[1] - held;
    let heading = first.y.atan2(first.x);
    let mut sim = Simulator::new(params, start, DT)?;

    let stride = (WAYPOINT_PERIOD / DT).round() as usize;
    let steps = (pull_distance / PULL_SPEED / DT).ceil() as usize;
    let duration_ms = (steps as f64 * DT * 1000.0 + 1e-6).floor() as u64;
    let mut waypoints = Vec::with_capacity(steps / stride);
    for k in 1..=steps {
        let moved = (PULL_SPEED * k as f64 * DT).min(pull_distance);
        sim.step(&TrajectorySample {
            r: r_start - moved,
            theta,
            heading,
        })?;
        if k % stride == 0 {
            waypoints.push(sim.state().free_end());
        }
    }
    debug_assert_eq!(waypoints.len() as u64, duration_ms / 100);
    let hold = TrajectorySample {
        r: r_start - pull_distance,
        theta,
        heading,
    };
    let settled = settle(&mut sim, &hold)?;
    if !settled {
        log::warn!("cable still moving after pull of {pull_distance:.3} m");
    }
    Ok(PullTrace {
        state: sim.into_state(),
        waypoints,
        duration_ms,
        settled,
    })
}

/// Joint-angle noise scale giving an RMS lateral particle offset of one meter
/// on a chain of `links` links of length `len`.
///
/// With independent joint noise `e_j`, particle `i` moves sideways by about
/// `len * sum_j (i - j + 1) e_j`, whose variance is `len^2 s^2 sum_{m<i} m^2`.
fn lateral_gain(links: usize, len: f64) -> f64 {
    let free = links.saturating_sub(1).max(1);
    let mut total = 0.0;
    for i in 2..=links {
        let m = (i - 1) as f64;
        total += m * (m + 1.0) * (2.0 * m + 1.0) / 6.0;
    }
    len * (total / free as f64).sqrt()
}

/// Bend each free joint of a resting cable by Gaussian noise, keeping the
/// held end, the clamped first link and all link lengths. The noise is a
/// random walk in heading, so neighbouring particles move together;
/// `lateral_sd` is the resulting RMS sideways particle offset in meters.
pub fn perturb_state<R: Rng + ?Sized>(
    state: &CableState,
    lateral_sd: f64,
    rng: &mut R,
) -> Result<CableState> {
    if !(lateral_sd.is_finite() && lateral_sd >= 0.0) {
        return Err(Error::invalid(format!(
            "perturbation stddev must be >= 0, got {lateral_sd}"
        )));
    }
    let p = &state.positions;
    let links = p.len() - 1;
    let len = (p[1] - p[0]).norm();
    let sigma = if links >= 2 { lateral_sd / lateral_gain(links, len) } else { 0.0 };
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = state.clone();
    let mut heading = {
        let d = p[1] - p[0];
        d.y.atan2(d.x)
    };
    for i in 2..p.len() {
        let prev = p[i - 1] - p[i - 2];
        let seg = p[i] - p[i - 1];
        let turn = prev.cross(seg).atan2(prev.dot(seg));
        heading += turn + noise.sample(rng);
        out.positions[i] = out.positions[i - 1] + Vec2::from_angle(heading) * seg.norm();
    }
    out.velocities.iter_mut().for_each(|v| *v = Vec2::ZERO);
    Ok(out)
}

/// Mirror image of a record across the workspace symmetry axis.
pub fn reflect_record(r: &TrajectoryRecord) -> TrajectoryRecord {
    TrajectoryRecord {
        action: mirror_action(&r.action),
        waypoints: r.waypoints.iter().map(|p| p.reflect()).collect(),
        final_pos: r.final_pos.reflect(),
        duration_ms: r.duration_ms,
        meta: r.meta.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cast() -> Action {
        Action::new(0.7, 0.6, -0.9, 0.72, 0.8, 2.25)
    }

    #[test]
    fn rollout_is_deterministic() {
        let p = SimParams::default();
        let o = RolloutOptions::default();
        let a = rollout(&cast(), &p, &o).unwrap();
        let b = rollout(&cast(), &p, &o).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.waypoints.len() as u64, a.duration_ms / 100);
        assert!(a.meta.settled);
    }

    #[test]
    fn mirrored_cast_lands_reflected() {
        let p = SimParams::default();
        let o = RolloutOptions::default();
        let a = rollout(&cast(), &p, &o).unwrap();
        let m = rollout(&mirror_action(&cast()), &p, &o).unwrap();
        assert!(a.final_pos.distance(m.final_pos.reflect()) < 1e-9);
        for (x, y) in a.waypoints.iter().zip(&m.waypoints) {
            assert!(x.distance(y.reflect()) < 1e-9);
        }
    }

    #[test]
    fn infeasible_action_is_rejected() {
        let a = Action::new(0.7, 0.6, -0.9, 0.3, 0.8, 2.25);
        let err = rollout(&a, &SimParams::default(), &RolloutOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn zero_pull_leaves_rest_state() {
        let p = SimParams::default();
        let s = reset_state(&p, 0.6).unwrap();
        let out = pull_rollout(s.clone(), 0.0, &p, &Workspace::default()).unwrap();
        for (a, b) in out.positions.iter().zip(&s.positions) {
            assert!(a.distance(*b) < 1e-12);
        }
    }

    #[test]
    fn pull_beyond_workspace_is_rejected() {
        let p = SimParams::default();
        let s = reset_state(&p, 0.6).unwrap();
        match pull_rollout(s, 0.2, &p, &Workspace::default()) {
            Err(Error::Workspace { max_pull, .. }) => assert!((max_pull - 0.05).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pull_moves_gripper_inward() {
        let p = SimParams::default();
        let s = reset_state(&p, 0.6).unwrap();
        let out = pull_rollout(s, 0.04, &p, &Workspace::default()).unwrap();
        assert!((out.held_end().x - 0.56).abs() < 1e-12);
        assert!(out.free_end().x < 1.25);
    }

    #[test]
    fn perturbation_keeps_links() {
        let p = SimParams::default();
        let s = reset_state(&p, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = perturb_state(&s, 0.005, &mut rng).unwrap();
        assert!(q.max_link_error(p.link_length()) < 1e-12);
        assert_eq!(q.positions[..2], s.positions[..2]);
        assert!(q.free_end().distance(s.free_end()) > 1e-3);
        let same = perturb_state(&s, 0.0, &mut rng).unwrap();
        assert!(same.free_end().distance(s.free_end()) < 1e-12);
    }

    #[test]
    fn perturbation_rms_matches_requested_offset() {
        // Monte Carlo estimate of the RMS sideways offset over free particles
        let p = SimParams::default();
        let s = reset_state(&p, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut sum, mut count) = (0.0, 0usize);
        for _ in 0..2000 {
            let q = perturb_state(&s, 0.005, &mut rng).unwrap();
            for pt in &q.positions[2..] {
                sum += pt.y * pt.y;
                count += 1;
            }
        }
        let rms = (sum / count as f64).sqrt();
        assert!((rms - 0.005).abs() < 0.00025, "rms {rms}");
    }

    #[test]
    fn pull_trace_samples_every_100ms() {
        let p = SimParams::default();
        let s = reset_state(&p, 0.6).unwrap();
        let t = pull_traced(s, 0.04, &p, &Workspace::default()).unwrap();
        // 0.04 m at 0.05 m/s is 0.8 s of pulling
        assert_eq!(t.duration_ms, 800);
        assert_eq!(t.waypoints.len(), 8);
        assert!(t.waypoints.windows(2).all(|w| w[1].x < w[0].x));
    }
}
