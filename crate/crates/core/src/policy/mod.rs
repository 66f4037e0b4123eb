//! Target-driven action selection, the cast-and-pull baseline and the
//! evaluation harness.

mod eval;

use std::sync::{Arc, Mutex};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::actions::{
    build_trajectory, check_feasible, grid_sample_actions, mirror_action, Action, ActionGrid,
    PolarPoint, Vec2, Workspace,
};
use crate::cablesim::{
    pull_traced, reset_state_along, rollout, CableState, RecordMeta, RolloutOptions, SimParams,
    Source, TrajectoryRecord, DT, PULL_SPEED,
};
use crate::error::{Error, Result};
use crate::regress::ForwardModel;

pub use eval::{covering_distance, evaluate, quantile, EvalOptions, EvalReport, EvalStats, TargetResult, Trial};

/// Anything that maps an action to a predicted settled endpoint.
///
/// Implementations must be mirror-symmetric: predicting the mirrored action
/// gives the reflected endpoint.
pub trait Predictor: Sync {
    fn predict(&self, a: &Action) -> Result<Vec2>;

    fn predict_batch(&self, actions: &[Action]) -> Result<Vec<Vec2>> {
        actions.par_iter().map(|a| self.predict(a)).collect()
    }

    /// Identifies the prediction function for caching.
    fn fingerprint(&self) -> String;
}

impl Predictor for ForwardModel {
    fn predict(&self, a: &Action) -> Result<Vec2> {
        ForwardModel::predict(self, a)
    }

    fn predict_batch(&self, actions: &[Action]) -> Result<Vec<Vec2>> {
        ForwardModel::predict_batch(self, actions)
    }

    fn fingerprint(&self) -> String {
        format!("model:{}", ForwardModel::fingerprint(self))
    }
}

/// Uses simulator rollouts as the forward model.
#[derive(Debug, Clone, Copy)]
pub struct SimulatorOracle {
    pub params: SimParams,
    pub opts: RolloutOptions,
}

impl Predictor for SimulatorOracle {
    fn predict(&self, a: &Action) -> Result<Vec2> {
        if a.theta1 < 0.0 {
            return Ok(rollout(&mirror_action(a), &self.params, &self.opts)?.final_pos.reflect());
        }
        Ok(rollout(a, &self.params, &self.opts)?.final_pos)
    }

    fn fingerprint(&self) -> String {
        format!("sim:{}:{}", self.params.digest(), self.opts.r0)
    }
}

/// True when the gripper trajectory of `a` passes every workspace check.
pub fn is_feasible(a: &Action, opts: &RolloutOptions) -> bool {
    build_trajectory(a, opts.r0, DT, &opts.workspace)
        .map(|t| check_feasible(&t, &opts.workspace).feasible)
        .unwrap_or(false)
}

type Cache = Option<(String, Arc<Vec<Vec2>>)>;

/// Candidate actions for argmin selection: a canonical half followed by its
/// mirror images in the same order.
#[derive(Debug)]
pub struct CandidateSet {
    actions: Vec<Action>,
    n_canonical: usize,
    cache: Mutex<Cache>,
}

impl Clone for CandidateSet {
    fn clone(&self) -> Self {
        Self {
            actions: self.actions.clone(),
            n_canonical: self.n_canonical,
            cache: Mutex::new(self.cache.lock().expect("cache lock").clone()),
        }
    }
}

impl CandidateSet {
    /// Canonical actions (`theta1 >= 0`) and their mirrors.
    pub fn from_canonical(canonical: Vec<Action>) -> Result<Self> {
        if canonical.is_empty() {
            return Err(Error::invalid("candidate set is empty"));
        }
        for a in &canonical {
            a.validate()?;
            if a.theta1 < 0.0 {
                return Err(Error::invalid(format!("candidate {a:?} is not canonical")));
            }
        }
        let n_canonical = canonical.len();
        let mirrored: Vec<Action> = canonical.iter().map(mirror_action).collect();
        let mut actions = canonical;
        actions.extend(mirrored);
        Ok(Self {
            actions,
            n_canonical,
            cache: Mutex::new(None),
        })
    }

    /// Feasible actions of `grid` and their mirrors.
    pub fn from_grid(grid: &ActionGrid, opts: &RolloutOptions) -> Result<Self> {
        let all = grid_sample_actions(grid)?;
        let feasible: Vec<Action> = all
            .par_iter()
            .filter(|a| is_feasible(a, opts))
            .copied()
            .collect();
        log::info!("{} of {} candidate actions are feasible", feasible.len(), all.len());
        Self::from_canonical(feasible)
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn canonical(&self) -> &[Action] {
        &self.actions[..self.n_canonical]
    }

    /// Predicted endpoints of every candidate, computed once per predictor.
    /// Only the canonical half is evaluated; the mirrored half is reflected.
    pub fn predictions(&self, p: &dyn Predictor) -> Result<Arc<Vec<Vec2>>> {
        let key = p.fingerprint();
        let mut cache = self.cache.lock().expect("cache lock");
        if let Some((k, v)) = cache.as_ref() {
            if *k == key {
                return Ok(Arc::clone(v));
            }
        }
        let mut preds = p.predict_batch(self.canonical())?;
        let mirrored: Vec<Vec2> = preds.iter().map(|q| q.reflect()).collect();
        preds.extend(mirrored);
        let preds = Arc::new(preds);
        *cache = Some((key, Arc::clone(&preds)));
        Ok(preds)
    }
}

/// Index of the candidate whose predicted endpoint is nearest to `target`;
/// ties go to the lowest index.
pub fn select_index(p: &dyn Predictor, candidates: &CandidateSet, target: PolarPoint) -> Result<usize> {
    let goal = target.to_cartesian();
    let preds = candidates.predictions(p)?;
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, q) in preds.iter().enumerate() {
        let d = q.distance(goal);
        if d < best.0 {
            best = (d, i);
        }
    }
    if best.1 == usize::MAX {
        return Err(Error::Numeric("no candidate has a finite predicted distance".into()));
    }
    Ok(best.1)
}

/// Candidate whose predicted endpoint is nearest to `target`.
pub fn select_action(p: &dyn Predictor, candidates: &CandidateSet, target: PolarPoint) -> Result<Action> {
    Ok(candidates.actions()[select_index(p, candidates, target)?])
}

/// What a policy does for one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Cast(Action),
    CastAndPull,
}

pub trait Policy: Sync {
    fn decide(&self, target: PolarPoint) -> Result<Decision>;
}

/// Grid argmin over a forward model.
pub struct ArgminPolicy<'a> {
    pub predictor: &'a dyn Predictor,
    pub candidates: &'a CandidateSet,
}

impl Policy for ArgminPolicy<'_> {
    fn decide(&self, target: PolarPoint) -> Result<Decision> {
        select_action(self.predictor, self.candidates, target).map(Decision::Cast)
    }
}

/// Rotated reset followed by a radial pull.
pub struct CastAndPullPolicy;

impl Policy for CastAndPullPolicy {
    fn decide(&self, _target: PolarPoint) -> Result<Decision> {
        Ok(Decision::CastAndPull)
    }
}

/// Radial pull that brings a straight cable's free end from `free_r` to
/// `target_r`, limited so the gripper stays outside `r_min`.
fn clamped_pull(free_r: f64, target_r: f64, r0: f64, ws: &Workspace) -> f64 {
    (free_r - target_r).clamp(0.0, (r0 - ws.r_min).max(0.0))
}

/// Lay the cable straight along the target bearing, pull it radially toward
/// the target radius and let it settle.
///
/// The record stores the move as `[theta_d, r0, theta_d, r_final, 0, pull
/// speed]` with waypoints sampled during the pull.
pub fn cast_and_pull(target: PolarPoint, params: &SimParams, r0: f64, ws: &Workspace) -> Result<TrajectoryRecord> {
    let start = reset_state_along(params, r0, target.theta)?;
    cast_and_pull_from(start, target, params, r0, ws)
}

/// [`cast_and_pull`] from a given rotated reset configuration.
pub fn cast_and_pull_from(
    start: CableState,
    target: PolarPoint,
    params: &SimParams,
    r0: f64,
    ws: &Workspace,
) -> Result<TrajectoryRecord> {
    ws.validate()?;
    let d = clamped_pull(start.free_end().norm(), target.r, r0, ws);
    let trace = pull_traced(start, d, params, ws)?;
    Ok(TrajectoryRecord {
        action: Action::new(target.theta, r0, target.theta, r0 - d, 0.0, PULL_SPEED),
        waypoints: trace.waypoints,
        final_pos: trace.state.free_end(),
        duration_ms: trace.duration_ms,
        meta: RecordMeta {
            params_hash: params.digest(),
            seed: None,
            source: Source::Simulated,
            settled: trace.settled,
        },
    })
}

/// `n` seeded targets spread over an annular sector on the left half.
///
/// Radius and bearing are Latin-hypercube stratified, with the radius drawn
/// uniformly in area.
pub fn make_targets(n: usize, annulus: (f64, f64), sector: (f64, f64), seed: u64) -> Result<Vec<PolarPoint>> {
    let (r_lo, r_hi) = annulus;
    let (t_lo, t_hi) = sector;
    if n == 0 {
        return Err(Error::invalid("need at least one target"));
    }
    if !(r_lo >= 0.0 && r_lo < r_hi && r_hi.is_finite()) {
        return Err(Error::invalid(format!("annulus ({r_lo}, {r_hi}) needs 0 <= low < high")));
    }
    if !(t_lo >= 0.0 && t_lo <= t_hi && t_hi <= std::f64::consts::PI) {
        return Err(Error::invalid(format!(
            "sector ({t_lo}, {t_hi}) must lie within [0, pi] with low <= high"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut us: Vec<usize> = (0..n).collect();
    let mut vs: Vec<usize> = (0..n).collect();
    us.shuffle(&mut rng);
    vs.shuffle(&mut rng);
    (0..n)
        .map(|i| {
            let u = (us[i] as f64 + rng.random::<f64>()) / n as f64;
            let v = (vs[i] as f64 + rng.random::<f64>()) / n as f64;
            let r = (r_lo * r_lo + u * (r_hi * r_hi - r_lo * r_lo)).sqrt();
            PolarPoint::new(r.clamp(r_lo, r_hi), (t_lo + v * (t_hi - t_lo)).clamp(t_lo, t_hi))
        })
        .collect()
}
