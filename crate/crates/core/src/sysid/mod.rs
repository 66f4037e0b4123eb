//! Simulator parameter identification from reference trajectories.

mod bo;
mod de;

use std::fmt;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cablesim::{rollout, RolloutOptions, SimParams, TrajectoryRecord};
use crate::error::{Error, Result};

pub use bo::{bayes_opt_ei, expected_improvement, BoSettings};
pub use de::{differential_evolution, DeSettings};

/// Objective charged for a candidate whose rollout blows up (meters).
pub const DIVERGENCE_PENALTY: f64 = 10.0;

/// `SimParams` fields that may be tuned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunableParam {
    BendStiffness,
    JointDamping,
    CableMass,
    EndpointMass,
    MuD,
    MuS,
    CableLength,
}

impl TunableParam {
    pub fn name(self) -> &'static str {
        match self {
            TunableParam::BendStiffness => "bend_stiffness",
            TunableParam::JointDamping => "joint_damping",
            TunableParam::CableMass => "cable_mass",
            TunableParam::EndpointMass => "endpoint_mass",
            TunableParam::MuD => "mu_d",
            TunableParam::MuS => "mu_s",
            TunableParam::CableLength => "cable_length",
        }
    }

    pub fn get(self, p: &SimParams) -> f64 {
        match self {
            TunableParam::BendStiffness => p.bend_stiffness,
            TunableParam::JointDamping => p.joint_damping,
            TunableParam::CableMass => p.cable_mass,
            TunableParam::EndpointMass => p.endpoint_mass,
            TunableParam::MuD => p.mu_d,
            TunableParam::MuS => p.mu_s,
            TunableParam::CableLength => p.cable_length,
        }
    }

    fn set(self, p: &mut SimParams, v: f64) {
        match self {
            TunableParam::BendStiffness => p.bend_stiffness = v,
            TunableParam::JointDamping => p.joint_damping = v,
            TunableParam::CableMass => p.cable_mass = v,
            TunableParam::EndpointMass => p.endpoint_mass = v,
            TunableParam::MuD => p.mu_d = v,
            TunableParam::MuS => p.mu_s = v,
            TunableParam::CableLength => p.cable_length = v,
        }
    }
}

impl fmt::Display for TunableParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ordered box of tuned parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub names: Vec<TunableParam>,
    pub bounds: Vec<(f64, f64)>,
}

impl Default for ParamSpace {
    /// Joint friction, cable mass, endpoint mass and planar friction.
    fn default() -> Self {
        Self {
            names: vec![
                TunableParam::BendStiffness,
                TunableParam::CableMass,
                TunableParam::EndpointMass,
                TunableParam::MuD,
            ],
            bounds: vec![(0.01, 0.3), (0.02, 0.12), (0.005, 0.06), (0.1, 0.5)],
        }
    }
}

impl ParamSpace {
    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() || self.names.len() != self.bounds.len() {
            return Err(Error::invalid("param space needs one bound per name"));
        }
        for (i, n) in self.names.iter().enumerate() {
            if self.names[..i].contains(n) {
                return Err(Error::invalid(format!("parameter {n} listed twice")));
            }
        }
        de::check_bounds(&self.bounds)
    }

    pub fn dims(&self) -> usize {
        self.names.len()
    }

    /// Install `x` into a copy of `base`. A dynamic friction above the static
    /// one raises the static coefficient to match.
    pub fn apply(&self, base: &SimParams, x: &[f64]) -> Result<SimParams> {
        if x.len() != self.dims() {
            return Err(Error::invalid(format!(
                "candidate has {} values for {} parameters",
                x.len(),
                self.dims()
            )));
        }
        let mut p = *base;
        for (n, &v) in self.names.iter().zip(x) {
            n.set(&mut p, v);
        }
        if p.mu_d > p.mu_s {
            if self.names.contains(&TunableParam::MuS) {
                return Err(Error::invalid("candidate has mu_d > mu_s"));
            }
            p.mu_s = p.mu_d;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn extract(&self, p: &SimParams) -> Vec<f64> {
        self.names.iter().map(|n| n.get(p)).collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims() && x.iter().zip(&self.bounds).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Best and mean objective of one generation (or BO iteration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub mean: f64,
}

/// Outcome of a box-constrained minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fun: f64,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    /// True when the optimizer met its tolerance before its budget.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    De,
    Bo,
}

/// Tuned parameters with the search trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TuningWire", from = "TuningWire")]
pub struct TuningResult {
    pub names: Vec<TunableParam>,
    pub best: Vec<f64>,
    pub best_params: SimParams,
    /// meters
    pub best_error: f64,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

#[derive(Serialize, Deserialize)]
struct TuningWire {
    names: Vec<TunableParam>,
    best: Vec<f64>,
    best_error: f64,
    history: Vec<(usize, f64, f64)>,
    seed: u64,
    evaluations: usize,
    optimizer: Optimizer,
    best_params: SimParams,
}

impl From<TuningResult> for TuningWire {
    fn from(t: TuningResult) -> Self {
        TuningWire {
            names: t.names,
            best: t.best,
            best_error: t.best_error,
            history: t.history.iter().map(|h| (h.generation, h.best, h.mean)).collect(),
            seed: t.seed,
            evaluations: t.evaluations,
            optimizer: t.optimizer,
            best_params: t.best_params,
        }
    }
}

impl From<TuningWire> for TuningResult {
    fn from(w: TuningWire) -> Self {
        TuningResult {
            names: w.names,
            best: w.best,
            best_params: w.best_params,
            best_error: w.best_error,
            history: w
                .history
                .into_iter()
                .map(|(generation, best, mean)| GenerationStats {
                    generation,
                    best,
                    mean,
                })
                .collect(),
            evaluations: w.evaluations,
            seed: w.seed,
            optimizer: w.optimizer,
        }
    }
}

impl TuningResult {
    /// `|tuned - truth| / |truth|` per tuned parameter.
    pub fn relative_errors(&self, truth: &SimParams) -> Vec<f64> {
        self.names
            .iter()
            .zip(&self.best)
            .map(|(n, v)| {
                let t = n.get(truth);
                (v - t).abs() / t.abs()
            })
            .collect()
    }
}

/// Average distance between matched 100 ms waypoints plus the final
/// endpoints. Records of different duration are compared over the shorter.
pub fn waypoint_error(sim: &TrajectoryRecord, reference: &TrajectoryRecord) -> Result<f64> {
    if sim.waypoints.is_empty() || reference.waypoints.is_empty() {
        return Err(Error::invalid("waypoint error needs at least one waypoint per record"));
    }
    let pairs = sim
        .waypoints
        .iter()
        .zip(&reference.waypoints)
        .chain(std::iter::once((&sim.final_pos, &reference.final_pos)));
    // running mean: a constant distance stays exact
    let mut mean = 0.0;
    for (k, (a, b)) in pairs.enumerate() {
        mean += (a.distance(*b) - mean) / (k + 1) as f64;
    }
    Ok(mean)
}

/// Mean waypoint error of `candidate` (installed into `base`) over the
/// reference batch. Rollouts that diverge or fail score
/// [`DIVERGENCE_PENALTY`].
pub fn tuning_objective(
    candidate: &[f64],
    refs: &[TrajectoryRecord],
    space: &ParamSpace,
    base: &SimParams,
    opts: &RolloutOptions,
) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::invalid("tuning needs at least one reference trajectory"));
    }
    let params = space.apply(base, candidate)?;
    let mut total = 0.0;
    for r in refs {
        total += match rollout(&r.action, &params, opts) {
            Ok(sim) => waypoint_error(&sim, r)?,
            Err(Error::SimulationDiverged { .. }) => DIVERGENCE_PENALTY,
            Err(e @ Error::Infeasible(_)) => return Err(e),
            Err(_) => DIVERGENCE_PENALTY,
        };
    }
    Ok(total / refs.len() as f64)
}

/// Seeded uniform sample of `k` records without replacement, kept in dataset
/// order.
pub fn subsample_tune_set(
    dataset: &[TrajectoryRecord],
    k: usize,
    seed: u64,
) -> Result<Vec<TrajectoryRecord>> {
    if k > dataset.len() {
        return Err(Error::invalid(format!(
            "cannot draw {k} tuning trajectories from {}",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, dataset.len(), k).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| dataset[i].clone()).collect())
}

/// `n` points in the unit cube with exactly one point per row/column stratum
/// in every dimension.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dims: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dims]; n];
    let mut perm: Vec<usize> = (0..n).collect();
    for d in 0..dims {
        perm.shuffle(rng);
        for (i, p) in pts.iter_mut().enumerate() {
            p[d] = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    pts
}

fn objective_fn<'a>(
    refs: &'a [TrajectoryRecord],
    space: &'a ParamSpace,
    base: &'a SimParams,
    opts: &'a RolloutOptions,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |x: &[f64]| match tuning_objective(x, refs, space, base, opts) {
        Ok(v) => v,
        Err(e) => {
            log::debug!("candidate {x:?} rejected: {e}");
            DIVERGENCE_PENALTY
        }
    }
}

fn check_refs(refs: &[TrajectoryRecord], space: &ParamSpace) -> Result<()> {
    space.validate()?;
    if refs.is_empty() {
        return Err(Error::invalid("tuning needs at least one reference trajectory"));
    }
    Ok(())
}

/// Tune `space` with differential evolution.
pub fn tune_de(
    refs: &[TrajectoryRecord],
    space: &ParamSpace,
    base: &SimParams,
    opts: &RolloutOptions,
    settings: &DeSettings,
) -> Result<TuningResult> {
    check_refs(refs, space)?;
    let res = differential_evolution(objective_fn(refs, space, base, opts), &space.bounds, settings)?;
    finish(res, space, base, settings.seed, Optimizer::De)
}

/// Tune `space` with GP-EI Bayesian optimization.
pub fn tune_bo(
    refs: &[TrajectoryRecord],
    space: &ParamSpace,
    base: &SimParams,
    opts: &RolloutOptions,
    settings: &BoSettings,
) -> Result<TuningResult> {
    check_refs(refs, space)?;
    let res = bayes_opt_ei(objective_fn(refs, space, base, opts), &space.bounds, settings)?;
    finish(res, space, base, settings.seed, Optimizer::Bo)
}

fn finish(
    res: OptimResult,
    space: &ParamSpace,
    base: &SimParams,
    seed: u64,
    optimizer: Optimizer,
) -> Result<TuningResult> {
    Ok(TuningResult {
        names: space.names.clone(),
        best_params: space.apply(base, &res.x)?,
        best: res.x,
        best_error: res.fun,
        history: res.history,
        evaluations: res.evaluations,
        seed,
        optimizer,
    })
}
