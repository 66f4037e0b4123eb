use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cast_and_pull_from, Decision, Policy};
use crate::actions::{Action, PolarPoint, Vec2};
use crate::cablesim::{perturb_state, reset_state, reset_state_along, rollout_from, RolloutOptions, SimParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub rollout: RolloutOptions,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            rollout: RolloutOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    #[serde(rename = "final")]
    pub final_pos: Vec2,
    /// meters
    pub error: f64,
    /// The selected action could not be executed; `final` is the reset
    /// endpoint.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResult {
    pub target: PolarPoint,
    /// The cast chosen for this target; `None` for cast-and-pull.
    pub action: Option<Action>,
    pub trials: Vec<Trial>,
}

/// Error quantiles as fractions of the cable length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_target: Vec<TargetResult>,
    pub stats: EvalStats,
    /// meters
    pub cable_length: f64,
}

impl EvalReport {
    /// Every trial error in meters, target-major.
    pub fn errors(&self) -> Vec<f64> {
        self.per_target.iter().flat_map(|t| t.trials.iter().map(|x| x.error)).collect()
    }

    pub fn n_trials(&self) -> usize {
        self.per_target.iter().map(|t| t.trials.len()).sum()
    }

    /// Median error in meters.
    pub fn median_m(&self) -> f64 {
        self.stats.median * self.cable_length
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn stats(errors: &[f64], cable_length: f64) -> EvalStats {
    let mut s: Vec<f64> = errors.iter().map(|e| e / cable_length).collect();
    s.sort_by(f64::total_cmp);
    EvalStats {
        median: quantile(&s, 0.5),
        q1: quantile(&s, 0.25),
        q3: quantile(&s, 0.75),
        min: s[0],
        max: s[s.len() - 1],
    }
}

fn trial_rng(seed: u64, target: usize, trial: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(target as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(trial as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn run_trial(
    decision: &Decision,
    target: PolarPoint,
    truth: &SimParams,
    noise: Option<f64>,
    opts: &EvalOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Trial> {
    let r0 = opts.rollout.r0;
    let start = match decision {
        Decision::Cast(_) => reset_state(truth, r0)?,
        Decision::CastAndPull => reset_state_along(truth, r0, target.theta)?,
    };
    let start = match noise {
        Some(sd) if sd > 0.0 => perturb_state(&start, sd, rng)?,
        _ => start,
    };
    let goal = target.to_cartesian();
    let reached = match decision {
        Decision::Cast(a) => rollout_from(start.clone(), a, truth, &opts.rollout).map(|r| r.final_pos),
        Decision::CastAndPull => {
            cast_and_pull_from(start.clone(), target, truth, r0, &opts.rollout.workspace).map(|r| r.final_pos)
        }
    };
    match reached {
        Ok(p) => Ok(Trial {
            final_pos: p,
            error: p.distance(goal),
            failed: false,
        }),
        Err(Error::Infeasible(why)) => {
            log::warn!("selected action infeasible for target {target:?}: {why}");
            let p = start.free_end();
            Ok(Trial {
                final_pos: p,
                error: p.distance(goal),
                failed: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Execute `policy` on every target `trials` times in the truth simulator.
/// `noise` is the RMS sideways offset (meters) of the seeded reset
/// perturbation.
pub fn evaluate(
    policy: &dyn Policy,
    targets: &[PolarPoint],
    truth: &SimParams,
    trials: usize,
    noise: Option<f64>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::invalid("evaluation needs at least one trial per target"));
    }
    if targets.is_empty() {
        return Err(Error::invalid("evaluation needs at least one target"));
    }
    truth.validate()?;
    let per_target = targets
        .par_iter()
        .enumerate()
        .map(|(ti, &target)| {
            let decision = policy.decide(target)?;
            let trials = (0..trials)
                .map(|k| run_trial(&decision, target, truth, noise, opts, &mut trial_rng(opts.seed, ti, k)))
                .collect::<Result<Vec<_>>>()?;
            Ok(TargetResult {
                target,
                action: match decision {
                    Decision::Cast(a) => Some(a),
                    Decision::CastAndPull => None,
                },
                trials,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = per_target.iter().flat_map(|t| t.trials.iter().map(|x| x.error)).collect();
    Ok(EvalReport {
        stats: stats(&errors, truth.cable_length),
        per_target,
        cable_length: truth.cable_length,
    })
}

/// Largest distance from any target to its nearest reachable endpoint.
pub fn covering_distance(targets: &[PolarPoint], endpoints: &[Vec2]) -> Result<f64> {
    if endpoints.is_empty() || targets.is_empty() {
        return Err(Error::invalid("covering distance needs targets and endpoints"));
    }
    Ok(targets
        .iter()
        .map(|t| {
            let g = t.to_cartesian();
            endpoints.iter().map(|e| e.distance(g)).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::mirror_action;
    use crate::policy::{make_targets, CastAndPullPolicy};

    struct Fixed(Action);

    impl Policy for Fixed {
        fn decide(&self, t: PolarPoint) -> Result<Decision> {
            Ok(Decision::Cast(if t.theta < 0.0 { mirror_action(&self.0) } else { self.0 }))
        }
    }

    fn cast() -> Action {
        Action::new(0.6, 0.6, -0.8, 0.5, 0.6, 2.2)
    }

    #[test]
    fn quantiles_interpolate_linearly() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&s, 0.5), 2.5);
        assert_eq!(quantile(&s, 0.25), 1.75);
        assert_eq!(quantile(&s, 0.0), 1.0);
        assert_eq!(quantile(&s, 1.0), 4.0);
        assert_eq!(quantile(&[7.0], 0.3), 7.0);
    }

    #[test]
    fn noiseless_trials_repeat_and_rows_count() {
        let p = SimParams::default();
        let targets = make_targets(3, (0.8, 1.1), (0.1, 0.9), 1).unwrap();
        let rep = evaluate(&Fixed(cast()), &targets, &p, 5, None, &EvalOptions::default()).unwrap();
        assert_eq!(rep.n_trials(), 15);
        for t in &rep.per_target {
            assert!(t.trials.iter().all(|x| *x == t.trials[0]));
        }
        let s = rep.stats;
        assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
    }

    #[test]
    fn noisy_trials_differ_but_repeat_by_seed() {
        let p = SimParams::default();
        let targets = make_targets(2, (0.8, 1.1), (0.1, 0.9), 1).unwrap();
        let o = EvalOptions::default();
        let a = evaluate(&Fixed(cast()), &targets, &p, 3, Some(0.005), &o).unwrap();
        let b = evaluate(&Fixed(cast()), &targets, &p, 3, Some(0.005), &o).unwrap();
        assert_eq!(a, b);
        let t = &a.per_target[0].trials;
        assert!(t[0].final_pos != t[1].final_pos);
    }

    #[test]
    fn mirrored_targets_mirror_errors() {
        let p = SimParams::default();
        let targets = make_targets(3, (0.8, 1.1), (0.1, 0.9), 4).unwrap();
        let mirrored: Vec<PolarPoint> = targets.iter().map(|t| t.mirrored()).collect();
        let o = EvalOptions::default();
        let a = evaluate(&Fixed(cast()), &targets, &p, 1, None, &o).unwrap();
        let b = evaluate(&Fixed(cast()), &mirrored, &p, 1, None, &o).unwrap();
        for (x, y) in a.errors().iter().zip(b.errors()) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_cast_is_a_failed_trial() {
        let p = SimParams::default();
        // far beyond the workspace
        let bad = Action::new(0.6, 0.6, -0.8, 3.0, 0.6, 2.2);
        let t = PolarPoint::new(1.0, 0.5).unwrap();
        let rep = evaluate(&Fixed(bad), &[t], &p, 2, None, &EvalOptions::default()).unwrap();
        let tr = &rep.per_target[0].trials[0];
        assert!(tr.failed);
        let reset_end = Vec2::new(0.6 + p.cable_length, 0.0);
        assert!((tr.error - reset_end.distance(t.to_cartesian())).abs() < 1e-9);
    }

    #[test]
    fn cast_and_pull_policy_runs() {
        let p = SimParams::default();
        let t = PolarPoint::new(1.22, 0.4).unwrap();
        let rep = evaluate(&CastAndPullPolicy, &[t], &p, 1, None, &EvalOptions::default()).unwrap();
        assert!(rep.per_target[0].action.is_none());
        assert!(rep.per_target[0].trials[0].error < 0.02);
    }

    #[test]
    fn covering_distance_is_worst_nearest_gap() {
        let ts = [PolarPoint::new(1.0, 0.0).unwrap(), PolarPoint::new(2.0, 0.0).unwrap()];
        let ends = [Vec2::new(1.1, 0.0), Vec2::new(0.0, 5.0)];
        assert!((covering_distance(&ts, &ends).unwrap() - 0.9).abs() < 1e-12);
    }
}
