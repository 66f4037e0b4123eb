use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{latin_hypercube, GenerationStats, OptimResult};
use crate::error::{Error, Result};

/// Settings for [`differential_evolution`]; defaults follow the common
/// library defaults for the `best1bin` strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeSettings {
    /// Population size is `popsize_factor * dims`.
    pub popsize_factor: usize,
    /// Differential weight `F` is drawn uniformly from this range once per
    /// generation.
    pub mutation: (f64, f64),
    pub recombination: f64,
    /// Relative convergence tolerance on the population's objective spread.
    pub tol: f64,
    /// Absolute convergence tolerance on the same spread.
    pub atol: f64,
    pub max_generations: usize,
    pub seed: u64,
}

impl Default for DeSettings {
    fn default() -> Self {
        Self {
            popsize_factor: 15,
            mutation: (0.5, 1.0),
            recombination: 0.7,
            tol: 0.01,
            atol: 0.0,
            max_generations: 1000,
            seed: 0,
        }
    }
}

impl DeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.popsize_factor < 4 {
            return Err(Error::invalid("DE popsize_factor must be >= 4"));
        }
        let (lo, hi) = self.mutation;
        if !(lo > 0.0 && lo <= hi && hi <= 2.0) {
            return Err(Error::invalid(format!("DE mutation range {lo}..{hi} invalid")));
        }
        if !(0.0..=1.0).contains(&self.recombination) {
            return Err(Error::invalid("DE recombination must be in [0, 1]"));
        }
        if self.tol < 0.0 || self.atol < 0.0 {
            return Err(Error::invalid("DE tolerances must be >= 0"));
        }
        Ok(())
    }
}

pub(crate) fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(Error::invalid("optimizer needs at least one dimension"));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("bound {i} needs low < high, got ({lo}, {hi})")));
        }
    }
    Ok(())
}

pub(crate) fn scale(u: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    u.iter()
        .zip(bounds)
        .map(|(&t, &(lo, hi))| if t >= 1.0 { hi } else { lo + t * (hi - lo) })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Minimize `f` over the box `bounds` with the `best1bin` scheme.
///
/// Members live in the unit cube and are scaled to `bounds` for evaluation.
/// Trials for a whole generation are built from the previous population and
/// evaluated together (in parallel on the current rayon pool), then selected
/// greedily; results do not depend on the number of threads. Non-finite
/// objective values are treated as `+inf`.
pub fn differential_evolution<F>(
    f: F,
    bounds: &[(f64, f64)],
    settings: &DeSettings,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_bounds(bounds)?;
    settings.validate()?;
    let dims = bounds.len();
    let np = settings.popsize_factor * dims;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let eval = |members: &[Vec<f64>]| -> Vec<f64> {
        members
            .par_iter()
            .map(|u| {
                let y = f(&scale(u, bounds));
                if y.is_nan() {
                    f64::INFINITY
                } else {
                    y
                }
            })
            .collect()
    };

    let mut pop = latin_hypercube(np, dims, &mut rng);
    let mut energy = eval(&pop);
    let mut evaluations = np;
    let mut best = argmin(&energy);
    let mut history = Vec::new();
    let (mean, _) = mean_std(&energy);
    history.push(GenerationStats {
        generation: 0,
        best: energy[best],
        mean,
    });

    let mut converged = false;
    for generation in 1..=settings.max_generations {
        let (lo, hi) = settings.mutation;
        let weight = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                // two distinct members other than i
                let picks = sample(&mut rng, np - 1, 2);
                let pick = |k: usize| if k >= i { k + 1 } else { k };
                let (a, b) = (pick(picks.index(0)), pick(picks.index(1)));
                let forced = rng.random_range(0..dims);
                (0..dims)
                    .map(|d| {
                        let cross = rng.random::<f64>() < settings.recombination || d == forced;
                        if cross {
                            (pop[best][d] + weight * (pop[a][d] - pop[b][d])).clamp(0.0, 1.0)
                        } else {
                            pop[i][d]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_energy = eval(&trials);
        evaluations += np;
        for (i, (t, e)) in trials.into_iter().zip(trial_energy).enumerate() {
            if e <= energy[i] {
                pop[i] = t;
                energy[i] = e;
            }
        }
        best = argmin(&energy);
        let (mean, std) = mean_std(&energy);
        history.push(GenerationStats {
            generation,
            best: energy[best],
            mean,
        });
        if mean.is_finite() && std <= settings.atol + settings.tol * mean.abs() {
            converged = true;
            break;
        }
    }

    Ok(OptimResult {
        x: scale(&pop[best], bounds),
        fun: energy[best],
        history,
        evaluations,
        converged,
    })
}
