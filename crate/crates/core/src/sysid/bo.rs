use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::de::{check_bounds, scale};
use super::{latin_hypercube, GenerationStats, OptimResult};
use crate::error::{Error, Result};
use crate::regress::{optimize_hyper, GpHyper, GpRegressor, HyperSearch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoSettings {
    pub n_init: usize,
    pub n_iter: usize,
    /// Random candidates scored per iteration.
    pub n_candidates: usize,
    /// Best candidates refined by local pattern search.
    pub n_refine: usize,
    /// Refit kernel hyperparameters every this many iterations; the GP itself
    /// is re-conditioned on all data every iteration.
    pub hyper_every: usize,
    /// Hyperparameters are fitted on a seeded subset of at most this many
    /// observations.
    pub hyper_max_points: usize,
    /// Exploration margin subtracted from the incumbent (in standardized units).
    pub xi: f64,
    pub seed: u64,
}

impl Default for BoSettings {
    fn default() -> Self {
        Self {
            n_init: 20,
            n_iter: 100,
            n_candidates: 1024,
            n_refine: 8,
            hyper_every: 10,
            hyper_max_points: 150,
            xi: 0.0,
            seed: 0,
        }
    }
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Expected improvement below `best` for a Gaussian prediction; zero when the
/// prediction carries no variance.
pub fn expected_improvement(mean: f64, var: f64, best: f64, xi: f64) -> f64 {
    if !(var > 0.0) {
        return 0.0;
    }
    let sd = var.sqrt();
    let gain = best - mean - xi;
    let z = gain / sd;
    (gain * std_normal_cdf(z) + sd * std_normal_pdf(z)).max(0.0)
}

struct Surrogate {
    gp: GpRegressor,
    y_mean: f64,
    y_scale: f64,
}

impl Surrogate {
    fn ei(&self, u: &[f64], best: f64, xi: f64) -> f64 {
        let (m, v) = self.gp.predict(u);
        expected_improvement(m, v, (best - self.y_mean) / self.y_scale, xi)
    }
}

fn standardize(y: &[f64]) -> (Vec<f64>, f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 1e-12 { sd } else { 1.0 };
    (y.iter().map(|v| (v - mean) / scale).collect(), mean, scale)
}

/// Coordinate pattern search on EI inside the unit cube.
fn refine(s: &Surrogate, start: &[f64], best: f64, xi: f64) -> (Vec<f64>, f64) {
    let mut x = start.to_vec();
    let mut fx = s.ei(&x, best, xi);
    let mut step = 0.05;
    while step > 1e-4 {
        let mut improved = false;
        for d in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] = (y[d] + dir * step).clamp(0.0, 1.0);
                let fy = s.ei(&y, best, xi);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Minimize `f` over `bounds` with GP-based Bayesian optimization and the
/// expected-improvement acquisition. Returns the best evaluated point.
pub fn bayes_opt_ei<F>(f: F, bounds: &[(f64, f64)], settings: &BoSettings) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_bounds(bounds)?;
    if settings.n_init < 2 {
        return Err(Error::invalid("BO needs n_init >= 2"));
    }
    if settings.n_candidates == 0 || settings.hyper_every == 0 || settings.hyper_max_points < 2 {
        return Err(Error::invalid(
            "BO needs n_candidates >= 1, hyper_every >= 1 and hyper_max_points >= 2",
        ));
    }
    let dims = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let eval = |u: &Vec<f64>| {
        let y = f(&scale(u, bounds));
        if y.is_finite() {
            y
        } else {
            f64::MAX.sqrt()
        }
    };

    let mut xs = latin_hypercube(settings.n_init, dims, &mut rng);
    let mut ys: Vec<f64> = xs.par_iter().map(eval).collect();
    let mut history = Vec::with_capacity(settings.n_iter + 1);
    let incumbent = |ys: &[f64]| ys.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = |ys: &[f64]| ys.iter().sum::<f64>() / ys.len() as f64;
    history.push(GenerationStats {
        generation: 0,
        best: incumbent(&ys),
        mean: mean(&ys),
    });

    let mut hyper: Option<GpHyper> = None;
    let mut search = HyperSearch::default();
    for it in 1..=settings.n_iter {
        let (ystd, y_mean, y_scale) = standardize(&ys);
        if hyper.is_none() || (it - 1) % settings.hyper_every == 0 {
            search.de.seed = settings.seed.wrapping_add(it as u64);
            hyper = Some(if xs.len() > settings.hyper_max_points {
                let mut idx: Vec<usize> = (0..xs.len()).collect();
                idx.shuffle(&mut rng);
                idx.truncate(settings.hyper_max_points);
                idx.sort_unstable();
                let sx: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
                let sy: Vec<f64> = idx.iter().map(|&i| ystd[i]).collect();
                optimize_hyper(&sx, &sy, dims, &search)?
            } else {
                optimize_hyper(&xs, &ystd, dims, &search)?
            });
        }
        let gp = GpRegressor::fit(&xs, &ystd, hyper.as_ref().expect("set above"))?;
        let s = Surrogate { gp, y_mean, y_scale };
        let best = incumbent(&ys);

        let cands: Vec<Vec<f64>> = (0..settings.n_candidates)
            .map(|_| (0..dims).map(|_| rng.random::<f64>()).collect())
            .collect();
        let scores: Vec<f64> = cands.par_iter().map(|u| s.ei(u, best, settings.xi)).collect();
        let mut order: Vec<usize> = (0..cands.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let refined: Vec<(Vec<f64>, f64)> = order
            .iter()
            .take(settings.n_refine.max(1))
            .collect::<Vec<_>>()
            .par_iter()
            .map(|&&i| refine(&s, &cands[i], best, settings.xi))
            .collect();
        let mut next = cands[order[0]].clone();
        let mut next_score = scores[order[0]];
        for (x, v) in refined {
            if v > next_score {
                next = x;
                next_score = v;
            }
        }
        if next_score <= 0.0 {
            // flat acquisition: fall back to a fresh random point
            next = (0..dims).map(|_| rng.random::<f64>()).collect();
        }
        let y = eval(&next);
        xs.push(next);
        ys.push(y);
        history.push(GenerationStats {
            generation: it,
            best: incumbent(&ys),
            mean: mean(&ys),
        });
    }

    let mut best_i = 0;
    for (i, &y) in ys.iter().enumerate() {
        if y < ys[best_i] {
            best_i = i;
        }
    }
    Ok(OptimResult {
        x: scale(&xs[best_i], bounds),
        fun: ys[best_i],
        history,
        evaluations: ys.len(),
        converged: false,
    })
}
