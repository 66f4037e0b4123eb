use rand::seq::{index::sample, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{mirror_action, Action, Vec2};
use crate::cablesim::{Source, TrajectoryRecord};
use crate::error::{Error, Result};

/// Action/endpoint pairs with per-sample loss weights. Inputs are raw action
/// vectors; models carry their own normalization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub inputs: Vec<[f64; Action::DIM]>,
    pub targets: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub sources: Vec<Source>,
}

impl RegressionDataset {
    /// One row per record, weight 1. Records on the mirrored half are folded
    /// back to the canonical half.
    pub fn from_records(records: &[TrajectoryRecord]) -> Self {
        let mut d = Self::default();
        for r in records {
            let (a, p) = if r.action.is_mirrored_half() {
                (mirror_action(&r.action), r.final_pos.reflect())
            } else {
                (r.action, r.final_pos)
            };
            d.push(a.to_array(), p, 1.0, r.meta.source);
        }
        d
    }

    pub fn push(&mut self, input: [f64; Action::DIM], target: Vec2, weight: f64, source: Source) {
        self.inputs.push(input);
        self.targets.push(target);
        self.weights.push(weight);
        self.sources.push(source);
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.inputs.len();
        if self.targets.len() != n || self.weights.len() != n || self.sources.len() != n {
            return Err(Error::invalid("dataset fields have different lengths"));
        }
        if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("sample weight {w} must be positive")));
        }
        if self.inputs.iter().any(|x| x.iter().any(|v| !v.is_finite()))
            || self.targets.iter().any(|t| !t.is_finite())
        {
            return Err(Error::invalid("dataset holds non-finite values"));
        }
        Ok(())
    }

    fn row(&self, i: usize) -> ([f64; Action::DIM], Vec2, f64, Source) {
        (self.inputs[i], self.targets[i], self.weights[i], self.sources[i])
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let mut d = Self::default();
        for &i in idx {
            let (x, y, w, s) = self.row(i);
            d.push(x, y, w, s);
        }
        d
    }

    pub fn extend(&mut self, other: &Self) {
        self.inputs.extend_from_slice(&other.inputs);
        self.targets.extend_from_slice(&other.targets);
        self.weights.extend_from_slice(&other.weights);
        self.sources.extend_from_slice(&other.sources);
    }

    /// Seeded split into (train, held-out) with `round(holdout * n)` held-out
    /// rows; both parts keep dataset order.
    pub fn split(&self, holdout: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&holdout) {
            return Err(Error::invalid(format!("holdout fraction {holdout} not in [0, 1)")));
        }
        let n = self.len();
        let k = (holdout * n as f64).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = vec![false; n];
        for i in sample(&mut rng, n, k) {
            mask[i] = true;
        }
        let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| mask[i]);
        Ok((self.select(&train), self.select(&test)))
    }
}

/// Mixing rule for reference and simulated rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombineSettings {
    /// Fraction of the combined rows that should be reference rows.
    pub upsample_target: f64,
    /// Loss weight of every reference row.
    pub real_weight: f64,
}

impl Default for CombineSettings {
    fn default() -> Self {
        Self {
            upsample_target: 0.35,
            real_weight: 2.0,
        }
    }
}

/// Duplicate reference rows until they make up `upsample_target` of the
/// result, weight them by `real_weight`, and shuffle everything.
///
/// Each reference row is copied the same number of whole times; the
/// remainder is a seeded draw without replacement.
pub fn combine_datasets(
    real: &RegressionDataset,
    sim: &RegressionDataset,
    settings: &CombineSettings,
    seed: u64,
) -> Result<RegressionDataset> {
    let CombineSettings {
        upsample_target: target,
        real_weight,
    } = *settings;
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::invalid(format!("upsample target {target} not in (0, 1)")));
    }
    if !(real_weight >= 1.0 && real_weight.is_finite()) {
        return Err(Error::invalid(format!("real weight {real_weight} must be >= 1")));
    }
    if real.is_empty() {
        return Err(Error::invalid("cannot upsample an empty reference set"));
    }
    real.validate()?;
    sim.validate()?;

    let nr = real.len();
    let wanted = (target * sim.len() as f64 / (1.0 - target)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut real_idx: Vec<usize> = (0..nr).collect();
    if wanted > nr {
        let extra = wanted - nr;
        for _ in 0..extra / nr {
            real_idx.extend(0..nr);
        }
        real_idx.extend(sample(&mut rng, nr, extra % nr).iter());
    }

    let mut rows: Vec<(bool, usize)> = real_idx.into_iter().map(|i| (true, i)).collect();
    rows.extend((0..sim.len()).map(|i| (false, i)));
    rows.shuffle(&mut rng);

    let mut out = RegressionDataset::default();
    for (is_real, i) in rows {
        if is_real {
            out.push(real.inputs[i], real.targets[i], real_weight, real.sources[i]);
        } else {
            let (x, y, w, s) = sim.row(i);
            out.push(x, y, w, s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, source: Source, offset: f64) -> RegressionDataset {
        let mut d = RegressionDataset::default();
        for i in 0..n {
            let v = offset + i as f64;
            d.push([v, 0.6, -0.3, 0.5, 0.7, 2.2], Vec2::new(v, -v), 1.0, source);
        }
        d
    }

    #[test]
    fn upsampling_hits_the_solved_count() {
        // r / (r + 900) = 0.4 -> r = 600
        let real = toy(100, Source::Reference, 0.0);
        let sim = toy(900, Source::Simulated, 1000.0);
        let s = CombineSettings {
            upsample_target: 0.4,
            real_weight: 2.0,
        };
        let c = combine_datasets(&real, &sim, &s, 1).unwrap();
        assert_eq!(c.len(), 1500);
        let n_real = c.sources.iter().filter(|s| **s == Source::Reference).count();
        assert_eq!(n_real, 600);
        for (src, w) in c.sources.iter().zip(&c.weights) {
            assert_eq!(*w, if *src == Source::Reference { 2.0 } else { 1.0 });
        }
        // every original reference row survives, six times each
        for i in 0..100 {
            let copies = c.inputs.iter().filter(|x| x[0] == i as f64).count();
            assert_eq!(copies, 6);
        }
    }

    #[test]
    fn target_already_met_adds_nothing() {
        let real = toy(500, Source::Reference, 0.0);
        let sim = toy(500, Source::Simulated, 1000.0);
        let c = combine_datasets(&real, &sim, &CombineSettings::default(), 3).unwrap();
        assert_eq!(c.len(), 1000);
    }

    #[test]
    fn identity_case_is_a_shuffled_concatenation() {
        let real = toy(30, Source::Reference, 0.0);
        let sim = toy(70, Source::Simulated, 1000.0);
        let s = CombineSettings {
            upsample_target: 0.3,
            real_weight: 1.0,
        };
        let c = combine_datasets(&real, &sim, &s, 9).unwrap();
        let mut expect = real.clone();
        expect.extend(&sim);
        let key = |d: &RegressionDataset| {
            let mut v: Vec<(u64, u64, u64)> = (0..d.len())
                .map(|i| (d.inputs[i][0].to_bits(), d.targets[i].y.to_bits(), d.weights[i].to_bits()))
                .collect();
            v.sort_unstable();
            v
        };
        assert_eq!(key(&c), key(&expect));
    }

    #[test]
    fn combine_rejects_bad_settings() {
        let real = toy(3, Source::Reference, 0.0);
        let sim = toy(3, Source::Simulated, 10.0);
        let bad = |t, w| CombineSettings {
            upsample_target: t,
            real_weight: w,
        };
        assert!(combine_datasets(&real, &sim, &bad(0.0, 1.0), 0).is_err());
        assert!(combine_datasets(&real, &sim, &bad(1.0, 1.0), 0).is_err());
        assert!(combine_datasets(&real, &sim, &bad(0.5, 0.5), 0).is_err());
        let empty = RegressionDataset::default();
        assert!(combine_datasets(&empty, &sim, &bad(0.5, 1.0), 0).is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let d = toy(50, Source::Simulated, 0.0);
        let (tr, te) = d.split(0.1, 4).unwrap();
        assert_eq!((tr.len(), te.len()), (45, 5));
        let mut all: Vec<f64> = tr.inputs.iter().chain(&te.inputs).map(|x| x[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..50).map(|i| i as f64).collect::<Vec<_>>());
    }
}
