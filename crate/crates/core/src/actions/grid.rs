use serde::{Deserialize, Serialize};

use super::Action;
use crate::error::{Error, Result};

/// Linearly spaced sampling of one action parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamRange {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

impl ParamRange {
    pub const fn new(low: f64, high: f64, count: usize) -> Self {
        Self { low, high, count }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.low.is_finite() && self.high.is_finite()) {
            return Err(Error::invalid("grid bounds must be finite"));
        }
        if self.low > self.high {
            return Err(Error::invalid(format!(
                "grid bound low {} > high {}",
                self.low, self.high
            )));
        }
        if self.count == 0 {
            return Err(Error::invalid("grid frequency must be >= 1"));
        }
        Ok(linspace(self.low, self.high, self.count))
    }
}

/// `n` evenly spaced values from `low` to `high`, both included; a single
/// value sits at `low`.
pub fn linspace(low: f64, high: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    high
                } else {
                    low + (high - low) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Grid over the five sampled action parameters; `r1` is held fixed.
///
/// `theta2` is given as magnitudes and negated when sampling so every action
/// follows the canonical sign convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionGrid {
    pub theta1: ParamRange,
    pub theta2: ParamRange,
    pub r2: ParamRange,
    pub alpha: ParamRange,
    pub v_max: ParamRange,
    pub r1: f64,
}

impl ActionGrid {
    /// 5x5x5x4x2 grid used to collect the reference dataset.
    pub fn reference_default() -> Self {
        Self {
            theta1: ParamRange::new(1f64.to_radians(), 80f64.to_radians(), 5),
            theta2: ParamRange::new(20f64.to_radians(), 80f64.to_radians(), 5),
            r2: ParamRange::new(0.21, 0.77, 5),
            alpha: ParamRange::new(30f64.to_radians(), 60f64.to_radians(), 4),
            v_max: ParamRange::new(2.0, 2.5, 2),
            r1: 0.6,
        }
    }

    /// 15x15x15x10x2 grid used for bulk simulated data and policy candidates.
    pub fn simulated_default() -> Self {
        Self {
            theta1: ParamRange::new(1f64.to_radians(), 80f64.to_radians(), 15),
            theta2: ParamRange::new(1f64.to_radians(), 80f64.to_radians(), 15),
            r2: ParamRange::new(0.21, 0.77, 15),
            alpha: ParamRange::new(30f64.to_radians(), 60f64.to_radians(), 10),
            v_max: ParamRange::new(2.0, 2.5, 2),
            r1: 0.6,
        }
    }

    pub fn len(&self) -> usize {
        [self.theta1, self.theta2, self.r2, self.alpha, self.v_max]
            .iter()
            .map(|p| p.count)
            .product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cartesian product of the grid, row-major over
/// `(theta1, theta2, r2, alpha, v_max)`.
pub fn grid_sample_actions(grid: &ActionGrid) -> Result<Vec<Action>> {
    if !(grid.r1.is_finite() && grid.r1 > 0.0) {
        return Err(Error::invalid(format!("r1 must be positive, got {}", grid.r1)));
    }
    let t1 = grid.theta1.values()?;
    let t2 = grid.theta2.values()?;
    let r2 = grid.r2.values()?;
    let al = grid.alpha.values()?;
    let vm = grid.v_max.values()?;
    let mut out = Vec::with_capacity(grid.len());
    for &a in &t1 {
        for &b in &t2 {
            for &r in &r2 {
                for &w in &al {
                    for &v in &vm {
                        out.push(Action::new(a, grid.r1, -b, r, w, v));
                    }
                }
            }
        }
    }
    for a in &out {
        a.validate()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        assert_eq!(grid_sample_actions(&ActionGrid::reference_default()).unwrap().len(), 1000);
        assert_eq!(grid_sample_actions(&ActionGrid::simulated_default()).unwrap().len(), 67_500);
    }

    #[test]
    fn unit_frequencies_give_lower_bounds() {
        let mut g = ActionGrid::reference_default();
        for p in [&mut g.theta1, &mut g.theta2, &mut g.r2, &mut g.alpha, &mut g.v_max] {
            p.count = 1;
        }
        let acts = grid_sample_actions(&g).unwrap();
        assert_eq!(acts.len(), 1);
        let a = acts[0];
        assert_eq!(a.theta1, g.theta1.low);
        assert_eq!(a.theta2, -g.theta2.low);
        assert_eq!(a.r2, g.r2.low);
        assert_eq!(a.alpha, g.alpha.low);
        assert_eq!(a.v_max, g.v_max.low);
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        let mut g = ActionGrid::reference_default();
        g.r2 = ParamRange::new(0.8, 0.2, 3);
        assert!(grid_sample_actions(&g).is_err());
    }

    #[test]
    fn ordering_is_row_major() {
        let acts = grid_sample_actions(&ActionGrid::reference_default()).unwrap();
        // v_max varies fastest, theta1 slowest
        assert_eq!(acts[0].v_max, 2.0);
        assert_eq!(acts[1].v_max, 2.5);
        assert_eq!(acts[0].theta1, acts[199].theta1);
        assert!(acts[200].theta1 > acts[199].theta1);
        assert!(acts.iter().all(|a| a.is_canonical()));
    }
}
