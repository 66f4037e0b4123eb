use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysid::{differential_evolution, DeSettings};

/// Largest training set accepted by exact GP inference.
pub const GP_CAPACITY: usize = 5000;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

/// Squared-exponential ARD kernel hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl GpHyper {
    pub fn isotropic(dims: usize, lengthscale: f64, signal_var: f64, noise_var: f64) -> Self {
        Self {
            lengthscales: vec![lengthscale; dims],
            signal_var,
            noise_var,
        }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.lengthscales.len() != dims {
            return Err(Error::invalid(format!(
                "{} lengthscales for {dims}-D inputs",
                self.lengthscales.len()
            )));
        }
        let ok = self.lengthscales.iter().all(|l| l.is_finite() && *l > 0.0)
            && self.signal_var.is_finite()
            && self.signal_var > 0.0
            && self.noise_var.is_finite()
            && self.noise_var >= 0.0;
        if !ok {
            return Err(Error::invalid(format!("GP hyperparameters must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Log-space box searched when fitting hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperSearch {
    pub log_lengthscale: (f64, f64),
    pub log_signal_var: (f64, f64),
    pub log_noise_var: (f64, f64),
    pub de: DeSettings,
}

impl Default for HyperSearch {
    fn default() -> Self {
        Self {
            log_lengthscale: (-3.0, 3.0),
            log_signal_var: (-3.0, 3.0),
            log_noise_var: (-18.0, 0.0),
            de: DeSettings {
                popsize_factor: 8,
                max_generations: 60,
                tol: 1e-3,
                ..DeSettings::default()
            },
        }
    }
}

/// Exact single-output GP regressor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpRegressor {
    hyper: GpHyper,
    dims: usize,
    /// Training inputs, row-major `n x dims`.
    inputs: Vec<f64>,
    /// `(K + s_n I)^-1 y`
    alpha: Vec<f64>,
    jitter: f64,
    log_likelihood: f64,
    #[serde(skip)]
    chol: OnceLock<DMatrix<f64>>,
}

impl PartialEq for GpRegressor {
    fn eq(&self, o: &Self) -> bool {
        self.hyper == o.hyper
            && self.dims == o.dims
            && self.inputs == o.inputs
            && self.alpha == o.alpha
            && self.jitter == o.jitter
    }
}

fn sq_dist_scaled(a: &[f64], b: &[f64], inv_ls: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(inv_ls)
        .map(|((x, y), s)| {
            let d = (x - y) * s;
            d * d
        })
        .sum()
}

fn kernel_matrix(inputs: &[f64], dims: usize, hyper: &GpHyper) -> DMatrix<f64> {
    let n = inputs.len() / dims;
    let inv: Vec<f64> = hyper.lengthscales.iter().map(|l| 1.0 / l).collect();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let xi = &inputs[i * dims..(i + 1) * dims];
        k[(i, i)] = hyper.signal_var;
        for j in 0..i {
            let xj = &inputs[j * dims..(j + 1) * dims];
            let v = hyper.signal_var * (-0.5 * sq_dist_scaled(xi, xj, &inv)).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky of `k + noise I`, escalating diagonal jitter from 1e-10 to 1e-6.
fn factor(mut k: DMatrix<f64>, noise: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    for i in 0..n {
        k[(i, i)] += noise;
    }
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numeric(format!(
        "kernel matrix not positive definite after jitter {JITTER_MAX:e}"
    )))
}

impl GpRegressor {
    /// Condition a GP on `(inputs, targets)` with fixed hyperparameters.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], hyper: &GpHyper) -> Result<Self> {
        let n = inputs.len();
        if n < 2 {
            return Err(Error::invalid("GP needs at least two training points"));
        }
        if n > GP_CAPACITY {
            return Err(Error::Capacity(format!(
                "exact GP limited to {GP_CAPACITY} points, got {n}"
            )));
        }
        if targets.len() != n {
            return Err(Error::invalid("GP inputs and targets differ in length"));
        }
        let dims = inputs[0].len();
        if dims == 0 || inputs.iter().any(|x| x.len() != dims) {
            return Err(Error::invalid("GP inputs must share one nonzero dimension"));
        }
        hyper.validate(dims)?;
        let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
        if !flat.iter().chain(targets).all(|v| v.is_finite()) {
            return Err(Error::invalid("GP training data must be finite"));
        }
        let k = kernel_matrix(&flat, dims, hyper);
        let (chol, jitter) = factor(k, hyper.noise_var)?;
        let y = DVector::from_column_slice(targets);
        let alpha = chol.solve(&y);
        let l = chol.unpack();
        let log_det: f64 = (0..n).map(|i| l[(i, i)].ln()).sum();
        let log_likelihood = -0.5 * y.dot(&alpha)
            - log_det
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        let chol_cell = OnceLock::new();
        let _ = chol_cell.set(l);
        Ok(Self {
            hyper: hyper.clone(),
            dims,
            inputs: flat,
            alpha: alpha.as_slice().to_vec(),
            jitter,
            log_likelihood,
            chol: chol_cell,
        })
    }

    /// Fit with hyperparameters chosen by maximizing the log marginal
    /// likelihood over the log-space box in `search`.
    pub fn fit_optimized(inputs: &[Vec<f64>], targets: &[f64], search: &HyperSearch) -> Result<Self> {
        let dims = inputs.first().map_or(0, |x| x.len());
        let hyper = optimize_hyper(inputs, targets, dims, search)?;
        Self::fit(inputs, targets, &hyper)
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    fn cross_kernel(&self, x: &[f64]) -> Vec<f64> {
        let inv: Vec<f64> = self.hyper.lengthscales.iter().map(|l| 1.0 / l).collect();
        self.inputs
            .chunks_exact(self.dims)
            .map(|xi| self.hyper.signal_var * (-0.5 * sq_dist_scaled(xi, x, &inv)).exp())
            .collect()
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dims);
        self.cross_kernel(x).iter().zip(&self.alpha).map(|(k, a)| k * a).sum()
    }

    fn lower(&self) -> &DMatrix<f64> {
        self.chol.get_or_init(|| {
            let mut k = kernel_matrix(&self.inputs, self.dims, &self.hyper);
            let n = k.nrows();
            for i in 0..n {
                k[(i, i)] += self.hyper.noise_var + self.jitter;
            }
            Cholesky::new(k)
                .expect("factorization succeeded at fit time")
                .unpack()
        })
    }

    /// Posterior mean and latent variance at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ks = self.cross_kernel(x);
        let mean = ks.iter().zip(&self.alpha).map(|(k, a)| k * a).sum();
        let l = self.lower();
        let mut v = DVector::from_vec(ks);
        l.solve_lower_triangular_mut(&mut v);
        let var = (self.hyper.signal_var - v.norm_squared()).max(0.0);
        (mean, var)
    }
}

/// Maximize the log marginal likelihood with differential evolution over
/// log lengthscales, log signal variance and log noise variance.
pub fn optimize_hyper(
    inputs: &[Vec<f64>],
    targets: &[f64],
    dims: usize,
    search: &HyperSearch,
) -> Result<GpHyper> {
    if dims == 0 {
        return Err(Error::invalid("GP inputs must have at least one dimension"));
    }
    let mut bounds = vec![search.log_lengthscale; dims];
    bounds.push(search.log_signal_var);
    bounds.push(search.log_noise_var);
    let decode = |z: &[f64]| GpHyper {
        lengthscales: z[..dims].iter().map(|v| v.exp()).collect(),
        signal_var: z[dims].exp(),
        noise_var: z[dims + 1].exp(),
    };
    let res = differential_evolution(
        |z: &[f64]| match GpRegressor::fit(inputs, targets, &decode(z)) {
            Ok(gp) => -gp.log_marginal_likelihood(),
            Err(_) => f64::INFINITY,
        },
        &bounds,
        &search.de,
    )?;
    if !res.fun.is_finite() {
        return Err(Error::Numeric("no hyperparameters gave a factorable kernel".into()));
    }
    Ok(decode(&res.x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_1d(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn noiseless_gp_interpolates() {
        let xs = grid_1d(12, 0.0, 3.0);
        let inputs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x, x * x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| x.sin() + 0.3 * x).collect();
        let gp = GpRegressor::fit(&inputs, &y, &GpHyper::isotropic(2, 0.8, 1.0, 1e-10)).unwrap();
        for (x, t) in inputs.iter().zip(&y) {
            assert!((gp.predict_mean(x) - t).abs() < 1e-6);
        }
    }

    #[test]
    fn variance_grows_away_from_data() {
        let xs = grid_1d(8, 0.0, 1.0);
        let inputs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| x * 2.0).collect();
        let gp = GpRegressor::fit(&inputs, &y, &GpHyper::isotropic(1, 0.3, 1.0, 1e-4)).unwrap();
        let (_, near) = gp.predict(&[0.5714285714285714]);
        let (_, far) = gp.predict(&[4.0]);
        assert!(near < far);
        assert!((far - 1.0).abs() < 1e-6);
    }

    #[test]
    fn sine_fit_with_optimized_hyperparameters() {
        let xs = grid_1d(20, 0.0, 2.0 * std::f64::consts::PI);
        let inputs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let gp = GpRegressor::fit_optimized(&inputs, &y, &HyperSearch::default()).unwrap();
        // dense-grid evaluation against the generating function
        let dense = grid_1d(500, 0.0, 2.0 * std::f64::consts::PI);
        let mse = dense
            .iter()
            .map(|&x| (gp.predict_mean(&[x]) - x.sin()).powi(2))
            .sum::<f64>()
            / dense.len() as f64;
        assert!(mse.sqrt() < 0.05, "rmse {}", mse.sqrt());
    }

    #[test]
    fn posterior_mean_is_linear_in_targets() {
        let xs = grid_1d(15, -1.0, 1.0);
        let inputs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x, 0.5 * x]).collect();
        let y1: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        let y2: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let h = GpHyper::isotropic(2, 0.5, 1.3, 1e-3);
        let g1 = GpRegressor::fit(&inputs, &y1, &h).unwrap();
        let g2 = GpRegressor::fit(&inputs, &y2, &h).unwrap();
        let gs = GpRegressor::fit(&inputs, &sum, &h).unwrap();
        for t in grid_1d(31, -1.2, 1.2) {
            let x = [t, 0.2 - t];
            let lhs = gs.predict_mean(&x);
            let rhs = g1.predict_mean(&x) + g2.predict_mean(&x);
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_inputs_need_jitter() {
        let inputs = vec![vec![0.1], vec![0.1], vec![0.7]];
        let gp = GpRegressor::fit(&inputs, &[1.0, 1.0, 0.0], &GpHyper::isotropic(1, 1.0, 1.0, 0.0))
            .unwrap();
        assert!(gp.jitter() > 0.0 && gp.jitter() <= JITTER_MAX);
    }

    #[test]
    fn capacity_is_enforced() {
        let inputs: Vec<Vec<f64>> = (0..GP_CAPACITY + 1).map(|i| vec![i as f64]).collect();
        let y = vec![0.0; inputs.len()];
        let err = GpRegressor::fit(&inputs, &y, &GpHyper::isotropic(1, 1.0, 1.0, 0.1)).unwrap_err();
        assert!(matches!(err, Error::Capacity(_)));
    }

    #[test]
    fn serde_roundtrip_predicts_identically() {
        let xs = grid_1d(6, 0.0, 1.0);
        let inputs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let gp = GpRegressor::fit(&inputs, &y, &GpHyper::isotropic(1, 0.4, 2.0, 1e-6)).unwrap();
        let back: GpRegressor = serde_json::from_str(&serde_json::to_string(&gp).unwrap()).unwrap();
        assert_eq!(gp.predict(&[0.33]), back.predict(&[0.33]));
    }
}
