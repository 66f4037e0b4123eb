use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NNConfig {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Upper bound on epochs.
    pub epochs: usize,
    /// Stop after this many epochs without a better full-batch loss.
    pub patience: usize,
    pub seed: u64,
}

impl Default for NNConfig {
    fn default() -> Self {
        Self::simulated()
    }
}

impl NNConfig {
    /// Small network for reference-only data.
    pub fn reference_only() -> Self {
        Self {
            hidden_layers: 3,
            hidden_units: 32,
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 500,
            patience: 50,
            seed: 0,
        }
    }

    /// Network for simulated or combined data.
    pub fn simulated() -> Self {
        Self {
            hidden_units: 128,
            batch_size: 64,
            ..Self::reference_only()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0
            || self.hidden_units == 0
            || self.batch_size == 0
            || self.epochs == 0
            || self.patience == 0
        {
            return Err(Error::invalid("NN config counts must all be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("NN learning rate must be positive"));
        }
        Ok(())
    }
}

/// Fully connected layer `W a + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "DenseWire", try_from = "DenseWire")]
pub struct Dense {
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct DenseWire {
    rows: usize,
    cols: usize,
    /// row-major
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl From<Dense> for DenseWire {
    fn from(d: Dense) -> Self {
        DenseWire {
            rows: d.w.nrows(),
            cols: d.w.ncols(),
            weights: d.w.transpose().as_slice().to_vec(),
            bias: d.b.as_slice().to_vec(),
        }
    }
}

impl TryFrom<DenseWire> for Dense {
    type Error = Error;
    fn try_from(d: DenseWire) -> Result<Self> {
        if d.weights.len() != d.rows * d.cols || d.bias.len() != d.rows {
            return Err(Error::invalid("layer shape does not match its data"));
        }
        Ok(Dense {
            w: DMatrix::from_row_slice(d.rows, d.cols, &d.weights),
            b: DVector::from_vec(d.bias),
        })
    }
}

/// tanh hidden layers and a linear output layer. Samples are columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients in the same layout as the network.
pub type Gradient = Vec<(DMatrix<f64>, DVector<f64>)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Full-batch loss of the returned weights.
    pub final_loss: f64,
    /// Full-batch loss after each epoch.
    pub loss_history: Vec<f64>,
}

fn affine(layer: &Dense, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = &layer.w * a;
    for mut col in z.column_iter_mut() {
        col += &layer.b;
    }
    z
}

/// Columns `idx` of `m`.
fn gather(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

impl Mlp {
    /// He-scaled normal hidden weights, zero output weights, zero biases.
    pub fn new(inputs: usize, outputs: usize, hidden_layers: usize, hidden_units: usize, seed: u64) -> Self {
        let mut net = Self::random(inputs, outputs, hidden_layers, hidden_units, seed);
        net.layers.last_mut().expect("at least one layer").w.fill(0.0);
        net
    }

    /// He-scaled normal weights in every layer, zero biases.
    pub fn random(inputs: usize, outputs: usize, hidden_layers: usize, hidden_units: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![inputs];
        sizes.extend(std::iter::repeat_n(hidden_units, hidden_layers));
        sizes.push(outputs);
        let layers = sizes
            .windows(2)
            .map(|s| {
                let normal = Normal::new(0.0, (2.0 / s[0] as f64).sqrt()).expect("positive sd");
                Dense {
                    w: DMatrix::from_fn(s[1], s[0], |_, _| normal.sample(&mut rng)),
                    b: DVector::zeros(s[1]),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, |l| l.w.ncols())
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.b.len())
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            a = affine(layer, &a);
            if i < last {
                a.apply(|v| *v = v.tanh());
            }
        }
        a
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&DMatrix::from_column_slice(x.len(), 1, x)).as_slice().to_vec()
    }

    /// Weighted mean squared distance `sum w_i |f(x_i) - y_i|^2 / sum w_i`,
    /// summed in sample order.
    pub fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64]) -> f64 {
        weighted_loss(&self.forward(x), y, w)
    }

    /// Loss and its gradient by backpropagation.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64]) -> (f64, Gradient) {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = affine(layer, &acts[i]);
            if i < last {
                z.apply(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        let out = &acts[last + 1];
        let loss = weighted_loss(out, y, w);
        let wsum: f64 = w.iter().sum();

        let mut delta = out - y;
        for (j, mut col) in delta.column_iter_mut().enumerate() {
            col *= 2.0 * w[j] / wsum;
        }
        let mut grads: Gradient = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let gw = &delta * acts[i].transpose();
            let gb = delta.column_sum();
            if i > 0 {
                let mut back = self.layers[i].w.transpose() * &delta;
                back.zip_apply(&acts[i], |d, a| *d *= 1.0 - a * a);
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (loss, grads)
    }
}

fn weighted_loss(out: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut wsum = 0.0;
    for (j, wj) in w.iter().enumerate() {
        let mut sq = 0.0;
        for r in 0..out.nrows() {
            let d = out[(r, j)] - y[(r, j)];
            sq += d * d;
        }
        total += wj * sq;
        wsum += wj;
    }
    total / wsum
}

struct Adam {
    m: Gradient,
    v: Gradient,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(net: &Mlp, lr: f64) -> Self {
        let zeros: Gradient = net
            .layers
            .iter()
            .map(|l| (DMatrix::zeros(l.w.nrows(), l.w.ncols()), DVector::zeros(l.b.len())))
            .collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            lr,
        }
    }

    fn update(&mut self, net: &mut Mlp, grads: &Gradient) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let lr = self.lr;
        let apply = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for k in 0..p.len() {
                m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
                v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
                p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
            }
        };
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let (mw, mb) = &mut self.m[i];
            let (vw, vb) = &mut self.v[i];
            let (gw, gb) = &grads[i];
            apply(layer.w.as_mut_slice(), mw.as_mut_slice(), vw.as_mut_slice(), gw.as_slice());
            apply(layer.b.as_mut_slice(), mb.as_mut_slice(), vb.as_mut_slice(), gb.as_slice());
        }
    }
}

/// Train on column samples `x` (inputs) and `y` (targets) with per-sample
/// weights. Keeps the weights with the best full-batch loss.
pub fn train_mlp(x: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64], cfg: &NNConfig) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    let n = x.ncols();
    if n == 0 || y.ncols() != n || w.len() != n {
        return Err(Error::invalid("training data must be nonempty with matching lengths"));
    }
    let mut net = Mlp::new(x.nrows(), y.nrows(), cfg.hidden_layers, cfg.hidden_units, cfg.seed);
    let mut adam = Adam::new(&net, cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut best = (net.loss(x, y, w), net.clone(), 0usize);
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bw: Vec<f64> = batch.iter().map(|&i| w[i]).collect();
            let (_, g) = net.loss_and_gradient(&gather(x, batch), &gather(y, batch), &bw);
            adam.update(&mut net, &g);
        }
        let loss = net.loss(x, y, w);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, net.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
        log::trace!("epoch {epoch}: loss {loss:.3e}");
    }
    let (final_loss, net, best_epoch) = best;
    log::debug!(
        "trained {} parameters for {} epochs, best {final_loss:.3e} at epoch {best_epoch}",
        net.n_parameters(),
        history.len()
    );
    Ok((
        net,
        TrainReport {
            epochs_run: history.len(),
            best_epoch,
            final_loss,
            loss_history: history,
        },
    ))
}
