use std::path::Path;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::RegressionDataset;
use super::gp::{GpHyper, GpRegressor, HyperSearch};
use super::nn::{train_mlp, Mlp, NNConfig, TrainReport};
use crate::actions::{mirror_action, Action, Vec2};
use crate::error::{Error, Result};

const PREDICT_CHUNK: usize = 2048;

/// Per-dimension z-score maps for inputs and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_scale: Vec<f64>,
}

fn mean_scale(cols: impl Fn(usize) -> Vec<f64>, dims: usize) -> (Vec<f64>, Vec<f64>) {
    (0..dims)
        .map(|d| {
            let v = cols(d);
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            // constant columns pass through unscaled
            let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
            (mean, scale)
        })
        .unzip()
}

impl Normalization {
    pub fn fit(data: &RegressionDataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::invalid("cannot normalize an empty dataset"));
        }
        let (input_mean, input_scale) =
            mean_scale(|d| data.inputs.iter().map(|x| x[d]).collect(), Action::DIM);
        let (target_mean, target_scale) = mean_scale(
            |d| data.targets.iter().map(|t| if d == 0 { t.x } else { t.y }).collect(),
            2,
        );
        Ok(Self {
            input_mean,
            input_scale,
            target_mean,
            target_scale,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.input_mean.len() == Action::DIM
            && self.input_scale.len() == Action::DIM
            && self.target_mean.len() == 2
            && self.target_scale.len() == 2
            && self.input_scale.iter().chain(&self.target_scale).all(|s| *s > 0.0 && s.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("normalization needs 6 input and 2 target dims with positive scales"))
        }
    }

    pub fn normalize_input(&self, x: &[f64; Action::DIM]) -> [f64; Action::DIM] {
        std::array::from_fn(|d| (x[d] - self.input_mean[d]) / self.input_scale[d])
    }

    pub fn denormalize_input(&self, z: &[f64; Action::DIM]) -> [f64; Action::DIM] {
        std::array::from_fn(|d| z[d] * self.input_scale[d] + self.input_mean[d])
    }

    pub fn normalize_target(&self, t: Vec2) -> [f64; 2] {
        [
            (t.x - self.target_mean[0]) / self.target_scale[0],
            (t.y - self.target_mean[1]) / self.target_scale[1],
        ]
    }

    pub fn denormalize_target(&self, z: [f64; 2]) -> Vec2 {
        Vec2::new(
            z[0] * self.target_scale[0] + self.target_mean[0],
            z[1] * self.target_scale[1] + self.target_mean[1],
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Gp,
    Nn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GpParams {
    /// One GP per output coordinate.
    outputs: [GpRegressor; 2],
}

#[derive(Debug, Clone, PartialEq)]
enum Backend {
    Gp(Box<GpParams>),
    Nn(Mlp),
}

/// Trained map from a casting action to its settled free-end position.
///
/// Models are fit on canonical-half actions; mirrored actions are predicted
/// through the reflection symmetry.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    backend: Backend,
    normalization: Normalization,
    fingerprint: OnceLock<String>,
}

impl PartialEq for ForwardModel {
    fn eq(&self, o: &Self) -> bool {
        self.backend == o.backend && self.normalization == o.normalization
    }
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    backend: BackendKind,
    normalization: Normalization,
    parameters: serde_json::Value,
}

impl Serialize for ForwardModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let (backend, parameters) = match &self.backend {
            Backend::Gp(p) => (BackendKind::Gp, serde_json::to_value(p)),
            Backend::Nn(m) => (BackendKind::Nn, serde_json::to_value(m)),
        };
        ModelWire {
            backend,
            normalization: self.normalization.clone(),
            parameters: parameters.map_err(S::Error::custom)?,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ForwardModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let w = ModelWire::deserialize(d)?;
        let backend = match w.backend {
            BackendKind::Gp => Backend::Gp(Box::new(serde_json::from_value(w.parameters).map_err(D::Error::custom)?)),
            BackendKind::Nn => Backend::Nn(serde_json::from_value(w.parameters).map_err(D::Error::custom)?),
        };
        w.normalization.validate().map_err(D::Error::custom)?;
        Ok(ForwardModel::new(backend, w.normalization))
    }
}

/// Normalized inputs as columns and targets as columns.
fn normalized(data: &RegressionDataset, norm: &Normalization) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = data.len();
    let mut x = DMatrix::zeros(Action::DIM, n);
    let mut y = DMatrix::zeros(2, n);
    for i in 0..n {
        let z = norm.normalize_input(&data.inputs[i]);
        x.column_mut(i).copy_from_slice(&z);
        y.column_mut(i).copy_from_slice(&norm.normalize_target(data.targets[i]));
    }
    (x, y)
}

fn check_training_data(data: &RegressionDataset) -> Result<()> {
    data.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training data is empty"));
    }
    if let Some(x) = data.inputs.iter().find(|x| x[0] < 0.0) {
        return Err(Error::invalid(format!(
            "training inputs must be canonical (theta1 >= 0), got theta1 = {}",
            x[0]
        )));
    }
    Ok(())
}

/// Fit one GP per output on normalized data. `kernel = None` optimizes the
/// hyperparameters by marginal likelihood. Sample weights are not used.
pub fn gp_fit(data: &RegressionDataset, kernel: Option<&GpHyper>, search: &HyperSearch) -> Result<ForwardModel> {
    check_training_data(data)?;
    let norm = Normalization::fit(data)?;
    let (x, y) = normalized(data, &norm);
    let inputs: Vec<Vec<f64>> = x.column_iter().map(|c| c.iter().copied().collect()).collect();
    let fit = |k: usize| -> Result<GpRegressor> {
        let targets: Vec<f64> = y.row(k).iter().copied().collect();
        match kernel {
            Some(h) => GpRegressor::fit(&inputs, &targets, h),
            None => GpRegressor::fit_optimized(&inputs, &targets, search),
        }
    };
    let outputs = [fit(0)?, fit(1)?];
    Ok(ForwardModel::new(Backend::Gp(Box::new(GpParams { outputs })), norm))
}

/// Train the network backend on weighted, normalized data.
pub fn nn_train(data: &RegressionDataset, cfg: &NNConfig) -> Result<(ForwardModel, TrainReport)> {
    check_training_data(data)?;
    let norm = Normalization::fit(data)?;
    let (x, y) = normalized(data, &norm);
    let (net, report) = train_mlp(&x, &y, &data.weights, cfg)?;
    Ok((ForwardModel::new(Backend::Nn(net), norm), report))
}

impl ForwardModel {
    fn new(backend: Backend, normalization: Normalization) -> Self {
        Self {
            backend,
            normalization,
            fingerprint: OnceLock::new(),
        }
    }

    pub fn backend(&self) -> BackendKind {
        match self.backend {
            Backend::Gp(_) => BackendKind::Gp,
            Backend::Nn(_) => BackendKind::Nn,
        }
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    fn check_ready(&self) -> Result<()> {
        let ready = match &self.backend {
            Backend::Gp(p) => p.outputs.iter().all(|g| g.len() >= 2 && g.dims() == Action::DIM),
            Backend::Nn(m) => !m.layers.is_empty() && m.inputs() == Action::DIM && m.outputs() == 2,
        };
        if ready {
            Ok(())
        } else {
            Err(Error::State("forward model has no trained parameters".into()))
        }
    }

    fn predict_canonical(&self, z: &[f64; Action::DIM]) -> [f64; 2] {
        match &self.backend {
            Backend::Gp(p) => [p.outputs[0].predict_mean(z), p.outputs[1].predict_mean(z)],
            Backend::Nn(m) => {
                let o = m.forward_one(z);
                [o[0], o[1]]
            }
        }
    }

    /// Predicted settled endpoint of `a`.
    pub fn predict(&self, a: &Action) -> Result<Vec2> {
        self.check_ready()?;
        let mirrored = a.theta1 < 0.0;
        let c = if mirrored { mirror_action(a) } else { *a };
        let z = self.normalization.normalize_input(&c.to_array());
        let p = self.normalization.denormalize_target(self.predict_canonical(&z));
        Ok(if mirrored { p.reflect() } else { p })
    }

    /// Same values as calling [`predict`](Self::predict) on each action.
    pub fn predict_batch(&self, actions: &[Action]) -> Result<Vec<Vec2>> {
        self.check_ready()?;
        let Backend::Nn(net) = &self.backend else {
            return actions.par_iter().map(|a| self.predict(a)).collect();
        };
        let chunks: Vec<Vec<Vec2>> = actions
            .par_chunks(PREDICT_CHUNK)
            .map(|chunk| {
                let mut x = DMatrix::zeros(Action::DIM, chunk.len());
                for (i, a) in chunk.iter().enumerate() {
                    let c = if a.theta1 < 0.0 { mirror_action(a) } else { *a };
                    x.column_mut(i).copy_from_slice(&self.normalization.normalize_input(&c.to_array()));
                }
                let out = net.forward(&x);
                chunk
                    .iter()
                    .enumerate()
                    .map(|(i, a)| {
                        let p = self.normalization.denormalize_target([out[(0, i)], out[(1, i)]]);
                        if a.theta1 < 0.0 {
                            p.reflect()
                        } else {
                            p
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(chunks.concat())
    }

    /// Short content hash of the serialized model.
    pub fn fingerprint(&self) -> &str {
        self.fingerprint.get_or_init(|| {
            let json = serde_json::to_vec(self).expect("model serializes");
            let digest = Sha256::digest(&json);
            digest[..8].iter().map(|b| format!("{b:02x}")).collect()
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cablesim::Source;

    fn toy(n: usize) -> RegressionDataset {
        let mut d = RegressionDataset::default();
        for i in 0..n {
            let t = i as f64 / n as f64;
            let a = [0.1 + t, 0.6, -0.2 - 0.5 * t, 0.4 + 0.3 * (7.0 * t).fract(), 0.6, 2.0 + 0.5 * (3.0 * t).fract()];
            d.push(a, Vec2::new(a[1] + a[3] * t, a[0] - a[2] * a[5]), 1.0, Source::Simulated);
        }
        d
    }

    #[test]
    fn normalization_round_trip() {
        let d = toy(30);
        let n = Normalization::fit(&d).unwrap();
        // r1 is constant in the toy set and passes through with scale 1
        assert_eq!(n.input_scale[1], 1.0);
        for x in &d.inputs {
            let back = n.denormalize_input(&n.normalize_input(x));
            for k in 0..6 {
                assert!((back[k] - x[k]).abs() < 1e-12);
            }
        }
        for t in &d.targets {
            let back = n.denormalize_target(n.normalize_target(*t));
            assert!(back.distance(*t) < 1e-12);
        }
    }

    #[test]
    fn noiseless_gp_model_interpolates() {
        let d = toy(25);
        let h = GpHyper::isotropic(6, 1.0, 1.0, 1e-10);
        let m = gp_fit(&d, Some(&h), &HyperSearch::default()).unwrap();
        for (x, t) in d.inputs.iter().zip(&d.targets) {
            let p = m.predict(&Action::from_array(*x)).unwrap();
            assert!(p.distance(*t) < 1e-6, "{p:?} vs {t:?}");
        }
    }

    #[test]
    fn prediction_is_mirror_symmetric_and_repeatable() {
        let d = toy(40);
        let cfg = NNConfig {
            epochs: 3,
            hidden_units: 8,
            ..NNConfig::reference_only()
        };
        let (m, _) = nn_train(&d, &cfg).unwrap();
        let a = Action::from_array(d.inputs[7]);
        let p = m.predict(&a).unwrap();
        assert_eq!(p, m.predict(&a).unwrap());
        let q = m.predict(&mirror_action(&a)).unwrap();
        assert_eq!(q, p.reflect());
        let acts = [a, mirror_action(&a), Action::from_array(d.inputs[3])];
        let batch = m.predict_batch(&acts).unwrap();
        for (b, a) in batch.iter().zip(&acts) {
            assert!(b.distance(m.predict(a).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn model_json_layout_and_round_trip() {
        let d = toy(20);
        let cfg = NNConfig {
            epochs: 2,
            hidden_units: 4,
            ..NNConfig::reference_only()
        };
        let (m, _) = nn_train(&d, &cfg).unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["backend"], "nn");
        assert!(v["normalization"]["input_mean"].is_array());
        assert!(v["parameters"]["layers"].is_array());
        let back: ForwardModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.fingerprint(), m.fingerprint());

        let h = GpHyper::isotropic(6, 1.0, 1.0, 1e-4);
        let g = gp_fit(&d, Some(&h), &HyperSearch::default()).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: ForwardModel = serde_json::from_str(&text).unwrap();
        let a = Action::from_array(d.inputs[2]);
        assert_eq!(back.predict(&a).unwrap(), g.predict(&a).unwrap());
    }

    #[test]
    fn constant_target_is_learned() {
        let mut d = toy(64);
        for t in &mut d.targets {
            *t = Vec2::new(0.7, -0.4);
        }
        let cfg = NNConfig {
            epochs: 200,
            ..NNConfig::reference_only()
        };
        let (m, rep) = nn_train(&d, &cfg).unwrap();
        assert!(rep.final_loss < 1e-6, "{}", rep.final_loss);
        let p = m.predict(&Action::from_array(d.inputs[5])).unwrap();
        assert!(p.distance(Vec2::new(0.7, -0.4)) < 1e-3);
    }

    #[test]
    fn untrained_model_is_a_state_error() {
        let d = toy(10);
        let m = ForwardModel::new(Backend::Nn(Mlp { layers: vec![] }), Normalization::fit(&d).unwrap());
        assert!(matches!(m.predict(&Action::from_array(d.inputs[0])), Err(Error::State(_))));
    }
}
