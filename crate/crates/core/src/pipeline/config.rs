use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::actions::{ActionGrid, ParamRange, Workspace};
use crate::cablesim::{RolloutOptions, SimParams};
use crate::error::{Error, Result};
use crate::regress::{BackendKind, CombineSettings, HyperSearch, NNConfig};
use crate::sysid::{BoSettings, DeSettings, Optimizer, ParamSpace};

/// Workspace limits with angular quantities in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub r_min: f64,
    pub r_max: f64,
    pub v_joint_max_deg: f64,
    pub a_max_deg: f64,
    pub j_max_deg: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        let w = Workspace::default();
        Self {
            r_min: w.r_min,
            r_max: w.r_max,
            v_joint_max_deg: w.v_joint_max.to_degrees(),
            a_max_deg: w.a_max.to_degrees(),
            j_max_deg: w.j_max.to_degrees(),
        }
    }
}

impl WorkspaceConfig {
    pub fn to_workspace(&self) -> Workspace {
        Workspace {
            r_min: self.r_min,
            r_max: self.r_max,
            v_joint_max: self.v_joint_max_deg.to_radians(),
            a_max: self.a_max_deg.to_radians(),
            j_max: self.j_max_deg.to_radians(),
        }
    }
}

/// `[low, high, count]`.
pub type RangeConfig = (f64, f64, usize);

/// Action grid with angles in degrees; `theta2_deg` holds magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub theta1_deg: RangeConfig,
    pub theta2_deg: RangeConfig,
    pub r2: RangeConfig,
    pub alpha_deg: RangeConfig,
    pub v_max: RangeConfig,
    pub r1: f64,
}

impl GridConfig {
    pub fn from_grid(g: &ActionGrid) -> Self {
        let deg = |p: ParamRange| (p.low.to_degrees(), p.high.to_degrees(), p.count);
        let raw = |p: ParamRange| (p.low, p.high, p.count);
        Self {
            theta1_deg: deg(g.theta1),
            theta2_deg: deg(g.theta2),
            r2: raw(g.r2),
            alpha_deg: deg(g.alpha),
            v_max: raw(g.v_max),
            r1: g.r1,
        }
    }

    pub fn to_grid(&self) -> ActionGrid {
        let deg = |(lo, hi, n): RangeConfig| ParamRange::new(lo.to_radians(), hi.to_radians(), n);
        let raw = |(lo, hi, n): RangeConfig| ParamRange::new(lo, hi, n);
        ActionGrid {
            theta1: deg(self.theta1_deg),
            theta2: deg(self.theta2_deg),
            r2: raw(self.r2),
            alpha: deg(self.alpha_deg),
            v_max: raw(self.v_max),
            r1: self.r1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridsConfig {
    pub reference: GridConfig,
    pub simulated: GridConfig,
    pub candidates: GridConfig,
}

impl Default for GridsConfig {
    fn default() -> Self {
        Self {
            reference: GridConfig::from_grid(&ActionGrid::reference_default()),
            simulated: GridConfig::from_grid(&ActionGrid::simulated_default()),
            candidates: GridConfig::from_grid(&ActionGrid::simulated_default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub k_subsample: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub de: DeSettings,
    pub bo: BoSettings,
}

impl Default for TuneConfig {
    fn default() -> Self {
        Self {
            k_subsample: 20,
            optimizer: Optimizer::De,
            seed: 1,
            de: DeSettings {
                popsize_factor: 4,
                max_generations: 200,
                ..DeSettings::default()
            },
            bo: BoSettings::default(),
        }
    }
}

/// Training-data ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Reference data only.
    Rd,
    /// Tuned-simulator data only.
    Sd,
    /// Combined reference and simulated data.
    R2s2r,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Rd => "rd",
            PolicyKind::Sd => "sd",
            PolicyKind::R2s2r => "r2s2r",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub backend: BackendKind,
    pub policies: Vec<PolicyKind>,
    /// Upper bound on epochs for both network presets.
    pub epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    /// Fraction of the training rows held out to report prediction error.
    pub holdout: f64,
    pub seed: u64,
    pub combine: CombineSettings,
    pub gp: HyperSearch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let nn = NNConfig::simulated();
        Self {
            backend: BackendKind::Nn,
            policies: vec![PolicyKind::Rd, PolicyKind::Sd, PolicyKind::R2s2r],
            epochs: nn.epochs,
            patience: nn.patience,
            learning_rate: nn.learning_rate,
            holdout: 0.1,
            seed: 2,
            combine: CombineSettings::default(),
            gp: HyperSearch::default(),
        }
    }
}

impl TrainConfig {
    /// Small network for reference-only data, large otherwise.
    pub fn nn_config(&self, kind: PolicyKind, seed: u64) -> NNConfig {
        let base = match kind {
            PolicyKind::Rd => NNConfig::reference_only(),
            PolicyKind::Sd | PolicyKind::R2s2r => NNConfig::simulated(),
        };
        NNConfig {
            epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.learning_rate,
            seed,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub n_targets: usize,
    pub trials: usize,
    /// RMS sideways reset perturbation in meters; 0 disables it.
    pub noise: f64,
    pub seed: u64,
    /// Target radii (meters).
    pub annulus: (f64, f64),
    pub sector_deg: (f64, f64),
    /// Also evaluate the cast-and-pull baseline.
    pub cast_and_pull: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_targets: 16,
            trials: 5,
            noise: 0.0,
            seed: 3,
            annulus: (0.75, 1.15),
            sector_deg: (5.0, 70.0),
            cast_and_pull: true,
        }
    }
}

/// Everything a run needs; stored alongside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mixed into every stage seed.
    pub seed: u64,
    /// Held-end radius of the reset pose (meters).
    pub r0: f64,
    pub workspace: WorkspaceConfig,
    /// Hidden parameters of the system that produces reference data.
    pub truth_params: SimParams,
    /// Simulator parameters before tuning; untuned fields keep these values.
    pub base_params: SimParams,
    pub param_space: ParamSpace,
    pub grids: GridsConfig,
    pub tune: TuneConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            r0: 0.6,
            workspace: WorkspaceConfig::default(),
            truth_params: SimParams {
                bend_stiffness: 0.08,
                cable_mass: 0.065,
                endpoint_mass: 0.028,
                mu_d: 0.24,
                ..SimParams::default()
            },
            base_params: SimParams::default(),
            param_space: ParamSpace::default(),
            grids: GridsConfig::default(),
            tune: TuneConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.workspace.to_workspace().validate().map_err(cfg)?;
        if !(self.r0 >= self.workspace.r_min && self.r0 <= self.workspace.r_max) {
            return Err(Error::Config(format!("r0 = {} lies outside the workspace", self.r0)));
        }
        self.truth_params.validate().map_err(cfg)?;
        self.base_params.validate().map_err(cfg)?;
        self.param_space.validate().map_err(cfg)?;
        for g in [&self.grids.reference, &self.grids.simulated, &self.grids.candidates] {
            let grid = g.to_grid();
            for p in [grid.theta1, grid.theta2, grid.r2, grid.alpha, grid.v_max] {
                p.values().map_err(cfg)?;
            }
            if grid.is_empty() {
                return Err(Error::Config("action grids must be nonempty".into()));
            }
        }
        if self.tune.k_subsample == 0 {
            return Err(Error::Config("tune.k_subsample must be >= 1".into()));
        }
        self.tune.de.validate().map_err(cfg)?;
        if self.train.policies.is_empty() {
            return Err(Error::Config("train.policies must name at least one policy".into()));
        }
        self.train.nn_config(PolicyKind::Sd, 0).validate().map_err(cfg)?;
        if !(0.0..0.5).contains(&self.train.holdout) {
            return Err(Error::Config("train.holdout must be in [0, 0.5)".into()));
        }
        let e = &self.eval;
        if e.n_targets == 0 || e.trials == 0 {
            return Err(Error::Config("eval needs n_targets >= 1 and trials >= 1".into()));
        }
        if !(e.noise >= 0.0 && e.noise.is_finite()) {
            return Err(Error::Config("eval.noise must be >= 0".into()));
        }
        let (lo, hi) = e.sector_deg;
        if !(e.annulus.0 >= 0.0 && e.annulus.0 < e.annulus.1 && lo >= 0.0 && lo <= hi && hi <= 180.0) {
            return Err(Error::Config(
                "eval needs 0 <= annulus low < high and 0 <= sector low <= high <= 180 degrees".into(),
            ));
        }
        Ok(())
    }

    pub fn rollout_options(&self) -> RolloutOptions {
        RolloutOptions {
            r0: self.r0,
            workspace: self.workspace.to_workspace(),
            settle: true,
        }
    }

    /// Seed for one stochastic stage, mixed with the top-level seed.
    pub fn stage_seed(&self, stage_seed: u64) -> u64 {
        self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stage_seed)
    }

    /// Content hash of the fully resolved config: insensitive to formatting,
    /// key order and spelled-out defaults.
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn default_grids_round_trip_through_degrees() {
        let c = ExperimentConfig::default();
        let g = c.grids.simulated.to_grid();
        let d = ActionGrid::simulated_default();
        assert_eq!(g.len(), 67_500);
        assert!((g.theta1.high - d.theta1.high).abs() < 1e-15);
        assert_eq!(c.grids.reference.to_grid().len(), 1000);
    }

    #[test]
    fn hash_ignores_formatting_and_order() {
        let a = ExperimentConfig::from_toml("seed = 4\nr0 = 0.6\n[eval]\ntrials = 3\nn_targets = 8\n").unwrap();
        let b = ExperimentConfig::from_toml("[eval]\nn_targets   = 8\ntrials=3\n\n[tune]\nk_subsample = 20\n").unwrap();
        let b = ExperimentConfig { seed: 4, ..b };
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig { r0: 0.61, ..a.clone() };
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("r0 = 2.0").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("[eval]\ntrials = 0").is_err());
        assert!(ExperimentConfig::from_toml("[param_space]\nnames = [\"mu_d\"]\nbounds = [[0.3, 0.1]]").is_err());
    }
}
