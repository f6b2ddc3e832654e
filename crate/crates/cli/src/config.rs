use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survgame_core::experiment::ExperimentConfig;
use survgame_core::games::{TrainConfig, DEFAULT_MAX_ROUNDS};
use survgame_core::metrics::default_levels;
use survgame_core::{Error, GammaSimConfig, MarginalWorld, Result};

/// Where the data for `simulate`, `train` and `evaluate` comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DataSource {
    Gamma(GammaSimConfig),
    /// Feature-less draws from independent categorical `T` and `C`.
    Marginal {
        theta_t: Vec<f64>,
        theta_c: Vec<f64>,
    },
    /// `f0,...,time,event` files. Features are standardized with training
    /// statistics and times binned at training quantiles.
    Csv {
        train: PathBuf,
        validation: Option<PathBuf>,
        test: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightingKind {
    /// Score against latent failure times; simulations only.
    Uncensored,
    /// IPCW with a censoring KM fitted on the test split.
    Km,
    /// IPCW with the trained censoring model.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub theta_t: Vec<f64>,
    pub theta_c: Vec<f64>,
    /// 0-based induction step for the 2-D field and joint scan.
    pub step: usize,
    pub resolution: usize,
    pub starts: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            theta_t: vec![0.3, 0.7],
            theta_c: vec![0.4, 0.6],
            step: 0,
            resolution: 200,
            starts: 100,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl OracleConfig {
    pub fn world(&self) -> Result<MarginalWorld> {
        MarginalWorld::new(self.theta_t.clone(), self.theta_c.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub name: String,
    pub out_dir: PathBuf,
    pub data: DataSource,
    pub n_bins: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Pick checkpoints on the validation split; otherwise keep the last epoch.
    pub select: bool,
    pub selection_max_rounds: usize,
    pub weighting: WeightingKind,
    pub calibration_levels: Vec<f64>,
    pub oracle: OracleConfig,
    pub sweep: ExperimentConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            name: "gamma".into(),
            out_dir: "out".into(),
            data: DataSource::Gamma(GammaSimConfig::default()),
            n_bins: 20,
            n_train: 1000,
            n_validation: 1024,
            n_test: 2048,
            seeds: vec![0],
            train: TrainConfig::default(),
            select: true,
            selection_max_rounds: DEFAULT_MAX_ROUNDS,
            weighting: WeightingKind::Uncensored,
            calibration_levels: default_levels(),
            oracle: OracleConfig::default(),
            sweep: ExperimentConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                Ok(serde_json::from_str(&text)?)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!(
                "bad experiment name `{}`",
                self.name
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must be nonempty".into()));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidConfig("n_bins must be >= 2".into()));
        }
        match &self.data {
            DataSource::Gamma(g) => g.validate()?,
            DataSource::Marginal { theta_t, theta_c } => {
                let w = MarginalWorld::new(theta_t.clone(), theta_c.clone())?;
                if w.n_bins() != self.n_bins {
                    return Err(Error::InvalidConfig(format!(
                        "marginal world has {} bins but n_bins is {}",
                        w.n_bins(),
                        self.n_bins
                    )));
                }
            }
            DataSource::Csv { .. } => {}
        }
        self.train.validate()
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.experiment_dir().join(seed.to_string())
    }
}
