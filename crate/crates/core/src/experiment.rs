//! Simulation experiments: sample splits, train, select, evaluate.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::games::{
    select_models, train, EpochLog, Objective, SelectedModels, Selection, TrainConfig,
    DEFAULT_MAX_ROUNDS,
};
use crate::metrics::{default_levels, evaluate, EvalReport, Weighting};
use crate::simgen::{GammaSimConfig, GammaSimulator};
use crate::survival::{quantile_discretize, Dataset};

const SPLIT_TRAIN: u64 = 0;
const SPLIT_VALIDATION: u64 = 1;
const SPLIT_TEST: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub simulation: GammaSimConfig,
    pub n_bins: usize,
    pub train_sizes: Vec<usize>,
    pub n_validation: usize,
    pub n_test: usize,
    pub seeds: Vec<u64>,
    pub objectives: Vec<Objective>,
    /// Shared training settings; `objective` and `seed` are set per run.
    pub train: TrainConfig,
    pub selection_max_rounds: usize,
    pub calibration_levels: Vec<f64>,
    pub threads: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "gamma".into(),
            simulation: GammaSimConfig::default(),
            n_bins: 20,
            train_sizes: vec![200, 400, 600, 800, 1000],
            n_validation: 1024,
            n_test: 2048,
            seeds: (0..5).collect(),
            objectives: vec![Objective::Nll, Objective::BsGame, Objective::BllGame],
            train: TrainConfig::default(),
            selection_max_rounds: DEFAULT_MAX_ROUNDS,
            calibration_levels: default_levels(),
            threads: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bins < 2 {
            return Err(Error::InvalidConfig("n_bins must be >= 2".into()));
        }
        if self.train_sizes.iter().any(|&n| n < self.n_bins) || self.train_sizes.is_empty() {
            return Err(Error::InvalidConfig(
                "every training size must be >= n_bins".into(),
            ));
        }
        if self.n_validation == 0
            || self.n_test == 0
            || self.seeds.is_empty()
            || self.objectives.is_empty()
        {
            return Err(Error::InvalidConfig(
                "validation, test, seeds and objectives must be nonempty".into(),
            ));
        }
        self.simulation.validate()?;
        self.train.validate()
    }
}

/// Train/validation/test splits of one simulated world, binned at the
/// training split's quantiles. Simulated features are used as drawn.
#[derive(Debug, Clone)]
pub struct SimSplits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

pub fn simulate_splits(
    sim: &GammaSimConfig,
    n_bins: usize,
    n_train: usize,
    n_validation: usize,
    n_test: usize,
    seed: u64,
) -> Result<SimSplits> {
    let simulator = GammaSimulator::new(GammaSimConfig {
        seed,
        ..sim.clone()
    })?;
    let train = simulator.sample(n_train, SPLIT_TRAIN)?;
    let validation = simulator.sample(n_validation, SPLIT_VALIDATION)?;
    let test = simulator.sample(n_test, SPLIT_TEST)?;
    let edges = quantile_discretize(&train.times, n_bins)?.edges;
    Ok(SimSplits {
        train: train.into_dataset(edges.clone())?,
        validation: validation.into_dataset(edges.clone())?,
        test: test.into_dataset(edges)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RunKey {
    pub objective: Objective,
    pub n_train: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub key: RunKey,
    pub selection: Selection,
    pub failure_epoch: usize,
    pub censor_epoch: usize,
    pub last_epoch: Option<EpochLog>,
    pub test: EvalReport,
}

pub struct RunOutcome {
    pub result: RunResult,
    pub selected: SelectedModels,
    pub log: Vec<EpochLog>,
}

/// Trains, selects on validation and evaluates on test (uncensored, against
/// latent times) for one `(objective, n, seed)` point.
pub fn run_point(cfg: &ExperimentConfig, key: RunKey) -> Result<RunOutcome> {
    let splits = simulate_splits(
        &cfg.simulation,
        cfg.n_bins,
        key.n_train,
        cfg.n_validation,
        cfg.n_test,
        key.seed,
    )?;
    run_on_splits(cfg, key, &splits)
}

pub fn run_on_splits(
    cfg: &ExperimentConfig,
    key: RunKey,
    splits: &SimSplits,
) -> Result<RunOutcome> {
    let tc = TrainConfig {
        objective: key.objective,
        seed: key.seed,
        ..cfg.train.clone()
    };
    let out = train(&splits.train, &tc)?;
    let selected = select_models(
        &out.state,
        &splits.validation,
        &tc.loss_spec(),
        key.seed,
        cfg.selection_max_rounds,
    )?;
    let test = evaluate(
        &selected.failure,
        &splits.test,
        Weighting::UncensoredLatent,
        &cfg.calibration_levels,
    )?;
    Ok(RunOutcome {
        result: RunResult {
            key,
            selection: selected.selection,
            failure_epoch: selected.failure_epoch,
            censor_epoch: selected.censor_epoch,
            last_epoch: out.log.last().cloned(),
            test,
        },
        selected,
        log: out.log,
    })
}

pub fn sweep_keys(cfg: &ExperimentConfig) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for &objective in &cfg.objectives {
        for &n_train in &cfg.train_sizes {
            for &seed in &cfg.seeds {
                keys.push(RunKey {
                    objective,
                    n_train,
                    seed,
                });
            }
        }
    }
    keys
}

/// Runs every sweep point on `cfg.threads` workers. Results come back in key
/// order whatever the scheduling; `on_done` sees each outcome as it finishes.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    on_done: &(dyn Fn(&RunOutcome) -> Result<()> + Sync),
) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let keys = sweep_keys(cfg);
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<RunResult>>>> =
        Mutex::new((0..keys.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..cfg.threads.max(1) {
            scope.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("queue lock");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= keys.len() {
                    break;
                }
                let r = run_point(cfg, keys[i]).and_then(|o| {
                    on_done(&o)?;
                    Ok(o.result)
                });
                results.lock().expect("results lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|r| r.expect("every key is processed"))
        .collect()
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub objective: Objective,
    pub n_train: usize,
    pub bs_sum: MeanStd,
    pub bll_sum: MeanStd,
    pub nll: MeanStd,
    pub concordance: MeanStd,
}

/// Aggregates results over seeds per `(objective, n)`.
pub fn summarize(results: &[RunResult]) -> Vec<SummaryRow> {
    let mut groups: Vec<(Objective, usize)> = results
        .iter()
        .map(|r| (r.key.objective, r.key.n_train))
        .collect();
    groups.sort();
    groups.dedup();
    groups
        .into_iter()
        .map(|(objective, n_train)| {
            let rs: Vec<&RunResult> = results
                .iter()
                .filter(|r| r.key.objective == objective && r.key.n_train == n_train)
                .collect();
            let col = |f: &dyn Fn(&RunResult) -> f64| {
                MeanStd::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>())
            };
            SummaryRow {
                objective,
                n_train,
                bs_sum: col(&|r| r.test.bs_sum),
                bll_sum: col(&|r| r.test.bll.iter().sum()),
                nll: col(&|r| r.test.nll),
                concordance: col(&|r| r.test.concordance.unwrap_or(f64::NAN)),
            }
        })
        .collect()
}
