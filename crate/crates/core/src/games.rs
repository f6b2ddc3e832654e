//! Training engines: the summed game, the per-horizon multi-player game,
//! the NLL baseline and alternating checkpoint selection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    batch_loss, Batch, ClampStats, LossFamily, LossSpec, Reweighting, Role, TimeSet,
    DEFAULT_WEIGHT_FLOOR,
};
use crate::models::{loss_and_grad_from_pass, Architecture, DifferentiableModel, ParamVector};
use crate::survival::{CategoricalSurvival, Dataset, SurvivalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Nll,
    BsGame,
    BllGame,
}

impl Objective {
    pub fn family(self) -> LossFamily {
        match self {
            Objective::Nll => LossFamily::Nll,
            Objective::BsGame => LossFamily::IpcwBs,
            Objective::BllGame => LossFamily::IpcwBll,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::Nll => "nll",
            Objective::BsGame => "bs-game",
            Objective::BllGame => "bll-game",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameForm {
    Summed,
    Multiplayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Model family; input dimension and bin count come from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    Marginal,
    Simplex,
    Mlp { hidden: Vec<usize> },
}

impl ModelKind {
    pub fn architecture(&self, input_dim: usize, n_bins: usize) -> Architecture {
        match self {
            ModelKind::Marginal => Architecture::Marginal { n_bins },
            ModelKind::Simplex => Architecture::Simplex { n_bins },
            ModelKind::Mlp { hidden } => Architecture::Mlp {
                input_dim,
                hidden: hidden.clone(),
                n_bins,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub game_form: GameForm,
    pub optimizer: OptimizerConfig,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub init_std: f64,
    pub weight_floor: f64,
    pub model: ModelKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::BsGame,
            game_form: GameForm::Summed,
            optimizer: OptimizerConfig::default(),
            learning_rate: 1e-3,
            epochs: 300,
            batch_size: 256,
            seed: 0,
            checkpoint_every: 1,
            init_std: 0.1,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
            model: ModelKind::Mlp {
                hidden: vec![128, 64, 64],
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be > 0");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 || self.checkpoint_every == 0 {
            return bad("batch_size and checkpoint_every must be >= 1");
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 0.5) {
            return bad("weight_floor must lie in (0, 0.5)");
        }
        if self.init_std < 0.0 {
            return bad("init_std must be >= 0");
        }
        match (self.game_form, &self.model) {
            (GameForm::Multiplayer, ModelKind::Simplex) if self.objective != Objective::Nll => {}
            (GameForm::Multiplayer, _) => {
                return bad("the multi-player game needs a simplex model and a game objective")
            }
            (GameForm::Summed, ModelKind::Simplex) => {
                return bad("simplex models are trained with the multi-player game")
            }
            _ => {}
        }
        Ok(())
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec::new(self.objective.family(), Role::Failure).with_floor(self.weight_floor)
    }
}

/// Per-player optimizer slots.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    config: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, n: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.config {
            OptimizerConfig::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerConfig::Adam { beta1, beta2, eps } => {
                self.step += 1;
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.m)
                    .zip(&mut self.v)
                {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Parameters of both players at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub epoch: usize,
    pub failure: Vec<f64>,
    pub censor: Vec<f64>,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    #[serde(rename = "loss_F")]
    pub loss_f: f64,
    #[serde(rename = "loss_G")]
    pub loss_g: f64,
    pub clamp_count: u64,
    #[serde(rename = "grad_norm_F")]
    pub grad_norm_f: f64,
    #[serde(rename = "grad_norm_G")]
    pub grad_norm_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss_f: f64,
    pub loss_g: f64,
    pub grad_norm_f: f64,
    pub grad_norm_g: f64,
    pub clamps: ClampStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub failure: DifferentiableModel,
    pub censor: DifferentiableModel,
    opt_failure: OptimizerState,
    opt_censor: OptimizerState,
    pub epoch: usize,
    pub checkpoints: Vec<CheckpointEntry>,
    pub clamps: ClampStats,
}

impl GameState {
    pub fn new(
        failure: DifferentiableModel,
        censor: DifferentiableModel,
        optimizer: OptimizerConfig,
    ) -> Self {
        let opt_failure = OptimizerState::new(optimizer, failure.params().len());
        let opt_censor = OptimizerState::new(optimizer, censor.params().len());
        Self {
            failure,
            censor,
            opt_failure,
            opt_censor,
            epoch: 0,
            checkpoints: Vec::new(),
            clamps: ClampStats::default(),
        }
    }

    pub fn checkpoint(&mut self) {
        self.checkpoints.push(CheckpointEntry {
            epoch: self.epoch,
            failure: self.failure.params().values().to_vec(),
            censor: self.censor.params().values().to_vec(),
        });
    }

    fn finite_or_abort(
        &self,
        grad: &ParamVector,
        player: &'static str,
        clamps: ClampStats,
    ) -> Result<()> {
        if grad.values().iter().all(|g| g.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteGradient {
                epoch: self.epoch,
                player,
                clamps: self.clamps.count + clamps.count,
            })
        }
    }
}

fn role_spec(spec: &LossSpec, role: Role) -> LossSpec {
    LossSpec {
        role,
        ..spec.clone()
    }
}

/// One simultaneous step of the summed game: each player descends its loss
/// summed over `spec.times`, re-weighted by the partner's pre-step output.
/// With `LossFamily::Nll` this is the NLL baseline step.
pub fn step_summed(
    state: &mut GameState,
    batch: &Batch<'_>,
    spec: &LossSpec,
    lr: f64,
) -> Result<StepReport> {
    let pass_f = state.failure.forward_batch(batch.records)?;
    let pass_g = state.censor.forward_batch(batch.records)?;
    let lf = loss_and_grad_from_pass(
        &state.failure,
        &pass_f,
        Reweighting::PerRecord(&pass_g.dists),
        batch,
        &role_spec(spec, Role::Failure),
    )?;
    let lg = loss_and_grad_from_pass(
        &state.censor,
        &pass_g,
        Reweighting::PerRecord(&pass_f.dists),
        batch,
        &role_spec(spec, Role::Censor),
    )?;
    let mut clamps = lf.clamps;
    clamps.merge(lg.clamps);
    state.finite_or_abort(&lf.grad, "failure", clamps)?;
    state.finite_or_abort(&lg.grad, "censor", clamps)?;

    let mut f = state.failure.params().values().to_vec();
    state.opt_failure.apply(&mut f, lf.grad.values(), lr);
    state.failure.set_values(&f)?;
    let mut g = state.censor.params().values().to_vec();
    state.opt_censor.apply(&mut g, lg.grad.values(), lr);
    state.censor.set_values(&g)?;
    state.clamps.merge(clamps);

    Ok(StepReport {
        loss_f: lf.value,
        loss_g: lg.value,
        grad_norm_f: lf.grad.norm(),
        grad_norm_g: lg.grad.norm(),
        clamps,
    })
}

/// Clips to `[eps, 1 - eps]`, then shrinks each coordinate's excess over
/// `eps` so the implicit last one keeps at least `eps`.
pub fn project_simplex(coords: &mut [f64], eps: f64) {
    for c in coords.iter_mut() {
        *c = c.clamp(eps, 1.0 - eps);
    }
    let s: f64 = coords.iter().sum();
    if s > 1.0 - eps {
        let floor = eps * coords.len() as f64;
        let r = (1.0 - eps - floor) / (s - floor);
        for c in coords.iter_mut() {
            *c = eps + (*c - eps) * r;
        }
    }
}

/// Per-horizon gradient of the multi-player game: coordinate `t-1` of each
/// player's vector comes from that player's horizon-`t` loss only.
pub fn multiplayer_gradient(
    failure: &DifferentiableModel,
    censor: &DifferentiableModel,
    batch: &Batch<'_>,
    spec: &LossSpec,
) -> Result<(Vec<f64>, Vec<f64>, StepReport)> {
    for m in [failure, censor] {
        if !matches!(m.architecture(), Architecture::Simplex { .. }) {
            return Err(Error::InvalidConfig(
                "the multi-player game needs simplex models".into(),
            ));
        }
    }
    let k = failure.n_bins();
    let times = spec.resolve_times(k)?;
    let pass_f = failure.forward_batch(batch.records)?;
    let pass_g = censor.forward_batch(batch.records)?;
    let mut gf = vec![0.0; k - 1];
    let mut gg = vec![0.0; k - 1];
    let mut report = StepReport {
        loss_f: 0.0,
        loss_g: 0.0,
        grad_norm_f: 0.0,
        grad_norm_g: 0.0,
        clamps: ClampStats::default(),
    };
    for t in times {
        let at = spec.clone().with_times(TimeSet::Only(vec![t]));
        let lf = loss_and_grad_from_pass(
            failure,
            &pass_f,
            Reweighting::PerRecord(&pass_g.dists),
            batch,
            &role_spec(&at, Role::Failure),
        )?;
        let lg = loss_and_grad_from_pass(
            censor,
            &pass_g,
            Reweighting::PerRecord(&pass_f.dists),
            batch,
            &role_spec(&at, Role::Censor),
        )?;
        gf[t - 1] = lf.grad.values()[t - 1];
        gg[t - 1] = lg.grad.values()[t - 1];
        report.loss_f += lf.value;
        report.loss_g += lg.value;
        report.clamps.merge(lf.clamps);
        report.clamps.merge(lg.clamps);
    }
    report.grad_norm_f = gf.iter().map(|v| v * v).sum::<f64>().sqrt();
    report.grad_norm_g = gg.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((gf, gg, report))
}

/// One simultaneous step of the multi-player game followed by projection.
pub fn step_multiplayer(
    state: &mut GameState,
    batch: &Batch<'_>,
    spec: &LossSpec,
    lr: f64,
) -> Result<StepReport> {
    let (gf, gg, report) = multiplayer_gradient(&state.failure, &state.censor, batch, spec)?;
    let pf = ParamVector::from_values(state.failure.params().layout().clone(), gf)?;
    let pg = ParamVector::from_values(state.censor.params().layout().clone(), gg)?;
    state.finite_or_abort(&pf, "failure", report.clamps)?;
    state.finite_or_abort(&pg, "censor", report.clamps)?;

    let eps = spec.weight_floor;
    let mut f = state.failure.params().values().to_vec();
    state.opt_failure.apply(&mut f, pf.values(), lr);
    project_simplex(&mut f, eps);
    let mut g = state.censor.params().values().to_vec();
    state.opt_censor.apply(&mut g, pg.values(), lr);
    project_simplex(&mut g, eps);
    state.failure.set_values(&f)?;
    state.censor.set_values(&g)?;
    state.clamps.merge(report.clamps);
    Ok(report)
}

/// Repeats full-batch steps until both gradient norms fall below `grad_tol`
/// or `max_steps` is reached. Returns the number of steps taken.
pub fn play_full_batch(
    state: &mut GameState,
    batch: &Batch<'_>,
    spec: &LossSpec,
    form: GameForm,
    lr: f64,
    max_steps: usize,
    grad_tol: f64,
) -> Result<usize> {
    for step in 0..max_steps {
        let r = match form {
            GameForm::Summed => step_summed(state, batch, spec, lr)?,
            GameForm::Multiplayer => step_multiplayer(state, batch, spec, lr)?,
        };
        if r.grad_norm_f < grad_tol && r.grad_norm_g < grad_tol {
            return Ok(step + 1);
        }
    }
    Ok(max_steps)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: GameState,
    pub log: Vec<EpochLog>,
}

const STREAM_INIT_F: u64 = 0;
const STREAM_INIT_G: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Minibatch training. Deterministic given `config.seed`.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::MissingData("training set is empty".into()));
    }
    let arch = config
        .model
        .architecture(dataset.feature_dim, dataset.n_bins());
    let failure = DifferentiableModel::init(
        arch.clone(),
        config.init_std,
        &mut rng_for(config.seed, STREAM_INIT_F),
    )?;
    let censor = DifferentiableModel::init(
        arch,
        config.init_std,
        &mut rng_for(config.seed, STREAM_INIT_G),
    )?;
    let mut state = GameState::new(failure, censor, config.optimizer);
    let spec = config.loss_spec();
    let mut shuffle_rng = rng_for(config.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        state.epoch = epoch;
        order.shuffle(&mut shuffle_rng);
        let shuffled: Vec<SurvivalRecord> =
            order.iter().map(|&i| dataset.records[i].clone()).collect();
        let mut entry = EpochLog {
            epoch,
            loss_f: 0.0,
            loss_g: 0.0,
            clamp_count: 0,
            grad_norm_f: 0.0,
            grad_norm_g: 0.0,
        };
        let mut steps = 0usize;
        for chunk in shuffled.chunks(config.batch_size) {
            let batch = Batch::new(chunk);
            let r = match config.game_form {
                GameForm::Summed => step_summed(&mut state, &batch, &spec, config.learning_rate)?,
                GameForm::Multiplayer => {
                    step_multiplayer(&mut state, &batch, &spec, config.learning_rate)?
                }
            };
            let share = chunk.len() as f64 / dataset.len() as f64;
            entry.loss_f += share * r.loss_f;
            entry.loss_g += share * r.loss_g;
            entry.clamp_count += r.clamps.count;
            entry.grad_norm_f += r.grad_norm_f;
            entry.grad_norm_g += r.grad_norm_g;
            steps += 1;
        }
        entry.grad_norm_f /= steps as f64;
        entry.grad_norm_g /= steps as f64;
        log.push(entry);
        if epoch % config.checkpoint_every == 0 || epoch == config.epochs {
            state.checkpoint();
        }
    }
    Ok(TrainOutcome { state, log })
}

/// Result of alternating selection over checkpoint indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub failure: usize,
    pub censor: usize,
    pub start: usize,
    pub rounds: usize,
    pub converged: bool,
}

fn argmin(n: usize, mut f: impl FnMut(usize) -> Result<f64>) -> Result<usize> {
    let mut best = (0, f64::INFINITY);
    for i in 0..n {
        let v = f(i)?;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < best.1 || (i == 0 && v == f64::INFINITY) {
            best = (i, v);
        }
    }
    Ok(best.0)
}

/// Alternating best responses over index sets. `censor_loss(i, j)` is the
/// censor loss of candidate `j` re-weighted by failure candidate `i`;
/// `failure_loss(i, j)` the failure loss of `i` re-weighted by `j`. Stops when
/// the failure best response to the chosen censor model is the failure model
/// that censor model was chosen against. Ties go to the lowest index.
pub fn alternating_selection(
    n_failure: usize,
    n_censor: usize,
    start: usize,
    max_rounds: usize,
    mut censor_loss: impl FnMut(usize, usize) -> Result<f64>,
    mut failure_loss: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<Selection> {
    if n_failure == 0 || n_censor == 0 {
        return Err(Error::MissingData("empty checkpoint store".into()));
    }
    if start >= n_failure {
        return Err(Error::InvalidConfig(format!(
            "start {start} outside {n_failure} candidates"
        )));
    }
    let mut f = start;
    let mut g = 0;
    for round in 1..=max_rounds.max(1) {
        g = argmin(n_censor, |j| censor_loss(f, j))?;
        let next = argmin(n_failure, |i| failure_loss(i, g))?;
        if next == f {
            return Ok(Selection {
                failure: f,
                censor: g,
                start,
                rounds: round,
                converged: true,
            });
        }
        f = next;
    }
    Ok(Selection {
        failure: f,
        censor: g,
        start,
        rounds: max_rounds.max(1),
        converged: false,
    })
}

pub const DEFAULT_MAX_ROUNDS: usize = 50;

#[derive(Debug, Clone)]
pub struct SelectedModels {
    pub failure: DifferentiableModel,
    pub censor: DifferentiableModel,
    pub failure_epoch: usize,
    pub censor_epoch: usize,
    pub selection: Selection,
}

/// Picks a failure and a censor checkpoint on `validation`. The starting
/// failure candidate is drawn with `selection_seed`.
pub fn select_models(
    state: &GameState,
    validation: &Dataset,
    spec: &LossSpec,
    selection_seed: u64,
    max_rounds: usize,
) -> Result<SelectedModels> {
    let store = &state.checkpoints;
    if store.is_empty() {
        return Err(Error::MissingData("empty checkpoint store".into()));
    }
    if validation.is_empty() {
        return Err(Error::MissingData("validation set is empty".into()));
    }
    let rebuild = |template: &DifferentiableModel, values: &[f64]| -> Result<DifferentiableModel> {
        let mut m = template.clone();
        m.set_values(values)?;
        Ok(m)
    };
    let predict =
        |template: &DifferentiableModel, values: &[f64]| -> Result<Vec<CategoricalSurvival>> {
            Ok(rebuild(template, values)?
                .forward_batch(&validation.records)?
                .dists)
        };
    let f_preds = store
        .iter()
        .map(|c| predict(&state.failure, &c.failure))
        .collect::<Result<Vec<_>>>()?;
    let g_preds = store
        .iter()
        .map(|c| predict(&state.censor, &c.censor))
        .collect::<Result<Vec<_>>>()?;
    let batch = Batch::new(&validation.records);
    let f_spec = role_spec(spec, Role::Failure);
    let g_spec = role_spec(spec, Role::Censor);
    let mut stats = ClampStats::default();
    let mut censor_loss = |i: usize, j: usize| {
        batch_loss(
            &g_spec,
            Reweighting::PerRecord(&g_preds[j]),
            Reweighting::PerRecord(&f_preds[i]),
            &batch,
            &mut stats,
        )
    };
    let mut stats_f = ClampStats::default();
    let mut failure_loss = |i: usize, j: usize| {
        batch_loss(
            &f_spec,
            Reweighting::PerRecord(&f_preds[i]),
            Reweighting::PerRecord(&g_preds[j]),
            &batch,
            &mut stats_f,
        )
    };
    let start = rng_for(selection_seed, 0).random_range(0..store.len());
    let selection = alternating_selection(
        store.len(),
        store.len(),
        start,
        max_rounds,
        &mut censor_loss,
        &mut failure_loss,
    )?;
    Ok(SelectedModels {
        failure: rebuild(&state.failure, &store[selection.failure].failure)?,
        censor: rebuild(&state.censor, &store[selection.censor].censor)?,
        failure_epoch: store[selection.failure].epoch,
        censor_epoch: store[selection.censor].epoch,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{gen_marginal, MarginalWorld};

    fn marginal_model(pmf: &[f64]) -> DifferentiableModel {
        let arch = Architecture::Marginal { n_bins: pmf.len() };
        let logits = pmf.iter().map(|p| p.ln()).collect();
        DifferentiableModel::from_params(
            arch.clone(),
            ParamVector::from_values(arch.layout(), logits).unwrap(),
        )
        .unwrap()
    }

    fn simplex_model(head: &[f64]) -> DifferentiableModel {
        let arch = Architecture::Simplex {
            n_bins: head.len() + 1,
        };
        DifferentiableModel::from_params(
            arch.clone(),
            ParamVector::from_values(arch.layout(), head.to_vec()).unwrap(),
        )
        .unwrap()
    }

    fn bs() -> LossSpec {
        LossSpec::new(LossFamily::IpcwBs, Role::Failure)
    }

    #[test]
    fn summed_step_at_truth_is_stationary() {
        let w = MarginalWorld::new(vec![0.3, 0.7], vec![0.4, 0.6]).unwrap();
        let (r, wt) = w.population_batch();
        for family in [LossFamily::IpcwBs, LossFamily::IpcwBll] {
            let mut s = GameState::new(
                marginal_model(&w.theta_t),
                marginal_model(&w.theta_c),
                OptimizerConfig::Sgd,
            );
            let before = s.clone();
            step_summed(
                &mut s,
                &Batch::weighted(&r, &wt),
                &LossSpec::new(family, Role::Failure),
                0.5,
            )
            .unwrap();
            for (a, b) in s
                .failure
                .params()
                .values()
                .iter()
                .zip(before.failure.params().values())
            {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in s
                .censor
                .params()
                .values()
                .iter()
                .zip(before.censor.params().values())
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn summed_step_matches_scalar_oracle() {
        // K=2 softmax logits (a0, a1) for F and (b0, b1) for G, both uniform.
        // ℓ_F = E[F̄(1)² Δ1{U=1}/1 + F(1)² 1{U=2}/Ḡ(1)], ℓ_G = E[Ḡ(1)²(1-Δ)1{U=1}/F̄(1) + G(1)² 1{U=2}/F̄(1)].
        let w = MarginalWorld::new(vec![0.3, 0.7], vec![0.4, 0.6]).unwrap();
        let (r, wt) = w.population_batch();
        let lr = 0.1;
        let mut s = GameState::new(
            DifferentiableModel::zeros(Architecture::Marginal { n_bins: 2 }).unwrap(),
            DifferentiableModel::zeros(Architecture::Marginal { n_bins: 2 }).unwrap(),
            OptimizerConfig::Sgd,
        );
        step_summed(&mut s, &Batch::weighted(&r, &wt), &bs(), lr).unwrap();

        let (tt, cc) = (0.3, 0.4);
        let p_event_1 = tt; // T=1 (ties count as events)
        let p_cens_1 = (1.0 - tt) * cc;
        let p_u2 = (1.0 - tt) * (1.0 - cc);
        let (f1, g1) = (0.5, 0.5);
        // d/dF(1)
        let dl_f = -2.0 * (1.0 - f1) * p_event_1 + 2.0 * f1 * p_u2 / (1.0 - g1);
        let dl_g = -2.0 * (1.0 - g1) * p_cens_1 / (1.0 - f1) + 2.0 * g1 * p_u2 / (1.0 - f1);
        // F(1) = softmax(a)_0: dF/da0 = 0.25, dF/da1 = -0.25
        let expect_f = [-lr * 0.25 * dl_f, lr * 0.25 * dl_f];
        let expect_g = [-lr * 0.25 * dl_g, lr * 0.25 * dl_g];
        for (a, e) in s.failure.params().values().iter().zip(expect_f) {
            assert!((a - e).abs() < 1e-14, "{a} {e}");
        }
        for (a, e) in s.censor.params().values().iter().zip(expect_g) {
            assert!((a - e).abs() < 1e-14, "{a} {e}");
        }
    }

    #[test]
    fn zero_learning_rate_leaves_state_unchanged() {
        let w = MarginalWorld::new(vec![0.3, 0.7], vec![0.4, 0.6]).unwrap();
        let (r, wt) = w.population_batch();
        let mut s = GameState::new(
            marginal_model(&[0.6, 0.4]),
            marginal_model(&[0.2, 0.8]),
            OptimizerConfig::Sgd,
        );
        let before = (s.failure.clone(), s.censor.clone());
        step_summed(&mut s, &Batch::weighted(&r, &wt), &bs(), 0.0).unwrap();
        assert_eq!((s.failure, s.censor), before);
    }

    #[test]
    fn multiplayer_gradient_vanishes_at_truth() {
        let w = MarginalWorld::new(vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]).unwrap();
        let (r, wt) = w.population_batch();
        for family in [LossFamily::IpcwBs, LossFamily::IpcwBll] {
            let (gf, gg, _) = multiplayer_gradient(
                &simplex_model(&[0.2, 0.5]),
                &simplex_model(&[0.3, 0.3]),
                &Batch::weighted(&r, &wt),
                &LossSpec::new(family, Role::Failure),
            )
            .unwrap();
            assert!(
                gf.iter().chain(&gg).all(|v| v.abs() < 1e-12),
                "{gf:?} {gg:?}"
            );
        }
    }

    #[test]
    fn multiplayer_k3_converges_to_truth() {
        let w = MarginalWorld::new(vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]).unwrap();
        let (r, wt) = w.population_batch();
        let mut s = GameState::new(
            simplex_model(&[1.0 / 3.0; 2]),
            simplex_model(&[1.0 / 3.0; 2]),
            OptimizerConfig::Sgd,
        );
        play_full_batch(
            &mut s,
            &Batch::weighted(&r, &wt),
            &bs(),
            GameForm::Multiplayer,
            0.2,
            200_000,
            1e-12,
        )
        .unwrap();
        let f = s.failure.params().values();
        let g = s.censor.params().values();
        for (a, b) in f.iter().zip(&w.theta_t).chain(g.iter().zip(&w.theta_c)) {
            assert!((a - b).abs() < 1e-4, "{f:?} {g:?}");
        }
    }

    #[test]
    fn projection_keeps_implicit_mass() {
        let mut c = vec![0.7, 0.6, -0.2];
        project_simplex(&mut c, 1e-6);
        assert!(c.iter().all(|v| *v >= 1e-6 * 0.5));
        assert!(1.0 - c.iter().sum::<f64>() >= 1e-6 - 1e-15);
    }

    #[test]
    fn update_order_does_not_matter() {
        let w = MarginalWorld::new(vec![0.25, 0.25, 0.5], vec![0.5, 0.3, 0.2]).unwrap();
        let (r, wt) = w.population_batch();
        let b = Batch::weighted(&r, &wt);
        let s0 = GameState::new(
            marginal_model(&[0.5, 0.2, 0.3]),
            marginal_model(&[0.1, 0.6, 0.3]),
            OptimizerConfig::Sgd,
        );
        let mut a = s0.clone();
        step_summed(&mut a, &b, &bs(), 0.3).unwrap();

        // compute both gradients first, then apply G before F
        let pf = s0.failure.forward_batch(&r).unwrap();
        let pg = s0.censor.forward_batch(&r).unwrap();
        let lf = loss_and_grad_from_pass(
            &s0.failure,
            &pf,
            Reweighting::PerRecord(&pg.dists),
            &b,
            &bs(),
        )
        .unwrap();
        let lg = loss_and_grad_from_pass(
            &s0.censor,
            &pg,
            Reweighting::PerRecord(&pf.dists),
            &b,
            &role_spec(&bs(), Role::Censor),
        )
        .unwrap();
        let mut g: Vec<f64> = s0.censor.params().values().to_vec();
        for (p, d) in g.iter_mut().zip(lg.grad.values()) {
            *p -= 0.3 * d;
        }
        let mut f: Vec<f64> = s0.failure.params().values().to_vec();
        for (p, d) in f.iter_mut().zip(lf.grad.values()) {
            *p -= 0.3 * d;
        }
        assert_eq!(a.failure.params().values(), &f[..]);
        assert_eq!(a.censor.params().values(), &g[..]);
    }

    #[test]
    fn nll_failure_gradient_ignores_censor_model() {
        let w = MarginalWorld::new(vec![0.25, 0.25, 0.5], vec![0.5, 0.3, 0.2]).unwrap();
        let (r, wt) = w.population_batch();
        let b = Batch::weighted(&r, &wt);
        let nll = LossSpec::new(LossFamily::Nll, Role::Failure);
        let f = marginal_model(&[0.5, 0.2, 0.3]);
        let mut grads = Vec::new();
        for g in [
            marginal_model(&[0.1, 0.6, 0.3]),
            marginal_model(&[0.7, 0.2, 0.1]),
        ] {
            let mut s = GameState::new(f.clone(), g, OptimizerConfig::Sgd);
            step_summed(&mut s, &b, &nll, 1.0).unwrap();
            grads.push(s.failure.params().values().to_vec());
        }
        assert_eq!(grads[0], grads[1]);
    }

    #[test]
    fn nll_training_recovers_empirical_frequencies() {
        let w = MarginalWorld::new(vec![0.2, 0.5, 0.3], vec![0.0, 0.0, 1.0]).unwrap();
        let ds = gen_marginal(&w, 500, 4).unwrap();
        let cfg = TrainConfig {
            objective: Objective::Nll,
            model: ModelKind::Marginal,
            learning_rate: 0.05,
            epochs: 400,
            batch_size: 500,
            checkpoint_every: 400,
            ..Default::default()
        };
        let out = train(&ds, &cfg).unwrap();
        let freq: Vec<f64> = (1..=3)
            .map(|b| ds.records.iter().filter(|r| r.time_bin == b).count() as f64 / 500.0)
            .collect();
        let pmf = out.state.failure.forward(&[]).unwrap();
        for (a, b) in pmf.pmf().iter().zip(&freq) {
            assert!((a - b).abs() < 1e-4, "{:?} {freq:?}", pmf.pmf());
        }
    }

    #[test]
    fn training_is_deterministic() {
        let w = MarginalWorld::new(vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]).unwrap();
        let ds = gen_marginal(&w, 100, 1).unwrap();
        let cfg = TrainConfig {
            model: ModelKind::Marginal,
            epochs: 5,
            batch_size: 16,
            ..Default::default()
        };
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a.state.checkpoints, b.state.checkpoints);
        assert_eq!(a.state.checkpoints.len(), 5);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.learning_rate = 1e-3;
        c.epochs = 0;
        assert!(c.validate().is_err());
        c.epochs = 1;
        c.game_form = GameForm::Multiplayer;
        assert!(c.validate().is_err());
        c.model = ModelKind::Simplex;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn log_uses_player_field_names() {
        let e = EpochLog {
            epoch: 1,
            loss_f: 0.5,
            loss_g: 0.25,
            clamp_count: 0,
            grad_norm_f: 1.0,
            grad_norm_g: 2.0,
        };
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        for key in [
            "epoch",
            "loss_F",
            "loss_G",
            "clamp_count",
            "grad_norm_F",
            "grad_norm_G",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn single_candidate_selection_takes_one_round() {
        let s = alternating_selection(1, 1, 0, 50, |_, _| Ok(1.0), |_, _| Ok(1.0)).unwrap();
        assert_eq!(
            (s.failure, s.censor, s.rounds, s.converged),
            (0, 0, 1, true)
        );
    }

    #[test]
    fn dominant_pair_is_found_from_any_start() {
        // candidate 2 is best for both players whatever the partner
        let table_f: [[f64; 3]; 3] = [[3.0, 2.0, 4.0], [2.5, 2.2, 3.1], [1.0, 0.5, 0.9]];
        let table_g: [[f64; 3]; 3] = [[2.0, 3.0, 1.5], [1.0, 2.0, 0.1], [5.0, 4.0, 0.2]];
        // brute force: the pair (2, 2) is a mutual best response
        let best_g_vs_2 = (0..3)
            .min_by(|&a, &b| table_g[2][a].total_cmp(&table_g[2][b]))
            .unwrap();
        let best_f_vs_2 = (0..3)
            .min_by(|&a, &b| table_f[a][2].total_cmp(&table_f[b][2]))
            .unwrap();
        assert_eq!((best_f_vs_2, best_g_vs_2), (2, 2));
        for start in 0..3 {
            let s = alternating_selection(
                3,
                3,
                start,
                50,
                |i, j| Ok(table_g[i][j]),
                |i, j| Ok(table_f[i][j]),
            )
            .unwrap();
            assert!(s.converged);
            assert_eq!((s.failure, s.censor), (2, 2));
        }
    }

    #[test]
    fn two_cycle_is_flagged() {
        // G best-responds with the same index as F; F best-responds with the other index
        let s = alternating_selection(
            2,
            2,
            0,
            50,
            |i, j| Ok(if i == j { 0.0 } else { 1.0 }),
            |i, j| Ok(if i != j { 0.0 } else { 1.0 }),
        )
        .unwrap();
        assert!(!s.converged);
        assert_eq!(s.rounds, 50);
    }

    #[test]
    fn select_models_on_trained_store() {
        let w = MarginalWorld::new(vec![0.2, 0.5, 0.3], vec![0.3, 0.3, 0.4]).unwrap();
        let train_set = gen_marginal(&w, 200, 1).unwrap();
        let val = gen_marginal(&w, 200, 2).unwrap();
        let cfg = TrainConfig {
            model: ModelKind::Marginal,
            epochs: 6,
            batch_size: 50,
            learning_rate: 0.05,
            checkpoint_every: 2,
            ..Default::default()
        };
        let out = train(&train_set, &cfg).unwrap();
        assert_eq!(out.state.checkpoints.len(), 3);
        let sel = select_models(&out.state, &val, &cfg.loss_spec(), 7, DEFAULT_MAX_ROUNDS).unwrap();
        assert!(sel.selection.failure < 3 && sel.selection.censor < 3);
        assert_eq!(
            sel.failure_epoch,
            out.state.checkpoints[sel.selection.failure].epoch
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn projection_lands_in_the_open_simplex(
                mut coords in prop::collection::vec(-1.0f64..2.0, 1..8),
                eps in 1e-9f64..1e-3,
            ) {
                project_simplex(&mut coords, eps);
                prop_assert!(coords.iter().all(|c| *c >= eps * (1.0 - 1e-12) && *c <= 1.0 - eps));
                prop_assert!(coords.iter().sum::<f64>() <= 1.0 - eps + 1e-12);
            }

            #[test]
            fn projection_fixes_interior_points(raw in prop::collection::vec(0.05f64..1.0, 2..8)) {
                let s: f64 = raw.iter().sum();
                let mut head: Vec<f64> = raw[..raw.len() - 1].iter().map(|v| v / s).collect();
                let before = head.clone();
                project_simplex(&mut head, 1e-6);
                prop_assert_eq!(head, before);
            }
        }
    }
}
