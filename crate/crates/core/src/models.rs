//! Differentiable categorical survival models with hand-written backprop.
//!
//! Three heads share one interface:
//! - `Marginal`: `K` free logits, softmax.
//! - `Simplex`: direct probabilities `θ_1..θ_{K-1}`, with `θ_K = 1 - Σ θ_t`
//!   implicit. Each coordinate can be owned by a separate player.
//! - `Mlp`: affine/ReLU stack ending in `K` softmax logits.
//!
//! Losses hand back `d loss / d pmf` per record; [`DifferentiableModel::backward`]
//! chains that through the head. The other player's distribution only ever
//! enters the loss as weights, so no gradient reaches its parameters.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{batch_loss_and_pmf_grad, Batch, ClampStats, LossSpec, Reweighting};
use crate::survival::{CategoricalSurvival, SurvivalRecord};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Marginal {
        n_bins: usize,
    },
    Simplex {
        n_bins: usize,
    },
    Mlp {
        input_dim: usize,
        hidden: Vec<usize>,
        n_bins: usize,
    },
}

impl Architecture {
    pub fn n_bins(&self) -> usize {
        match self {
            Architecture::Marginal { n_bins }
            | Architecture::Simplex { n_bins }
            | Architecture::Mlp { n_bins, .. } => *n_bins,
        }
    }

    /// Feature dimension consumed by the model (0 for marginal heads).
    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Mlp { input_dim, .. } => *input_dim,
            _ => 0,
        }
    }

    pub fn layout(&self) -> ParamLayout {
        let blocks = match self {
            Architecture::Marginal { n_bins } => vec![ParamBlock::new("logits", 1, *n_bins)],
            Architecture::Simplex { n_bins } => {
                vec![ParamBlock::new("probs", 1, n_bins - 1)]
            }
            Architecture::Mlp {
                input_dim,
                hidden,
                n_bins,
            } => {
                let mut sizes = vec![*input_dim];
                sizes.extend(hidden);
                sizes.push(*n_bins);
                sizes
                    .windows(2)
                    .enumerate()
                    .flat_map(|(i, w)| {
                        [
                            ParamBlock::new(&format!("w{i}"), w[0], w[1]),
                            ParamBlock::new(&format!("b{i}"), 1, w[1]),
                        ]
                    })
                    .collect()
            }
        };
        ParamLayout { blocks }
    }

    fn validate(&self) -> Result<()> {
        if self.n_bins() < 2 {
            return Err(Error::InvalidConfig("models need K >= 2 bins".into()));
        }
        if let Architecture::Mlp {
            input_dim, hidden, ..
        } = self
        {
            if *input_dim == 0 || hidden.contains(&0) {
                return Err(Error::InvalidConfig(
                    "MLP layer sizes must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    fn new(name: &str, rows: usize, cols: usize) -> Self {
        Self {
            name: name.to_string(),
            rows,
            cols,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shapes of the parameter blocks, in flattening order (row-major each).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat trainable parameters plus their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: ParamLayout,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.len();
        Self {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn from_values(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.len(),
                got: values.len(),
            });
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Zero-copy views of each block.
    pub fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        let mut offset = 0;
        self.layout
            .blocks
            .iter()
            .map(|b| {
                let v = ArrayView2::from_shape(
                    (b.rows, b.cols),
                    &self.values[offset..offset + b.len()],
                )
                .expect("layout matches values");
                offset += b.len();
                v
            })
            .collect()
    }

    pub fn unflatten(&self) -> Vec<Array2<f64>> {
        self.views().into_iter().map(|v| v.to_owned()).collect()
    }

    pub fn flatten(layout: ParamLayout, blocks: &[Array2<f64>]) -> Result<Self> {
        if blocks.len() != layout.blocks.len() {
            return Err(Error::DimensionMismatch {
                expected: layout.blocks.len(),
                got: blocks.len(),
            });
        }
        let mut values = Vec::with_capacity(layout.len());
        for (b, a) in layout.blocks.iter().zip(blocks) {
            if a.dim() != (b.rows, b.cols) {
                return Err(Error::DimensionMismatch {
                    expected: b.len(),
                    got: a.len(),
                });
            }
            values.extend(a.iter());
        }
        Ok(Self { layout, values })
    }
}

/// Value and own-parameter gradient of a batch loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub value: f64,
    pub grad: ParamVector,
    pub clamps: ClampStats,
}

/// Forward outputs of a batch, with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub dists: Vec<CategoricalSurvival>,
    // per-layer inputs and hidden pre-activations (MLP only)
    inputs: Vec<Array2<f64>>,
    pre_acts: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferentiableModel {
    arch: Architecture,
    params: ParamVector,
}

fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = out.iter().sum();
    for v in &mut out {
        *v /= s;
    }
    out
}

/// `d/dz` of `Σ g_k softmax(z)_k`: `θ ⊙ (g - θ·g)`.
fn softmax_backward(theta: &[f64], g: &[f64], out: &mut [f64]) {
    let dot: f64 = theta.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, t), gi) in out.iter_mut().zip(theta).zip(g) {
        *o = t * (gi - dot);
    }
}

impl DifferentiableModel {
    /// All parameters zero (uniform output for softmax heads).
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let mut params = ParamVector::zeros(arch.layout());
        if let Architecture::Simplex { n_bins } = arch {
            params.values.fill(1.0 / n_bins as f64);
        }
        Ok(Self { arch, params })
    }

    /// Random initialization: weights and logits `~ N(0, init_std²)`, biases 0.
    /// Simplex heads start at a uniformly random interior point.
    pub fn init<R: Rng>(arch: Architecture, init_std: f64, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        match &model.arch {
            Architecture::Simplex { n_bins } => {
                let raw: Vec<f64> = (0..*n_bins)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3)
                    .collect();
                let s: f64 = raw.iter().sum();
                for (p, r) in model.params.values.iter_mut().zip(&raw) {
                    *p = r / s;
                }
            }
            _ => {
                let normal = Normal::new(0.0, init_std)
                    .map_err(|e| Error::InvalidConfig(format!("init_std: {e}")))?;
                let mut offset = 0;
                let blocks = model.params.layout.blocks.clone();
                for b in blocks {
                    if !b.name.starts_with('b') {
                        for v in &mut model.params.values[offset..offset + b.len()] {
                            *v = normal.sample(rng);
                        }
                    }
                    offset += b.len();
                }
            }
        }
        Ok(model)
    }

    pub fn from_params(arch: Architecture, params: ParamVector) -> Result<Self> {
        arch.validate()?;
        if params.layout != arch.layout() {
            return Err(Error::InvalidConfig(
                "parameter layout does not match architecture".into(),
            ));
        }
        let model = Self { arch, params };
        if let Architecture::Simplex { .. } = model.arch {
            model.simplex_pmf()?;
        }
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn n_bins(&self) -> usize {
        self.arch.n_bins()
    }

    /// Replaces the parameter values, keeping the layout.
    pub fn set_values(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: values.len(),
            });
        }
        self.params.values.copy_from_slice(values);
        Ok(())
    }

    fn simplex_pmf(&self) -> Result<CategoricalSurvival> {
        let head = &self.params.values;
        let mut pmf = head.to_vec();
        pmf.push(1.0 - head.iter().sum::<f64>());
        CategoricalSurvival::new(pmf)
    }

    fn check_features(&self, x: &[f64]) -> Result<()> {
        let d = self.arch.input_dim();
        if d > 0 && x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, features: &[f64]) -> Result<CategoricalSurvival> {
        self.check_features(features)?;
        match &self.arch {
            Architecture::Marginal { .. } => Ok(CategoricalSurvival::from_pmf_unchecked(
                softmax_row(&self.params.values),
            )),
            Architecture::Simplex { .. } => self.simplex_pmf(),
            Architecture::Mlp { .. } => {
                let x = Array2::from_shape_vec((1, features.len()), features.to_vec())
                    .expect("row vector");
                Ok(self.mlp_forward(x).dists.pop().expect("one row"))
            }
        }
    }

    pub fn forward_batch(&self, records: &[SurvivalRecord]) -> Result<ForwardPass> {
        for r in records {
            self.check_features(&r.features)?;
        }
        match &self.arch {
            Architecture::Mlp { input_dim, .. } => {
                let mut x = Array2::zeros((records.len(), *input_dim));
                for (mut row, r) in x.rows_mut().into_iter().zip(records) {
                    row.assign(&ndarray::ArrayView1::from(&r.features[..]));
                }
                Ok(self.mlp_forward(x))
            }
            _ => {
                let d = self.forward(&[])?;
                Ok(ForwardPass {
                    dists: vec![d; records.len()],
                    inputs: Vec::new(),
                    pre_acts: Vec::new(),
                })
            }
        }
    }

    fn mlp_forward(&self, x: Array2<f64>) -> ForwardPass {
        let views = self.params.views();
        let n_layers = views.len() / 2;
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_acts = Vec::with_capacity(n_layers - 1);
        let mut h = x;
        for l in 0..n_layers {
            let (w, b) = (&views[2 * l], &views[2 * l + 1]);
            let z = h.dot(w) + b;
            inputs.push(h);
            if l + 1 < n_layers {
                h = z.mapv(|v| v.max(0.0));
                pre_acts.push(z);
            } else {
                h = z;
            }
        }
        let dists = h
            .rows()
            .into_iter()
            .map(|row| {
                CategoricalSurvival::from_pmf_unchecked(softmax_row(
                    row.as_slice().expect("standard layout"),
                ))
            })
            .collect();
        ForwardPass {
            dists,
            inputs,
            pre_acts,
        }
    }

    /// Chains per-record pmf gradients (`n × K`, row-major) into a parameter
    /// gradient. The gradients are summed over records as given.
    pub fn backward(&self, pass: &ForwardPass, pmf_grads: &[f64]) -> Result<ParamVector> {
        let k = self.n_bins();
        let n = pass.dists.len();
        if pmf_grads.len() != n * k {
            return Err(Error::DimensionMismatch {
                expected: n * k,
                got: pmf_grads.len(),
            });
        }
        let mut grad = ParamVector::zeros(self.params.layout.clone());
        match &self.arch {
            Architecture::Marginal { .. } => {
                let mut summed = vec![0.0; k];
                for row in pmf_grads.chunks(k) {
                    for (s, g) in summed.iter_mut().zip(row) {
                        *s += g;
                    }
                }
                if let Some(d) = pass.dists.first() {
                    softmax_backward(d.pmf(), &summed, &mut grad.values);
                }
            }
            Architecture::Simplex { .. } => {
                for row in pmf_grads.chunks(k) {
                    for (j, g) in grad.values.iter_mut().enumerate() {
                        *g += row[j] - row[k - 1];
                    }
                }
            }
            Architecture::Mlp { .. } => {
                let mut dz = Array2::zeros((n, k));
                for (i, (mut row, d)) in dz.rows_mut().into_iter().zip(&pass.dists).enumerate() {
                    softmax_backward(
                        d.pmf(),
                        &pmf_grads[i * k..(i + 1) * k],
                        row.as_slice_mut().expect("standard layout"),
                    );
                }
                self.mlp_backward(pass, dz, &mut grad);
            }
        }
        Ok(grad)
    }

    fn mlp_backward(&self, pass: &ForwardPass, mut dz: Array2<f64>, grad: &mut ParamVector) {
        let views = self.params.views();
        let n_layers = views.len() / 2;
        let mut grads: Vec<Array2<f64>> = Vec::with_capacity(2 * n_layers);
        for l in (0..n_layers).rev() {
            let dw = pass.inputs[l].t().dot(&dz);
            let db = dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            grads.push(db);
            grads.push(dw);
            if l > 0 {
                let mut dh = dz.dot(&views[2 * l].t());
                // ReLU subgradient at 0 is 0
                ndarray::Zip::from(&mut dh)
                    .and(&pass.pre_acts[l - 1])
                    .for_each(|g, &z| {
                        if z <= 0.0 {
                            *g = 0.0;
                        }
                    });
                dz = dh;
            }
        }
        grads.reverse();
        let mut offset = 0;
        for g in grads {
            for v in g.iter() {
                grad.values[offset] = *v;
                offset += 1;
            }
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&Checkpoint::from(self))?)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        ck.into_model()
    }
}

/// On-disk model: architecture plus flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub architecture: Architecture,
    pub params: Vec<f64>,
}

impl From<&DifferentiableModel> for Checkpoint {
    fn from(m: &DifferentiableModel) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            architecture: m.arch.clone(),
            params: m.params.values.clone(),
        }
    }
}

impl Checkpoint {
    pub fn into_model(self) -> Result<DifferentiableModel> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let layout = self.architecture.layout();
        DifferentiableModel::from_params(
            self.architecture,
            ParamVector::from_values(layout, self.params)?,
        )
    }
}

/// Batch-mean loss of `model` and its gradient with respect to `model`'s own
/// parameters, holding the other player's distributions fixed.
pub fn loss_and_grad(
    model: &DifferentiableModel,
    frozen_other: Reweighting<'_>,
    batch: &Batch<'_>,
    spec: &LossSpec,
) -> Result<LossGradient> {
    let pass = model.forward_batch(batch.records)?;
    loss_and_grad_from_pass(model, &pass, frozen_other, batch, spec)
}

/// As [`loss_and_grad`], reusing an existing forward pass of `model`.
pub fn loss_and_grad_from_pass(
    model: &DifferentiableModel,
    pass: &ForwardPass,
    frozen_other: Reweighting<'_>,
    batch: &Batch<'_>,
    spec: &LossSpec,
) -> Result<LossGradient> {
    let mut clamps = ClampStats::default();
    let (value, pmf_grads) = batch_loss_and_pmf_grad(
        spec,
        Reweighting::PerRecord(&pass.dists),
        frozen_other,
        batch,
        &mut clamps,
    )?;
    let grad = model.backward(pass, &pmf_grads)?;
    Ok(LossGradient {
        value,
        grad,
        clamps,
    })
}
