//! Evaluation: Kaplan-Meier, uncensored and re-weighted BS/BLL, NLL,
//! concordance and calibration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    batch_loss, Batch, ClampStats, LossFamily, LossSpec, Reweighting, Role, DEFAULT_WEIGHT_FLOOR,
};
use crate::models::DifferentiableModel;
use crate::survival::{CategoricalSurvival, Dataset};

/// Product-limit estimate over integer time bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KaplanMeier {
    /// Distinct observed times, ascending.
    pub times: Vec<usize>,
    /// `Ŝ(time)` right after each time.
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

impl KaplanMeier {
    pub fn fit(times: &[usize], events: &[bool]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::MissingData(
                "Kaplan-Meier needs at least one observation".into(),
            ));
        }
        if times.len() != events.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: events.len(),
            });
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by_key(|&i| times[i]);
        let mut km = Self {
            times: Vec::new(),
            survival: Vec::new(),
            at_risk: Vec::new(),
            events: Vec::new(),
        };
        let mut at_risk = times.len();
        let mut s = 1.0;
        let mut i = 0;
        while i < order.len() {
            let t = times[order[i]];
            let mut j = i;
            let mut d = 0;
            while j < order.len() && times[order[j]] == t {
                d += usize::from(events[order[j]]);
                j += 1;
            }
            s *= 1.0 - d as f64 / at_risk as f64;
            km.times.push(t);
            km.survival.push(s);
            km.at_risk.push(at_risk);
            km.events.push(d);
            at_risk -= j - i;
            i = j;
        }
        Ok(km)
    }

    /// Failure-time KM from observed records.
    pub fn failure(dataset: &Dataset) -> Result<Self> {
        let (t, e): (Vec<usize>, Vec<bool>) = dataset
            .records
            .iter()
            .map(|r| (r.time_bin, r.event))
            .unzip();
        Self::fit(&t, &e)
    }

    /// Censoring-time KM: event indicators flipped.
    pub fn censoring(dataset: &Dataset) -> Result<Self> {
        let (t, e): (Vec<usize>, Vec<bool>) = dataset
            .records
            .iter()
            .map(|r| (r.time_bin, !r.event))
            .unzip();
        Self::fit(&t, &e)
    }

    /// `Ŝ(t)`, held at its last value past the last observed time.
    pub fn surv(&self, t: usize) -> f64 {
        match self.times.partition_point(|&x| x <= t) {
            0 => 1.0,
            n => self.survival[n - 1],
        }
    }

    /// Categorical distribution on `1..=K` with the leftover mass in bin `K`.
    pub fn to_categorical(&self, n_bins: usize) -> Result<CategoricalSurvival> {
        let mut pmf: Vec<f64> = (1..n_bins)
            .map(|t| (self.surv(t - 1) - self.surv(t)).max(0.0))
            .collect();
        pmf.push(self.surv(n_bins - 1));
        CategoricalSurvival::new(pmf)
    }
}

/// Re-weighting used by the BS/BLL evaluators.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// Plain score against the latent failure times.
    UncensoredLatent,
    /// IPCW with a censoring KM fitted on the evaluation set.
    KaplanMeier,
    /// IPCW with a censoring model's per-record predictions.
    Model(&'a DifferentiableModel),
    /// IPCW with a known marginal censoring distribution.
    Known(&'a CategoricalSurvival),
}

impl Weighting<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Weighting::UncensoredLatent => "uncensored-latent",
            Weighting::KaplanMeier => "km",
            Weighting::Model(_) => "model-G",
            Weighting::Known(_) => "true-G",
        }
    }
}

fn latent_bins(dataset: &Dataset) -> Result<Vec<usize>> {
    dataset.latent_failure_bins().ok_or_else(|| {
        Error::MissingData("uncensored evaluation needs the latent-time sidecar".into())
    })
}

fn check_preds(preds: &[CategoricalSurvival], dataset: &Dataset) -> Result<()> {
    if preds.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            got: preds.len(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::MissingData("empty evaluation set".into()));
    }
    Ok(())
}

fn per_horizon(
    family: LossFamily,
    preds: &[CategoricalSurvival],
    dataset: &Dataset,
    weighting: Weighting<'_>,
) -> Result<Vec<f64>> {
    check_preds(preds, dataset)?;
    let k = dataset.n_bins();
    let floor = DEFAULT_WEIGHT_FLOOR;
    if let Weighting::UncensoredLatent = weighting {
        let bins = latent_bins(dataset)?;
        let share = 1.0 / preds.len() as f64;
        return Ok((1..k)
            .map(|t| {
                let mut total = 0.0;
                for (p, &b) in preds.iter().zip(&bins) {
                    // residual probability of the wrong side of t
                    let miss = if b <= t { p.surv(t) } else { p.cdf(t) };
                    let v = match family {
                        LossFamily::IpcwBs => miss * miss,
                        _ => {
                            let hit = if b <= t { p.cdf(t) } else { p.surv(t) };
                            if hit < floor {
                                -floor.ln()
                            } else {
                                -hit.ln()
                            }
                        }
                    };
                    total += share * v;
                }
                total
            })
            .collect());
    }
    let km;
    let model_preds;
    let other = match weighting {
        Weighting::KaplanMeier => {
            km = KaplanMeier::censoring(dataset)?.to_categorical(k)?;
            Reweighting::Shared(&km)
        }
        Weighting::Model(g) => {
            model_preds = g.forward_batch(&dataset.records)?.dists;
            Reweighting::PerRecord(&model_preds)
        }
        Weighting::Known(g) => Reweighting::Shared(g),
        Weighting::UncensoredLatent => unreachable!(),
    };
    let batch = Batch::new(&dataset.records);
    let mut stats = ClampStats::default();
    (1..k)
        .map(|t| {
            let spec = LossSpec::new(family, Role::Failure).at(t);
            batch_loss(
                &spec,
                Reweighting::PerRecord(preds),
                other,
                &batch,
                &mut stats,
            )
        })
        .collect()
}

/// BS(t) for `t = 1..K-1` from per-record failure predictions.
pub fn bs_from_predictions(
    preds: &[CategoricalSurvival],
    dataset: &Dataset,
    weighting: Weighting<'_>,
) -> Result<Vec<f64>> {
    per_horizon(LossFamily::IpcwBs, preds, dataset, weighting)
}

/// Negative BLL(t) for `t = 1..K-1` from per-record failure predictions.
pub fn bll_from_predictions(
    preds: &[CategoricalSurvival],
    dataset: &Dataset,
    weighting: Weighting<'_>,
) -> Result<Vec<f64>> {
    per_horizon(LossFamily::IpcwBll, preds, dataset, weighting)
}

pub fn eval_bs(
    model: &DifferentiableModel,
    dataset: &Dataset,
    weighting: Weighting<'_>,
) -> Result<Vec<f64>> {
    bs_from_predictions(
        &model.forward_batch(&dataset.records)?.dists,
        dataset,
        weighting,
    )
}

pub fn eval_bll(
    model: &DifferentiableModel,
    dataset: &Dataset,
    weighting: Weighting<'_>,
) -> Result<Vec<f64>> {
    bll_from_predictions(
        &model.forward_batch(&dataset.records)?.dists,
        dataset,
        weighting,
    )
}

/// Mean failure NLL. With latent times this is `-log f(T | x)`; otherwise the
/// observed partial likelihood (`-log f(U)` for events, `-log F̄(U)` else).
pub fn nll_from_predictions(preds: &[CategoricalSurvival], dataset: &Dataset) -> Result<f64> {
    check_preds(preds, dataset)?;
    let floor = DEFAULT_WEIGHT_FLOOR;
    let total: f64 = match dataset.latent_failure_bins() {
        Some(bins) => preds
            .iter()
            .zip(&bins)
            .map(|(p, &b)| -p.mass(b).max(floor).ln())
            .sum(),
        None => {
            let mut stats = ClampStats::default();
            let mut s = 0.0;
            for (p, r) in preds.iter().zip(&dataset.records) {
                s += crate::losses::nll(p, r, Role::Failure, floor, &mut stats)?;
            }
            s
        }
    };
    Ok(total / preds.len() as f64)
}

/// Pair counts behind the concordance index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConcordanceCounts {
    pub concordant: u64,
    pub tied: u64,
    pub admissible: u64,
}

impl ConcordanceCounts {
    pub fn index(&self) -> Result<f64> {
        if self.admissible == 0 {
            return Err(Error::NoAdmissiblePairs);
        }
        Ok((2 * self.concordant + self.tied) as f64 / (2 * self.admissible) as f64)
    }
}

/// Risk score: larger means earlier predicted failure.
pub fn risk_scores(preds: &[CategoricalSurvival]) -> Vec<f64> {
    preds.iter().map(|p| -p.expected_bin()).collect()
}

/// All-pairs reference count.
pub fn concordance_counts_brute(
    risk: &[f64],
    times: &[usize],
    events: &[bool],
) -> ConcordanceCounts {
    let mut c = ConcordanceCounts {
        concordant: 0,
        tied: 0,
        admissible: 0,
    };
    for i in 0..risk.len() {
        if !events[i] {
            continue;
        }
        for j in 0..risk.len() {
            if i == j {
                continue;
            }
            if times[i] < times[j] || (times[i] == times[j] && !events[j]) {
                c.admissible += 1;
                if risk[i] > risk[j] {
                    c.concordant += 1;
                } else if risk[i] == risk[j] {
                    c.tied += 1;
                }
            }
        }
    }
    c
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// `O(n log n)` pair counts; identical to [`concordance_counts_brute`].
pub fn concordance_counts(risk: &[f64], times: &[usize], events: &[bool]) -> ConcordanceCounts {
    let n = risk.len();
    let mut sorted: Vec<f64> = risk.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let rank: Vec<usize> = risk
        .iter()
        .map(|r| sorted.partition_point(|v| v.total_cmp(r).is_lt()))
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[b].cmp(&times[a]));
    let mut tree = Fenwick(vec![0; sorted.len() + 1]);
    let mut inserted = 0u64;
    let mut c = ConcordanceCounts {
        concordant: 0,
        tied: 0,
        admissible: 0,
    };
    let mut g = 0;
    while g < n {
        let mut h = g;
        while h < n && times[order[h]] == times[order[g]] {
            h += 1;
        }
        let group = &order[g..h];
        for &j in group.iter().filter(|&&j| !events[j]) {
            tree.add(rank[j]);
            inserted += 1;
        }
        for &i in group.iter().filter(|&&i| events[i]) {
            let below = tree.below(rank[i]);
            let through = tree.below(rank[i] + 1);
            c.concordant += below;
            c.tied += through - below;
            c.admissible += inserted;
        }
        for &i in group.iter().filter(|&&i| events[i]) {
            tree.add(rank[i]);
            inserted += 1;
        }
        g = h;
    }
    c
}

pub fn concordance_from_predictions(
    preds: &[CategoricalSurvival],
    dataset: &Dataset,
) -> Result<f64> {
    check_preds(preds, dataset)?;
    let times: Vec<usize> = dataset.records.iter().map(|r| r.time_bin).collect();
    let events: Vec<bool> = dataset.records.iter().map(|r| r.event).collect();
    concordance_counts(&risk_scores(preds), &times, &events).index()
}

pub fn concordance(model: &DifferentiableModel, dataset: &Dataset) -> Result<f64> {
    concordance_from_predictions(&model.forward_batch(&dataset.records)?.dists, dataset)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub alpha: f64,
    pub observed: f64,
}

/// Weighted share of samples with `F(T | x) <= α`, for each level.
pub fn calibration_weighted(
    preds: &[CategoricalSurvival],
    bins: &[usize],
    weights: &[f64],
    levels: &[f64],
) -> Result<Vec<CalibrationPoint>> {
    if preds.is_empty() {
        return Err(Error::MissingData("empty calibration set".into()));
    }
    if preds.len() != bins.len() || bins.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: preds.len(),
            got: bins.len().min(weights.len()),
        });
    }
    let total: f64 = weights.iter().sum();
    let scores: Vec<f64> = preds.iter().zip(bins).map(|(p, &b)| p.cdf(b)).collect();
    Ok(levels
        .iter()
        .map(|&alpha| {
            let hit: f64 = scores
                .iter()
                .zip(weights)
                .filter(|(s, _)| **s <= alpha)
                .map(|(_, w)| w)
                .sum();
            CalibrationPoint {
                alpha,
                observed: hit / total,
            }
        })
        .collect())
}

/// Calibration against latent failure times.
pub fn calibration_from_predictions(
    preds: &[CategoricalSurvival],
    dataset: &Dataset,
    levels: &[f64],
) -> Result<Vec<CalibrationPoint>> {
    check_preds(preds, dataset)?;
    let bins = latent_bins(dataset)?;
    calibration_weighted(preds, &bins, &vec![1.0; bins.len()], levels)
}

pub fn calibration_curve(
    model: &DifferentiableModel,
    dataset: &Dataset,
    levels: &[f64],
) -> Result<Vec<CalibrationPoint>> {
    calibration_from_predictions(
        &model.forward_batch(&dataset.records)?.dists,
        dataset,
        levels,
    )
}

pub fn default_levels() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub fn write_calibration_csv(points: &[CalibrationPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "observed"])?;
    for p in points {
        w.write_record([p.alpha.to_string(), p.observed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub weighting: String,
    pub bs: Vec<f64>,
    pub bs_mean: f64,
    pub bs_sum: f64,
    pub bll: Vec<f64>,
    pub bll_mean: f64,
    pub nll: f64,
    pub concordance: Option<f64>,
    pub calibration: Vec<CalibrationPoint>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Full report for one failure model. Calibration is empty when the dataset
/// has no latent times; concordance is `None` without admissible pairs.
pub fn evaluate(
    model: &DifferentiableModel,
    dataset: &Dataset,
    weighting: Weighting<'_>,
    levels: &[f64],
) -> Result<EvalReport> {
    let preds = model.forward_batch(&dataset.records)?.dists;
    let bs = bs_from_predictions(&preds, dataset, weighting)?;
    let bll = bll_from_predictions(&preds, dataset, weighting)?;
    let concordance = match concordance_from_predictions(&preds, dataset) {
        Ok(c) => Some(c),
        Err(Error::NoAdmissiblePairs) => None,
        Err(e) => return Err(e),
    };
    let calibration = if dataset.latent.is_some() {
        calibration_from_predictions(&preds, dataset, levels)?
    } else {
        Vec::new()
    };
    Ok(EvalReport {
        weighting: weighting.name().to_string(),
        bs_mean: mean(&bs),
        bs_sum: bs.iter().sum(),
        bll_mean: mean(&bll),
        bs,
        bll,
        nll: nll_from_predictions(&preds, dataset)?,
        concordance,
        calibration,
    })
}
