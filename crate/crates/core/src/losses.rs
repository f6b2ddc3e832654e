//! Scoring rules for categorical survival models under right censoring.
//!
//! Each player's loss re-weights observed outcomes by the *other* player's
//! distribution, which enters only as a constant. Per-t terms:
//!
//! ```text
//! failure BS(t):  F̄(t)² Δ 1{U<=t} / Ḡ(U⁻)   + F(t)² 1{U>t} / Ḡ(t)
//! censor  BS(t):  Ḡ(t)² (1-Δ) 1{U<=t} / F̄(U) + G(t)² 1{U>t} / F̄(t)
//! ```
//!
//! The failure event term divides by the left limit `Ḡ(U⁻) = P(C >= U)`,
//! while the censor term divides by `F̄(U) = P(T > U)`: with `Δ = 1{T <= C}`,
//! a tie counts as a failure, so the asymmetry is exact. The BLL family swaps
//! the squared errors for `-log F(t)` and `-log F̄(t)`.
//!
//! Denominators and log arguments are floored at `weight_floor`; every floor
//! hit is counted in [`ClampStats`] and contributes no gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{CategoricalSurvival, SurvivalRecord};

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossFamily {
    Nll,
    IpcwBs,
    IpcwBll,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Failure,
    Censor,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Failure => "failure",
            Role::Censor => "censor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeSet {
    /// Every horizon `1..=K-1`.
    All,
    Only(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    pub times: TimeSet,
    pub role: Role,
    pub weight_floor: f64,
}

impl LossSpec {
    pub fn new(family: LossFamily, role: Role) -> Self {
        Self {
            family,
            times: TimeSet::All,
            role,
            weight_floor: DEFAULT_WEIGHT_FLOOR,
        }
    }

    pub fn at(mut self, t: usize) -> Self {
        self.times = TimeSet::Only(vec![t]);
        self
    }

    pub fn with_times(mut self, times: TimeSet) -> Self {
        self.times = times;
        self
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.weight_floor = floor;
        self
    }

    /// Horizons for a `K`-bin model; rejects `t = 0` and `t >= K`.
    pub fn resolve_times(&self, n_bins: usize) -> Result<Vec<usize>> {
        match &self.times {
            TimeSet::All => Ok((1..n_bins).collect()),
            TimeSet::Only(ts) => {
                if let Some(&bad) = ts.iter().find(|&&t| t == 0 || t >= n_bins) {
                    return Err(Error::InvalidLossSpec(format!(
                        "horizon {bad} outside 1..={} (BS(K) is identically 0)",
                        n_bins - 1
                    )));
                }
                Ok(ts.clone())
            }
        }
    }
}

/// Counts floor hits on weights and log arguments.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClampStats {
    pub count: u64,
}

impl ClampStats {
    pub fn merge(&mut self, other: ClampStats) {
        self.count += other.count;
    }
}

/// The re-weighting distribution(s) supplied by the frozen player.
#[derive(Debug, Clone, Copy)]
pub enum Reweighting<'a> {
    /// One distribution for every record (marginal models, KM).
    Shared(&'a CategoricalSurvival),
    /// One distribution per record, row-aligned with the batch.
    PerRecord(&'a [CategoricalSurvival]),
}

impl<'a> Reweighting<'a> {
    pub fn get(&self, i: usize) -> &'a CategoricalSurvival {
        match self {
            Reweighting::Shared(d) => d,
            Reweighting::PerRecord(ds) => &ds[i],
        }
    }

    fn check_len(&self, n: usize) -> Result<()> {
        match self {
            Reweighting::PerRecord(ds) if ds.len() != n => Err(Error::DimensionMismatch {
                expected: n,
                got: ds.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Records with optional non-negative weights; reductions are weighted means.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub records: &'a [SurvivalRecord],
    pub weights: Option<&'a [f64]>,
}

impl<'a> Batch<'a> {
    pub fn new(records: &'a [SurvivalRecord]) -> Self {
        Self {
            records,
            weights: None,
        }
    }

    pub fn weighted(records: &'a [SurvivalRecord], weights: &'a [f64]) -> Self {
        Self {
            records,
            weights: Some(weights),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Per-record factors of the weighted mean (summing to 1).
    pub fn mean_factors(&self) -> Result<Vec<f64>> {
        if self.records.is_empty() {
            return Err(Error::MissingData("empty batch".into()));
        }
        match self.weights {
            None => Ok(vec![1.0 / self.records.len() as f64; self.records.len()]),
            Some(w) => {
                if w.len() != self.records.len() {
                    return Err(Error::DimensionMismatch {
                        expected: self.records.len(),
                        got: w.len(),
                    });
                }
                let total: f64 = w.iter().sum();
                if total.is_nan() || total <= 0.0 || w.iter().any(|v| *v < 0.0) {
                    return Err(Error::InvalidConfig(
                        "batch weights must be >= 0 with positive sum".into(),
                    ));
                }
                Ok(w.iter().map(|v| v / total).collect())
            }
        }
    }
}

struct Floor<'s> {
    floor: f64,
    stats: &'s mut ClampStats,
}

impl Floor<'_> {
    /// `1 / max(x, floor)`.
    fn inverse(&mut self, x: f64) -> f64 {
        if x < self.floor {
            self.stats.count += 1;
            1.0 / self.floor
        } else {
            1.0 / x
        }
    }

    /// `(-log max(x, floor), d/dx)`; the derivative is zero when clamped.
    fn neg_log(&mut self, x: f64) -> (f64, f64) {
        if x < self.floor {
            self.stats.count += 1;
            (-self.floor.ln(), 0.0)
        } else {
            (-x.ln(), -1.0 / x)
        }
    }
}

/// Adds `amount · d cdf(t) / d pmf` into a pmf gradient.
fn add_cdf_grad(grad: &mut Option<&mut [f64]>, t: usize, amount: f64) {
    if let Some(g) = grad {
        for v in &mut g[..t] {
            *v += amount;
        }
    }
}

fn add_mass_grad(grad: &mut Option<&mut [f64]>, t: usize, amount: f64) {
    if let Some(g) = grad {
        g[t - 1] += amount;
    }
}

fn check_record(record: &SurvivalRecord, n_bins: usize) -> Result<()> {
    if record.time_bin == 0 || record.time_bin > n_bins {
        return Err(Error::BinOutOfRange {
            bin: record.time_bin,
            n_bins,
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bs_term(
    t: usize,
    role: Role,
    own: &CategoricalSurvival,
    other: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: &mut Floor,
    scale: f64,
    grad: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let u = record.time_bin;
    let observed_own = match role {
        Role::Failure => record.event,
        Role::Censor => !record.event,
    };
    if u <= t && observed_own {
        let w = match role {
            Role::Failure => floor.inverse(other.surv_left(u)?),
            Role::Censor => floor.inverse(other.surv(u)),
        };
        let s = own.surv(t);
        add_cdf_grad(grad, t, -2.0 * s * w * scale);
        Ok(s * s * w)
    } else if u > t {
        let w = floor.inverse(other.surv(t));
        let c = own.cdf(t);
        add_cdf_grad(grad, t, 2.0 * c * w * scale);
        Ok(c * c * w)
    } else {
        Ok(0.0)
    }
}

#[allow(clippy::too_many_arguments)]
fn bll_term(
    t: usize,
    role: Role,
    own: &CategoricalSurvival,
    other: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: &mut Floor,
    scale: f64,
    grad: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let u = record.time_bin;
    let observed_own = match role {
        Role::Failure => record.event,
        Role::Censor => !record.event,
    };
    if u <= t && observed_own {
        let w = match role {
            Role::Failure => floor.inverse(other.surv_left(u)?),
            Role::Censor => floor.inverse(other.surv(u)),
        };
        let (v, dv) = floor.neg_log(own.cdf(t));
        add_cdf_grad(grad, t, dv * w * scale);
        Ok(v * w)
    } else if u > t {
        let w = floor.inverse(other.surv(t));
        let (v, dv) = floor.neg_log(own.surv(t));
        // d surv(t) = -d cdf(t)
        add_cdf_grad(grad, t, -dv * w * scale);
        Ok(v * w)
    } else {
        Ok(0.0)
    }
}

fn nll_term(
    role: Role,
    own: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: &mut Floor,
    scale: f64,
    grad: &mut Option<&mut [f64]>,
) -> Result<f64> {
    let u = record.time_bin;
    let point = match role {
        Role::Failure => record.event,
        Role::Censor => !record.event,
    };
    if point {
        let (v, dv) = floor.neg_log(own.mass(u));
        add_mass_grad(grad, u, dv * scale);
        Ok(v)
    } else {
        // failure: P(T > U); censor: P(C >= U) = surv(U - 1)
        let s_at = match role {
            Role::Failure => u,
            Role::Censor => u - 1,
        };
        let (v, dv) = floor.neg_log(own.surv(s_at));
        if s_at > 0 {
            add_cdf_grad(grad, s_at, -dv * scale);
        }
        Ok(v)
    }
}

/// Loss of one record summed over `times`, adding `scale · d/d pmf` into `grad`.
#[allow(clippy::too_many_arguments)]
pub fn sample_loss(
    spec: &LossSpec,
    times: &[usize],
    own: &CategoricalSurvival,
    other: &CategoricalSurvival,
    record: &SurvivalRecord,
    scale: f64,
    mut grad: Option<&mut [f64]>,
    stats: &mut ClampStats,
) -> Result<f64> {
    check_record(record, own.n_bins())?;
    let mut floor = Floor {
        floor: spec.weight_floor,
        stats,
    };
    match spec.family {
        LossFamily::Nll => nll_term(spec.role, own, record, &mut floor, scale, &mut grad),
        LossFamily::IpcwBs => times.iter().try_fold(0.0, |acc, &t| {
            Ok(acc
                + bs_term(
                    t, spec.role, own, other, record, &mut floor, scale, &mut grad,
                )?)
        }),
        LossFamily::IpcwBll => times.iter().try_fold(0.0, |acc, &t| {
            Ok(acc
                + bll_term(
                    t, spec.role, own, other, record, &mut floor, scale, &mut grad,
                )?)
        }),
    }
}

/// Weighted-mean loss over a batch and the per-record pmf gradients of that
/// mean (row-major, `n × K`).
pub fn batch_loss_and_pmf_grad(
    spec: &LossSpec,
    own: Reweighting<'_>,
    other: Reweighting<'_>,
    batch: &Batch<'_>,
    stats: &mut ClampStats,
) -> Result<(f64, Vec<f64>)> {
    let factors = batch.mean_factors()?;
    own.check_len(batch.len())?;
    other.check_len(batch.len())?;
    let k = own.get(0).n_bins();
    let times = resolve_for(spec, k)?;
    let mut grads = vec![0.0; batch.len() * k];
    let mut total = 0.0;
    for (i, (record, f)) in batch.records.iter().zip(&factors).enumerate() {
        let v = sample_loss(
            spec,
            &times,
            own.get(i),
            other.get(i),
            record,
            *f,
            Some(&mut grads[i * k..(i + 1) * k]),
            stats,
        )?;
        total += f * v;
    }
    Ok((total, grads))
}

/// Weighted-mean loss over a batch.
pub fn batch_loss(
    spec: &LossSpec,
    own: Reweighting<'_>,
    other: Reweighting<'_>,
    batch: &Batch<'_>,
    stats: &mut ClampStats,
) -> Result<f64> {
    let factors = batch.mean_factors()?;
    own.check_len(batch.len())?;
    other.check_len(batch.len())?;
    let times = resolve_for(spec, own.get(0).n_bins())?;
    let mut total = 0.0;
    for (i, (record, f)) in batch.records.iter().zip(&factors).enumerate() {
        total += f * sample_loss(
            spec,
            &times,
            own.get(i),
            other.get(i),
            record,
            *f,
            None,
            stats,
        )?;
    }
    Ok(total)
}

fn resolve_for(spec: &LossSpec, n_bins: usize) -> Result<Vec<usize>> {
    match spec.family {
        LossFamily::Nll => Ok(Vec::new()),
        _ => spec.resolve_times(n_bins),
    }
}

/// Per-record negative log-likelihood of the partial likelihood for `role`.
pub fn nll(
    dist: &CategoricalSurvival,
    record: &SurvivalRecord,
    role: Role,
    floor: f64,
    stats: &mut ClampStats,
) -> Result<f64> {
    check_record(record, dist.n_bins())?;
    nll_term(
        role,
        dist,
        record,
        &mut Floor { floor, stats },
        0.0,
        &mut None,
    )
}

#[allow(clippy::too_many_arguments)]
fn single_term(
    t: usize,
    family: LossFamily,
    role: Role,
    own: &CategoricalSurvival,
    other: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: f64,
    stats: &mut ClampStats,
) -> Result<f64> {
    check_record(record, own.n_bins())?;
    if t == 0 || t >= own.n_bins() {
        return Err(Error::InvalidLossSpec(format!(
            "horizon {t} outside 1..={}",
            own.n_bins() - 1
        )));
    }
    let mut f = Floor { floor, stats };
    match family {
        LossFamily::IpcwBs => bs_term(t, role, own, other, record, &mut f, 0.0, &mut None),
        _ => bll_term(t, role, own, other, record, &mut f, 0.0, &mut None),
    }
}

/// Failure player's IPCW Brier term at horizon `t`, weighted by the frozen `g`.
pub fn ipcw_bs_failure(
    t: usize,
    f: &CategoricalSurvival,
    g_frozen: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: f64,
    stats: &mut ClampStats,
) -> Result<f64> {
    single_term(
        t,
        LossFamily::IpcwBs,
        Role::Failure,
        f,
        g_frozen,
        record,
        floor,
        stats,
    )
}

/// Censor player's IPCW Brier term at horizon `t`, weighted by the frozen `f`.
pub fn ipcw_bs_censor(
    t: usize,
    g: &CategoricalSurvival,
    f_frozen: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: f64,
    stats: &mut ClampStats,
) -> Result<f64> {
    single_term(
        t,
        LossFamily::IpcwBs,
        Role::Censor,
        g,
        f_frozen,
        record,
        floor,
        stats,
    )
}

pub fn ipcw_bll_failure(
    t: usize,
    f: &CategoricalSurvival,
    g_frozen: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: f64,
    stats: &mut ClampStats,
) -> Result<f64> {
    single_term(
        t,
        LossFamily::IpcwBll,
        Role::Failure,
        f,
        g_frozen,
        record,
        floor,
        stats,
    )
}

pub fn ipcw_bll_censor(
    t: usize,
    g: &CategoricalSurvival,
    f_frozen: &CategoricalSurvival,
    record: &SurvivalRecord,
    floor: f64,
    stats: &mut ClampStats,
) -> Result<f64> {
    single_term(
        t,
        LossFamily::IpcwBll,
        Role::Censor,
        g,
        f_frozen,
        record,
        floor,
        stats,
    )
}

/// IPCW estimate of `E[T]`: weighted mean of `Δ U / Ḡ(U⁻)`, with `U` in raw
/// units when the record carries one and the bin index otherwise.
pub fn ipcw_mean(
    batch: &Batch<'_>,
    g_frozen: Reweighting<'_>,
    floor: f64,
    stats: &mut ClampStats,
) -> Result<f64> {
    let factors = batch.mean_factors()?;
    g_frozen.check_len(batch.len())?;
    let mut f = Floor { floor, stats };
    let mut total = 0.0;
    for (i, (r, w)) in batch.records.iter().zip(&factors).enumerate() {
        if !r.event {
            continue;
        }
        let u = r.raw_time.unwrap_or(r.time_bin as f64);
        total += w * u * f.inverse(g_frozen.get(i).surv_left(r.time_bin)?);
    }
    Ok(total)
}

/// Batch losses of both players.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlayerLosses {
    pub failure: f64,
    pub censor: f64,
}

/// Both players' losses summed over the spec's horizons. `spec.role` is
/// ignored; each player gets its own role.
pub fn summed_loss(
    spec: &LossSpec,
    failure: Reweighting<'_>,
    censor: Reweighting<'_>,
    batch: &Batch<'_>,
    stats: &mut ClampStats,
) -> Result<PlayerLosses> {
    let f_spec = LossSpec {
        role: Role::Failure,
        ..spec.clone()
    };
    let g_spec = LossSpec {
        role: Role::Censor,
        ..spec.clone()
    };
    Ok(PlayerLosses {
        failure: batch_loss(&f_spec, failure, censor, batch, stats)?,
        censor: batch_loss(&g_spec, censor, failure, batch, stats)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::MarginalWorld;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const FL: f64 = DEFAULT_WEIGHT_FLOOR;

    fn dist(p: &[f64]) -> CategoricalSurvival {
        CategoricalSurvival::new(p.to_vec()).unwrap()
    }

    fn rec(u: usize, event: bool) -> SurvivalRecord {
        SurvivalRecord::marginal(u, event)
    }

    #[test]
    fn nll_examples() {
        let mut s = ClampStats::default();
        let u = CategoricalSurvival::uniform(2);
        assert_abs_diff_eq!(
            nll(&u, &rec(1, true), Role::Failure, FL, &mut s).unwrap(),
            -(0.5f64.ln()),
            epsilon = 1e-15
        );
        let f = dist(&[0.3, 0.7]);
        assert_abs_diff_eq!(
            nll(&f, &rec(1, false), Role::Failure, FL, &mut s).unwrap(),
            -(0.7f64.ln()),
            epsilon = 1e-15
        );
        let g = dist(&[0.4, 0.6]);
        assert_abs_diff_eq!(
            nll(&g, &rec(2, true), Role::Censor, FL, &mut s).unwrap(),
            -(0.6f64.ln()),
            epsilon = 1e-15
        );
        assert_eq!(s.count, 0);
    }

    #[test]
    fn nll_zero_mass_is_clamped_and_counted() {
        let mut s = ClampStats::default();
        let f = dist(&[0.0, 1.0]);
        let v = nll(&f, &rec(1, true), Role::Failure, FL, &mut s).unwrap();
        assert_abs_diff_eq!(v, -(FL.ln()), epsilon = 1e-12);
        assert_eq!(s.count, 1);
    }

    #[test]
    fn bs_failure_examples() {
        let mut s = ClampStats::default();
        // U > t with F(t) = 0
        let f = dist(&[0.0, 0.5, 0.5]);
        let g = dist(&[0.2, 0.3, 0.5]);
        assert_eq!(
            ipcw_bs_failure(1, &f, &g, &rec(3, true), FL, &mut s).unwrap(),
            0.0
        );
        // Δ=1, U<=t, F̄(t)=0.5, Ḡ(U⁻)=0.5; Ḡ(1⁻) is always 1, so U=2
        let f = dist(&[0.25, 0.25, 0.5]);
        let g = dist(&[0.5, 0.25, 0.25]);
        let v = ipcw_bs_failure(2, &f, &g, &rec(2, true), FL, &mut s).unwrap();
        assert_abs_diff_eq!(v, 0.5 * 0.5 / 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bs_censor_examples() {
        let mut s = ClampStats::default();
        // Δ=0, U=1<=t=1: Ḡ(1)=0.4, F̄(1)=0.8
        let g = dist(&[0.6, 0.4]);
        let f = dist(&[0.2, 0.8]);
        let v = ipcw_bs_censor(1, &g, &f, &rec(1, false), FL, &mut s).unwrap();
        assert_abs_diff_eq!(v, 0.4 * 0.4 / 0.8, epsilon = 1e-15);
        // uncensored sample at U<=t gives no left term
        assert_eq!(
            ipcw_bs_censor(1, &g, &f, &rec(1, true), FL, &mut s).unwrap(),
            0.0
        );
    }

    #[test]
    fn bll_examples() {
        let mut s = ClampStats::default();
        let f = dist(&[1.0, 0.0]);
        let g = CategoricalSurvival::never_before_last(2);
        assert_eq!(
            ipcw_bll_failure(1, &f, &g, &rec(1, true), FL, &mut s).unwrap(),
            0.0
        );

        let f = dist(&[0.25, 0.25, 0.5]);
        let g = dist(&[0.5, 0.25, 0.25]);
        let v = ipcw_bll_failure(2, &f, &g, &rec(2, true), FL, &mut s).unwrap();
        assert_abs_diff_eq!(v, -(0.5f64.ln()) / 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 1.3863, epsilon = 1e-4);
    }

    #[test]
    fn horizon_k_is_rejected() {
        let spec = LossSpec::new(LossFamily::IpcwBs, Role::Failure).at(3);
        assert!(spec.resolve_times(3).is_err());
        let spec = LossSpec::new(LossFamily::IpcwBs, Role::Failure).at(0);
        assert!(spec.resolve_times(3).is_err());
        let f = CategoricalSurvival::uniform(3);
        let mut s = ClampStats::default();
        assert!(ipcw_bs_failure(3, &f, &f, &rec(1, true), FL, &mut s).is_err());
    }

    #[test]
    fn k2_summed_equals_single_horizon() {
        let w = MarginalWorld::new(vec![0.3, 0.7], vec![0.4, 0.6]).unwrap();
        let (r, wt) = w.population_batch();
        let b = Batch::weighted(&r, &wt);
        let f = dist(&[0.2, 0.8]);
        let g = dist(&[0.5, 0.5]);
        let mut s = ClampStats::default();
        let all = LossSpec::new(LossFamily::IpcwBs, Role::Failure);
        let one = all.clone().at(1);
        let a = batch_loss(
            &all,
            Reweighting::Shared(&f),
            Reweighting::Shared(&g),
            &b,
            &mut s,
        )
        .unwrap();
        let o = batch_loss(
            &one,
            Reweighting::Shared(&f),
            Reweighting::Shared(&g),
            &b,
            &mut s,
        )
        .unwrap();
        assert_eq!(a, o);
    }

    #[test]
    fn ipcw_mean_by_enumeration() {
        // T, C uniform on {1,2}: contributions 1, 1, 0, 4 each w.p. 1/4
        let w = MarginalWorld::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let (r, wt) = w.population_batch();
        let g = w.censor();
        let mut s = ClampStats::default();
        let m = ipcw_mean(
            &Batch::weighted(&r, &wt),
            Reweighting::Shared(&g),
            FL,
            &mut s,
        )
        .unwrap();
        assert_abs_diff_eq!(m, 1.5, epsilon = 1e-15);

        // halving Ḡ doubles the estimate
        let records = vec![rec(2, true), rec(2, true), rec(1, false)];
        let b = Batch::new(&records);
        let full = CategoricalSurvival::never_before_last(2);
        let half = dist(&[0.5, 0.5]);
        let a = ipcw_mean(&b, Reweighting::Shared(&full), FL, &mut s).unwrap();
        let h = ipcw_mean(&b, Reweighting::Shared(&half), FL, &mut s).unwrap();
        assert_abs_diff_eq!(a, 4.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(h, 2.0 * a, epsilon = 1e-15);
    }

    #[test]
    fn symmetry_between_players() {
        // left terms: censor(G, F, Δ) = failure(G, F', 1-Δ) with F' shifted so
        // that F̄'(U⁻) = F̄(U) for U >= 2 (F̄'(0) is pinned at 1); right terms
        // share the non-left-limit weight.
        let f = dist(&[0.1, 0.2, 0.3, 0.4]);
        let shifted = dist(&[0.3, 0.3, 0.4, 0.0]);
        let g = dist(&[0.25, 0.15, 0.35, 0.25]);
        let mut s = ClampStats::default();
        for t in 1..4 {
            for u in 1..=4 {
                for d in [true, false] {
                    if u == 1 && u <= t {
                        continue;
                    }
                    let c = ipcw_bs_censor(t, &g, &f, &rec(u, d), FL, &mut s).unwrap();
                    let other = if u <= t { &shifted } else { &f };
                    let m = ipcw_bs_failure(t, &g, other, &rec(u, !d), FL, &mut s).unwrap();
                    assert_abs_diff_eq!(c, m, epsilon = 1e-15);
                }
            }
        }
    }

    fn pmf(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn per_sample_losses_are_nonnegative(f in pmf(5), g in pmf(5), u in 1usize..=5, d: bool, t in 1usize..5) {
            let f = dist(&f);
            let g = dist(&g);
            let r = rec(u, d);
            let mut s = ClampStats::default();
            prop_assert!(ipcw_bs_failure(t, &f, &g, &r, FL, &mut s).unwrap() >= 0.0);
            prop_assert!(ipcw_bs_censor(t, &g, &f, &r, FL, &mut s).unwrap() >= 0.0);
            prop_assert!(ipcw_bll_failure(t, &f, &g, &r, FL, &mut s).unwrap() >= 0.0);
            prop_assert!(ipcw_bll_censor(t, &g, &f, &r, FL, &mut s).unwrap() >= 0.0);
            prop_assert!(nll(&f, &r, Role::Failure, FL, &mut s).unwrap() >= 0.0);
            prop_assert!(nll(&g, &r, Role::Censor, FL, &mut s).unwrap() >= 0.0);
        }

        #[test]
        fn censoring_free_equivalence(f in pmf(6), latent in prop::collection::vec(1usize..=6, 1..40)) {
            // plain BS / NBLL computed directly from the latent bins
            let f = dist(&f);
            let none = CategoricalSurvival::never_before_last(6);
            let records: Vec<_> = latent.iter().map(|&t| rec(t, true)).collect();
            let b = Batch::new(&records);
            let mut s = ClampStats::default();
            for t in 1..6 {
                let n = latent.len() as f64;
                let plain_bs: f64 = latent.iter().map(|&x| {
                    let ind = if x <= t { 1.0 } else { 0.0 };
                    (f.cdf(t) - ind).powi(2)
                }).sum::<f64>() / n;
                let plain_nbll: f64 = latent.iter().map(|&x| {
                    if x <= t { -f.cdf(t).ln() } else { -(1.0 - f.cdf(t)).ln() }
                }).sum::<f64>() / n;
                let bs = batch_loss(&LossSpec::new(LossFamily::IpcwBs, Role::Failure).at(t),
                    Reweighting::Shared(&f), Reweighting::Shared(&none), &b, &mut s).unwrap();
                let bll = batch_loss(&LossSpec::new(LossFamily::IpcwBll, Role::Failure).at(t),
                    Reweighting::Shared(&f), Reweighting::Shared(&none), &b, &mut s).unwrap();
                prop_assert!((bs - plain_bs).abs() < 1e-12);
                prop_assert!((bll - plain_nbll).abs() < 1e-12);
            }
        }
    }
}
