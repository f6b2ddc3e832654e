//! Shared domain types: observations, datasets, categorical survival
//! distributions over `K` time bins, and quantile discretization.
//!
//! Time bins are 1-based throughout (`1..=K`), so `cdf(0) = 0` and
//! `surv_left(1) = 1` fall out of the indexing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ pmf = 1` when constructing a distribution.
pub const PMF_SUM_TOLERANCE: f64 = 1e-9;

/// One right-censored observation `(X, U, Δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub features: Vec<f64>,
    /// Discretized `U = min(T, C)`, in `1..=K`.
    pub time_bin: usize,
    /// `Δ = 1{T <= C}`.
    pub event: bool,
    /// `U` in original time units, when known.
    pub raw_time: Option<f64>,
}

impl SurvivalRecord {
    pub fn new(features: Vec<f64>, time_bin: usize, event: bool) -> Self {
        Self {
            features,
            time_bin,
            event,
            raw_time: None,
        }
    }

    /// A record without covariates.
    pub fn marginal(time_bin: usize, event: bool) -> Self {
        Self::new(Vec::new(), time_bin, event)
    }

    pub fn with_raw_time(mut self, raw_time: f64) -> Self {
        self.raw_time = Some(raw_time);
        self
    }
}

/// Latent failure and censoring times of a simulated observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentTimes {
    pub failure: f64,
    pub censor: f64,
}

/// Probability vector over `K` ordered time bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalSurvival {
    pmf: Vec<f64>,
    // cdf[t] = Σ_{k<=t} pmf, t = 0..=K
    cdf: Vec<f64>,
    // tail[t] = Σ_{k>t} pmf, t = 0..=K
    tail: Vec<f64>,
}

impl CategoricalSurvival {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() {
            return Err(Error::InvalidDistribution("empty pmf".into()));
        }
        if let Some(bad) = pmf.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "entry {bad} is negative or non-finite"
            )));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}, not 1"
            )));
        }
        Ok(Self::from_pmf_unchecked(pmf))
    }

    /// Builds the distribution without validating `pmf`.
    pub(crate) fn from_pmf_unchecked(pmf: Vec<f64>) -> Self {
        let k = pmf.len();
        let mut cdf = vec![0.0; k + 1];
        for t in 1..=k {
            cdf[t] = cdf[t - 1] + pmf[t - 1];
        }
        let mut tail = vec![0.0; k + 1];
        for t in (0..k).rev() {
            tail[t] = tail[t + 1] + pmf[t];
        }
        cdf[k] = 1.0;
        tail[0] = 1.0;
        Self { pmf, cdf, tail }
    }

    pub fn uniform(n_bins: usize) -> Self {
        Self::from_pmf_unchecked(vec![1.0 / n_bins as f64; n_bins])
    }

    /// All mass on `bin`.
    pub fn point_mass(n_bins: usize, bin: usize) -> Self {
        let mut pmf = vec![0.0; n_bins];
        pmf[bin - 1] = 1.0;
        Self::from_pmf_unchecked(pmf)
    }

    /// A distribution with `surv(t) = 1` for every `t < K`: the weighting
    /// that turns an inverse-weighted estimate into its uncensored form.
    pub fn never_before_last(n_bins: usize) -> Self {
        Self::point_mass(n_bins, n_bins)
    }

    pub fn n_bins(&self) -> usize {
        self.pmf.len()
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `P(· = t)` for `t` in `1..=K`.
    pub fn mass(&self, t: usize) -> f64 {
        self.pmf[t - 1]
    }

    /// `P(· <= t)` for `t` in `0..=K`.
    pub fn cdf(&self, t: usize) -> f64 {
        self.cdf[t]
    }

    /// `P(· > t)` for `t` in `0..=K`.
    pub fn surv(&self, t: usize) -> f64 {
        self.tail[t]
    }

    /// Left limit `P(· >= t) = 1 - cdf(t - 1)` for `t` in `1..=K`.
    pub fn surv_left(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.n_bins() {
            return Err(Error::BinOutOfRange {
                bin: t,
                n_bins: self.n_bins(),
            });
        }
        Ok(self.tail[t - 1])
    }

    /// `Σ_t t · P(· = t)`.
    pub fn expected_bin(&self) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

/// Ascending bin boundaries `edge_0 < ... < edge_K` in original time units.
///
/// Bin `j` covers `[edge_{j-1}, edge_j)`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BinEdgesFile", into = "BinEdgesFile")]
pub struct BinEdges {
    edges: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BinEdgesFile {
    #[serde(rename = "K")]
    k: usize,
    edges: Vec<f64>,
}

impl TryFrom<BinEdgesFile> for BinEdges {
    type Error = Error;

    fn try_from(file: BinEdgesFile) -> Result<Self> {
        let edges = BinEdges::new(file.edges)?;
        if edges.n_bins() != file.k {
            return Err(Error::InvalidConfig(format!(
                "bin file declares K={} but lists {} edges",
                file.k,
                edges.edges.len()
            )));
        }
        Ok(edges)
    }
}

impl From<BinEdges> for BinEdgesFile {
    fn from(edges: BinEdges) -> Self {
        Self {
            k: edges.n_bins(),
            edges: edges.edges,
        }
    }
}

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 3 {
            return Err(Error::DegenerateBins(format!(
                "need at least 2 bins, got {} edges",
                edges.len()
            )));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::DegenerateBins("non-finite edge".into()));
        }
        if let Some(w) = edges.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateBins(format!(
                "edges not strictly increasing at bin {} ({} >= {})",
                w + 1,
                edges[w],
                edges[w + 1]
            )));
        }
        Ok(Self { edges })
    }

    /// Unit-width bins `[k, k+1)` for integer-valued times `1..=K`.
    pub fn integer(n_bins: usize) -> Self {
        Self {
            edges: (1..=n_bins + 1).map(|e| e as f64).collect(),
        }
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Bin containing `time`. Times below the first edge map to bin 1 and
    /// times at or above the last edge map to bin `K`.
    pub fn assign(&self, time: f64) -> usize {
        let k = self.n_bins();
        let above = self.edges[1..].partition_point(|&e| e <= time);
        (above + 1).min(k)
    }

    /// The representative (lower boundary) time of `bin`.
    pub fn lower_boundary(&self, bin: usize) -> f64 {
        self.edges[bin - 1]
    }
}

/// Result of [`quantile_discretize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub edges: BinEdges,
    pub bins: Vec<usize>,
}

/// Empirical quantile with linear interpolation between order statistics.
fn interpolated_quantile(sorted: &[f64], level: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * level;
    let lo = h.floor() as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Places edges at the `j/K` empirical quantiles of `raw_times` and bins
/// every time. Fails if an edge repeats or a bin ends up empty.
pub fn quantile_discretize(raw_times: &[f64], n_bins: usize) -> Result<Discretization> {
    if raw_times.is_empty() {
        return Err(Error::DegenerateBins("no times to discretize".into()));
    }
    if n_bins < 2 {
        return Err(Error::DegenerateBins(format!("K={n_bins} < 2")));
    }
    if raw_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::DegenerateBins("non-finite time".into()));
    }
    let mut sorted = raw_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (0..=n_bins)
        .map(|j| interpolated_quantile(&sorted, j as f64 / n_bins as f64))
        .collect();
    let edges = BinEdges::new(edges)?;
    let bins: Vec<usize> = raw_times.iter().map(|&t| edges.assign(t)).collect();

    let mut counts = vec![0usize; n_bins];
    for &b in &bins {
        counts[b - 1] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::DegenerateBins(format!(
            "bin {} of {n_bins} is empty",
            empty + 1
        )));
    }
    Ok(Discretization { edges, bins })
}

/// A discretized survival dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SurvivalRecord>,
    pub feature_dim: usize,
    pub bin_edges: BinEdges,
    /// Ground-truth `(T, C)` per record, row-aligned, for simulations.
    pub latent: Option<Vec<LatentTimes>>,
}

impl Dataset {
    pub fn new(
        records: Vec<SurvivalRecord>,
        feature_dim: usize,
        bin_edges: BinEdges,
    ) -> Result<Self> {
        let k = bin_edges.n_bins();
        for r in &records {
            if r.features.len() != feature_dim {
                return Err(Error::DimensionMismatch {
                    expected: feature_dim,
                    got: r.features.len(),
                });
            }
            if r.time_bin == 0 || r.time_bin > k {
                return Err(Error::BinOutOfRange {
                    bin: r.time_bin,
                    n_bins: k,
                });
            }
            if let Some(raw) = r.raw_time {
                if bin_edges.assign(raw) != r.time_bin {
                    return Err(Error::InvalidConfig(format!(
                        "record with raw time {raw} is labelled bin {} but the edges put it in bin {}",
                        r.time_bin,
                        bin_edges.assign(raw)
                    )));
                }
            }
        }
        Ok(Self {
            records,
            feature_dim,
            bin_edges,
            latent: None,
        })
    }

    /// Builds a dataset from raw times, binning each with `edges`.
    pub fn from_raw(
        features: Vec<Vec<f64>>,
        times: &[f64],
        events: &[bool],
        feature_dim: usize,
        edges: BinEdges,
    ) -> Result<Self> {
        if features.len() != times.len() || times.len() != events.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: features.len().min(events.len()),
            });
        }
        let records = features
            .into_iter()
            .zip(times.iter().zip(events))
            .map(|(x, (&u, &d))| SurvivalRecord::new(x, edges.assign(u), d).with_raw_time(u))
            .collect();
        Self::new(records, feature_dim, edges)
    }

    pub fn with_latent(mut self, latent: Vec<LatentTimes>) -> Result<Self> {
        if latent.len() != self.records.len() {
            return Err(Error::DimensionMismatch {
                expected: self.records.len(),
                got: latent.len(),
            });
        }
        self.latent = Some(latent);
        Ok(self)
    }

    pub fn n_bins(&self) -> usize {
        self.bin_edges.n_bins()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Re-bins every record with `edges`; requires raw times.
    pub fn rebin(&self, edges: &BinEdges) -> Result<Self> {
        let mut records = self.records.clone();
        for r in &mut records {
            let raw = r
                .raw_time
                .ok_or_else(|| Error::MissingData("re-binning needs raw times".into()))?;
            r.time_bin = edges.assign(raw);
        }
        let mut out = Self::new(records, self.feature_dim, edges.clone())?;
        out.latent = self.latent.clone();
        Ok(out)
    }

    /// Latent failure time of each record, binned with this dataset's edges.
    pub fn latent_failure_bins(&self) -> Option<Vec<usize>> {
        self.latent.as_ref().map(|lat| {
            lat.iter()
                .map(|l| self.bin_edges.assign(l.failure))
                .collect()
        })
    }

    pub fn censoring_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| !r.event).count() as f64 / self.len() as f64
    }
}
