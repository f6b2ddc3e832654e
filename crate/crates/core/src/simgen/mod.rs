//! Seeded data generators: the conditional Gamma simulation and marginal
//! categorical worlds, plus CSV ingestion for external data.
//!
//! Every random quantity is drawn from its own ChaCha stream (coefficients,
//! features, failure times, censoring times; one stream family per split), so
//! growing `n` only appends draws and never perturbs earlier samples.

mod csv_io;

pub use csv_io::{
    load_csv, load_csv_with, read_latent_csv, read_table, write_csv, write_latent_csv, RawTable,
    Standardizer,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{
    quantile_discretize, BinEdges, CategoricalSurvival, Dataset, LatentTimes, SurvivalRecord,
};

const STREAM_COEFFICIENTS: u64 = 0;
const STREAM_FEATURES: u64 = 1;
const STREAM_FAILURE: u64 = 2;
const STREAM_CENSOR: u64 = 3;

fn stream(seed: u64, split: u64, column: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split * 16 + column);
    rng
}

/// Parameters of the conditional Gamma simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaSimConfig {
    pub feature_dim: usize,
    /// Features are `N(0, feature_scale · I)`.
    pub feature_scale: f64,
    pub coef_low: f64,
    pub coef_high: f64,
    /// Censoring mean is `censor_mean_factor · μ_t`.
    pub censor_mean_factor: f64,
    /// Shared variance of the failure and censoring Gammas.
    pub variance: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for GammaSimConfig {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            feature_scale: 10.0,
            coef_low: 0.0,
            coef_high: 0.1,
            censor_mean_factor: 0.9,
            variance: 0.05,
            n: 1000,
            seed: 0,
        }
    }
}

impl GammaSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variance.is_nan() || self.variance <= 0.0 {
            return Err(Error::InvalidConfig("variance must be > 0".into()));
        }
        if self.censor_mean_factor.is_nan() || self.censor_mean_factor <= 0.0 {
            return Err(Error::InvalidConfig(
                "censor_mean_factor must be > 0".into(),
            ));
        }
        if self.coef_low.is_nan() || self.coef_high.is_nan() || self.coef_low >= self.coef_high {
            return Err(Error::InvalidConfig("coef_low must be < coef_high".into()));
        }
        if self.feature_scale.is_nan() || self.feature_scale < 0.0 {
            return Err(Error::InvalidConfig("feature_scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Shape `α = μ²/σ²` and rate `β = μ/σ²` of a Gamma with mean `μ`, variance `σ²`.
pub fn gamma_shape_rate(mean: f64, variance: f64) -> (f64, f64) {
    (mean * mean / variance, mean / variance)
}

fn gamma_draw(rng: &mut ChaCha8Rng, mean: f64, variance: f64) -> Result<f64> {
    let (shape, rate) = gamma_shape_rate(mean, variance);
    let dist = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::InvalidConfig(format!("gamma(mean={mean}, var={variance}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Raw (undiscretized) simulated observations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSample {
    pub features: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub latent: Vec<LatentTimes>,
    pub feature_dim: usize,
}

impl SimulatedSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn into_dataset(self, edges: BinEdges) -> Result<Dataset> {
        Dataset::from_raw(
            self.features,
            &self.times,
            &self.events,
            self.feature_dim,
            edges,
        )?
        .with_latent(self.latent)
    }

    /// Discretizes at the quantiles of this sample's observed times.
    pub fn discretize(self, n_bins: usize) -> Result<Dataset> {
        let edges = quantile_discretize(&self.times, n_bins)?.edges;
        self.into_dataset(edges)
    }
}

/// One draw of the Gamma data-generating process: the coefficient vector is
/// fixed by the seed and shared by every split sampled from it.
#[derive(Debug, Clone)]
pub struct GammaSimulator {
    config: GammaSimConfig,
    coefficients: Vec<f64>,
}

impl GammaSimulator {
    pub fn new(config: GammaSimConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(config.seed, 0, STREAM_COEFFICIENTS);
        let coefficients = (0..config.feature_dim)
            .map(|_| rng.random_range(config.coef_low..config.coef_high))
            .collect();
        Ok(Self {
            config,
            coefficients,
        })
    }

    pub fn config(&self) -> &GammaSimConfig {
        &self.config
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// `μ_t(x) = exp(w · x)`.
    pub fn failure_mean(&self, x: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            .exp()
    }

    /// Draws `n` observations from split `split` (0 for the default stream).
    pub fn sample(&self, n: usize, split: u64) -> Result<SimulatedSample> {
        let cfg = &self.config;
        let split = split + 1;
        let mut feat_rng = stream(cfg.seed, split, STREAM_FEATURES);
        let mut t_rng = stream(cfg.seed, split, STREAM_FAILURE);
        let mut c_rng = stream(cfg.seed, split, STREAM_CENSOR);
        let sd = cfg.feature_scale.sqrt();

        let mut out = SimulatedSample {
            features: Vec::with_capacity(n),
            times: Vec::with_capacity(n),
            events: Vec::with_capacity(n),
            latent: Vec::with_capacity(n),
            feature_dim: cfg.feature_dim,
        };
        for _ in 0..n {
            let x: Vec<f64> = (0..cfg.feature_dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut feat_rng);
                    sd * z
                })
                .collect();
            let mu = self.failure_mean(&x);
            let t = gamma_draw(&mut t_rng, mu, cfg.variance)?;
            let c = gamma_draw(&mut c_rng, cfg.censor_mean_factor * mu, cfg.variance)?;
            out.features.push(x);
            out.times.push(t.min(c));
            out.events.push(t <= c);
            out.latent.push(LatentTimes {
                failure: t,
                censor: c,
            });
        }
        Ok(out)
    }
}

/// Draws `config.n` Gamma observations and bins them at their own quantiles.
pub fn gen_gamma(config: &GammaSimConfig, n_bins: usize) -> Result<Dataset> {
    GammaSimulator::new(config.clone())?
        .sample(config.n, 0)?
        .discretize(n_bins)
}

/// True marginal failure and censoring pmfs over the same `K` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalWorld {
    pub theta_t: Vec<f64>,
    pub theta_c: Vec<f64>,
}

impl MarginalWorld {
    pub fn new(theta_t: Vec<f64>, theta_c: Vec<f64>) -> Result<Self> {
        let world = Self { theta_t, theta_c };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        CategoricalSurvival::new(self.theta_t.clone())?;
        CategoricalSurvival::new(self.theta_c.clone())?;
        if self.theta_t.len() != self.theta_c.len() {
            return Err(Error::DimensionMismatch {
                expected: self.theta_t.len(),
                got: self.theta_c.len(),
            });
        }
        if self.theta_t.len() < 2 {
            return Err(Error::InvalidConfig("a world needs K >= 2 bins".into()));
        }
        Ok(())
    }

    /// True when every entry of both pmfs is strictly positive.
    pub fn is_interior(&self) -> bool {
        self.theta_t.iter().chain(&self.theta_c).all(|&p| p > 0.0)
    }

    pub fn require_interior(&self) -> Result<()> {
        self.validate()?;
        if !self.is_interior() {
            return Err(Error::Domain("world has a zero-probability bin".into()));
        }
        Ok(())
    }

    /// A world with both pmfs drawn from a flat Dirichlet, floored at `min_mass`.
    pub fn random_interior<R: Rng>(n_bins: usize, min_mass: f64, rng: &mut R) -> Self {
        let mut draw = || {
            let raw: Vec<f64> = (0..n_bins)
                .map(|_| -(1.0 - rng.random::<f64>()).ln() + min_mass)
                .collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect::<Vec<_>>()
        };
        let theta_t = draw();
        let theta_c = draw();
        Self { theta_t, theta_c }
    }

    pub fn n_bins(&self) -> usize {
        self.theta_t.len()
    }

    pub fn failure(&self) -> CategoricalSurvival {
        CategoricalSurvival::from_pmf_unchecked(self.theta_t.clone())
    }

    pub fn censor(&self) -> CategoricalSurvival {
        CategoricalSurvival::from_pmf_unchecked(self.theta_c.clone())
    }

    /// Every joint outcome `(T=a, C=b)` as an observed record with weight
    /// `θ*_Ta · θ*_Cb`. Zero-weight outcomes are dropped.
    pub fn population_batch(&self) -> (Vec<SurvivalRecord>, Vec<f64>) {
        let k = self.n_bins();
        let mut records = Vec::with_capacity(k * k);
        let mut weights = Vec::with_capacity(k * k);
        for a in 1..=k {
            for b in 1..=k {
                let w = self.theta_t[a - 1] * self.theta_c[b - 1];
                if w > 0.0 {
                    records.push(SurvivalRecord::marginal(a.min(b), a <= b));
                    weights.push(w);
                }
            }
        }
        (records, weights)
    }

    /// Exact `P(Δ = 1) = P(T <= C)`.
    pub fn event_probability(&self) -> f64 {
        let c = self.censor();
        (1..=self.n_bins())
            .map(|a| self.theta_t[a - 1] * c.surv_left(a).unwrap_or(0.0))
            .sum()
    }
}

fn categorical_draw<R: Rng>(cdf: &CategoricalSurvival, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let k = cdf.n_bins();
    (1..=k).find(|&t| u < cdf.cdf(t)).unwrap_or(k)
}

/// Draws `n` feature-less observations with `T ~ θ*_T`, `C ~ θ*_C` independent.
pub fn gen_marginal(world: &MarginalWorld, n: usize, seed: u64) -> Result<Dataset> {
    world.validate()?;
    let f = world.failure();
    let g = world.censor();
    let mut t_rng = stream(seed, 1, STREAM_FAILURE);
    let mut c_rng = stream(seed, 1, STREAM_CENSOR);
    let mut records = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    for _ in 0..n {
        let t = categorical_draw(&f, &mut t_rng);
        let c = categorical_draw(&g, &mut c_rng);
        let u = t.min(c);
        records.push(SurvivalRecord::marginal(u, t <= c).with_raw_time(u as f64));
        latent.push(LatentTimes {
            failure: t as f64,
            censor: c as f64,
        });
    }
    Dataset::new(records, 0, BinEdges::integer(world.n_bins()))?.with_latent(latent)
}
