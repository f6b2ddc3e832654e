//! Exact population quantities for marginal categorical worlds.
//!
//! Estimates are `θ̂ = (θ̂_1, ..., θ̂_{K-1})` with `θ̂_K = 1 - Σ θ̂_t` implicit.
//! Player `(T, t)` owns `θ̂_{Tt}` and plays the horizon-`t` failure loss;
//! player `(C, t)` owns `θ̂_{Ct}` and plays the horizon-`t` censor loss.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{
    batch_loss, nll, Batch, ClampStats, LossFamily, LossSpec, Reweighting, Role,
    DEFAULT_WEIGHT_FLOOR,
};
use crate::simgen::MarginalWorld;
use crate::survival::CategoricalSurvival;

/// Truth summaries for one induction step: the first `k` coordinates are
/// pinned at truth and `(x, y)` estimate coordinate `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub p: f64,
    pub q: f64,
    pub t: f64,
    pub c: f64,
}

impl PopulationSpec {
    pub fn new(p: f64, q: f64, t: f64, c: f64) -> Result<Self> {
        let s = Self { p, q, t, c };
        let ok = [p, q].iter().all(|v| *v >= 0.0)
            && [t, c].iter().all(|v| *v > 0.0)
            && p + t < 1.0
            && q + c < 1.0;
        if !ok {
            return Err(Error::Domain(format!(
                "population step {s:?} is not strictly interior"
            )));
        }
        Ok(s)
    }

    /// Step `k + 1` of an interior world, `k` in `0..K-1`.
    pub fn from_world(world: &MarginalWorld, k: usize) -> Result<Self> {
        world.require_interior()?;
        if k + 1 >= world.n_bins() {
            return Err(Error::Domain(format!(
                "step {} outside 1..{}",
                k + 1,
                world.n_bins() - 1
            )));
        }
        let p = world.theta_t[..k].iter().sum();
        let q = world.theta_c[..k].iter().sum();
        Self::new(p, q, world.theta_t[k], world.theta_c[k])
    }

    fn r(&self) -> f64 {
        (1.0 - self.p - self.t) * (1.0 - self.q - self.c)
    }

    fn check(&self, x: f64, y: f64) -> Result<()> {
        if 1.0 - self.q - y <= 0.0 || 1.0 - self.p - x <= 0.0 {
            return Err(Error::Domain(format!(
                "({x}, {y}) leaves the weights undefined"
            )));
        }
        Ok(())
    }

    /// Failure loss at the step horizon.
    pub fn fbs(&self, x: f64, y: f64) -> Result<f64> {
        self.check(x, y)?;
        let Self { p, q, t, .. } = *self;
        Ok((1.0 - p - x).powi(2) * (p + t) + (p + x).powi(2) * self.r() / (1.0 - q - y))
    }

    /// Censor loss at the step horizon.
    pub fn gbs(&self, x: f64, y: f64) -> Result<f64> {
        self.check(x, y)?;
        let Self { p, q, t, c } = *self;
        Ok(
            (1.0 - q - y).powi(2) * (q + c * (1.0 - t - p) / (1.0 - p - x))
                + (q + y).powi(2) * self.r() / (1.0 - p - x),
        )
    }

    /// `∂ fbs / ∂x`.
    pub fn fx(&self, x: f64, y: f64) -> Result<f64> {
        self.check(x, y)?;
        let Self { p, q, t, .. } = *self;
        Ok(-2.0 * (1.0 - p - x) * (p + t) + 2.0 * (p + x) * self.r() / (1.0 - q - y))
    }

    /// `∂ gbs / ∂y`.
    pub fn gy(&self, x: f64, y: f64) -> Result<f64> {
        self.check(x, y)?;
        let Self { p, q, t, c } = *self;
        Ok(
            -2.0 * (1.0 - q - y) * (q + c * (1.0 - t - p) / (1.0 - p - x))
                + 2.0 * (q + y) * self.r() / (1.0 - p - x),
        )
    }

    /// Jacobian `[[∂fx/∂x, ∂fx/∂y], [∂gy/∂x, ∂gy/∂y]]`.
    pub fn jacobian(&self, x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
        self.check(x, y)?;
        let Self { p, q, t, c } = *self;
        let (a, b) = (1.0 - p - x, 1.0 - q - y);
        let r = self.r();
        let w = c * (1.0 - t - p);
        Ok([
            [2.0 * (p + t) + 2.0 * r / b, 2.0 * (p + x) * r / (b * b)],
            [
                -2.0 * b * w / (a * a) + 2.0 * (q + y) * r / (a * a),
                2.0 * (q + w / a) + 2.0 * r / a,
            ],
        ])
    }

    /// Failure best response to `y`: the unique zero of `fx(·, y)`.
    pub fn failure_response(&self, y: f64) -> f64 {
        let Self { p, q, t, .. } = *self;
        let r = self.r();
        let b = (p + t) * (1.0 - q - y);
        (b * (1.0 - p) - p * r) / (b + r)
    }

    /// The second solution of the step system, outside the simplex.
    pub fn spurious_root(&self) -> (f64, f64) {
        let Self { p, q, t, c } = *self;
        let y = (-1.0 + q + c + q * p - q * q * p - c * p + q * t - q * q * t - c * t)
            / ((-1.0 + q) * (p + t));
        (self.failure_response(y), y)
    }
}

/// Closed-form population losses of the full `2(K-1)`-player game.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGame {
    world: MarginalWorld,
    // P(T > a), P(C > a) for a = 0..K
    surv_t: Vec<f64>,
    surv_c: Vec<f64>,
}

fn tail(pmf: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0; pmf.len() + 1];
    for a in 1..=pmf.len() {
        out[a] = pmf[a..].iter().sum();
    }
    out
}

fn head_tail(head: &[f64]) -> Vec<f64> {
    let mut out = vec![1.0; head.len() + 1];
    let mut acc = 0.0;
    for (a, h) in head.iter().enumerate() {
        acc += h;
        out[a + 1] = 1.0 - acc;
    }
    out
}

impl PopulationGame {
    pub fn new(world: MarginalWorld) -> Result<Self> {
        world.require_interior()?;
        let surv_t = tail(&world.theta_t);
        let surv_c = tail(&world.theta_c);
        Ok(Self {
            world,
            surv_t,
            surv_c,
        })
    }

    pub fn world(&self) -> &MarginalWorld {
        &self.world
    }

    pub fn n_bins(&self) -> usize {
        self.world.n_bins()
    }

    /// Truth as a point of the game, failure head then censor head.
    pub fn truth(&self) -> Vec<f64> {
        let k = self.n_bins() - 1;
        self.world.theta_t[..k]
            .iter()
            .chain(&self.world.theta_c[..k])
            .copied()
            .collect()
    }

    fn split<'a>(&self, z: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        let m = self.n_bins() - 1;
        if z.len() != 2 * m {
            return Err(Error::DimensionMismatch {
                expected: 2 * m,
                got: z.len(),
            });
        }
        Ok(z.split_at(m))
    }

    /// Whether both heads lie in the open simplex.
    pub fn in_domain(&self, z: &[f64]) -> bool {
        match self.split(z) {
            Ok((f, g)) => [f, g]
                .iter()
                .all(|h| h.iter().all(|v| *v > 0.0) && h.iter().sum::<f64>() < 1.0),
            Err(_) => false,
        }
    }

    // (event part, at-risk part) of the failure loss at horizon t
    fn failure_parts(&self, t: usize, g_surv: &[f64]) -> Result<(f64, f64)> {
        let mut ev = 0.0;
        for a in 1..=t {
            ev += self.world.theta_t[a - 1] * self.surv_c[a - 1] / positive(g_surv[a - 1])?;
        }
        Ok((ev, self.surv_t[t] * self.surv_c[t] / positive(g_surv[t])?))
    }

    fn censor_parts(&self, t: usize, f_surv: &[f64]) -> Result<(f64, f64)> {
        let mut ev = 0.0;
        for (a, &fs) in f_surv.iter().enumerate().take(t + 1).skip(1) {
            ev += self.world.theta_c[a - 1] * self.surv_t[a] / positive(fs)?;
        }
        Ok((ev, self.surv_t[t] * self.surv_c[t] / positive(f_surv[t])?))
    }

    /// Failure BS loss at horizon `t`.
    pub fn failure_loss(&self, t: usize, z: &[f64]) -> Result<f64> {
        let (f, g) = self.split(z)?;
        let (fs, gs) = (head_tail(f), head_tail(g));
        let (ev, risk) = self.failure_parts(t, &gs)?;
        Ok(fs[t].powi(2) * ev + (1.0 - fs[t]).powi(2) * risk)
    }

    /// Censor BS loss at horizon `t`.
    pub fn censor_loss(&self, t: usize, z: &[f64]) -> Result<f64> {
        let (f, g) = self.split(z)?;
        let (fs, gs) = (head_tail(f), head_tail(g));
        let (ev, risk) = self.censor_parts(t, &fs)?;
        Ok(gs[t].powi(2) * ev + (1.0 - gs[t]).powi(2) * risk)
    }

    /// Simultaneous gradient: `∂ℓ_F^t/∂θ̂_{Tt}` for t = 1..K-1, then
    /// `∂ℓ_G^t/∂θ̂_{Ct}`.
    pub fn xi(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (f, g) = self.split(z)?;
        let (fs, gs) = (head_tail(f), head_tail(g));
        let m = self.n_bins() - 1;
        let mut out = vec![0.0; 2 * m];
        for t in 1..=m {
            let (ev, risk) = self.failure_parts(t, &gs)?;
            out[t - 1] = -2.0 * fs[t] * ev + 2.0 * (1.0 - fs[t]) * risk;
            let (ev, risk) = self.censor_parts(t, &fs)?;
            out[m + t - 1] = -2.0 * gs[t] * ev + 2.0 * (1.0 - gs[t]) * risk;
        }
        Ok(out)
    }

    pub fn summed_joint_loss(&self, z: &[f64]) -> Result<f64> {
        let mut s = 0.0;
        for t in 1..self.n_bins() {
            s += self.failure_loss(t, z)? + self.censor_loss(t, z)?;
        }
        Ok(s)
    }
}

fn positive(v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Domain(format!(
            "weight denominator {v} is not positive"
        )))
    }
}

/// Horizon-`t` population loss by enumerating the `K × K` outcome table and
/// averaging the sample estimator. Works for BS and BLL alike.
pub fn enumerated_loss(
    world: &MarginalWorld,
    family: LossFamily,
    role: Role,
    t: usize,
    failure: &CategoricalSurvival,
    censor: &CategoricalSurvival,
) -> Result<f64> {
    let (records, weights) = world.population_batch();
    let spec = LossSpec::new(family, role).at(t);
    let (own, other) = match role {
        Role::Failure => (failure, censor),
        Role::Censor => (censor, failure),
    };
    batch_loss(
        &spec,
        Reweighting::Shared(own),
        Reweighting::Shared(other),
        &Batch::weighted(&records, &weights),
        &mut ClampStats::default(),
    )
}

fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[row].iter_mut().zip(&pivot_row).skip(col) {
                *x -= m * p;
            }
            b[row] -= m * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Damped Newton with a central-difference Jacobian. `None` when the
/// iteration leaves the domain or stalls before `tol`.
fn newton(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    in_domain: &dyn Fn(&[f64]) -> bool,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Option<Vec<f64>> {
    let mut x = x0.to_vec();
    let mut fx = f(&x).ok()?;
    let n = x.len();
    for _ in 0..max_iter {
        if norm(&fx) < tol {
            return Some(x);
        }
        let mut jac = vec![vec![0.0; n]; n];
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1e-3);
            let (mut up, mut dn) = (x.clone(), x.clone());
            up[j] += h;
            dn[j] -= h;
            let (fu, fd) = (f(&up).ok()?, f(&dn).ok()?);
            for i in 0..n {
                jac[i][j] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let step = solve_linear(jac, fx.iter().map(|v| -v).collect())?;
        let mut lambda = 1.0;
        let current = norm(&fx);
        loop {
            let cand: Vec<f64> = x.iter().zip(&step).map(|(a, s)| a + lambda * s).collect();
            if in_domain(&cand) {
                if let Ok(fc) = f(&cand) {
                    if norm(&fc) < current {
                        x = cand;
                        fx = fc;
                        break;
                    }
                }
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return (norm(&fx) < tol).then_some(x);
            }
        }
    }
    (norm(&fx) < tol).then_some(x)
}

/// One point of the `-ξ` field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

/// A grid cell `[x0, x1] × [y0, y1]` holding a zero of the field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeroCell {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub root: (f64, f64),
}

impl ZeroCell {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientField {
    pub resolution: usize,
    pub points: Vec<FieldPoint>,
    pub zero_cells: Vec<ZeroCell>,
}

fn centre(i: usize, res: usize) -> f64 {
    (i as f64 + 0.5) / res as f64
}

/// Negative simultaneous gradient of a step on a cell-centred
/// `resolution × resolution` grid over `(0, 1)²`, skipping points where the
/// weights are undefined. Zero cells are cells of the grid whose corners show
/// a sign change in both components and where Newton finds a root inside.
pub fn gradient_field(step: &PopulationSpec, resolution: usize) -> Result<GradientField> {
    if resolution < 2 {
        return Err(Error::InvalidConfig("resolution must be >= 2".into()));
    }
    let mut grid = vec![vec![None; resolution]; resolution];
    let mut points = Vec::with_capacity(resolution * resolution);
    for (i, row) in grid.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let (x, y) = (centre(i, resolution), centre(j, resolution));
            if let (Ok(fx), Ok(gy)) = (step.fx(x, y), step.gy(x, y)) {
                *cell = Some((-fx, -gy));
                points.push(FieldPoint {
                    x,
                    y,
                    u: -fx,
                    v: -gy,
                });
            }
        }
    }
    let changes = |vals: [f64; 4]| vals.iter().any(|v| *v <= 0.0) && vals.iter().any(|v| *v >= 0.0);
    let mut zero_cells = Vec::new();
    for i in 0..resolution - 1 {
        for j in 0..resolution - 1 {
            let corners = [
                grid[i][j],
                grid[i + 1][j],
                grid[i][j + 1],
                grid[i + 1][j + 1],
            ];
            let Some(c) = corners.iter().copied().collect::<Option<Vec<_>>>() else {
                continue;
            };
            if !changes([c[0].0, c[1].0, c[2].0, c[3].0])
                || !changes([c[0].1, c[1].1, c[2].1, c[3].1])
            {
                continue;
            }
            let (x0, x1) = (centre(i, resolution), centre(i + 1, resolution));
            let (y0, y1) = (centre(j, resolution), centre(j + 1, resolution));
            let inside = |z: &[f64]| (x0..=x1).contains(&z[0]) && (y0..=y1).contains(&z[1]);
            let sys = |z: &[f64]| Ok(vec![step.fx(z[0], z[1])?, step.gy(z[0], z[1])?]);
            if let Some(r) = newton(
                &sys,
                &inside,
                &[(x0 + x1) / 2.0, (y0 + y1) / 2.0],
                1e-13,
                100,
            ) {
                zero_cells.push(ZeroCell {
                    x0,
                    x1,
                    y0,
                    y1,
                    root: (r[0], r[1]),
                });
            }
        }
    }
    Ok(GradientField {
        resolution,
        points,
        zero_cells,
    })
}

pub fn write_field_csv(points: &[FieldPoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "u", "v"])?;
    for p in points {
        w.write_record([p.x, p.y, p.u, p.v].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointScan {
    pub resolution: usize,
    pub argmin: (f64, f64),
    pub min_value: f64,
    pub truth: (f64, f64),
    pub truth_value: f64,
    /// `(x, y, fbs + gbs)` over the grid, for contour plots.
    pub grid: Vec<(f64, f64, f64)>,
}

/// Grid minimum of `fbs + gbs` over the cell-centred grid.
pub fn joint_objective_scan(step: &PopulationSpec, resolution: usize) -> Result<JointScan> {
    if resolution < 1 {
        return Err(Error::InvalidConfig("resolution must be >= 1".into()));
    }
    let mut grid = Vec::with_capacity(resolution * resolution);
    let mut best = ((f64::NAN, f64::NAN), f64::INFINITY);
    for i in 0..resolution {
        for j in 0..resolution {
            let (x, y) = (centre(i, resolution), centre(j, resolution));
            if let (Ok(a), Ok(b)) = (step.fbs(x, y), step.gbs(x, y)) {
                let v = a + b;
                grid.push((x, y, v));
                if v < best.1 {
                    best = ((x, y), v);
                }
            }
        }
    }
    let truth = (step.t, step.c);
    Ok(JointScan {
        resolution,
        argmin: best.0,
        min_value: best.1,
        truth,
        truth_value: step.fbs(truth.0, truth.1)? + step.gbs(truth.0, truth.1)?,
        grid,
    })
}

pub fn write_contour_csv(grid: &[(f64, f64, f64)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "y", "value"])?;
    for (x, y, v) in grid {
        w.write_record([x, y, v].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Root of one induction step, with the spurious solution for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InductionStep {
    pub step: usize,
    pub root: Option<(f64, f64)>,
    pub truth: (f64, f64),
    pub spurious: (f64, f64),
    /// `q + y` at the spurious solution; above 1 means it is infeasible.
    pub spurious_q_plus_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub n_bins: usize,
    /// Distinct roots of the full simultaneous system.
    pub roots: Vec<Vec<f64>>,
    pub starts: usize,
    pub failed_starts: usize,
    pub induction: Vec<InductionStep>,
    /// Every induction root matches the corresponding coordinates of a
    /// unique full-system root.
    pub agree: bool,
}

fn dirichlet_head<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = raw.iter().sum();
    raw[..k - 1].iter().map(|v| v / s).collect()
}

/// Multi-start search for stationary points of the multi-player BS game.
/// Roots closer than `tolerance` are merged.
pub fn stationary_scan(
    world: &MarginalWorld,
    starts: usize,
    tolerance: f64,
    seed: u64,
) -> Result<StationaryReport> {
    let game = PopulationGame::new(world.clone())?;
    let k = game.n_bins();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = |z: &[f64]| game.xi(z);
    let dom = |z: &[f64]| game.in_domain(z);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    let mut failed = 0;
    for _ in 0..starts {
        let mut z = dirichlet_head(k, &mut rng);
        z.extend(dirichlet_head(k, &mut rng));
        match newton(&xi, &dom, &z, 1e-13, 200) {
            Some(r) => {
                if !roots.iter().any(|q| {
                    norm(&q.iter().zip(&r).map(|(a, b)| a - b).collect::<Vec<_>>()) < tolerance
                }) {
                    roots.push(r);
                }
            }
            None => failed += 1,
        }
    }

    let mut induction = Vec::with_capacity(k - 1);
    for step in 0..k - 1 {
        let s = PopulationSpec::from_world(world, step)?;
        let sys = |z: &[f64]| Ok(vec![s.fx(z[0], z[1])?, s.gy(z[0], z[1])?]);
        let inside = |z: &[f64]| z[0] > 0.0 && z[1] > 0.0 && s.p + z[0] < 1.0 && s.q + z[1] < 1.0;
        let mut root = None;
        for _ in 0..10 {
            let z0 = [
                rng.random_range(0.0..1.0 - s.p),
                rng.random_range(0.0..1.0 - s.q),
            ];
            if let Some(r) = newton(&sys, &inside, &z0, 1e-14, 200) {
                root = Some((r[0], r[1]));
                break;
            }
        }
        let spurious = s.spurious_root();
        induction.push(InductionStep {
            step: step + 1,
            root,
            truth: (s.t, s.c),
            spurious,
            spurious_q_plus_y: s.q + spurious.1,
        });
    }
    let m = k - 1;
    let agree = roots.len() == 1
        && induction.iter().all(|st| match st.root {
            Some((x, y)) => {
                (x - roots[0][st.step - 1]).abs() < tolerance
                    && (y - roots[0][m + st.step - 1]).abs() < tolerance
            }
            None => false,
        });
    Ok(StationaryReport {
        n_bins: k,
        roots,
        starts,
        failed_starts: failed,
        induction,
        agree,
    })
}

/// Failure NLL under a world where censoring either precedes all failures
/// (probability `rho`) or follows all of them. Failures are uniform on three
/// bins; the exact value is `(1 - rho) log 3`.
pub fn nll_censoring_dependence(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} outside [0, 1]")));
    }
    // bins 1..5 stand for times 0..4
    let third = 1.0 / 3.0;
    let world = MarginalWorld::new(
        vec![0.0, third, third, third, 0.0],
        vec![rho, 0.0, 0.0, 0.0, 1.0 - rho],
    )?;
    let truth = world.failure();
    let (records, weights) = world.population_batch();
    let mut stats = ClampStats::default();
    let mut total = 0.0;
    for (r, w) in records.iter().zip(&weights) {
        total += w * nll(&truth, r, Role::Failure, DEFAULT_WEIGHT_FLOOR, &mut stats)?;
    }
    Ok(total)
}
