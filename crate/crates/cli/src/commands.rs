use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use survgame_core::experiment::{run_sweep, simulate_splits, summarize, MeanStd, RunOutcome};
use survgame_core::games::{select_models, train, TrainConfig};
use survgame_core::metrics::{evaluate, write_calibration_csv, EvalReport, Weighting};
use survgame_core::oracle::{
    gradient_field, joint_objective_scan, stationary_scan, write_contour_csv, write_field_csv,
    PopulationGame, PopulationSpec,
};
use survgame_core::simgen::{gen_marginal, load_csv, load_csv_with, write_csv, write_latent_csv};
use survgame_core::{Dataset, DifferentiableModel, Error, MarginalWorld, Result};

use crate::config::{Config, DataSource, WeightingKind};

pub struct Splits {
    pub train: Dataset,
    pub validation: Option<Dataset>,
    pub test: Option<Dataset>,
}

fn slice(ds: &Dataset, range: std::ops::Range<usize>) -> Result<Dataset> {
    let out = Dataset::new(
        ds.records[range.clone()].to_vec(),
        ds.feature_dim,
        ds.bin_edges.clone(),
    )?;
    match &ds.latent {
        Some(l) => out.with_latent(l[range].to_vec()),
        None => Ok(out),
    }
}

fn nonempty(ds: Dataset) -> Option<Dataset> {
    (!ds.is_empty()).then_some(ds)
}

/// Builds the splits for one seed. Simulated sources are regenerated from the
/// seed, so every command sees the same data.
pub fn build_splits(cfg: &Config, seed: u64) -> Result<Splits> {
    match &cfg.data {
        DataSource::Gamma(sim) => {
            let s = simulate_splits(
                sim,
                cfg.n_bins,
                cfg.n_train,
                cfg.n_validation,
                cfg.n_test,
                seed,
            )?;
            Ok(Splits {
                train: s.train,
                validation: nonempty(s.validation),
                test: nonempty(s.test),
            })
        }
        DataSource::Marginal { theta_t, theta_c } => {
            let world = MarginalWorld::new(theta_t.clone(), theta_c.clone())?;
            let (a, b) = (cfg.n_train, cfg.n_train + cfg.n_validation);
            let all = gen_marginal(&world, b + cfg.n_test, seed)?;
            Ok(Splits {
                train: slice(&all, 0..a)?,
                validation: nonempty(slice(&all, a..b)?),
                test: nonempty(slice(&all, b..all.len())?),
            })
        }
        DataSource::Csv {
            train,
            validation,
            test,
        } => {
            let (tr, standardizer) = load_csv(train, cfg.n_bins)?;
            let other = |p: &Option<std::path::PathBuf>| {
                p.as_deref()
                    .map(|p| load_csv_with(p, &standardizer, &tr.bin_edges))
                    .transpose()
            };
            Ok(Splits {
                validation: other(validation)?,
                test: other(test)?,
                train: tr,
            })
        }
    }
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

pub fn simulate(cfg: &Config) -> Result<Value> {
    if matches!(cfg.data, DataSource::Csv { .. }) {
        return Err(Error::InvalidConfig(
            "simulate needs a gamma or marginal data source".into(),
        ));
    }
    let mut written = Vec::new();
    for &seed in &cfg.seeds {
        let dir = cfg.seed_dir(seed);
        fs::create_dir_all(&dir)?;
        let splits = build_splits(cfg, seed)?;
        let parts = [
            ("train", Some(&splits.train)),
            ("validation", splits.validation.as_ref()),
            ("test", splits.test.as_ref()),
        ];
        for (name, ds) in parts {
            let Some(ds) = ds else { continue };
            let csv = dir.join(format!("{name}.csv"));
            write_csv(ds, &csv)?;
            if let Some(l) = &ds.latent {
                write_latent_csv(l, &dir.join(format!("{name}_latent.csv")))?;
            }
            written.push(path_str(&csv));
        }
        write_json(splits.train.bin_edges.edges(), &dir.join("bin_edges.json"))?;
    }
    Ok(json!({ "command": "simulate", "files": written }))
}

fn train_config(cfg: &Config, seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        ..cfg.train.clone()
    }
}

pub fn train_cmd(cfg: &Config) -> Result<Value> {
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let splits = build_splits(cfg, seed)?;
        if cfg.select && splits.validation.is_none() {
            return Err(Error::InvalidConfig(
                "checkpoint selection needs a validation split".into(),
            ));
        }
        let tc = train_config(cfg, seed);
        let out = train(&splits.train, &tc)?;
        let dir = cfg.seed_dir(seed);
        fs::create_dir_all(&dir)?;
        let mut log = fs::File::create(dir.join("train_log.jsonl"))?;
        for entry in &out.log {
            writeln!(log, "{}", serde_json::to_string(entry)?)?;
        }
        let (failure, censor, selection) = match &splits.validation {
            Some(val) if cfg.select => {
                let s = select_models(
                    &out.state,
                    val,
                    &tc.loss_spec(),
                    seed,
                    cfg.selection_max_rounds,
                )?;
                let info = json!({
                    "selection": s.selection,
                    "failure_epoch": s.failure_epoch,
                    "censor_epoch": s.censor_epoch,
                });
                (s.failure, s.censor, info)
            }
            _ => (
                out.state.failure.clone(),
                out.state.censor.clone(),
                json!({ "last_epoch": tc.epochs }),
            ),
        };
        failure.save_checkpoint(&dir.join("failure.json"))?;
        censor.save_checkpoint(&dir.join("censor.json"))?;
        write_json(&selection, &dir.join("selection.json"))?;
        runs.push(json!({ "seed": seed, "dir": path_str(&dir), "epochs": out.log.len(), "selection": selection }));
    }
    Ok(json!({ "command": "train", "runs": runs }))
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    weighting: String,
    seeds: Vec<u64>,
    bs_sum: MeanStd,
    bll_sum: MeanStd,
    nll: MeanStd,
    concordance: MeanStd,
}

fn summarize_reports(weighting: &str, seeds: &[u64], reports: &[EvalReport]) -> EvalSummary {
    let col =
        |f: &dyn Fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
    EvalSummary {
        weighting: weighting.to_string(),
        seeds: seeds.to_vec(),
        bs_sum: col(&|r| r.bs_sum),
        bll_sum: col(&|r| r.bll.iter().sum()),
        nll: col(&|r| r.nll),
        concordance: col(&|r| r.concordance.unwrap_or(f64::NAN)),
    }
}

pub fn evaluate_cmd(cfg: &Config) -> Result<Value> {
    let mut reports = Vec::new();
    let mut name = String::new();
    for &seed in &cfg.seeds {
        let dir = cfg.seed_dir(seed);
        let failure = DifferentiableModel::load_checkpoint(&dir.join("failure.json"))?;
        let test = build_splits(cfg, seed)?
            .test
            .ok_or_else(|| Error::MissingData("evaluation needs a test split".into()))?;
        let censor;
        let weighting = match cfg.weighting {
            WeightingKind::Uncensored => Weighting::UncensoredLatent,
            WeightingKind::Km => Weighting::KaplanMeier,
            WeightingKind::Model => {
                censor = DifferentiableModel::load_checkpoint(&dir.join("censor.json"))?;
                Weighting::Model(&censor)
            }
        };
        name = weighting.name().to_string();
        let report = evaluate(&failure, &test, weighting, &cfg.calibration_levels)?;
        write_json(&report, &dir.join(format!("report_{name}.json")))?;
        if !report.calibration.is_empty() {
            write_calibration_csv(&report.calibration, &dir.join("calibration.csv"))?;
        }
        reports.push(report);
    }
    let summary = summarize_reports(&name, &cfg.seeds, &reports);
    write_json(
        &summary,
        &cfg.experiment_dir()
            .join(format!("report_summary_{name}.json")),
    )?;
    Ok(json!({ "command": "evaluate", "summary": summary }))
}

fn oracle_step(cfg: &Config) -> Result<(MarginalWorld, PopulationSpec)> {
    let world = cfg.oracle.world()?;
    world.require_interior()?;
    if cfg.oracle.step + 1 >= world.n_bins() {
        return Err(Error::InvalidConfig(format!(
            "step {} out of range for {} bins",
            cfg.oracle.step,
            world.n_bins()
        )));
    }
    let spec = PopulationSpec::from_world(&world, cfg.oracle.step)?;
    Ok((world, spec))
}

pub fn gradient_field_cmd(cfg: &Config) -> Result<Value> {
    let (_, step) = oracle_step(cfg)?;
    let field = gradient_field(&step, cfg.oracle.resolution)?;
    let dir = cfg.experiment_dir();
    fs::create_dir_all(&dir)?;
    write_field_csv(&field.points, &dir.join("gradient_field.csv"))?;
    write_json(&field.zero_cells, &dir.join("zero_cells.json"))?;
    let truth = (step.t, step.c);
    let contains_truth = field
        .zero_cells
        .iter()
        .any(|z| z.contains(truth.0, truth.1));
    Ok(json!({
        "command": "gradient-field",
        "zero_cells": field.zero_cells,
        "truth": truth,
        "truth_in_zero_cell": contains_truth,
    }))
}

pub fn joint_scan_cmd(cfg: &Config) -> Result<Value> {
    let (_, step) = oracle_step(cfg)?;
    let scan = joint_objective_scan(&step, cfg.oracle.resolution)?;
    let dir = cfg.experiment_dir();
    fs::create_dir_all(&dir)?;
    write_contour_csv(&scan.grid, &dir.join("joint_objective.csv"))?;
    let summary = json!({
        "command": "joint-scan",
        "argmin": scan.argmin,
        "min_value": scan.min_value,
        "truth": scan.truth,
        "truth_value": scan.truth_value,
        "argmin_below_truth": scan.min_value < scan.truth_value,
    });
    write_json(&summary, &dir.join("joint_scan.json"))?;
    Ok(summary)
}

pub fn stationary_check_cmd(cfg: &Config) -> Result<Value> {
    let world = cfg.oracle.world()?;
    let report = stationary_scan(
        &world,
        cfg.oracle.starts,
        cfg.oracle.tolerance,
        cfg.oracle.seed,
    )?;
    let truth = PopulationGame::new(world)?.truth();
    let dir = cfg.experiment_dir();
    fs::create_dir_all(&dir)?;
    write_json(&report, &dir.join("stationary.json"))?;
    Ok(json!({
        "command": "stationary-check",
        "roots": report.roots,
        "truth": truth,
        "failed_starts": report.failed_starts,
        "agree": report.agree,
    }))
}

pub fn sweep_cmd(cfg: &Config) -> Result<Value> {
    let sweep = &cfg.sweep;
    let root = cfg.out_dir.join(&sweep.name);
    let on_done = |o: &RunOutcome| -> Result<()> {
        let k = o.result.key;
        let dir = root.join(k.seed.to_string());
        fs::create_dir_all(&dir)?;
        write_json(
            &o.result,
            &dir.join(format!("{}_n{}.json", k.objective.name(), k.n_train)),
        )
    };
    let results = run_sweep(sweep, &on_done)?;
    let rows = summarize(&results);
    fs::create_dir_all(&root)?;
    write_json(&rows, &root.join("summary.json"))?;
    let mut w = fs::File::create(root.join("summary.csv"))?;
    writeln!(w, "objective,n_train,bs_mean,bs_std,bll_mean,bll_std,nll_mean,nll_std,concordance_mean,concordance_std")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            r.objective.name(),
            r.n_train,
            r.bs_sum.mean,
            r.bs_sum.std,
            r.bll_sum.mean,
            r.bll_sum.std,
            r.nll.mean,
            r.nll.std,
            r.concordance.mean,
            r.concordance.std
        )?;
    }
    Ok(json!({ "command": "sweep", "runs": results.len(), "summary": rows }))
}
