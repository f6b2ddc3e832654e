use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{quantile_discretize, BinEdges, Dataset, LatentTimes};

/// Rows of a dataset CSV before discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub features: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    pub feature_dim: usize,
}

/// Per-column mean and standard deviation fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[Vec<f64>], feature_dim: usize) -> Self {
        let n = features.len().max(1) as f64;
        let mut mean = vec![0.0; feature_dim];
        for x in features {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / n;
            }
        }
        let denom = (features.len().max(2) - 1) as f64;
        let mut std = vec![0.0; feature_dim];
        for x in features {
            for ((s, v), m) in std.iter_mut().zip(x).zip(&mean) {
                *s += (v - m).powi(2) / denom;
            }
        }
        for s in &mut std {
            *s = s.sqrt();
        }
        Self { mean, std }
    }

    /// Centers and scales in place; zero-variance columns are only centered.
    pub fn apply(&self, features: &mut [Vec<f64>]) {
        for x in features {
            for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
                *v -= m;
                if *s > 1e-12 {
                    *v /= s;
                }
            }
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a `f0,...,f{d-1},time,event` CSV.
pub fn read_table(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = reader.headers()?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    if cols.len() < 2 || cols[cols.len() - 2] != "time" || cols[cols.len() - 1] != "event" {
        return Err(parse_err(path, 1, "header must end with `time,event`"));
    }
    let feature_dim = cols.len() - 2;
    for (j, name) in cols[..feature_dim].iter().enumerate() {
        if *name != format!("f{j}") {
            return Err(parse_err(
                path,
                1,
                format!("expected column `f{j}`, found `{name}`"),
            ));
        }
    }

    let mut table = RawTable {
        features: Vec::new(),
        times: Vec::new(),
        events: Vec::new(),
        feature_dim,
    };
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(path, line, e.to_string()))?;
        if row.len() != feature_dim + 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, found {}", feature_dim + 2, row.len()),
            ));
        }
        let num = |j: usize| -> Result<f64> {
            let s = row[j].trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_err(
                        path,
                        line,
                        format!("column {j}: `{s}` is not a finite number"),
                    )
                })
        };
        let x = (0..feature_dim).map(num).collect::<Result<Vec<_>>>()?;
        let time = num(feature_dim)?;
        let event = match row[feature_dim + 1].trim() {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    path,
                    line,
                    format!("event must be 0 or 1, found `{other}`"),
                ))
            }
        };
        table.features.push(x);
        table.times.push(time);
        table.events.push(event);
    }
    Ok(table)
}

/// Loads a training CSV: features standardized by its own statistics and
/// times binned at its own quantiles.
pub fn load_csv(path: &Path, n_bins: usize) -> Result<(Dataset, Standardizer)> {
    let mut table = read_table(path)?;
    let standardizer = Standardizer::fit(&table.features, table.feature_dim);
    standardizer.apply(&mut table.features);
    let edges = quantile_discretize(&table.times, n_bins)?.edges;
    let ds = Dataset::from_raw(
        table.features,
        &table.times,
        &table.events,
        table.feature_dim,
        edges,
    )?;
    Ok((ds, standardizer))
}

/// Loads an evaluation CSV with the training split's standardizer and edges.
pub fn load_csv_with(
    path: &Path,
    standardizer: &Standardizer,
    edges: &BinEdges,
) -> Result<Dataset> {
    let mut table = read_table(path)?;
    if table.feature_dim != standardizer.mean.len() {
        return Err(Error::DimensionMismatch {
            expected: standardizer.mean.len(),
            got: table.feature_dim,
        });
    }
    standardizer.apply(&mut table.features);
    Dataset::from_raw(
        table.features,
        &table.times,
        &table.events,
        table.feature_dim,
        edges.clone(),
    )
}

/// Writes the dataset in the `f0,...,time,event` format. Records without a
/// raw time are written at the lower boundary of their bin.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dataset.feature_dim).map(|j| format!("f{j}")).collect();
    header.push("time".into());
    header.push("event".into());
    w.write_record(&header)?;
    for r in &dataset.records {
        let mut row: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        let t = r
            .raw_time
            .unwrap_or_else(|| dataset.bin_edges.lower_boundary(r.time_bin));
        row.push(t.to_string());
        row.push(if r.event { "1" } else { "0" }.into());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the `t_latent,c_latent` sidecar.
pub fn write_latent_csv(latent: &[LatentTimes], path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    writeln!(f, "t_latent,c_latent")?;
    for l in latent {
        writeln!(f, "{},{}", l.failure, l.censor)?;
    }
    Ok(())
}

pub fn read_latent_csv(path: &Path) -> Result<Vec<LatentTimes>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let get = |j: usize| -> Result<f64> {
            row.get(j)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err(path, i + 2, format!("bad latent field {j}")))
        };
        out.push(LatentTimes {
            failure: get(0)?,
            censor: get(1)?,
        });
    }
    Ok(out)
}
