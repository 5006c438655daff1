//! CSV ingestion of per-recording exports (e.g. OpenFace AU intensities) and
//! the canonical on-disk dataset layout.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use super::{resample, CurveSample, FunctionalDataset, TimeGrid};
use crate::error::{Error, Result};

/// Header names recognised as the time axis, in order of preference.
pub const TIME_COLUMNS: [&str; 3] = ["time", "timestamp", "frame"];

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Control group label; defaults to the first group in the manifest.
    pub control_group: Option<String>,
    /// Only keep these columns as variates (in this order).
    pub variates: Option<Vec<String>>,
    /// Common grid length; defaults to the shortest series.
    pub grid_len: Option<usize>,
    /// Domain end `T` of the common grid.
    pub t_end: Option<f64>,
}

struct ManifestRow {
    file: String,
    unit: String,
    group: String,
}

struct Series {
    times: Vec<f64>,
    columns: Vec<String>,
    values: Vec<Vec<f64>>, // per column
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(f))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse {
        file: path.display().to_string(),
        row,
        column: String::new(),
        message: e.to_string(),
    }
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let mut rdr = csv_reader(path)?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            file: path.display().to_string(),
            row: 1,
            column: name.into(),
            message: "manifest must have columns file,unit,group".into(),
        })
    };
    let (cf, cu, cg) = (col("file")?, col("unit")?, col("group")?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(ManifestRow {
            file: rec[cf].to_string(),
            unit: rec[cu].to_string(),
            group: rec[cg].to_string(),
        });
    }
    if rows.is_empty() {
        return Err(Error::Unbalanced(format!("manifest {} lists no files", path.display())));
    }
    Ok(rows)
}

fn read_series(path: &Path, wanted: Option<&[String]>) -> Result<Series> {
    let mut rdr = csv_reader(path)?;
    let headers: Vec<String> = rdr.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let time_col = TIME_COLUMNS
        .iter()
        .find_map(|name| headers.iter().position(|h| h.eq_ignore_ascii_case(name)))
        .ok_or_else(|| Error::Parse {
            file: path.display().to_string(),
            row: 1,
            column: String::new(),
            message: "no time column (expected one of time, timestamp, frame)".into(),
        })?;
    let value_cols: Vec<usize> = match wanted {
        Some(names) => names
            .iter()
            .map(|n| {
                headers.iter().position(|h| h == n).ok_or_else(|| Error::Parse {
                    file: path.display().to_string(),
                    row: 1,
                    column: n.clone(),
                    message: "requested variate column not present".into(),
                })
            })
            .collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != time_col && !TIME_COLUMNS.iter().any(|t| headers[i].eq_ignore_ascii_case(t)))
            .collect(),
    };
    if value_cols.is_empty() {
        return Err(Error::Parse {
            file: path.display().to_string(),
            row: 1,
            column: String::new(),
            message: "no variate columns".into(),
        });
    }

    let mut times = Vec::new();
    let mut values = vec![Vec::new(); value_cols.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse = |c: usize| -> Result<f64> {
            let cell = &rec[c];
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    file: path.display().to_string(),
                    row,
                    column: headers[c].clone(),
                    message: format!("'{cell}' is not a finite number"),
                })
        };
        times.push(parse(time_col)?);
        for (slot, &c) in values.iter_mut().zip(&value_cols) {
            slot.push(parse(c)?);
        }
    }
    if times.len() < 2 {
        return Err(Error::Grid(format!("{} has fewer than two rows", path.display())));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid(format!("{}: time column is not strictly increasing", path.display())));
    }
    Ok(Series {
        times,
        columns: value_cols.iter().map(|&c| headers[c].clone()).collect(),
        values,
    })
}

/// Load every file listed in `manifest` (columns `file,unit,group`, paths
/// relative to `data_dir`) and resample all series onto one uniform grid.
pub fn load_dataset(manifest: &Path, data_dir: &Path, opts: &LoadOptions) -> Result<FunctionalDataset> {
    let rows = read_manifest(manifest)?;

    let mut group_labels: Vec<String> = Vec::new();
    if let Some(c) = &opts.control_group {
        if !rows.iter().any(|r| &r.group == c) {
            return Err(Error::Unbalanced(format!("control group '{c}' does not appear in the manifest")));
        }
        group_labels.push(c.clone());
    }
    for r in &rows {
        if !group_labels.contains(&r.group) {
            group_labels.push(r.group.clone());
        }
    }

    let mut series = Vec::with_capacity(rows.len());
    for r in &rows {
        let path: PathBuf = data_dir.join(&r.file);
        series.push(read_series(&path, opts.variates.as_deref())?);
    }
    let variate_labels = series[0].columns.clone();
    for (s, r) in series.iter().zip(&rows) {
        let a: HashSet<&String> = s.columns.iter().collect();
        let b: HashSet<&String> = variate_labels.iter().collect();
        if a != b {
            return Err(Error::Unbalanced(format!(
                "{} has variates {:?}, expected {:?}",
                r.file, s.columns, variate_labels
            )));
        }
    }

    let shortest = series.iter().map(|s| s.times.len()).min().unwrap_or(0);
    let grid = TimeGrid::uniform(opts.grid_len.unwrap_or(shortest), opts.t_end.unwrap_or(1.0))?;

    let mut samples = Vec::with_capacity(rows.len() * variate_labels.len());
    for (s, r) in series.iter().zip(&rows) {
        for (name, vals) in s.columns.iter().zip(&s.values) {
            samples.push(CurveSample {
                unit_id: r.unit.clone(),
                group_id: r.group.clone(),
                variate_id: name.clone(),
                values: resample(&s.times, vals, &grid)?,
            });
        }
    }
    FunctionalDataset::from_samples(grid, group_labels, variate_labels, samples)
}

/// Write `ds` in the canonical layout: `dir/manifest.csv` plus one
/// `time,<variates…>` CSV per (group, unit). Loading the result with default
/// options reproduces `ds` exactly.
pub fn write_dataset(ds: &FunctionalDataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join("manifest.csv");
    let mut manifest = csv::Writer::from_path(&manifest_path).map_err(|e| csv_err(&manifest_path, e))?;
    manifest
        .write_record(["file", "unit", "group"])
        .map_err(|e| csv_err(&manifest_path, e))?;
    for g in 0..ds.n_groups() {
        for k in 0..ds.units_per_group() {
            let unit = &ds.sample(g, 0, k).unit_id;
            let file = format!("g{g:03}_u{k:04}.csv");
            manifest
                .write_record([file.as_str(), unit, &ds.group_labels()[g]])
                .map_err(|e| csv_err(&manifest_path, e))?;

            let path = dir.join(&file);
            let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
            let mut header = vec!["time".to_string()];
            header.extend(ds.variate_labels().iter().cloned());
            w.write_record(&header).map_err(|e| csv_err(&path, e))?;
            for (i, t) in ds.grid().points().iter().enumerate() {
                let mut rec = vec![t.to_string()];
                rec.extend((0..ds.n_variates()).map(|d| ds.curve(g, d, k)[i].to_string()));
                w.write_record(&rec).map_err(|e| csv_err(&path, e))?;
            }
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    manifest.flush().map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}
