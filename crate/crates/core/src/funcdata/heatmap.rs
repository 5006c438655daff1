//! Descriptive per-(group, variate) activation statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::FunctionalDataset;
use crate::error::{Error, Result};

const NORMALIZATION_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapRow {
    pub group: String,
    pub variate: String,
    pub mean: f64,
    /// Population std over mean; 0 when the mean is 0 (see `cv_undefined`).
    pub cv: f64,
    /// `(mean − mean_neutral) / (std_neutral + 1e-9)`.
    pub normalized: f64,
    pub cv_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapTable {
    pub neutral_group: String,
    pub rows: Vec<HeatmapRow>,
}

/// Time-binned variant of [`HeatmapRow`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapBin {
    pub group: String,
    pub variate: String,
    pub bin: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub mean: f64,
    pub cv: f64,
    pub normalized: f64,
    pub cv_undefined: bool,
}

#[derive(Clone, Copy)]
struct Moments {
    mean: f64,
    std: f64,
}

fn moments(values: impl Iterator<Item = f64>) -> Moments {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    Moments { mean, std: var.sqrt() }
}

fn cv(m: Moments) -> (f64, bool) {
    if m.mean == 0.0 {
        (0.0, true)
    } else {
        (m.std / m.mean.abs(), false)
    }
}

fn cell_moments(ds: &FunctionalDataset, g: usize, d: usize, range: std::ops::Range<usize>) -> Moments {
    moments((0..ds.units_per_group()).flat_map(|k| ds.curve(g, d, k)[range.clone()].iter().copied()))
}

fn neutral_index(ds: &FunctionalDataset, neutral: &str) -> Result<usize> {
    ds.group_index(neutral)
        .ok_or_else(|| Error::contract(format!("neutral group '{neutral}' not in dataset")))
}

pub fn heatmap_stats(ds: &FunctionalDataset, neutral: &str) -> Result<HeatmapTable> {
    let n0 = neutral_index(ds, neutral)?;
    let all = 0..ds.grid().len();
    let mut rows = Vec::with_capacity(ds.n_groups() * ds.n_variates());
    for d in 0..ds.n_variates() {
        let base = cell_moments(ds, n0, d, all.clone());
        for g in 0..ds.n_groups() {
            let m = if g == n0 { base } else { cell_moments(ds, g, d, all.clone()) };
            let (cv, undefined) = cv(m);
            if undefined {
                log::warn!(
                    "zero mean for ({}, {}); coefficient of variation set to 0",
                    ds.group_labels()[g],
                    ds.variate_labels()[d]
                );
            }
            rows.push(HeatmapRow {
                group: ds.group_labels()[g].clone(),
                variate: ds.variate_labels()[d].clone(),
                mean: m.mean,
                cv,
                normalized: if g == n0 { 0.0 } else { (m.mean - base.mean) / (base.std + NORMALIZATION_EPS) },
                cv_undefined: undefined,
            });
        }
    }
    // group-major output reads more naturally as a table
    rows.sort_by_key(|r| (ds.group_index(&r.group), ds.variate_index(&r.variate)));
    Ok(HeatmapTable {
        neutral_group: neutral.to_string(),
        rows,
    })
}

/// Same statistics restricted to `n_bins` consecutive blocks of grid points.
pub fn heatmap_binned(ds: &FunctionalDataset, neutral: &str, n_bins: usize) -> Result<Vec<HeatmapBin>> {
    let n0 = neutral_index(ds, neutral)?;
    let n = ds.grid().len();
    if n_bins == 0 || n_bins > n {
        return Err(Error::contract(format!("bin count {n_bins} must be in 1..={n}")));
    }
    let pts = ds.grid().points();
    let mut out = Vec::new();
    for g in 0..ds.n_groups() {
        for d in 0..ds.n_variates() {
            for b in 0..n_bins {
                let range = (b * n / n_bins)..((b + 1) * n / n_bins);
                let base = cell_moments(ds, n0, d, range.clone());
                let m = cell_moments(ds, g, d, range.clone());
                let (cv, undefined) = cv(m);
                out.push(HeatmapBin {
                    group: ds.group_labels()[g].clone(),
                    variate: ds.variate_labels()[d].clone(),
                    bin: b,
                    t_start: pts[range.start],
                    t_end: pts[range.end - 1],
                    mean: m.mean,
                    cv,
                    normalized: if g == n0 { 0.0 } else { (m.mean - base.mean) / (base.std + NORMALIZATION_EPS) },
                    cv_undefined: undefined,
                });
            }
        }
    }
    Ok(out)
}

impl HeatmapTable {
    pub fn row(&self, group: &str, variate: &str) -> Option<&HeatmapRow> {
        self.rows.iter().find(|r| r.group == group && r.variate == variate)
    }

    /// Variates of `group` sorted by decreasing mean activation.
    pub fn ranked_by_mean(&self, group: &str) -> Vec<&HeatmapRow> {
        let mut rows: Vec<&HeatmapRow> = self.rows.iter().filter(|r| r.group == group).collect();
        rows.sort_by(|a, b| b.mean.total_cmp(&a.mean));
        rows
    }

    /// `group,variate,mean,cv,normalized`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Numeric(format!("csv write failed: {e}"));
        wtr.write_record(["group", "variate", "mean", "cv", "normalized"]).map_err(err)?;
        for r in &self.rows {
            wtr.write_record([
                r.group.clone(),
                r.variate.clone(),
                r.mean.to_string(),
                r.cv.to_string(),
                r.normalized.to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::Numeric(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}
