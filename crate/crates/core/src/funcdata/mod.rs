//! Grouped multivariate functional samples on a shared time grid.

mod heatmap;
mod io;

pub use heatmap::{heatmap_binned, heatmap_stats, HeatmapBin, HeatmapRow, HeatmapTable};
pub use io::{load_dataset, write_dataset, LoadOptions, TIME_COLUMNS};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered sample times on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub const MIN_LEN: usize = 4;

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < Self::MIN_LEN {
            return Err(Error::Grid(format!(
                "need at least {} points, got {}",
                Self::MIN_LEN,
                points.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Grid("non-finite time point".into()));
        }
        if points[0] != 0.0 {
            return Err(Error::Grid(format!("first point must be 0, got {}", points[0])));
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Grid(format!(
                "points not strictly increasing at index {} ({} -> {})",
                i + 1,
                points[i],
                points[i + 1]
            )));
        }
        Ok(Self { points })
    }

    /// `n` equally spaced points from 0 to `t_end`.
    pub fn uniform(n: usize, t_end: f64) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::Grid(format!("domain end must be positive, got {t_end}")));
        }
        if n < Self::MIN_LEN {
            return Err(Error::Grid(format!("need at least {} points, got {n}", Self::MIN_LEN)));
        }
        let last = (n - 1) as f64;
        let pts = (0..n)
            .map(|i| if i + 1 == n { t_end } else { i as f64 / last * t_end })
            .collect();
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        *self.points.last().expect("grid is never empty")
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.points
    }
}

/// One observed curve `y_{g,d,k}` aligned with the dataset grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub unit_id: String,
    pub group_id: String,
    pub variate_id: String,
    pub values: Vec<f64>,
}

/// Piecewise-linear resampling of `values` observed at `source_times` onto
/// `target`. Source times are first mapped affinely onto `[0, T]`.
pub fn resample(source_times: &[f64], values: &[f64], target: &TimeGrid) -> Result<Vec<f64>> {
    if source_times.len() != values.len() {
        return Err(Error::contract(format!(
            "{} time points but {} values",
            source_times.len(),
            values.len()
        )));
    }
    if source_times.len() < 2 {
        return Err(Error::Grid("a series needs at least two time points".into()));
    }
    if source_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("source times must be strictly increasing".into()));
    }
    let t_end = target.t_end();
    let t0 = source_times[0];
    let span = source_times[source_times.len() - 1] - t0;
    let src: Vec<f64> = source_times.iter().map(|t| (t - t0) / span * t_end).collect();
    let last = src.len() - 1;

    let mut out = Vec::with_capacity(target.len());
    let mut j = 0;
    for (i, &x) in target.points().iter().enumerate() {
        if i + 1 == target.len() {
            out.push(values[last]);
            continue;
        }
        while j + 1 < last && src[j + 1] <= x {
            j += 1;
        }
        if x == src[j] {
            out.push(values[j]);
        } else {
            let w = (x - src[j]) / (src[j + 1] - src[j]);
            out.push(values[j] + w * (values[j + 1] - values[j]));
        }
    }
    Ok(out)
}

pub fn resample_to_grid(sample: &CurveSample, source: &TimeGrid, target: &TimeGrid) -> Result<CurveSample> {
    Ok(CurveSample {
        values: resample(source.points(), &sample.values, target)?,
        ..sample.clone()
    })
}

/// A balanced collection of curves indexed by (group, variate, unit).
///
/// Samples are stored group-major, then by variate, then by unit, which is
/// also the row order of [`crate::basis::CoefficientMatrix`]. Group 0 is the
/// control group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDataset {
    grid: TimeGrid,
    group_labels: Vec<String>,
    variate_labels: Vec<String>,
    units_per_group: usize,
    samples: Vec<CurveSample>,
}

impl FunctionalDataset {
    /// Build a dataset from loose samples. `group_labels[0]` is the control
    /// group. Units keep their order of first appearance within each group.
    pub fn from_samples(
        grid: TimeGrid,
        group_labels: Vec<String>,
        variate_labels: Vec<String>,
        samples: Vec<CurveSample>,
    ) -> Result<Self> {
        if group_labels.len() < 2 {
            return Err(Error::Unbalanced(format!(
                "need a control group and at least one other group, got {} group(s)",
                group_labels.len()
            )));
        }
        if variate_labels.is_empty() {
            return Err(Error::Unbalanced("no variates".into()));
        }
        let g_index: HashMap<&str, usize> =
            group_labels.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let d_index: HashMap<&str, usize> =
            variate_labels.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if g_index.len() != group_labels.len() || d_index.len() != variate_labels.len() {
            return Err(Error::contract("duplicate group or variate label"));
        }

        let n_g = group_labels.len();
        let n_d = variate_labels.len();
        let mut unit_order: Vec<Vec<String>> = vec![Vec::new(); n_g];
        let mut cells: HashMap<(usize, usize, String), CurveSample> = HashMap::new();
        for s in samples {
            let g = *g_index
                .get(s.group_id.as_str())
                .ok_or_else(|| Error::contract(format!("unknown group '{}'", s.group_id)))?;
            let d = *d_index
                .get(s.variate_id.as_str())
                .ok_or_else(|| Error::contract(format!("unknown variate '{}'", s.variate_id)))?;
            if s.values.len() != grid.len() {
                return Err(Error::contract(format!(
                    "sample ({}, {}, {}) has {} values for a {}-point grid",
                    s.group_id,
                    s.variate_id,
                    s.unit_id,
                    s.values.len(),
                    grid.len()
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::contract(format!(
                    "sample ({}, {}, {}) has non-finite values",
                    s.group_id, s.variate_id, s.unit_id
                )));
            }
            if !unit_order[g].contains(&s.unit_id) {
                unit_order[g].push(s.unit_id.clone());
            }
            let key = (g, d, s.unit_id.clone());
            if cells.contains_key(&key) {
                return Err(Error::Unbalanced(format!(
                    "duplicate sample for group '{}', variate '{}', unit '{}'",
                    s.group_id, s.variate_id, s.unit_id
                )));
            }
            cells.insert(key, s);
        }

        let counts: Vec<usize> = unit_order.iter().map(Vec::len).collect();
        let k = counts[0];
        if counts.iter().any(|&c| c != k) {
            let listing: Vec<String> = group_labels
                .iter()
                .zip(&counts)
                .map(|(g, c)| format!("{g}={c}"))
                .collect();
            return Err(Error::Unbalanced(format!(
                "groups have different unit counts: {}",
                listing.join(", ")
            )));
        }
        if k < 2 {
            return Err(Error::Unbalanced(format!("need at least 2 units per group, got {k}")));
        }

        let mut ordered = Vec::with_capacity(n_g * n_d * k);
        for (g, units) in unit_order.iter().enumerate() {
            for (d, variate) in variate_labels.iter().enumerate() {
                for unit in units {
                    let s = cells.remove(&(g, d, unit.clone())).ok_or_else(|| {
                        Error::Unbalanced(format!(
                            "unit '{unit}' of group '{}' has no curve for variate '{variate}'",
                            group_labels[g]
                        ))
                    })?;
                    ordered.push(s);
                }
            }
        }

        Ok(Self {
            grid,
            group_labels,
            variate_labels,
            units_per_group: k,
            samples: ordered,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn variate_labels(&self) -> &[String] {
        &self.variate_labels
    }

    /// Number of non-control groups, `G`.
    pub fn n_treatments(&self) -> usize {
        self.group_labels.len() - 1
    }

    /// `G + 1`.
    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn n_variates(&self) -> usize {
        self.variate_labels.len()
    }

    /// Units per (group, variate) cell, `K`.
    pub fn units_per_group(&self) -> usize {
        self.units_per_group
    }

    /// Total curve count `N = (G+1)·D·K`.
    pub fn n_curves(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    pub fn index(&self, g: usize, d: usize, k: usize) -> usize {
        (g * self.n_variates() + d) * self.units_per_group + k
    }

    pub fn sample(&self, g: usize, d: usize, k: usize) -> &CurveSample {
        &self.samples[self.index(g, d, k)]
    }

    pub fn curve(&self, g: usize, d: usize, k: usize) -> &[f64] {
        &self.sample(g, d, k).values
    }

    /// Unit identifiers of group `g`, in storage order.
    pub fn unit_ids(&self, g: usize) -> Vec<&str> {
        (0..self.units_per_group)
            .map(|k| self.sample(g, 0, k).unit_id.as_str())
            .collect()
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.group_labels.iter().position(|g| g == label)
    }

    pub fn variate_index(&self, label: &str) -> Option<usize> {
        self.variate_labels.iter().position(|d| d == label)
    }

    /// Same layout with every curve replaced by `f(curve)`.
    pub fn map_curves<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut out = self.clone();
        for s in &mut out.samples {
            let v = f(&s.values)?;
            if v.len() != self.grid.len() {
                return Err(Error::contract("mapped curve changed length"));
            }
            s.values = v;
        }
        Ok(out)
    }

    /// Keep units `keep[g]` (indices into each group's units) of every group.
    /// All groups must keep the same number of units.
    pub fn select_units(&self, keep: &[Vec<usize>]) -> Result<Self> {
        if keep.len() != self.n_groups() {
            return Err(Error::contract("one unit list per group required"));
        }
        let mut samples = Vec::new();
        for (g, idx) in keep.iter().enumerate() {
            for d in 0..self.n_variates() {
                for &k in idx {
                    if k >= self.units_per_group {
                        return Err(Error::contract(format!("unit index {k} out of range")));
                    }
                    samples.push(self.sample(g, d, k).clone());
                }
            }
        }
        Self::from_samples(
            self.grid.clone(),
            self.group_labels.clone(),
            self.variate_labels.clone(),
            samples,
        )
    }

    /// All units with their multivariate curves and group index.
    pub fn labeled_units(&self) -> Vec<LabeledUnit> {
        let mut out = Vec::with_capacity(self.n_groups() * self.units_per_group);
        for g in 0..self.n_groups() {
            for k in 0..self.units_per_group {
                out.push(LabeledUnit {
                    unit_id: self.sample(g, 0, k).unit_id.clone(),
                    group: Some(g),
                    curves: (0..self.n_variates()).map(|d| self.curve(g, d, k).to_vec()).collect(),
                });
            }
        }
        out
    }

    /// Deterministic per-group split: the first `round(train_fraction·K)`
    /// units of each group (at least 2) train, the rest are held out.
    pub fn split_units(&self, train_fraction: f64) -> Result<(Self, Vec<LabeledUnit>)> {
        if !(0.0..=1.0).contains(&train_fraction) {
            return Err(Error::contract(format!("train fraction {train_fraction} outside [0, 1]")));
        }
        let k = self.units_per_group;
        let n_train = ((train_fraction * k as f64).round() as usize).clamp(2, k);
        let train = self.select_units(&vec![(0..n_train).collect(); self.n_groups()])?;
        let held_out = self
            .labeled_units()
            .into_iter()
            .enumerate()
            .filter(|(i, _)| i % k >= n_train)
            .map(|(_, u)| u)
            .collect();
        Ok((train, held_out))
    }
}

/// The D curves of one unit, optionally labelled with its group index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledUnit {
    pub unit_id: String,
    pub group: Option<usize>,
    pub curves: Vec<Vec<f64>>,
}
