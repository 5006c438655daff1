//! Kernel-score classification.
//!
//! A unit is scored against every group by centring each of its curves on
//! the grand mean and integrating the product with that group's effect
//! kernel over the significant zones. Scores are normalized to a probability
//! vector per variate, combined across variates with trained convex weights,
//! and fed to a linear one-vs-rest classifier.

mod svm;
mod weights;

pub use svm::{train_classifier, Classifier, ClassifierModel, SvmConfig};
pub use weights::{project_simplex, train_weights, CombinationWeights, WeightConfig};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fanova::Kernels;
use crate::funcdata::{CurveSample, LabeledUnit, TimeGrid};
use crate::inference::{disjoint_union, union_length, TestReport, Zone};

/// Which significant zones a (group, variate) kernel integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ZoneScope {
    /// Zones of the control-vs-g contrast on variate d. The control kernel
    /// uses the union over all contrasts of that variate.
    #[default]
    PerContrast,
    /// One union of every contrast's zones, shared by all kernels.
    Global,
}

/// Constant integral weight `w_{g,d}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IntervalWeight {
    /// `1 / |I_{g,d}|`
    #[default]
    InverseLength,
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSet {
    pub grid: TimeGrid,
    pub group_labels: Vec<String>,
    pub variate_labels: Vec<String>,
    /// `mean[d][i] = μ̂_{d,0}(t_i)`
    pub mean: Vec<Vec<f64>>,
    /// `kernels[d][g][i] = α̂_{d,g}(t_i)`, control included
    pub kernels: Vec<Vec<Vec<f64>>>,
    /// `intervals[d][g]`, sorted and disjoint
    pub intervals: Vec<Vec<Vec<Zone>>>,
    /// `weights[d][g]`
    pub weights: Vec<Vec<f64>>,
}

impl KernelSet {
    /// Attach significant zones from per-contrast test reports to sampled kernels.
    /// Contrasts without a report get no zones.
    pub fn new(kernels: &Kernels, reports: &[TestReport], scope: ZoneScope, weighting: IntervalWeight) -> Result<Self> {
        let n_var = kernels.variate_labels.len();
        let n_groups = kernels.group_labels.len();
        let mut intervals = vec![vec![Vec::new(); n_groups]; n_var];
        for r in reports {
            let c = r.contrast;
            if c.variate >= n_var || c.group >= n_groups || c.group == 0 {
                return Err(Error::contract(format!(
                    "report for variate {} group {} does not fit the kernels",
                    c.variate, c.group
                )));
            }
            intervals[c.variate][c.group].extend(r.zones.iter().copied());
        }
        for per_d in intervals.iter_mut() {
            let all: Vec<Zone> = per_d.iter().flatten().copied().collect();
            per_d[0] = all;
        }
        if scope == ZoneScope::Global {
            let all: Vec<Zone> = intervals.iter().flat_map(|d| d[0].iter().copied()).collect();
            for per_d in intervals.iter_mut() {
                per_d.iter_mut().for_each(|z| *z = all.clone());
            }
        }
        let intervals: Vec<Vec<Vec<Zone>>> = intervals
            .into_iter()
            .map(|d| d.into_iter().map(|z| disjoint_union(&z)).collect())
            .collect();
        let weights = intervals
            .iter()
            .map(|d| {
                d.iter()
                    .map(|z| {
                        let len = union_length(z);
                        match weighting {
                            _ if len <= 0.0 => 0.0,
                            IntervalWeight::InverseLength => 1.0 / len,
                            IntervalWeight::Unit => 1.0,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid: kernels.grid.clone(),
            group_labels: kernels.group_labels.clone(),
            variate_labels: kernels.variate_labels.clone(),
            mean: kernels.mean.clone(),
            kernels: kernels.effects.clone(),
            intervals,
            weights,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn n_variates(&self) -> usize {
        self.variate_labels.len()
    }

    /// `ỹ(t_i) = y(t_i) − μ̂_{d,0}(t_i)`
    pub fn centralize_values(&self, values: &[f64], d: usize) -> Result<Vec<f64>> {
        let mean = self
            .mean
            .get(d)
            .ok_or_else(|| Error::contract(format!("variate index {d} out of range")))?;
        if values.len() != mean.len() {
            return Err(Error::contract(format!(
                "curve has {} points but the kernels live on {}",
                values.len(),
                mean.len()
            )));
        }
        Ok(values.iter().zip(mean).map(|(y, m)| y - m).collect())
    }
}

pub fn centralize(sample: &CurveSample, ks: &KernelSet) -> Result<Vec<f64>> {
    let d = ks
        .variate_labels
        .iter()
        .position(|v| *v == sample.variate_id)
        .ok_or_else(|| Error::contract(format!("unknown variate '{}'", sample.variate_id)))?;
    ks.centralize_values(&sample.values, d)
}

/// Trapezoid integral over `zones` of a function sampled on `points`,
/// linearly interpolated where a zone ends between grid points.
pub fn integrate_over(points: &[f64], values: &[f64], zones: &[Zone]) -> f64 {
    let interp = |t: f64| -> f64 {
        let j = points.partition_point(|&p| p < t);
        if j == 0 {
            return values[0];
        }
        if j >= points.len() {
            return values[points.len() - 1];
        }
        let (t0, t1) = (points[j - 1], points[j]);
        let s = (t - t0) / (t1 - t0);
        values[j - 1] + s * (values[j] - values[j - 1])
    };
    let mut total = 0.0;
    for z in zones {
        let (a, b) = (z.start.max(points[0]), z.end.min(points[points.len() - 1]));
        if b <= a {
            continue;
        }
        let lo = points.partition_point(|&p| p <= a);
        let hi = points.partition_point(|&p| p < b);
        let mut prev_t = a;
        let mut prev_v = interp(a);
        for i in lo..hi {
            total += 0.5 * (points[i] - prev_t) * (prev_v + values[i]);
            prev_t = points[i];
            prev_v = values[i];
        }
        total += 0.5 * (b - prev_t) * (prev_v + interp(b));
    }
    total
}

/// `S_{g,d} = w_{g,d} ∫_I ỹ(t) α̂_{g,d}(t) dt`
pub fn score(centered: &[f64], ks: &KernelSet, g: usize, d: usize) -> f64 {
    let zones = &ks.intervals[d][g];
    if zones.is_empty() || ks.weights[d][g] == 0.0 {
        return 0.0;
    }
    let prod: Vec<f64> = centered.iter().zip(&ks.kernels[d][g]).map(|(y, a)| y * a).collect();
    ks.weights[d][g] * integrate_over(ks.grid.points(), &prod, zones)
}

/// Shift by `−min(0, min_g S)` and rescale to sum 1. Returns the uniform
/// vector and `true` when every shifted score is zero.
pub fn normalize_scores(raw: &[f64]) -> (Vec<f64>, bool) {
    let n = raw.len();
    if n == 0 {
        return (Vec::new(), true);
    }
    let shift = -raw.iter().copied().fold(0.0, f64::min);
    let shifted: Vec<f64> = raw.iter().map(|s| s + shift).collect();
    let total: f64 = shifted.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return (vec![1.0 / n as f64; n], true);
    }
    (shifted.iter().map(|s| s / total).collect(), false)
}

/// `S^comb_g = Σ_l r_{l,g} S̃_{g,l}` with `normalized[l][g]`.
pub fn combine_scores(normalized: &[Vec<f64>], weights: &CombinationWeights, g: usize) -> Result<f64> {
    let r = weights
        .r
        .get(g)
        .ok_or_else(|| Error::contract(format!("no combination weights for group {g}")))?;
    if r.len() != normalized.len() {
        return Err(Error::contract(format!(
            "{} combination weights for {} variates",
            r.len(),
            normalized.len()
        )));
    }
    Ok(r.iter().zip(normalized).map(|(w, s)| w * s[g]).sum::<f64>().clamp(0.0, 1.0))
}

/// Scores of one unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitScores {
    pub unit_id: String,
    pub label: Option<usize>,
    /// `raw[d][g]`
    pub raw: Vec<Vec<f64>>,
    /// `normalized[d][g]`
    pub normalized: Vec<Vec<f64>>,
    /// per variate: normalization fell back to uniform
    pub degenerate: Vec<bool>,
    /// `combined[g]`, empty until weights are applied
    pub combined: Vec<f64>,
}

pub fn score_unit(unit: &LabeledUnit, ks: &KernelSet) -> Result<UnitScores> {
    if unit.curves.len() != ks.n_variates() {
        return Err(Error::contract(format!(
            "unit '{}' has {} variates, kernels have {}",
            unit.unit_id,
            unit.curves.len(),
            ks.n_variates()
        )));
    }
    let mut raw = Vec::with_capacity(ks.n_variates());
    let mut normalized = Vec::with_capacity(ks.n_variates());
    let mut degenerate = Vec::with_capacity(ks.n_variates());
    for (d, curve) in unit.curves.iter().enumerate() {
        let centered = ks.centralize_values(curve, d)?;
        let r: Vec<f64> = (0..ks.n_groups()).map(|g| score(&centered, ks, g, d)).collect();
        let (n, flag) = normalize_scores(&r);
        raw.push(r);
        normalized.push(n);
        degenerate.push(flag);
    }
    Ok(UnitScores {
        unit_id: unit.unit_id.clone(),
        label: unit.group,
        raw,
        normalized,
        degenerate,
        combined: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub group_labels: Vec<String>,
    pub variate_labels: Vec<String>,
    pub units: Vec<UnitScores>,
}

impl ScoreTable {
    pub fn build(units: &[LabeledUnit], ks: &KernelSet) -> Result<Self> {
        Ok(Self {
            group_labels: ks.group_labels.clone(),
            variate_labels: ks.variate_labels.clone(),
            units: units.iter().map(|u| score_unit(u, ks)).collect::<Result<_>>()?,
        })
    }

    pub fn apply_weights(&mut self, weights: &CombinationWeights) -> Result<()> {
        for u in &mut self.units {
            u.combined = (0..self.group_labels.len())
                .map(|g| combine_scores(&u.normalized, weights, g))
                .collect::<Result<_>>()?;
        }
        Ok(())
    }

    /// `(normalized scores, label)` of every labelled unit.
    pub fn training_set(&self) -> (Vec<&[Vec<f64>]>, Vec<usize>) {
        self.units
            .iter()
            .filter_map(|u| u.label.map(|l| (u.normalized.as_slice(), l)))
            .unzip()
    }

    pub fn features(&self) -> Vec<&[f64]> {
        self.units.iter().map(|u| u.combined.as_slice()).collect()
    }

    /// `unit,group,variate,raw,normalized,combined`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Numeric(format!("csv write failed: {e}"));
        wtr.write_record(["unit", "group", "variate", "raw", "normalized", "combined"])
            .map_err(err)?;
        for u in &self.units {
            for (g, group) in self.group_labels.iter().enumerate() {
                let combined = u.combined.get(g).map(|c| c.to_string()).unwrap_or_default();
                for (d, variate) in self.variate_labels.iter().enumerate() {
                    wtr.write_record([
                        u.unit_id.clone(),
                        group.clone(),
                        variate.clone(),
                        u.raw[d][g].to_string(),
                        u.normalized[d][g].to_string(),
                        combined.clone(),
                    ])
                    .map_err(err)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::Numeric(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_set(n_t: usize, zones: Vec<Zone>) -> KernelSet {
        let grid = TimeGrid::uniform(n_t, 1.0).unwrap();
        let pts = grid.points().to_vec();
        let bump: Vec<f64> = pts.iter().map(|t| (-(t - 0.4f64).powi(2) / 0.005).exp()).collect();
        let neg: Vec<f64> = bump.iter().map(|b| -b).collect();
        let len = union_length(&zones);
        KernelSet {
            grid,
            group_labels: vec!["c".into(), "a".into()],
            variate_labels: vec!["v".into()],
            mean: vec![pts.iter().map(|t| t * 0.5).collect()],
            kernels: vec![vec![neg, bump]],
            intervals: vec![vec![zones.clone(), zones]],
            weights: vec![vec![1.0 / len, 1.0 / len]],
        }
    }

    #[test]
    fn normalize_examples() {
        let (n, f) = normalize_scores(&[2.0, 1.0, 1.0]);
        assert_eq!(n, vec![0.5, 0.25, 0.25]);
        assert!(!f);
        assert_eq!(normalize_scores(&[-1.0, 0.0]).0, vec![0.0, 1.0]);
        assert_eq!(normalize_scores(&[3.0; 4]).0, vec![0.25; 4]);
        let (n, f) = normalize_scores(&[0.0, 0.0, 0.0]);
        assert!(f);
        assert_eq!(n, vec![1.0 / 3.0; 3]);
        assert!(normalize_scores(&[-2.0, -2.0]).1);
    }

    #[test]
    fn combine_examples() {
        let w = CombinationWeights { r: vec![vec![0.25, 0.75]] };
        assert_eq!(combine_scores(&[vec![0.8], vec![0.4]], &w, 0).unwrap(), 0.5);
        let w = CombinationWeights { r: vec![vec![0.0, 0.0, 1.0]] };
        assert_eq!(combine_scores(&[vec![0.1], vec![0.2], vec![0.7]], &w, 0).unwrap(), 0.7);
        assert!(combine_scores(&[vec![0.1]], &w, 0).is_err());
        let w = CombinationWeights::uniform(1, 3);
        assert!((combine_scores(&[vec![1.0], vec![1.0], vec![1.0]], &w, 0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn centralize_and_score_basics() {
        let ks = toy_set(101, vec![Zone { start: 0.0, end: 1.0 }]);
        let mean = ks.mean[0].clone();
        let s = CurveSample {
            unit_id: "u".into(),
            group_id: "a".into(),
            variate_id: "v".into(),
            values: mean.clone(),
        };
        let c = centralize(&s, &ks).unwrap();
        assert!(c.iter().all(|v| *v == 0.0));
        assert_eq!(score(&c, &ks, 1, 0), 0.0);
        let self_score = score(&ks.kernels[0][1].clone(), &ks, 1, 0);
        assert!(self_score > 0.0);
        let bad = CurveSample { variate_id: "zz".into(), ..s };
        assert!(centralize(&bad, &ks).is_err());
    }

    #[test]
    fn score_matches_dense_riemann_sum() {
        let zone = Zone { start: 0.3, end: 0.5 };
        let n_t = 20_001;
        let ks = toy_set(n_t, vec![zone]);
        let curve = |t: f64| if t < 0.45 { 2.0 * t } else { 0.9 - (t - 0.45) };
        let pts = ks.grid.points();
        let centered: Vec<f64> = pts.iter().map(|&t| curve(t)).collect();
        let got = score(&centered, &ks, 1, 0);

        let m = 100_000;
        let h = 0.2 / m as f64;
        let oracle: f64 = (0..m)
            .map(|i| {
                let t = 0.3 + (i as f64 + 0.5) * h;
                curve(t) * (-(t - 0.4f64).powi(2) / 0.005).exp() * h
            })
            .sum::<f64>()
            / 0.2;
        assert!(((got - oracle) / oracle).abs() < 1e-6, "{got} vs {oracle}");
    }

    #[test]
    fn integrate_handles_off_grid_zones() {
        let pts: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let v: Vec<f64> = pts.iter().map(|t| 3.0 * t + 1.0).collect();
        let z = [Zone { start: 0.05, end: 0.37 }, Zone { start: 0.9, end: 0.9 }];
        let exact = (1.5 * 0.37f64.powi(2) + 0.37) - (1.5 * 0.05f64.powi(2) + 0.05);
        assert!((integrate_over(&pts, &v, &z) - exact).abs() < 1e-14);
    }

    #[test]
    fn control_intervals_are_union() {
        let grid = TimeGrid::uniform(11, 1.0).unwrap();
        let k = Kernels {
            grid: grid.clone(),
            group_labels: vec!["c".into(), "a".into(), "b".into()],
            variate_labels: vec!["v".into()],
            mean: vec![vec![0.0; 11]],
            effects: vec![vec![vec![0.0; 11]; 3]],
        };
        let mk = |g, zones| {
            let series = crate::inference::FStatSeries {
                contrast: crate::inference::ContrastSpec::new(0, g, 3, 1).unwrap(),
                grid: grid.clone(),
                values: vec![0.0; 11],
                pooled_variance: vec![1.0; 11],
                dof: (1, 10),
                has_infinite: false,
            };
            let mut r = crate::inference::classic_test(&series, 0.1, 1).unwrap();
            r.zones = zones;
            r
        };
        let reports = [
            mk(1, vec![Zone { start: 0.1, end: 0.3 }]),
            mk(2, vec![Zone { start: 0.2, end: 0.5 }]),
        ];
        let ks = KernelSet::new(&k, &reports, ZoneScope::PerContrast, IntervalWeight::InverseLength).unwrap();
        assert_eq!(ks.intervals[0][0], vec![Zone { start: 0.1, end: 0.5 }]);
        assert!((ks.weights[0][0] - 2.5).abs() < 1e-12);
        assert!((ks.weights[0][1] - 5.0).abs() < 1e-12);
        let ks = KernelSet::new(&k, &reports, ZoneScope::Global, IntervalWeight::Unit).unwrap();
        assert_eq!(ks.intervals[0][1], vec![Zone { start: 0.1, end: 0.5 }]);
        assert_eq!(ks.weights[0][2], 1.0);
    }
}
