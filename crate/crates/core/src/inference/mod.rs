//! Pointwise F-tests of control-vs-group contrasts and the time zones where
//! they reject.
//!
//! For variate `d` and group `g̃` the statistic is
//! `F(t) = (Ȳ_{d,0}(t) − Ȳ_{d,g̃}(t))² / (S_p²(t) · 2/K)` where the pooled
//! variance `S_p²` sums within-cell squares over every (group, variate) cell
//! and divides by `N − D·G`. The classic test compares `F(t)` with the
//! `F(1, N − DG)` quantile; the permutation test calibrates it by relabelling
//! the `2K` units of the two groups being compared.

mod fdist;
mod permutation;
mod zones;

pub use fdist::{beta_reg, f_cdf, f_quantile};
pub use permutation::{empirical_quantile, permutation_test, PermutationConfig, PermutationMode};
pub use zones::{disjoint_union, intersection_length, merge_zones, union_length, Zone};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{FunctionalDataset, TimeGrid};
use crate::serde_float;

/// Squared standard deviation, relative to the data scale, below which the
/// pooled variance is treated as exactly zero.
pub const DEGENERATE_VAR_RTOL: f64 = 1e-24;
/// Group-mean difference, relative to the data scale, below which it is
/// treated as exactly zero when the pooled variance vanishes.
pub const DEGENERATE_DIFF_RTOL: f64 = 1e-9;

/// Control (group 0) versus group `group` on variate `variate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastSpec {
    pub variate: usize,
    pub group: usize,
    pub n_groups: usize,
    pub n_variates: usize,
}

impl ContrastSpec {
    pub fn new(variate: usize, group: usize, n_groups: usize, n_variates: usize) -> Result<Self> {
        if group == 0 || group >= n_groups {
            return Err(Error::contract(format!(
                "contrast group must be in 1..{n_groups} (group 0 is the control), got {group}"
            )));
        }
        if variate >= n_variates {
            return Err(Error::contract(format!("variate {variate} out of range 0..{n_variates}")));
        }
        Ok(Self {
            variate,
            group,
            n_groups,
            n_variates,
        })
    }

    pub fn for_dataset(ds: &FunctionalDataset, variate: usize, group: usize) -> Result<Self> {
        Self::new(variate, group, ds.n_groups(), ds.n_variates())
    }

    /// Every control-vs-group contrast of a dataset, variate-major.
    pub fn all(ds: &FunctionalDataset) -> Vec<Self> {
        (0..ds.n_variates())
            .flat_map(|d| (1..ds.n_groups()).map(move |g| (d, g)))
            .map(|(d, g)| Self::for_dataset(ds, d, g).expect("indices in range"))
            .collect()
    }

    /// Contrast vector `a` over the stacked coefficient functions
    /// `[μ_d, α_{d,0}, …, α_{d,G}]_{d}`: `+1` on `α_{d,0}`, `−1` on `α_{d,g̃}`.
    pub fn vector(&self) -> Vec<f64> {
        let stride = self.n_groups + 1;
        let mut a = vec![0.0; self.n_variates * stride];
        a[self.variate * stride + 1] = 1.0;
        a[self.variate * stride + 1 + self.group] = -1.0;
        a
    }

    fn check(&self, ds: &FunctionalDataset) -> Result<()> {
        if self.n_groups != ds.n_groups() || self.n_variates != ds.n_variates() {
            return Err(Error::contract("contrast was built for a differently shaped dataset"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FStatSeries {
    pub contrast: ContrastSpec,
    pub grid: TimeGrid,
    #[serde(with = "serde_float::vec")]
    pub values: Vec<f64>,
    pub pooled_variance: Vec<f64>,
    /// `(1, N − D·G)`
    pub dof: (usize, usize),
    /// Some point had zero pooled variance with a nonzero mean difference.
    pub has_infinite: bool,
}

pub(crate) fn data_scale(ds: &FunctionalDataset) -> f64 {
    ds.samples()
        .iter()
        .flat_map(|s| s.values.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

pub(crate) fn f_value(diff: f64, pooled_var: f64, units: usize, scale: f64) -> f64 {
    let var_floor = DEGENERATE_VAR_RTOL * scale * scale;
    if pooled_var <= var_floor {
        if diff.abs() <= DEGENERATE_DIFF_RTOL * scale {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff * diff / (pooled_var * 2.0 / units as f64)
    }
}

pub(crate) fn residual_dof(ds: &FunctionalDataset) -> Result<usize> {
    let n = ds.n_curves();
    let dg = ds.n_variates() * ds.n_treatments();
    if n <= dg {
        return Err(Error::contract(format!("no residual degrees of freedom (N = {n}, D·G = {dg})")));
    }
    Ok(n - dg)
}

/// Pointwise F-statistic of one contrast on the dataset's grid.
pub fn pointwise_f(ds: &FunctionalDataset, contrast: &ContrastSpec) -> Result<FStatSeries> {
    contrast.check(ds)?;
    let k = ds.units_per_group();
    let n_t = ds.grid().len();
    let dof2 = residual_dof(ds)?;
    let scale = data_scale(ds);

    let mut ss = vec![0.0; n_t];
    let mut means_ctrl = vec![0.0; n_t];
    let mut means_trt = vec![0.0; n_t];
    for g in 0..ds.n_groups() {
        for d in 0..ds.n_variates() {
            let mut mean = vec![0.0; n_t];
            for u in 0..k {
                for (m, y) in mean.iter_mut().zip(ds.curve(g, d, u)) {
                    *m += y;
                }
            }
            mean.iter_mut().for_each(|m| *m /= k as f64);
            for u in 0..k {
                for ((s, y), m) in ss.iter_mut().zip(ds.curve(g, d, u)).zip(&mean) {
                    *s += (y - m) * (y - m);
                }
            }
            if d == contrast.variate {
                if g == 0 {
                    means_ctrl = mean;
                } else if g == contrast.group {
                    means_trt = mean;
                }
            }
        }
    }

    let pooled: Vec<f64> = ss.iter().map(|s| s / dof2 as f64).collect();
    let values: Vec<f64> = (0..n_t)
        .map(|i| f_value(means_ctrl[i] - means_trt[i], pooled[i], k, scale))
        .collect();
    let has_infinite = values.iter().any(|v| v.is_infinite());
    if has_infinite {
        log::warn!(
            "contrast (variate {}, group {}): zero pooled variance with nonzero difference; F set to +inf",
            contrast.variate,
            contrast.group
        );
    }
    Ok(FStatSeries {
        contrast: *contrast,
        grid: ds.grid().clone(),
        values,
        pooled_variance: pooled,
        dof: (1, dof2),
        has_infinite,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Classic,
    Permutation,
}

impl std::fmt::Display for TestMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestMethod::Classic => "classic",
            TestMethod::Permutation => "permutation",
        })
    }
}

impl std::str::FromStr for TestMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(TestMethod::Classic),
            "permutation" => Ok(TestMethod::Permutation),
            other => Err(Error::contract(format!("unknown test method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: TestMethod,
    pub alpha: f64,
    pub contrast: ContrastSpec,
    /// Scalar critical value; NaN for the pointwise permutation mode, which
    /// reports `critical_per_point` instead.
    #[serde(with = "serde_float::scalar")]
    pub critical: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_per_point: Option<Vec<f64>>,
    pub statistic: FStatSeries,
    pub reject_mask: Vec<bool>,
    pub zones: Vec<Zone>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec")]
    pub null_distribution: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Number of relabelings actually evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_perm: Option<usize>,
    /// All `C(2K, K)` relabelings were enumerated instead of sampled.
    #[serde(default)]
    pub exhaustive: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

mod opt_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => crate::serde_float::vec::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<f64>>, D::Error> {
        #[derive(Deserialize)]
        struct Wrap(#[serde(with = "crate::serde_float::vec")] Vec<f64>);
        Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::contract(format!("alpha must be in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Reject wherever `F(t) > c_{1−α}` of `F(1, N − DG)`.
pub fn classic_test(series: &FStatSeries, alpha: f64, min_zone_points: usize) -> Result<TestReport> {
    check_alpha(alpha)?;
    let critical = f_quantile(series.dof.0 as f64, series.dof.1 as f64, 1.0 - alpha)?;
    let reject_mask: Vec<bool> = series.values.iter().map(|&f| f > critical).collect();
    let zones = merge_zones(&reject_mask, &series.grid, min_zone_points);
    Ok(TestReport {
        method: TestMethod::Classic,
        alpha,
        contrast: series.contrast,
        critical,
        critical_per_point: None,
        statistic: series.clone(),
        reject_mask,
        zones,
        null_distribution: None,
        seed: None,
        n_perm: None,
        exhaustive: false,
        warnings: Vec::new(),
    })
}

impl TestReport {
    pub fn critical_at(&self, i: usize) -> f64 {
        match &self.critical_per_point {
            Some(c) => c[i],
            None => self.critical,
        }
    }

    pub fn rejects_anywhere(&self) -> bool {
        self.reject_mask.iter().any(|&r| r)
    }

    /// `t,F,critical,reject`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Numeric(format!("csv write failed: {e}"));
        wtr.write_record(["t", "F", "critical", "reject"]).map_err(err)?;
        for (i, t) in self.statistic.grid.points().iter().enumerate() {
            wtr.write_record([
                t.to_string(),
                self.statistic.values[i].to_string(),
                self.critical_at(i).to_string(),
                (self.reject_mask[i] as u8).to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::Numeric(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}
