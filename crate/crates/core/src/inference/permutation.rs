use std::collections::HashSet;

use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_alpha, data_scale, f_value, merge_zones, pointwise_f, residual_dof, ContrastSpec, TestMethod, TestReport};
use crate::error::{Error, Result};
use crate::funcdata::FunctionalDataset;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PermutationMode {
    /// One threshold from the distribution of `sup_t F(t)`.
    #[default]
    Sup,
    /// A separate threshold at every grid point.
    Pointwise,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermutationConfig {
    pub n_perm: usize,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: PermutationMode,
    #[serde(default = "one")]
    pub min_zone_points: usize,
}

fn one() -> usize {
    1
}

impl Default for PermutationConfig {
    fn default() -> Self {
        Self {
            n_perm: 1000,
            alpha: 0.1,
            seed: 0,
            mode: PermutationMode::Sup,
            min_zone_points: 1,
        }
    }
}

/// `inf{s : F_n(s) ≥ p}` for the empirical CDF of `values`.
pub fn empirical_quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    // guard against (1 - α)·M landing a hair above an integer
    let idx = ((p * m as f64) - 1e-9).ceil().max(1.0) as usize;
    v[idx.min(m) - 1]
}

/// Curves of the two compared groups, pooled in a label-free canonical order.
struct Pool<'a> {
    /// `curves[pos][d]`
    curves: Vec<Vec<&'a [f64]>>,
    /// true where the unit belongs to the control group
    observed: Vec<bool>,
    /// within-cell squares of every cell outside the compared pair
    ss_other: Vec<f64>,
    k: usize,
    n_t: usize,
    target: usize,
    dof2: usize,
    scale: f64,
}

impl<'a> Pool<'a> {
    fn new(ds: &'a FunctionalDataset, c: &ContrastSpec) -> Result<Self> {
        let k = ds.units_per_group();
        let n_t = ds.grid().len();
        let n_var = ds.n_variates();
        let mut units: Vec<(Vec<&[f64]>, bool)> = Vec::with_capacity(2 * k);
        for (g, is_ctrl) in [(0, true), (c.group, false)] {
            for u in 0..k {
                units.push(((0..n_var).map(|d| ds.curve(g, d, u)).collect(), is_ctrl));
            }
        }
        units.sort_by(|a, b| {
            a.0.iter()
                .flat_map(|c| c.iter())
                .zip(b.0.iter().flat_map(|c| c.iter()))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut ss_other = vec![0.0; n_t];
        for g in (0..ds.n_groups()).filter(|&g| g != 0 && g != c.group) {
            for d in 0..n_var {
                let cell: Vec<&[f64]> = (0..k).map(|u| ds.curve(g, d, u)).collect();
                accumulate_ss(&cell, &mut ss_other, &mut vec![0.0; n_t]);
            }
        }
        Ok(Self {
            observed: units.iter().map(|u| u.1).collect(),
            curves: units.into_iter().map(|u| u.0).collect(),
            ss_other,
            k,
            n_t,
            target: c.variate,
            dof2: residual_dof(ds)?,
            scale: data_scale(ds),
        })
    }

    /// F series when the units flagged in `first` play the control group.
    fn f_series(&self, first: &[bool]) -> Vec<f64> {
        let n_t = self.n_t;
        let mut ss = self.ss_other.clone();
        let mut mean_a = vec![0.0; n_t];
        let mut mean_b = vec![0.0; n_t];
        let mut diff = vec![0.0; n_t];
        let mut a: Vec<&[f64]> = Vec::with_capacity(self.k);
        let mut b: Vec<&[f64]> = Vec::with_capacity(self.k);
        for d in 0..self.curves[0].len() {
            a.clear();
            b.clear();
            for (pos, unit) in self.curves.iter().enumerate() {
                if first[pos] {
                    a.push(unit[d]);
                } else {
                    b.push(unit[d]);
                }
            }
            accumulate_ss(&a, &mut ss, &mut mean_a);
            accumulate_ss(&b, &mut ss, &mut mean_b);
            if d == self.target {
                for i in 0..n_t {
                    diff[i] = mean_a[i] - mean_b[i];
                }
            }
        }
        (0..n_t)
            .map(|i| f_value(diff[i], ss[i] / self.dof2 as f64, self.k, self.scale))
            .collect()
    }
}

/// Adds the within-cell sum of squares of `cell` to `ss`; leaves the cell mean in `mean`.
fn accumulate_ss(cell: &[&[f64]], ss: &mut [f64], mean: &mut [f64]) {
    mean.iter_mut().for_each(|m| *m = 0.0);
    for c in cell {
        for (m, y) in mean.iter_mut().zip(c.iter()) {
            *m += y;
        }
    }
    let n = cell.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    for c in cell {
        for ((s, y), m) in ss.iter_mut().zip(c.iter()).zip(mean.iter()) {
            *s += (y - m) * (y - m);
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul((n - i) as u128) / (i as u128 + 1);
        if r > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    r
}

/// Every K-subset of 0..2K in lexicographic order.
fn all_subsets(k: usize) -> Vec<Vec<bool>> {
    let n = 2 * k;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut out = Vec::new();
    loop {
        let mut mask = vec![false; n];
        idx.iter().for_each(|&i| mask[i] = true);
        out.push(mask);
        let Some(i) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Distinct uniformly drawn K-subsets; replicate `r` draws from stream `r`
/// and keeps drawing on that stream until it finds an unseen subset.
fn sampled_subsets(k: usize, count: usize, seed: u64) -> Vec<Vec<bool>> {
    let n = 2 * k;
    let mut seen: HashSet<Vec<bool>> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut perm: Vec<usize> = (0..n).collect();
    for r in 0..count {
        let mut rng = stream_rng(seed, r as u64);
        loop {
            perm.iter_mut().enumerate().for_each(|(i, p)| *p = i);
            for i in 0..k {
                let j = rng.random_range(i..n);
                perm.swap(i, j);
            }
            let mut mask = vec![false; n];
            perm[..k].iter().for_each(|&i| mask[i] = true);
            if seen.insert(mask.clone()) {
                out.push(mask);
                break;
            }
        }
    }
    out
}

/// Permutation F-test: relabels the `2K` units of the two compared groups
/// and calibrates the observed F series against the replicate distribution.
pub fn permutation_test(ds: &FunctionalDataset, contrast: &ContrastSpec, cfg: &PermutationConfig) -> Result<TestReport> {
    check_alpha(cfg.alpha)?;
    if cfg.n_perm < 100 {
        return Err(Error::contract(format!("n_perm must be at least 100, got {}", cfg.n_perm)));
    }
    let observed = pointwise_f(ds, contrast)?;
    let pool = Pool::new(ds, contrast)?;
    let k = pool.k;

    let total = binomial(2 * k, k);
    let exhaustive = total <= cfg.n_perm as u128;
    let subsets = if exhaustive {
        all_subsets(k)
    } else {
        sampled_subsets(k, cfg.n_perm, cfg.seed)
    };
    let m = subsets.len();

    let mut warnings = Vec::new();
    if (m as f64) * cfg.alpha < 5.0 {
        let msg = format!(
            "only {m} relabelings for alpha {}: the critical value has coarse resolution",
            cfg.alpha
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    debug_assert_eq!(pool.observed.iter().filter(|&&b| b).count(), k);

    let (critical, per_point, null, reject_mask) = match cfg.mode {
        PermutationMode::Sup => {
            let sups: Vec<f64> = subsets
                .par_iter()
                .map(|s| pool.f_series(s).into_iter().fold(0.0, f64::max))
                .collect();
            let c = empirical_quantile(&sups, 1.0 - cfg.alpha);
            let mask: Vec<bool> = observed.values.iter().map(|&f| f > c).collect();
            (c, None, Some(sups), mask)
        }
        PermutationMode::Pointwise => {
            let series: Vec<Vec<f64>> = subsets.par_iter().map(|s| pool.f_series(s)).collect();
            let crit: Vec<f64> = (0..pool.n_t)
                .map(|i| {
                    let col: Vec<f64> = series.iter().map(|s| s[i]).collect();
                    empirical_quantile(&col, 1.0 - cfg.alpha)
                })
                .collect();
            let mask: Vec<bool> = observed.values.iter().zip(&crit).map(|(&f, &c)| f > c).collect();
            (f64::NAN, Some(crit), None, mask)
        }
    };
    let zones = merge_zones(&reject_mask, &observed.grid, cfg.min_zone_points);
    Ok(TestReport {
        method: TestMethod::Permutation,
        alpha: cfg.alpha,
        contrast: *contrast,
        critical,
        critical_per_point: per_point,
        statistic: observed,
        reject_mask,
        zones,
        null_distribution: null,
        seed: Some(cfg.seed),
        n_perm: Some(m),
        exhaustive,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::tests::dataset;

    #[test]
    fn subsets_enumerate_binomial() {
        for k in 1..6 {
            let s = all_subsets(k);
            assert_eq!(s.len() as u128, binomial(2 * k, k));
            let uniq: HashSet<_> = s.iter().cloned().collect();
            assert_eq!(uniq.len(), s.len());
            assert!(s.iter().all(|m| m.iter().filter(|&&b| b).count() == k));
        }
        assert_eq!(binomial(200, 100), u128::MAX);
    }

    #[test]
    fn sampled_subsets_distinct_and_seeded() {
        let a = sampled_subsets(5, 250, 3);
        let uniq: HashSet<_> = a.iter().cloned().collect();
        assert_eq!(uniq.len(), 250);
        assert_eq!(a, sampled_subsets(5, 250, 3));
        assert_ne!(a, sampled_subsets(5, 250, 4));
    }

    #[test]
    fn empirical_quantile_convention() {
        let v: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        assert_eq!(empirical_quantile(&v, 0.9), 180.0);
        assert_eq!(empirical_quantile(&v, 1.0), 200.0);
        assert_eq!(empirical_quantile(&[3.0, 1.0, 2.0], 0.5), 2.0);
    }

    #[test]
    fn pool_identity_matches_pointwise() {
        let ctrl = vec![vec![1.0, 0.0, 2.0, 0.0], vec![2.0, 1.0, 2.0, 0.5], vec![3.0, 2.0, 5.0, 0.0]];
        let trt = vec![vec![4.0, 0.0, 1.0, 0.0], vec![6.0, 0.0, 1.5, 0.0], vec![5.0, 3.0, 1.0, 1.0]];
        let other = vec![vec![0.0, 1.0, 0.0, 1.0], vec![1.0, 1.0, 2.0, 0.0], vec![2.0, 0.0, 1.0, 3.0]];
        let ds = dataset(&[ctrl, other, trt], 4);
        let c = ContrastSpec::for_dataset(&ds, 0, 2).unwrap();
        let pool = Pool::new(&ds, &c).unwrap();
        let f = pool.f_series(&pool.observed);
        let direct = pointwise_f(&ds, &c).unwrap();
        for (a, b) in f.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn exhaustive_for_small_k() {
        let ctrl = vec![vec![1.0, 0.0, 2.0, 0.0], vec![2.0, 1.0, 2.0, 0.5], vec![3.0, 2.0, 5.0, 0.0]];
        let trt = vec![vec![4.0, 0.0, 1.0, 0.0], vec![6.0, 0.0, 1.5, 0.0], vec![5.0, 3.0, 1.0, 1.0]];
        let ds = dataset(&[ctrl, trt], 4);
        let c = ContrastSpec::for_dataset(&ds, 0, 1).unwrap();
        let r = permutation_test(&ds, &c, &PermutationConfig { n_perm: 100, ..Default::default() }).unwrap();
        assert!(r.exhaustive);
        assert_eq!(r.n_perm, Some(20));
        assert_eq!(r.warnings.len(), 1);
        assert!(permutation_test(&ds, &c, &PermutationConfig { n_perm: 10, ..Default::default() }).is_err());
    }
}
