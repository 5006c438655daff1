//! Ground-truth simulation and the three recovery measurements: kernel
//! dissimilarity, significant-zone matching rate and classification
//! correctness, swept over noise levels.

mod fixture;

pub use fixture::{ravdess_like, write_openface_fixture, FixtureConfig, AU_LABELS, EMOTIONS};

use std::io::Write;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fanova::Kernels;
use crate::funcdata::{CurveSample, FunctionalDataset, TimeGrid};
use crate::inference::{intersection_length, merge_zones, union_length, TestMethod, Zone};
use crate::pipeline::{accuracy, analyze, AnalysisConfig, TrainedClassifier};
use crate::quadrature::trapezoid;
use crate::rng::{derive_seed, stream_rng};

/// Difference magnitude below which a true effect counts as absent.
pub const TRUTH_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BumpShape {
    /// `A (1 + cos(2π(t − c)/w)) / 2` on `|t − c| < w/2`
    #[default]
    RaisedCosine,
    /// Cardinal cubic B-spline on four equal sub-intervals of
    /// `[c − w/2, c + w/2]`, scaled to peak `A`. It lies in the span of any
    /// cubic basis whose knots include those five points.
    CubicSpline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub variate: usize,
    pub group: usize,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

/// `μ(t) = level + amplitude · sin(2π · cycles · t / T + phase)`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanSpec {
    pub level: f64,
    pub amplitude: f64,
    pub cycles: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_treatments: usize,
    pub n_variates: usize,
    pub units: usize,
    /// Units per group in the independent classification test set.
    pub test_units: usize,
    pub grid_len: usize,
    pub t_end: f64,
    pub sd: f64,
    pub seed: u64,
    pub shape: BumpShape,
    pub means: Vec<MeanSpec>,
    pub bumps: Vec<BumpSpec>,
    pub analysis: AnalysisConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        // bump edges sit on the knots of the default 20-function cubic basis
        let h = 1.0 / 17.0;
        let bump = |variate, group, lo: f64, hi: f64, amplitude| BumpSpec {
            variate,
            group,
            center: 0.5 * (lo + hi) * h,
            width: (hi - lo) * h,
            amplitude,
        };
        Self {
            n_treatments: 3,
            n_variates: 2,
            units: 24,
            test_units: 24,
            grid_len: 110,
            t_end: 1.0,
            sd: 0.05,
            seed: 0,
            shape: BumpShape::RaisedCosine,
            means: vec![
                MeanSpec {
                    level: 1.0,
                    amplitude: 0.5,
                    cycles: 1.0,
                    phase: 0.0,
                },
                MeanSpec {
                    level: 0.5,
                    amplitude: 0.3,
                    cycles: 0.5,
                    phase: 1.0,
                },
            ],
            bumps: vec![
                bump(0, 1, 1.0, 9.0, 2.0),
                bump(0, 2, 5.0, 13.0, 2.0),
                bump(0, 3, 8.0, 16.0, 2.0),
                bump(1, 1, 8.0, 16.0, 2.0),
                bump(1, 2, 1.0, 9.0, 2.0),
                bump(1, 3, 5.0, 13.0, 2.0),
            ],
            analysis: AnalysisConfig {
                // pointwise tests at α = 0.1 leave short false-positive runs
                min_zone_points: 6,
                ..AnalysisConfig::default()
            },
        }
    }
}

pub fn bump_value(shape: BumpShape, b: &BumpSpec, t: f64) -> f64 {
    let u = (t - b.center) / b.width;
    if u.abs() >= 0.5 {
        return 0.0;
    }
    match shape {
        BumpShape::RaisedCosine => b.amplitude * 0.5 * (1.0 + (2.0 * std::f64::consts::PI * u).cos()),
        BumpShape::CubicSpline => {
            // x ∈ (0, 4) in units of the sub-interval; peak 2/3 at x = 2
            let x = 4.0 * (u + 0.5);
            let v = if x < 1.0 {
                x * x * x / 6.0
            } else if x < 2.0 {
                let y = x - 1.0;
                (1.0 + 3.0 * y + 3.0 * y * y - 3.0 * y * y * y) / 6.0
            } else if x < 3.0 {
                let y = 3.0 - x;
                (1.0 + 3.0 * y + 3.0 * y * y - 3.0 * y * y * y) / 6.0
            } else {
                let y = 4.0 - x;
                y * y * y / 6.0
            };
            b.amplitude * 1.5 * v
        }
    }
}

/// True mean functions, zero-sum effects and significant zones on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub grid: TimeGrid,
    /// `mean[d][i]`
    pub mean: Vec<Vec<f64>>,
    /// `effects[d][g][i]`, summing to zero over `g`
    pub effects: Vec<Vec<Vec<f64>>>,
    /// one entry per control-vs-group contrast, variate-major
    pub zones: Vec<ContrastZones>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastZones {
    pub variate: usize,
    pub group: usize,
    pub zones: Vec<Zone>,
}

impl SimulationConfig {
    fn validate(&self) -> Result<()> {
        if self.n_treatments < 1 || self.n_variates < 1 || self.units < 2 {
            return Err(Error::contract("simulation needs G ≥ 1, D ≥ 1 and K ≥ 2"));
        }
        if !(self.sd >= 0.0 && self.sd.is_finite()) {
            return Err(Error::contract(format!("noise sd must be finite and nonnegative, got {}", self.sd)));
        }
        if self.means.len() != self.n_variates {
            return Err(Error::contract(format!(
                "{} mean specs for {} variates",
                self.means.len(),
                self.n_variates
            )));
        }
        for b in &self.bumps {
            if b.variate >= self.n_variates || b.group > self.n_treatments || !(b.width > 0.0) {
                return Err(Error::contract(format!("bump {b:?} does not fit the design")));
            }
        }
        Ok(())
    }

    pub fn group_labels(&self) -> Vec<String> {
        std::iter::once("control".to_string())
            .chain((1..=self.n_treatments).map(|g| format!("group{g}")))
            .collect()
    }

    pub fn variate_labels(&self) -> Vec<String> {
        (0..self.n_variates).map(|d| format!("v{d}")).collect()
    }

    pub fn truth(&self) -> Result<GroundTruth> {
        self.validate()?;
        let grid = TimeGrid::uniform(self.grid_len, self.t_end)?;
        let pts = grid.points();
        let n_groups = self.n_treatments + 1;
        let mean: Vec<Vec<f64>> = self
            .means
            .iter()
            .map(|m| {
                pts.iter()
                    .map(|t| m.level + m.amplitude * (2.0 * std::f64::consts::PI * m.cycles * t / self.t_end + m.phase).sin())
                    .collect()
            })
            .collect();
        let mut effects = vec![vec![vec![0.0; pts.len()]; n_groups]; self.n_variates];
        for b in &self.bumps {
            for (e, &t) in effects[b.variate][b.group].iter_mut().zip(pts) {
                *e += bump_value(self.shape, b, t);
            }
        }
        for per_d in effects.iter_mut() {
            for i in 0..pts.len() {
                let avg = per_d.iter().map(|e| e[i]).sum::<f64>() / n_groups as f64;
                per_d.iter_mut().for_each(|e| e[i] -= avg);
            }
        }
        let mut zones = Vec::new();
        for (d, per_d) in effects.iter().enumerate() {
            for g in 1..n_groups {
                let mask: Vec<bool> = (0..pts.len())
                    .map(|i| (per_d[g][i] - per_d[0][i]).abs() > TRUTH_THRESHOLD)
                    .collect();
                zones.push(ContrastZones {
                    variate: d,
                    group: g,
                    zones: merge_zones(&mask, &grid, 1),
                });
            }
        }
        Ok(GroundTruth {
            grid,
            mean,
            effects,
            zones,
        })
    }
}

/// Draw `units` curves per (group, variate) around the truth with i.i.d.
/// Gaussian noise from stream `stream` of `seed`.
pub fn sample_dataset(cfg: &SimulationConfig, truth: &GroundTruth, units: usize, seed: u64, stream: u64) -> Result<FunctionalDataset> {
    let mut rng = stream_rng(seed, stream);
    let noise = Normal::new(0.0, cfg.sd).map_err(|e| Error::contract(e.to_string()))?;
    let groups = cfg.group_labels();
    let variates = cfg.variate_labels();
    let mut samples = Vec::with_capacity(groups.len() * variates.len() * units);
    for (g, group) in groups.iter().enumerate() {
        for (d, variate) in variates.iter().enumerate() {
            for k in 0..units {
                let values = truth.mean[d]
                    .iter()
                    .zip(&truth.effects[d][g])
                    .map(|(m, a)| {
                        let e = if cfg.sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                        m + a + e
                    })
                    .collect();
                samples.push(CurveSample {
                    unit_id: format!("{group}_u{k:02}"),
                    group_id: group.clone(),
                    variate_id: variate.clone(),
                    values,
                });
            }
        }
    }
    FunctionalDataset::from_samples(truth.grid.clone(), groups, variates, samples)
}

pub fn gen_dataset(cfg: &SimulationConfig) -> Result<(FunctionalDataset, GroundTruth)> {
    let truth = cfg.truth()?;
    let ds = sample_dataset(cfg, &truth, cfg.units, cfg.seed, 0)?;
    Ok((ds, truth))
}

/// Mean over (variate, group) of `‖α̂ − α‖ / max(‖α‖, ε)` in L2 on the grid.
pub fn kernel_dissimilarity(estimated: &Kernels, truth: &GroundTruth) -> Result<f64> {
    if estimated.grid.points() != truth.grid.points()
        || estimated.effects.len() != truth.effects.len()
        || estimated.effects.iter().zip(&truth.effects).any(|(a, b)| a.len() != b.len())
    {
        return Err(Error::contract("estimated kernels and truth differ in shape or grid"));
    }
    let pts = truth.grid.points();
    let norm = |v: &[f64]| trapezoid(pts, &v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
    let mut total = 0.0;
    let mut count = 0usize;
    for (est_d, true_d) in estimated.effects.iter().zip(&truth.effects) {
        for (est, tru) in est_d.iter().zip(true_d) {
            let diff: Vec<f64> = est.iter().zip(tru).map(|(a, b)| a - b).collect();
            total += norm(&diff) / norm(tru).max(1e-12);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Jaccard index of two interval unions by length; 1 when both are empty.
pub fn zone_match_rate(estimated: &[Zone], truth: &[Zone]) -> f64 {
    let union = union_length(estimated) + union_length(truth) - intersection_length(estimated, truth);
    if union <= 0.0 {
        return 1.0;
    }
    (intersection_length(estimated, truth) / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sd: f64,
    pub method: TestMethod,
    pub rep: usize,
    pub dissimilarity: f64,
    pub match_rate: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sd: f64,
    pub method: TestMethod,
    pub dissimilarity: f64,
    pub match_rate: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SimulationConfig,
    pub sd_levels: Vec<f64>,
    pub n_reps: usize,
    pub methods: Vec<TestMethod>,
    pub rows: Vec<SweepRow>,
}

/// One replicate: fit, test and classify a freshly drawn dataset.
pub fn evaluate_once(cfg: &SimulationConfig, truth: &GroundTruth, method: TestMethod, data_seed: u64) -> Result<(f64, f64, f64)> {
    let train = sample_dataset(cfg, truth, cfg.units, data_seed, 0)?;
    let test = sample_dataset(cfg, truth, cfg.test_units.max(1), data_seed, 1)?;
    let acfg = AnalysisConfig {
        method,
        seed: data_seed,
        ..cfg.analysis.clone()
    };
    let analysis = analyze(&train, &acfg)?;
    let dissimilarity = kernel_dissimilarity(&analysis.kernels, truth)?;
    let match_rate = mean_match_rate(&analysis.reports, truth);
    let classifier = TrainedClassifier::fit(&analysis, &train, &acfg)?;
    let preds = classifier.predict(&test.labeled_units())?;
    let acc = accuracy(&preds).unwrap_or(0.0);
    Ok((dissimilarity, match_rate, acc))
}

/// Average zone matching rate over every contrast in `reports`.
pub fn mean_match_rate(reports: &[crate::inference::TestReport], truth: &GroundTruth) -> f64 {
    let rates: Vec<f64> = reports
        .iter()
        .map(|r| {
            let t = truth
                .zones
                .iter()
                .find(|z| z.variate == r.contrast.variate && z.group == r.contrast.group)
                .map(|z| z.zones.as_slice())
                .unwrap_or(&[]);
            zone_match_rate(&r.zones, t)
        })
        .collect();
    rates.iter().sum::<f64>() / rates.len().max(1) as f64
}

/// For each noise level and replicate, draw data and score every method on
/// it. Replicate `(s, r)` uses a seed derived from `(seed, s, r)`, so the
/// report does not depend on thread scheduling.
pub fn noise_sweep(cfg: &SimulationConfig, sd_levels: &[f64], n_reps: usize, methods: &[TestMethod]) -> Result<SweepReport> {
    if n_reps == 0 || sd_levels.is_empty() || methods.is_empty() {
        return Err(Error::contract("sweep needs at least one noise level, replicate and method"));
    }
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..sd_levels.len()).flat_map(|s| (0..n_reps).map(move |r| (s, r))).collect();
    let results: Vec<Result<Vec<SweepRow>>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let level = SimulationConfig {
                sd: sd_levels[s],
                ..cfg.clone()
            };
            let truth = level.truth()?;
            let data_seed = derive_seed(cfg.seed, &[s as u64, r as u64]);
            methods
                .iter()
                .map(|&m| {
                    let (dissimilarity, match_rate, accuracy) = evaluate_once(&level, &truth, m, data_seed)?;
                    Ok(SweepRow {
                        sd: sd_levels[s],
                        method: m,
                        rep: r,
                        dissimilarity,
                        match_rate,
                        accuracy,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * methods.len());
    for r in results {
        rows.extend(r?);
    }
    // (sd, method, rep) order
    rows.sort_by_key(|row| {
        (
            sd_levels.iter().position(|s| *s == row.sd).unwrap_or(0),
            methods.iter().position(|m| *m == row.method).unwrap_or(0),
            row.rep,
        )
    });
    Ok(SweepReport {
        config: cfg.clone(),
        sd_levels: sd_levels.to_vec(),
        n_reps,
        methods: methods.to_vec(),
        rows,
    })
}

impl SweepReport {
    /// Means over replicates, ordered by (sd, method).
    pub fn summary(&self) -> Vec<SweepSummary> {
        let mut out = Vec::new();
        for &sd in &self.sd_levels {
            for &method in &self.methods {
                let sel: Vec<&SweepRow> = self.rows.iter().filter(|r| r.sd == sd && r.method == method).collect();
                let n = sel.len().max(1) as f64;
                out.push(SweepSummary {
                    sd,
                    method,
                    dissimilarity: sel.iter().map(|r| r.dissimilarity).sum::<f64>() / n,
                    match_rate: sel.iter().map(|r| r.match_rate).sum::<f64>() / n,
                    accuracy: sel.iter().map(|r| r.accuracy).sum::<f64>() / n,
                });
            }
        }
        out
    }

    /// `sd,method,rep,dissimilarity,match_rate,accuracy`
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Numeric(format!("csv write failed: {e}"));
        wtr.write_record(["sd", "method", "rep", "dissimilarity", "match_rate", "accuracy"])
            .map_err(err)?;
        for r in &self.rows {
            wtr.write_record([
                r.sd.to_string(),
                r.method.to_string(),
                r.rep.to_string(),
                r.dissimilarity.to_string(),
                r.match_rate.to_string(),
                r.accuracy.to_string(),
            ])
            .map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::Numeric(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}
