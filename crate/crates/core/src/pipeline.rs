//! End-to-end orchestration: smooth, fit, test every contrast, extract
//! kernels, then train and apply the score classifier.

use serde::{Deserialize, Serialize};

use crate::basis::{BSplineBasis, CoefficientMatrix, KnotPlacement, Smoother};
use crate::error::{Error, Result};
use crate::fanova::{build_design, extract_kernels, fit_fanova, FanovaModel, Kernels};
use crate::funcdata::{FunctionalDataset, LabeledUnit};
use crate::inference::{
    classic_test, permutation_test, pointwise_f, ContrastSpec, PermutationConfig, PermutationMode, TestMethod, TestReport,
};
use crate::kernelclass::{
    train_classifier, train_weights, Classifier, ClassifierModel, CombinationWeights, IntervalWeight, KernelSet, ScoreTable,
    SvmConfig, WeightConfig, ZoneScope,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub basis_order: usize,
    pub basis_q: usize,
    pub knots: KnotPlacement,
    pub ridge: f64,
    pub method: TestMethod,
    pub alpha: f64,
    pub n_perm: usize,
    pub perm_mode: PermutationMode,
    pub seed: u64,
    pub min_zone_points: usize,
    /// Test the raw curves instead of their basis reconstructions.
    pub raw_tests: bool,
    pub zone_scope: ZoneScope,
    pub interval_weight: IntervalWeight,
    pub weights: WeightConfig,
    pub svm: SvmConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            basis_order: 4,
            basis_q: 20,
            knots: KnotPlacement::Uniform,
            ridge: 1e-6,
            method: TestMethod::Classic,
            alpha: 0.1,
            n_perm: 1000,
            perm_mode: PermutationMode::Sup,
            seed: 0,
            min_zone_points: 1,
            raw_tests: false,
            zone_scope: ZoneScope::PerContrast,
            interval_weight: IntervalWeight::InverseLength,
            weights: WeightConfig::default(),
            svm: SvmConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub basis: BSplineBasis,
    pub coefficients: CoefficientMatrix,
    pub model: FanovaModel,
    pub kernels: Kernels,
    pub reports: Vec<TestReport>,
}

pub fn build_basis(ds: &FunctionalDataset, cfg: &AnalysisConfig) -> Result<BSplineBasis> {
    BSplineBasis::with_placement(cfg.basis_order, cfg.basis_q, ds.grid(), cfg.knots)
}

/// Test one contrast on `ds` with the configured method. Permutation seeds
/// are derived from the run seed and the contrast indices.
pub fn test_contrast(ds: &FunctionalDataset, contrast: &ContrastSpec, cfg: &AnalysisConfig) -> Result<TestReport> {
    match cfg.method {
        TestMethod::Classic => classic_test(&pointwise_f(ds, contrast)?, cfg.alpha, cfg.min_zone_points),
        TestMethod::Permutation => permutation_test(
            ds,
            contrast,
            &PermutationConfig {
                n_perm: cfg.n_perm,
                alpha: cfg.alpha,
                seed: derive_seed(cfg.seed, &[contrast.variate as u64, contrast.group as u64]),
                mode: cfg.perm_mode,
                min_zone_points: cfg.min_zone_points,
            },
        ),
    }
}

pub fn analyze(ds: &FunctionalDataset, cfg: &AnalysisConfig) -> Result<Analysis> {
    let basis = build_basis(ds, cfg)?;
    let smoother = Smoother::new(&basis, ds.grid(), cfg.ridge)?;
    let coefficients = smoother.smooth_dataset(ds)?;
    let design = build_design(ds.n_treatments(), ds.units_per_group(), ds.n_variates())?;
    let model = fit_fanova(
        &coefficients,
        &design,
        &basis.gram(),
        &basis,
        ds.group_labels(),
        ds.variate_labels(),
    )?;
    let kernels = extract_kernels(&model, ds.grid())?;
    let tested = if cfg.raw_tests {
        ds.clone()
    } else {
        smoother.smoothed_dataset(ds)?
    };
    let reports = ContrastSpec::all(ds)
        .iter()
        .map(|c| test_contrast(&tested, c, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(Analysis {
        basis,
        coefficients,
        model,
        kernels,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub kernel_set: KernelSet,
    pub weights: CombinationWeights,
    pub model: ClassifierModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub unit_id: String,
    pub truth: Option<usize>,
    pub predicted: usize,
}

impl TrainedClassifier {
    pub fn fit(analysis: &Analysis, training: &FunctionalDataset, cfg: &AnalysisConfig) -> Result<Self> {
        let kernel_set = KernelSet::new(&analysis.kernels, &analysis.reports, cfg.zone_scope, cfg.interval_weight)?;
        let mut table = ScoreTable::build(&training.labeled_units(), &kernel_set)?;
        let n_groups = kernel_set.n_groups();
        let weights = {
            let (samples, labels) = table.training_set();
            train_weights(&samples, &labels, n_groups, &cfg.weights)?
        };
        table.apply_weights(&weights)?;
        let labels: Vec<usize> = table.units.iter().filter_map(|u| u.label).collect();
        let model = train_classifier(&table.features(), &labels, n_groups, &cfg.svm)?;
        Ok(Self {
            kernel_set,
            weights,
            model,
        })
    }

    pub fn score_table(&self, units: &[LabeledUnit]) -> Result<ScoreTable> {
        let mut table = ScoreTable::build(units, &self.kernel_set)?;
        table.apply_weights(&self.weights)?;
        Ok(table)
    }

    pub fn predict(&self, units: &[LabeledUnit]) -> Result<Vec<Prediction>> {
        let table = self.score_table(units)?;
        table
            .units
            .iter()
            .map(|u| {
                Ok(Prediction {
                    unit_id: u.unit_id.clone(),
                    truth: u.label,
                    predicted: self.model.predict(&u.combined)?,
                })
            })
            .collect()
    }
}

/// Fraction of labelled predictions that are correct; `None` if none are labelled.
pub fn accuracy(predictions: &[Prediction]) -> Option<f64> {
    let labelled: Vec<&Prediction> = predictions.iter().filter(|p| p.truth.is_some()).collect();
    if labelled.is_empty() {
        return None;
    }
    let hits = labelled.iter().filter(|p| p.truth == Some(p.predicted)).count();
    Some(hits as f64 / labelled.len() as f64)
}

/// `m[truth][predicted]` counts over labelled predictions.
pub fn confusion_matrix(predictions: &[Prediction], n_groups: usize) -> Result<Vec<Vec<usize>>> {
    let mut m = vec![vec![0; n_groups]; n_groups];
    for p in predictions {
        if let Some(t) = p.truth {
            if t >= n_groups || p.predicted >= n_groups {
                return Err(Error::contract("prediction label out of range"));
            }
            m[t][p.predicted] += 1;
        }
    }
    Ok(m)
}
