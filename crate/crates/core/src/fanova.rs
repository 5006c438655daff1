//! Function-on-scalar FANOVA with a zero-sum constraint on group effects.
//!
//! For each variate `d` the model is `y_{g,d,k}(t) = μ_{d,0}(t) + α_{d,g}(t) + ε`,
//! `Σ_g α_{d,g}(t) = 0`. Curves and coefficient functions share one B-spline
//! basis, so with `A` the stacked data coefficients and `Z` the constrained
//! design, the functional least-squares estimate minimizes
//! `‖vec(J^{1/2}Aᵀ) − (Z ⊗ J^{1/2}) vec(Bᵀ)‖²`. Its normal equations
//! `[(ZᵀZ) ⊗ (J^{1/2}ᵀJ^{1/2})] vec(Bᵀ) = vec(J^{1/2}ᵀJ^{1/2} Aᵀ Z)` are solved
//! through the Kronecker factors without ever forming the product.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BSplineBasis, CoefficientMatrix, GramMatrix};
use crate::error::{Error, Result};
use crate::funcdata::TimeGrid;
use crate::linalg;

/// Block-diagonal 0/1 design, one block per variate.
///
/// Each block has `(G+1)·K` data rows (control group first, `K` rows per
/// group) followed by the constraint row `[0, 1, …, 1]`, and `G + 2` columns
/// `[grand mean, α_0, …, α_G]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n_treatments: usize,
    units: usize,
    n_variates: usize,
    entries: DMatrix<f64>,
}

pub fn build_design(n_treatments: usize, units: usize, n_variates: usize) -> Result<DesignMatrix> {
    if n_treatments < 1 || units < 1 || n_variates < 1 {
        return Err(Error::contract(format!(
            "design needs G ≥ 1, K ≥ 1, D ≥ 1 (got G={n_treatments}, K={units}, D={n_variates})"
        )));
    }
    let rows = (n_treatments + 1) * units + 1;
    let cols = n_treatments + 2;
    let mut entries = DMatrix::zeros(rows * n_variates, cols * n_variates);
    for d in 0..n_variates {
        let (r0, c0) = (d * rows, d * cols);
        for g in 0..=n_treatments {
            for k in 0..units {
                let r = r0 + g * units + k;
                entries[(r, c0)] = 1.0;
                entries[(r, c0 + 1 + g)] = 1.0;
            }
        }
        for c in 1..cols {
            entries[(r0 + rows - 1, c0 + c)] = 1.0;
        }
    }
    Ok(DesignMatrix {
        n_treatments,
        units,
        n_variates,
        entries,
    })
}

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn n_treatments(&self) -> usize {
        self.n_treatments
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn n_variates(&self) -> usize {
        self.n_variates
    }

    pub fn block_rows(&self) -> usize {
        (self.n_treatments + 1) * self.units + 1
    }

    pub fn block_cols(&self) -> usize {
        self.n_treatments + 2
    }

    /// The design block `Z_d` of variate `d`.
    pub fn block(&self, d: usize) -> DMatrix<f64> {
        let (r, c) = (self.block_rows(), self.block_cols());
        self.entries.view((d * r, d * c), (r, c)).into_owned()
    }
}

/// Estimated coefficient functions `β̂(t) = B̂ Θ(t)`.
///
/// Row `d·(G+2)` of `coefficients` is the grand mean of variate `d`; row
/// `d·(G+2) + 1 + g` is the effect `α_{d,g}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanovaModel {
    pub basis: BSplineBasis,
    pub group_labels: Vec<String>,
    pub variate_labels: Vec<String>,
    pub coefficients: Vec<Vec<f64>>,
}

impl FanovaModel {
    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn n_variates(&self) -> usize {
        self.variate_labels.len()
    }

    fn stride(&self) -> usize {
        self.n_groups() + 1
    }

    pub fn mean_coefs(&self, d: usize) -> &[f64] {
        &self.coefficients[d * self.stride()]
    }

    pub fn effect_coefs(&self, d: usize, g: usize) -> &[f64] {
        &self.coefficients[d * self.stride() + 1 + g]
    }

    pub fn mean_on(&self, d: usize, points: &[f64]) -> Result<Vec<f64>> {
        self.basis.evaluate(self.mean_coefs(d), points)
    }

    pub fn effect_on(&self, d: usize, g: usize, points: &[f64]) -> Result<Vec<f64>> {
        self.basis.evaluate(self.effect_coefs(d, g), points)
    }

    pub fn variate_index(&self, label: &str) -> Option<usize> {
        self.variate_labels.iter().position(|v| v == label)
    }

    pub fn group_index(&self, label: &str) -> Option<usize> {
        self.group_labels.iter().position(|v| v == label)
    }
}

/// Solve the functional least-squares problem for all variates.
pub fn fit_fanova(
    coeffs: &CoefficientMatrix,
    design: &DesignMatrix,
    gram: &GramMatrix,
    basis: &BSplineBasis,
    group_labels: &[String],
    variate_labels: &[String],
) -> Result<FanovaModel> {
    let n_groups = design.n_treatments() + 1;
    let q = gram.dim();
    if coeffs.n_groups() != n_groups || coeffs.units() != design.units() || coeffs.n_variates() != design.n_variates() {
        return Err(Error::contract(format!(
            "coefficients are {}×{}×{} (groups×variates×units) but design is {}×{}×{}",
            coeffs.n_groups(),
            coeffs.n_variates(),
            coeffs.units(),
            n_groups,
            design.n_variates(),
            design.units()
        )));
    }
    if coeffs.n_basis() != q || basis.len() != q {
        return Err(Error::contract("coefficient width, basis size and Gram dimension disagree"));
    }
    if group_labels.len() != n_groups || variate_labels.len() != design.n_variates() {
        return Err(Error::contract("label counts do not match the design"));
    }

    let half = gram.sqrt();
    let metric = half.transpose() * &half;
    let chol_metric = linalg::cholesky(&metric, "J^{1/2}ᵀJ^{1/2}")?;

    let blocks: Vec<Result<DMatrix<f64>>> = (0..design.n_variates())
        .into_par_iter()
        .map(|d| {
            let z = design.block(d);
            let ztz = z.transpose() * &z;
            let chol_z = linalg::cholesky(&ztz, "ZᵀZ")?;
            // A_d with the zero target of the constraint row appended
            let mut a = DMatrix::zeros(design.block_rows(), q);
            for g in 0..n_groups {
                for k in 0..design.units() {
                    a.row_mut(g * design.units() + k).copy_from(&coeffs.matrix().row(coeffs.row_index(g, d, k)));
                }
            }
            // (ZᵀZ ⊗ M) vec(X) = vec(M Aᵀ Z)  ⇔  M X (ZᵀZ) = M Aᵀ Z
            let rhs = &metric * a.transpose() * &z;
            let y = chol_metric.solve(&rhs);
            let x = chol_z.solve(&y.transpose());
            Ok(x)
        })
        .collect();

    let mut coefficients = Vec::with_capacity(design.n_variates() * design.block_cols());
    for block in blocks {
        let x = block?;
        for r in 0..x.nrows() {
            coefficients.push(x.row(r).iter().copied().collect());
        }
    }
    Ok(FanovaModel {
        basis: basis.clone(),
        group_labels: group_labels.to_vec(),
        variate_labels: variate_labels.to_vec(),
        coefficients,
    })
}

/// Sampled grand means and group effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernels {
    pub grid: TimeGrid,
    pub group_labels: Vec<String>,
    pub variate_labels: Vec<String>,
    /// `mean[d][i] = μ̂_{d,0}(t_i)`
    pub mean: Vec<Vec<f64>>,
    /// `effects[d][g][i] = α̂_{d,g}(t_i)`
    pub effects: Vec<Vec<Vec<f64>>>,
}

pub fn extract_kernels(model: &FanovaModel, grid: &TimeGrid) -> Result<Kernels> {
    let pts = grid.points();
    let mut mean = Vec::with_capacity(model.n_variates());
    let mut effects = Vec::with_capacity(model.n_variates());
    for d in 0..model.n_variates() {
        mean.push(model.mean_on(d, pts)?);
        effects.push(
            (0..model.n_groups())
                .map(|g| model.effect_on(d, g, pts))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(Kernels {
        grid: grid.clone(),
        group_labels: model.group_labels.clone(),
        variate_labels: model.variate_labels.clone(),
        mean,
        effects,
    })
}

impl Kernels {
    /// Long format `t,variate,group,value`; grand means use group `mean`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Numeric(format!("csv write failed: {e}"));
        wtr.write_record(["t", "variate", "group", "value"]).map_err(err)?;
        for (d, variate) in self.variate_labels.iter().enumerate() {
            for (i, t) in self.grid.points().iter().enumerate() {
                wtr.write_record([t.to_string(), variate.clone(), "mean".into(), self.mean[d][i].to_string()])
                    .map_err(err)?;
            }
            for (g, group) in self.group_labels.iter().enumerate() {
                for (i, t) in self.grid.points().iter().enumerate() {
                    wtr.write_record([t.to_string(), variate.clone(), group.clone(), self.effects[d][g][i].to_string()])
                        .map_err(err)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::Numeric(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    /// `max_i |Σ_g α̂_{d,g}(t_i)|` over all variates.
    pub fn max_constraint_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for per_d in &self.effects {
            for i in 0..self.grid.len() {
                worst = worst.max(per_d.iter().map(|e| e[i]).sum::<f64>().abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_design_matches_display() {
        let z = build_design(1, 1, 1).unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(z.matrix(), &expect);
    }

    #[test]
    fn column_sums_count_units() {
        let (g, k) = (3, 4);
        let z = build_design(g, k, 1).unwrap();
        let data = z.matrix().rows(0, (g + 1) * k);
        let sums = data.row_sum();
        assert_eq!(sums[0], ((g + 1) * k) as f64);
        for c in 1..g + 2 {
            assert_eq!(sums[c], k as f64);
        }
        for r in 0..(g + 1) * k {
            assert_eq!(data.row(r).sum(), 2.0);
        }
    }

    #[test]
    fn block_diagonal_layout_by_index_arithmetic() {
        let (g, k, d) = (2, 3, 2);
        let z = build_design(g, k, d).unwrap();
        let rows = (g + 1) * k + 1;
        let cols = g + 2;
        assert_eq!(z.matrix().shape(), (d * rows, d * cols));
        for r in 0..d * rows {
            for c in 0..d * cols {
                let (bd, rr) = (r / rows, r % rows);
                let (cd, cc) = (c / cols, c % cols);
                let expect = if bd != cd {
                    0.0
                } else if rr == rows - 1 {
                    if cc == 0 { 0.0 } else { 1.0 }
                } else if cc == 0 || cc == 1 + rr / k {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(z.matrix()[(r, c)], expect, "({r},{c})");
            }
        }
    }

    #[test]
    fn degenerate_design_rejected() {
        assert!(build_design(0, 3, 1).is_err());
    }

    #[test]
    fn kronecker_route_matches_materialized_product() {
        // tiny instance: materialize Z ⊗ J^{1/2} and solve the stacked least
        // squares problem directly
        let basis = BSplineBasis::uniform(3, 5, 1.0).unwrap();
        let gram = basis.gram();
        let (g, k) = (2, 2);
        let design = build_design(g, k, 1).unwrap();
        let q = basis.len();
        let rows = DMatrix::from_fn((g + 1) * k, q, |r, c| ((r * 5 + c * 3) % 7) as f64 * 0.25 - 0.6);
        let coeffs = CoefficientMatrix::new(g + 1, 1, k, rows.clone()).unwrap();
        let labels: Vec<String> = (0..=g).map(|i| format!("g{i}")).collect();
        let model = fit_fanova(&coeffs, &design, &gram, &basis, &labels, &["v".into()]).unwrap();

        let half = gram.sqrt();
        let z = design.matrix();
        let kron = z.kronecker(&half);
        let mut a = DMatrix::zeros(design.block_rows(), q);
        a.view_mut((0, 0), (rows.nrows(), q)).copy_from(&rows);
        let target = &half * a.transpose(); // Q × n, column-major vec
        let y = nalgebra::DVector::from_column_slice(target.as_slice());
        let sol = kron.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        // vec(Bᵀ): column c of Bᵀ (coefficient function c) is sol[c*q..(c+1)*q]
        for c in 0..design.block_cols() {
            for j in 0..q {
                assert!((sol[c * q + j] - model.coefficients[c][j]).abs() < 1e-10);
            }
        }
    }
}
