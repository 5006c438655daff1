//! Functional principal components on basis coefficients.
//!
//! With curves `x(t) = aᵀΘ(t)` the covariance operator acts on coefficient
//! vectors through `S J`, where `S` is the coefficient covariance and `J`
//! the Gram matrix. Its eigenproblem is solved in the symmetric form
//! `J^{1/2} S J^{1/2} v = η v`, and eigenfunctions have coefficients
//! `J^{-1/2} v`, orthonormal under `⟨a, b⟩ = aᵀJb`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{CoefficientMatrix, GramMatrix};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative threshold below which an eigenvalue is reported as numerically null.
pub const NULL_EIGENVALUE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    /// Nonincreasing, clipped at 0.
    pub eigenvalues: Vec<f64>,
    /// Coefficient vector of each eigenfunction, same order as `eigenvalues`.
    pub eigenfunctions: Vec<Vec<f64>>,
    /// `eigenvalues[j] < 1e-12 · eigenvalues[0]`.
    pub numerically_null: Vec<bool>,
    #[serde(skip)]
    gram: Option<DMatrix<f64>>,
}

/// Which coefficient rows to pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Selector {
    pub group: Option<usize>,
    pub variate: usize,
}

fn selected_rows(coeffs: &CoefficientMatrix, sel: Selector) -> Result<Vec<Vec<f64>>> {
    if sel.variate >= coeffs.n_variates() {
        return Err(Error::Selection(format!("variate {} does not exist", sel.variate)));
    }
    let groups: Vec<usize> = match sel.group {
        Some(g) if g >= coeffs.n_groups() => return Err(Error::Selection(format!("group {g} does not exist"))),
        Some(g) => vec![g],
        None => (0..coeffs.n_groups()).collect(),
    };
    let rows: Vec<Vec<f64>> = groups
        .iter()
        .flat_map(|&g| (0..coeffs.units()).map(move |k| (g, k)))
        .map(|(g, k)| coeffs.row(g, sel.variate, k))
        .collect();
    if rows.is_empty() {
        return Err(Error::Selection("no rows selected".into()));
    }
    Ok(rows)
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let q = rows[0].len();
    DMatrix::from_fn(rows.len(), q, |r, c| rows[r][c])
}

/// Arithmetic mean of the selected coefficient rows.
pub fn mean_function(coeffs: &CoefficientMatrix, sel: Selector) -> Result<Vec<f64>> {
    mean_of_rows(&to_matrix(&selected_rows(coeffs, sel)?))
}

pub fn mean_of_rows(rows: &DMatrix<f64>) -> Result<Vec<f64>> {
    if rows.nrows() == 0 {
        return Err(Error::Selection("no rows selected".into()));
    }
    Ok(rows.row_mean().iter().copied().collect())
}

/// Stack the `D` per-variate coefficient blocks of each unit of `group` (or
/// all groups) into rows of length `D·Q`; pair with
/// [`GramMatrix::block_diagonal`].
pub fn multivariate_rows(coeffs: &CoefficientMatrix, group: Option<usize>) -> Result<DMatrix<f64>> {
    let groups: Vec<usize> = match group {
        Some(g) if g >= coeffs.n_groups() => return Err(Error::Selection(format!("group {g} does not exist"))),
        Some(g) => vec![g],
        None => (0..coeffs.n_groups()).collect(),
    };
    let q = coeffs.n_basis();
    let dq = coeffs.n_variates() * q;
    let mut m = DMatrix::zeros(groups.len() * coeffs.units(), dq);
    let mut r = 0;
    for &g in &groups {
        for k in 0..coeffs.units() {
            for d in 0..coeffs.n_variates() {
                let row = coeffs.row(g, d, k);
                for (c, v) in row.iter().enumerate() {
                    m[(r, d * q + c)] = *v;
                }
            }
            r += 1;
        }
    }
    Ok(m)
}

/// Eigen-decomposition of the covariance operator of `rows` (one curve per
/// row, in coefficient form). With `center = false` the uncentered second
/// moment `XᵀX / n` is used instead of the sample covariance.
pub fn covariance_eigen(rows: &DMatrix<f64>, gram: &GramMatrix, center: bool) -> Result<EigenSystem> {
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::Selection(format!("need at least 2 curves, got {n}")));
    }
    if rows.ncols() != gram.dim() {
        return Err(Error::contract(format!(
            "{} coefficients per row but Gram matrix is {}×{}",
            rows.ncols(),
            gram.dim(),
            gram.dim()
        )));
    }
    let s = if center {
        let mean = DVector::from_iterator(rows.ncols(), rows.row_mean().iter().copied());
        let mut c = rows.clone();
        for mut r in c.row_iter_mut() {
            r -= mean.transpose();
        }
        c.transpose() * c / (n as f64 - 1.0)
    } else {
        rows.transpose() * rows / n as f64
    };
    let inv_half = linalg::sym_inv_sqrt(gram.matrix())?;
    let half = gram.sqrt();
    let m = &half * s * &half;
    let (vals, vecs) = linalg::sym_eigen_sorted(&m);
    let eigenvalues: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    let numerically_null = eigenvalues.iter().map(|&v| v <= top * NULL_EIGENVALUE_RTOL).collect();
    let eigenfunctions = (0..vecs.ncols())
        .map(|j| (&inv_half * vecs.column(j)).iter().copied().collect())
        .collect();
    Ok(EigenSystem {
        eigenvalues,
        eigenfunctions,
        numerically_null,
        gram: Some(gram.matrix().clone()),
    })
}

/// Covariance eigen-system of one variate's coefficient rows.
pub fn covariance_eigen_selected(
    coeffs: &CoefficientMatrix,
    sel: Selector,
    gram: &GramMatrix,
    center: bool,
) -> Result<EigenSystem> {
    covariance_eigen(&to_matrix(&selected_rows(coeffs, sel)?), gram, center)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truncation {
    pub scores: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

/// Karhunen–Loève truncation: project `sample − mean` on the first `j_max`
/// eigenfunctions and rebuild.
pub fn kl_truncate(sample: &[f64], mean: &[f64], eig: &EigenSystem, j_max: usize) -> Result<Truncation> {
    let gram = eig
        .gram
        .as_ref()
        .ok_or_else(|| Error::contract("eigen-system has no Gram matrix attached"))?;
    if j_max == 0 || j_max > eig.eigenfunctions.len() {
        return Err(Error::contract(format!(
            "j_max = {j_max} outside 1..={}",
            eig.eigenfunctions.len()
        )));
    }
    if sample.len() != gram.nrows() || mean.len() != gram.nrows() {
        return Err(Error::contract("sample/mean length does not match the basis"));
    }
    let centered = DVector::from_iterator(sample.len(), sample.iter().zip(mean).map(|(s, m)| s - m));
    let jc = gram * &centered;
    let mut recon = DVector::from_column_slice(mean);
    let mut scores = Vec::with_capacity(j_max);
    for f in &eig.eigenfunctions[..j_max] {
        let f = DVector::from_column_slice(f);
        let score = f.dot(&jc);
        recon += &f * score;
        scores.push(score);
    }
    Ok(Truncation {
        scores,
        reconstruction: recon.iter().copied().collect(),
    })
}

impl EigenSystem {
    pub fn attach_gram(&mut self, gram: &GramMatrix) {
        self.gram = Some(gram.matrix().clone());
    }

    pub fn total_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BSplineBasis;

    fn gram() -> GramMatrix {
        BSplineBasis::uniform(4, 6, 1.0).unwrap().gram()
    }

    #[test]
    fn two_row_closed_form() {
        let j = gram();
        let eps = 0.3;
        let c = [1.0, 2.0, -1.0, 0.5, 0.0, 3.0];
        let mut rows = DMatrix::zeros(2, 6);
        for q in 0..6 {
            rows[(0, q)] = c[q];
            rows[(1, q)] = c[q];
        }
        rows[(0, 1)] += eps;
        rows[(1, 1)] -= eps;
        let eig = covariance_eigen(&rows, &j, true).unwrap();
        let j11 = j.matrix()[(1, 1)];
        assert!((eig.eigenvalues[0] - 2.0 * eps * eps * j11).abs() < 1e-12);
        assert!(eig.eigenvalues[1..].iter().all(|&v| v < 1e-14));
        let f = &eig.eigenfunctions[0];
        for (q, v) in f.iter().enumerate() {
            let expect = if q == 1 { 1.0 / j11.sqrt() } else { 0.0 };
            assert!((v.abs() - expect).abs() < 1e-8, "q={q}: {v}");
        }
    }

    #[test]
    fn identical_rows_have_zero_spectrum() {
        let rows = DMatrix::from_fn(4, 6, |_, c| c as f64);
        let eig = covariance_eigen(&rows, &gram(), true).unwrap();
        assert!(eig.eigenvalues.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn mean_of_opposites_is_zero() {
        let rows = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 3.0, -1.0, 2.0, -3.0]);
        assert_eq!(mean_of_rows(&rows).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn kl_trivial_cases() {
        let j = gram();
        let rows = DMatrix::from_fn(5, 6, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0);
        let eig = covariance_eigen(&rows, &j, true).unwrap();
        let mean = mean_of_rows(&rows).unwrap();
        let t = kl_truncate(&mean, &mean, &eig, 3).unwrap();
        assert!(t.scores.iter().all(|s| s.abs() < 1e-12));
        let perturbed: Vec<f64> = mean.iter().zip(&eig.eigenfunctions[0]).map(|(m, f)| m + 0.7 * f).collect();
        let t = kl_truncate(&perturbed, &mean, &eig, 4).unwrap();
        assert!((t.scores[0] - 0.7).abs() < 1e-10);
        assert!(t.scores[1..].iter().all(|s| s.abs() < 1e-10));
        assert!(kl_truncate(&mean, &mean, &eig, 0).is_err());
    }
}
