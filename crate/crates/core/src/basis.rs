//! Clamped B-spline bases, their Gram matrices, and penalized least-squares
//! smoothing of sampled curves into basis coefficients.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::funcdata::{FunctionalDataset, TimeGrid};
use crate::linalg;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnotPlacement {
    #[default]
    Uniform,
    /// Interior knots at quantiles of the sampling times.
    Quantile,
}

/// B-spline basis of a given order (degree + 1) on `[0, t_end]` with a
/// clamped knot vector: both endpoints repeated `order` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisSpec", into = "BasisSpec")]
pub struct BSplineBasis {
    order: usize,
    interior_knots: Vec<f64>,
    t_end: f64,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct BasisSpec {
    order: usize,
    knots: Vec<f64>,
    t_end: f64,
}

impl TryFrom<BasisSpec> for BSplineBasis {
    type Error = Error;
    fn try_from(s: BasisSpec) -> Result<Self> {
        BSplineBasis::new(s.order, s.knots, s.t_end)
    }
}

impl From<BSplineBasis> for BasisSpec {
    fn from(b: BSplineBasis) -> Self {
        BasisSpec {
            order: b.order,
            knots: b.interior_knots,
            t_end: b.t_end,
        }
    }
}

impl BSplineBasis {
    pub fn new(order: usize, interior_knots: Vec<f64>, t_end: f64) -> Result<Self> {
        if order < 2 {
            return Err(Error::contract(format!("B-spline order must be at least 2, got {order}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::contract(format!("basis domain end must be positive, got {t_end}")));
        }
        if interior_knots.iter().any(|&k| !(k > 0.0 && k < t_end)) {
            return Err(Error::contract("interior knots must lie strictly inside the domain"));
        }
        if interior_knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::contract("interior knots must be strictly increasing"));
        }
        let mut knots = vec![0.0; order];
        knots.extend_from_slice(&interior_knots);
        knots.extend(std::iter::repeat_n(t_end, order));
        Ok(Self {
            order,
            interior_knots,
            t_end,
            knots,
        })
    }

    /// `n_basis` functions with equally spaced interior knots.
    pub fn uniform(order: usize, n_basis: usize, t_end: f64) -> Result<Self> {
        if n_basis < order {
            return Err(Error::contract(format!("need at least {order} basis functions for order {order}")));
        }
        let m = n_basis - order;
        let knots = (1..=m).map(|i| i as f64 / (m + 1) as f64 * t_end).collect();
        Self::new(order, knots, t_end)
    }

    pub fn with_placement(order: usize, n_basis: usize, grid: &TimeGrid, placement: KnotPlacement) -> Result<Self> {
        match placement {
            KnotPlacement::Uniform => Self::uniform(order, n_basis, grid.t_end()),
            KnotPlacement::Quantile => {
                if n_basis < order {
                    return Err(Error::contract(format!("need at least {order} basis functions for order {order}")));
                }
                let m = n_basis - order;
                let pts = grid.points();
                let last = (pts.len() - 1) as f64;
                let knots = (1..=m)
                    .map(|i| {
                        let pos = i as f64 / (m + 1) as f64 * last;
                        let lo = pos.floor() as usize;
                        let hi = (lo + 1).min(pts.len() - 1);
                        pts[lo] + (pos - lo as f64) * (pts[hi] - pts[lo])
                    })
                    .collect();
                Self::new(order, knots, grid.t_end())
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    /// Number of basis functions `Q`.
    pub fn len(&self) -> usize {
        self.interior_knots.len() + self.order
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    /// Full clamped knot vector, length `Q + order`.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn span(&self, t: f64) -> usize {
        let q = self.len();
        if t >= self.t_end {
            return q - 1;
        }
        // last s in [order-1, q-1] with knots[s] <= t
        let (mut lo, mut hi) = (self.order - 1, q - 1);
        while lo < hi {
            let mid = (lo + hi + 1) / 2;
            if self.knots[mid] <= t {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        lo
    }

    /// The `order` possibly-nonzero basis values at `t` and the index of the
    /// first of them.
    pub fn eval_nonzero(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        if !(0.0..=self.t_end).contains(&t) {
            return Err(Error::Domain { t, t_end: self.t_end });
        }
        let p = self.degree();
        let s = self.span(t);
        let u = &self.knots;
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - u[s + 1 - j];
            right[j] = u[s + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        Ok((s - p, n))
    }

    /// All `Q` basis values `Θ(t)`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let (start, nz) = self.eval_nonzero(t)?;
        let mut out = vec![0.0; self.len()];
        out[start..start + nz.len()].copy_from_slice(&nz);
        Ok(out)
    }

    /// `n × Q` matrix of basis values at `points`.
    pub fn design(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(points.len(), self.len());
        for (i, &t) in points.iter().enumerate() {
            let (start, nz) = self.eval_nonzero(t)?;
            for (j, v) in nz.into_iter().enumerate() {
                m[(i, start + j)] = v;
            }
        }
        Ok(m)
    }

    /// Evaluate `Σ_q coefs[q] θ_q(t)` at each point.
    pub fn evaluate(&self, coefs: &[f64], points: &[f64]) -> Result<Vec<f64>> {
        if coefs.len() != self.len() {
            return Err(Error::contract(format!("{} coefficients for a {}-function basis", coefs.len(), self.len())));
        }
        points
            .iter()
            .map(|&t| {
                let (start, nz) = self.eval_nonzero(t)?;
                Ok(nz.iter().zip(&coefs[start..]).map(|(b, c)| b * c).sum())
            })
            .collect()
    }

    /// `J[i][j] = ∫ θ_i θ_j dt`, by Gauss–Legendre quadrature on every knot
    /// span with `order` nodes (exact for the degree `2·order − 2` products).
    pub fn gram(&self) -> GramMatrix {
        let q = self.len();
        let (nodes, weights) = gauss_legendre(self.order);
        let mut j = DMatrix::<f64>::zeros(q, q);
        let distinct: Vec<f64> = {
            let mut k = vec![0.0];
            k.extend_from_slice(&self.interior_knots);
            k.push(self.t_end);
            k
        };
        for span in distinct.windows(2) {
            let (a, b) = (span[0], span[1]);
            let half = 0.5 * (b - a);
            let mid = 0.5 * (a + b);
            for (x, w) in nodes.iter().zip(&weights) {
                let t = mid + half * x;
                let (start, nz) = self.eval_nonzero(t).expect("quadrature node inside domain");
                for (r, vr) in nz.iter().enumerate() {
                    for (c, vc) in nz.iter().enumerate().skip(r) {
                        j[(start + r, start + c)] += w * half * vr * vc;
                    }
                }
            }
        }
        for r in 0..q {
            for c in 0..r {
                j[(r, c)] = j[(c, r)];
            }
        }
        GramMatrix { entries: j }
    }
}

/// Inner products `∫ θ_i θ_j` of a basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
}

impl GramMatrix {
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::contract("Gram matrix must be square"));
        }
        Ok(Self { entries })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        linalg::sym_sqrt(&self.entries)
    }

    /// `⟨a, b⟩ = aᵀ J b` for coefficient vectors.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let a = DVector::from_column_slice(a);
        let b = DVector::from_column_slice(b);
        a.dot(&(&self.entries * b))
    }

    /// `D` copies of `J` on the diagonal, for stacked multivariate coefficients.
    pub fn block_diagonal(&self, copies: usize) -> GramMatrix {
        let q = self.dim();
        let mut m = DMatrix::zeros(q * copies, q * copies);
        for c in 0..copies {
            m.view_mut((c * q, c * q), (q, q)).copy_from(&self.entries);
        }
        GramMatrix { entries: m }
    }
}

/// Basis coefficients of every curve of a dataset, rows in (group, variate,
/// unit) order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    n_groups: usize,
    n_variates: usize,
    units: usize,
    rows: DMatrix<f64>,
}

impl CoefficientMatrix {
    pub fn new(n_groups: usize, n_variates: usize, units: usize, rows: DMatrix<f64>) -> Result<Self> {
        if rows.nrows() != n_groups * n_variates * units {
            return Err(Error::contract(format!(
                "expected {} coefficient rows, got {}",
                n_groups * n_variates * units,
                rows.nrows()
            )));
        }
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("non-finite coefficient"));
        }
        Ok(Self {
            n_groups,
            n_variates,
            units,
            rows,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_variates(&self) -> usize {
        self.n_variates
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn n_basis(&self) -> usize {
        self.rows.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn row_index(&self, g: usize, d: usize, k: usize) -> usize {
        (g * self.n_variates + d) * self.units + k
    }

    pub fn row(&self, g: usize, d: usize, k: usize) -> Vec<f64> {
        self.rows.row(self.row_index(g, d, k)).iter().copied().collect()
    }

    /// `group,variate,unit,c0,…,c{Q-1}` with group/variate/unit as indices.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Numeric(format!("csv write failed: {e}"));
        let mut header = vec!["group".to_string(), "variate".into(), "unit".into()];
        header.extend((0..self.n_basis()).map(|q| format!("c{q}")));
        wtr.write_record(&header).map_err(err)?;
        for g in 0..self.n_groups {
            for d in 0..self.n_variates {
                for k in 0..self.units {
                    let mut rec = vec![g.to_string(), d.to_string(), k.to_string()];
                    rec.extend(self.row(g, d, k).iter().map(|c| c.to_string()));
                    wtr.write_record(&rec).map_err(err)?;
                }
            }
        }
        wtr.flush().map_err(|e| Error::Numeric(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Penalized least-squares smoother for curves sampled on one fixed grid:
/// minimizes `Σ_i (y_i − Θ(t_i)ᵀa)² + ridge · aᵀJa`.
#[derive(Debug, Clone)]
pub struct Smoother {
    basis: BSplineBasis,
    design: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl Smoother {
    pub fn new(basis: &BSplineBasis, grid: &TimeGrid, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::contract(format!("ridge must be finite and nonnegative, got {ridge}")));
        }
        if grid.t_end() > basis.t_end() {
            return Err(Error::Domain {
                t: grid.t_end(),
                t_end: basis.t_end(),
            });
        }
        if ridge == 0.0 && basis.len() > grid.len() {
            return Err(Error::Conditioning(format!(
                "{} basis functions for {} sample points; use a positive ridge",
                basis.len(),
                grid.len()
            )));
        }
        let design = basis.design(grid.points())?;
        let mut normal = design.transpose() * &design;
        if ridge > 0.0 {
            normal += basis.gram().matrix() * ridge;
        }
        let chol = linalg::cholesky(&normal, "smoothing normal equations").map_err(|e| match e {
            Error::Conditioning(msg) => Error::Conditioning(format!("{msg}; use a positive ridge")),
            other => other,
        })?;
        Ok(Self {
            basis: basis.clone(),
            design,
            chol,
        })
    }

    pub fn basis(&self) -> &BSplineBasis {
        &self.basis
    }

    pub fn smooth(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.design.nrows() {
            return Err(Error::contract(format!(
                "{} values for a {}-point grid",
                values.len(),
                self.design.nrows()
            )));
        }
        let rhs = self.design.tr_mul(&DVector::from_column_slice(values));
        Ok(self.chol.solve(&rhs).iter().copied().collect())
    }

    /// Basis reconstruction on the smoother's grid.
    pub fn reconstruct(&self, coefs: &[f64]) -> Vec<f64> {
        (&self.design * DVector::from_column_slice(coefs)).iter().copied().collect()
    }

    pub fn smooth_dataset(&self, ds: &FunctionalDataset) -> Result<CoefficientMatrix> {
        let q = self.basis.len();
        let mut rows = DMatrix::zeros(ds.n_curves(), q);
        for (i, s) in ds.samples().iter().enumerate() {
            let a = self.smooth(&s.values)?;
            rows.row_mut(i).copy_from_slice(&a);
        }
        CoefficientMatrix::new(ds.n_groups(), ds.n_variates(), ds.units_per_group(), rows)
    }

    /// The dataset with every curve replaced by its smoothed reconstruction.
    pub fn smoothed_dataset(&self, ds: &FunctionalDataset) -> Result<FunctionalDataset> {
        ds.map_curves(|v| Ok(self.reconstruct(&self.smooth(v)?)))
    }
}

/// One-off smoothing of a single curve.
pub fn smooth_curve(values: &[f64], grid: &TimeGrid, basis: &BSplineBasis, ridge: f64) -> Result<Vec<f64>> {
    Smoother::new(basis, grid, ridge)?.smooth(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook recursive Cox–de Boor definition with the 0/0 = 0 convention,
    /// written independently of the triangular scheme above.
    fn cox_de_boor(knots: &[f64], i: usize, order: usize, t: f64, t_end: f64) -> f64 {
        if order == 1 {
            let (a, b) = (knots[i], knots[i + 1]);
            let last_span = b == t_end && a < b;
            return if (a <= t && t < b) || (last_span && t == t_end) { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + order - 1] - knots[i];
        if d1 > 0.0 {
            v += (t - knots[i]) / d1 * cox_de_boor(knots, i, order - 1, t, t_end);
        }
        let d2 = knots[i + order] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + order] - t) / d2 * cox_de_boor(knots, i + 1, order - 1, t, t_end);
        }
        v
    }

    #[test]
    fn matches_recursive_oracle() {
        // order 4 with 8 uniform interior knots
        let b = BSplineBasis::uniform(4, 12, 1.0).unwrap();
        for &t in &[0.0, 0.05, 0.3, 0.5, 0.777, 1.0 / 9.0, 0.999, 1.0] {
            let fast = b.eval(t).unwrap();
            for (i, v) in fast.iter().enumerate() {
                let slow = cox_de_boor(b.knots(), i, 4, t, 1.0);
                assert!((v - slow).abs() < 1e-14, "t={t} i={i}: {v} vs {slow}");
            }
        }
    }

    #[test]
    fn clamped_endpoints_and_domain() {
        let b = BSplineBasis::uniform(3, 7, 2.0).unwrap();
        let at0 = b.eval(0.0).unwrap();
        assert_eq!(at0[0], 1.0);
        assert!(at0[1..].iter().all(|&v| v == 0.0));
        let at_end = b.eval(2.0).unwrap();
        assert_eq!(*at_end.last().unwrap(), 1.0);
        assert!(matches!(b.eval(2.5), Err(Error::Domain { .. })));
        assert!(matches!(b.eval(-0.1), Err(Error::Domain { .. })));
    }

    #[test]
    fn gram_matches_dense_trapezoid() {
        let b = BSplineBasis::uniform(4, 8, 1.0).unwrap();
        let j = b.gram();
        let n = 100_000;
        let pts: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let vals: Vec<Vec<f64>> = pts.iter().map(|&t| b.eval(t).unwrap()).collect();
        let h = 1.0 / n as f64;
        for r in 0..8 {
            for c in 0..8 {
                let mut s = 0.0;
                for i in 0..n {
                    s += 0.5 * h * (vals[i][r] * vals[i][c] + vals[i + 1][r] * vals[i + 1][c]);
                }
                assert!((s - j.matrix()[(r, c)]).abs() < 1e-8, "({r},{c})");
            }
        }
    }

    #[test]
    fn gram_total_and_band() {
        let b = BSplineBasis::uniform(4, 20, 3.0).unwrap();
        let j = b.gram();
        assert!((j.matrix().sum() - 3.0).abs() < 1e-12);
        for r in 0..20usize {
            for c in 0..20usize {
                if r.abs_diff(c) >= 4 {
                    assert_eq!(j.matrix()[(r, c)], 0.0);
                }
                assert_eq!(j.matrix()[(r, c)], j.matrix()[(c, r)]);
            }
        }
    }

    #[test]
    fn smoothing_exact_cases() {
        let grid = TimeGrid::uniform(50, 1.0).unwrap();
        let b = BSplineBasis::uniform(4, 10, 1.0).unwrap();
        let theta3: Vec<f64> = grid.points().iter().map(|&t| b.eval(t).unwrap()[3]).collect();
        let a = smooth_curve(&theta3, &grid, &b, 0.0).unwrap();
        for (q, v) in a.iter().enumerate() {
            let expect = if q == 3 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-10, "q={q}: {v}");
        }
        let c = smooth_curve(&[1.75; 50], &grid, &b, 0.0).unwrap();
        assert!(c.iter().all(|v| (v - 1.75).abs() < 1e-10));
    }

    #[test]
    fn underdetermined_smoothing_needs_ridge() {
        let grid = TimeGrid::uniform(6, 1.0).unwrap();
        let b = BSplineBasis::uniform(4, 10, 1.0).unwrap();
        assert!(matches!(smooth_curve(&[0.0; 6], &grid, &b, 0.0), Err(Error::Conditioning(_))));
        assert!(smooth_curve(&[0.0; 6], &grid, &b, 1e-3).is_ok());
    }

    #[test]
    fn quantile_knots_on_uniform_grid_are_uniform() {
        let grid = TimeGrid::uniform(101, 1.0).unwrap();
        let u = BSplineBasis::with_placement(4, 9, &grid, KnotPlacement::Uniform).unwrap();
        let q = BSplineBasis::with_placement(4, 9, &grid, KnotPlacement::Quantile).unwrap();
        for (a, b) in u.interior_knots().iter().zip(q.interior_knots()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn basis_json_roundtrip() {
        let b = BSplineBasis::uniform(4, 9, 1.0).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert!(s.contains("\"order\":4"));
        let back: BSplineBasis = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
    }
}
