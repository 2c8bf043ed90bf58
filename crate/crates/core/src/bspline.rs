//! B-spline bases on equispaced knots, least-squares trajectory smoothing and
//! the B-spline / Bspline-Spatial estimators.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{
    column_means, sample_cov, uniform_grid, GridCovariance, GridFunction, NodeMatrix, Provenance,
};
use crate::random_knots::{rks_cov, rks_mean, Centering, SpatialScaler};
use crate::sparsify::{coverage_counts, SparseBatch};

/// Refuse normal equations whose condition number exceeds this.
pub const MAX_CONDITION: f64 = 1e12;

/// Equispaced interior knots `ℓ/(js+1)` with `p` boundary copies at each end.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    interior: Vec<f64>,
    order: usize,
    augmented: Vec<f64>,
}

impl KnotVector {
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }

    /// Spline order `p` (degree `p − 1`).
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn augmented(&self) -> &[f64] {
        &self.augmented
    }

    pub fn js(&self) -> usize {
        self.interior.len()
    }

    /// Number of basis functions, `js + p`.
    pub fn n_basis(&self) -> usize {
        self.interior.len() + self.order
    }
}

pub fn make_knots(js: usize, p: usize) -> Result<KnotVector> {
    if js == 0 || p == 0 {
        return Err(Error::InvalidInput(format!(
            "knots need js >= 1 and order >= 1, got js = {js}, order = {p}"
        )));
    }
    let interior: Vec<f64> = (1..=js).map(|l| l as f64 / (js + 1) as f64).collect();
    let mut augmented = vec![0.0; p];
    augmented.extend_from_slice(&interior);
    augmented.extend(std::iter::repeat_n(1.0, p));
    Ok(KnotVector { interior, order: p, augmented })
}

/// Zero-based knot span containing `t`; `t = 1` belongs to the last span.
fn find_span(t: f64, knots: &KnotVector) -> usize {
    let p = knots.order;
    p - 1 + knots.interior.partition_point(|&k| k <= t).min(knots.js())
}

/// All `js + p` basis values at `t` (Cox–de Boor recursion).
pub fn eval_basis(t: f64, knots: &KnotVector) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidInput(format!("basis evaluated outside [0, 1] at t = {t}")));
    }
    let mut out = vec![0.0; knots.n_basis()];
    let span = find_span(t, knots);
    let local = local_basis(t, span, knots);
    let first = span + 1 - knots.order;
    out[first..=span].copy_from_slice(&local);
    Ok(out)
}

/// The `p` possibly nonzero basis values on `span`, for functions
/// `span−p+1 ..= span`.
fn local_basis(t: f64, span: usize, knots: &KnotVector) -> Vec<f64> {
    let u = &knots.augmented;
    let deg = knots.order - 1;
    let mut n = vec![0.0; deg + 1];
    let mut left = vec![0.0; deg + 1];
    let mut right = vec![0.0; deg + 1];
    n[0] = 1.0;
    for j in 1..=deg {
        left[j] = t - u[span + 1 - j];
        right[j] = u[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        n[j] = saved;
    }
    n
}

/// Design matrix `B` (rows at `j/d`) and the Gram matrix `V = d⁻¹ BᵀB`.
#[derive(Debug, Clone)]
pub struct SplineBasis {
    knots: KnotVector,
    design: DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl SplineBasis {
    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn d(&self) -> usize {
        self.design.nrows()
    }

    /// Least-squares coefficients for each column of `rhs` (`d × m`).
    fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(&(self.design.transpose() * rhs))
    }
}

/// Cholesky factor of a normal-equation matrix, refusing near-singular ones.
fn guarded_cholesky(ata: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let eig = SymmetricEigen::new(ata.clone()).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    Cholesky::new(ata).ok_or(Error::IllConditioned { condition })
}

pub fn design_matrix(d: usize, knots: &KnotVector) -> Result<SplineBasis> {
    let k = knots.n_basis();
    if d < k {
        return Err(Error::Underdetermined { retained: d, params: k });
    }
    let mut design = DMatrix::zeros(d, k);
    for (row, t) in uniform_grid(d).into_iter().enumerate() {
        let span = find_span(t, knots);
        let first = span + 1 - knots.order;
        for (off, v) in local_basis(t, span, knots).into_iter().enumerate() {
            design[(row, first + off)] = v;
        }
    }
    let btb = design.transpose() * &design;
    let chol = guarded_cholesky(btb.clone())?;
    let gram = btb / d as f64;
    Ok(SplineBasis { knots: knots.clone(), design, gram, chol })
}

/// `S = B(BᵀB)⁻¹Bᵀ`.
pub fn smoother_matrix(basis: &SplineBasis) -> DMatrix<f64> {
    let d = basis.d();
    &basis.design * basis.solve(&DMatrix::identity(d, d))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FitMode {
    /// Least squares over all `d` grid points.
    Full,
    /// Least squares over the retained columns only (zero-based), evaluated
    /// back on the full grid.
    SparseKnotsOnly { positions: Vec<usize> },
}

/// Smoothed trajectories `h_i`, one per row of `x`.
pub fn fit_batch(x: &NodeMatrix, basis: &SplineBasis, mode: &FitMode) -> Result<NodeMatrix> {
    if x.d() != basis.d() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} grid points", basis.d()),
            got: format!("{}", x.d()),
        });
    }
    let coef = match mode {
        FitMode::Full => basis.solve(&x.values().transpose()),
        FitMode::SparseKnotsOnly { positions } => {
            let k = basis.knots.n_basis();
            if positions.len() < k {
                return Err(Error::Underdetermined { retained: positions.len(), params: k });
            }
            if let Some(&bad) = positions.iter().find(|&&j| j >= x.d()) {
                return Err(Error::InvalidInput(format!("retained position {bad} outside grid")));
            }
            let sub = basis.design.select_rows(positions.iter());
            // SVD rather than normal equations: the retained rows can be
            // nearly square, where squaring the condition number costs digits.
            let svd = sub.svd(true, true);
            let (lo, hi) =
                svd.singular_values.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let condition = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
            if condition > MAX_CONDITION {
                return Err(Error::IllConditioned { condition });
            }
            let xs = x.values().select_columns(positions.iter());
            svd.solve(&xs.transpose(), 0.0).map_err(|e| Error::Numeric(e.to_string()))?
        }
    };
    NodeMatrix::new((&basis.design * coef).transpose())
}

/// `m̂ = (1/n) Σ_i h_i`.
pub fn bspline_mean(h: &NodeMatrix) -> GridFunction {
    GridFunction::new(column_means(h.values()))
}

/// `Ĝ = (1/n) Σ_i (h_i − m̂)(h_i − m̂)ᵀ`.
pub fn bspline_cov(h: &NodeMatrix) -> GridCovariance {
    sample_cov(h).with_provenance(Provenance::Bspline)
}

/// Random-knots-Spatial mean and covariance evaluated on the smoothed values
/// retained by `mask` (empirical centring).
pub fn bspline_spatial(
    h: &NodeMatrix,
    mask: &SparseBatch,
    t: &SpatialScaler,
) -> Result<(GridFunction, GridCovariance)> {
    let batch = SparseBatch::with_mask(h, mask.js(), mask.mask().clone())?;
    let m = coverage_counts(&batch);
    let mean = rks_mean(&batch, &m, t)?;
    let cov = rks_cov(&batch, &m, t, &Centering::Empirical)?.with_provenance(Provenance::BsplineSpatial);
    Ok((mean, cov))
}
