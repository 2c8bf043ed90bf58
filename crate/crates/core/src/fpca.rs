//! Eigen-analysis of grid covariances under the quadrature inner product
//! `⟨f, g⟩ = (1/d) Σ_j f(j/d) g(j/d)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{GridCovariance, GridFunction, NodeMatrix};

/// Fraction of variance the truncation must strictly exceed.
pub const FVE_THRESHOLD: f64 = 0.95;

/// Eigenvalues in descending order with eigenfunctions sampled on the grid
/// (column `k` is `ψ̂_k`, normalised so that `(1/d) Σ_j ψ̂_k(j/d)² = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    eigenvalues: DVector<f64>,
    raw_eigenvalues: DVector<f64>,
    eigenfunctions: DMatrix<f64>,
}

impl EigenSystem {
    /// Build from already normalised parts; `eigenvalues` must be descending.
    pub fn new(eigenvalues: DVector<f64>, eigenfunctions: DMatrix<f64>) -> Result<Self> {
        if eigenvalues.len() != eigenfunctions.ncols() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} eigenfunctions", eigenvalues.len()),
                got: format!("{}", eigenfunctions.ncols()),
            });
        }
        if eigenvalues.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput("eigenvalues must be sorted descending".into()));
        }
        let raw = eigenvalues.clone();
        Ok(Self { eigenvalues: raw.map(|v| v.max(0.0)), raw_eigenvalues: raw, eigenfunctions })
    }

    /// Eigenvalues with negatives clipped to zero.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Eigenvalues as returned by the solver.
    pub fn raw_eigenvalues(&self) -> &DVector<f64> {
        &self.raw_eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<f64> {
        &self.eigenfunctions
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn d(&self) -> usize {
        self.eigenfunctions.nrows()
    }

    /// `Σ_{k<m} λ̂_k ψ̂_k ψ̂_kᵀ` over the first `m` components.
    pub fn reconstruct(&self, m: usize) -> DMatrix<f64> {
        let psi = self.eigenfunctions.columns(0, m);
        let scaled = DMatrix::from_fn(self.d(), m, |j, k| psi[(j, k)] * self.raw_eigenvalues[k]);
        scaled * psi.transpose()
    }
}

/// Eigenpairs of `(1/d) G` with eigenvectors rescaled by `√d`. Each vector's
/// largest-magnitude entry is made positive.
pub fn eigendecompose(g: &GridCovariance) -> Result<EigenSystem> {
    let v = g.values();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance entry".into()));
    }
    let d = g.d();
    let sym = (v + v.transpose()) * (0.5 / d as f64);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = (d as f64).sqrt();
    let values = DVector::from_iterator(d, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let pivot = col.iter().enumerate().fold(0, |best, (j, x)| if x.abs() > col[best].abs() { j } else { best });
        let sign = if col[pivot] < 0.0 { -scale } else { scale };
        vectors.set_column(dst, &(col * sign));
    }
    EigenSystem::new(values, vectors)
}

/// Smallest `κ` whose leading clipped eigenvalues explain strictly more than
/// 95% of their total.
pub fn truncate_fve(eigs: &EigenSystem) -> Result<usize> {
    let lam = eigs.eigenvalues();
    let total: f64 = lam.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numeric("spectrum has no positive eigenvalue".into()));
    }
    let mut cum = 0.0;
    for (k, &l) in lam.iter().enumerate() {
        cum += l;
        // Relative slack keeps rounding from turning an exact 95% into "more".
        if cum - FVE_THRESHOLD * total > 1e-12 * total {
            return Ok(k + 1);
        }
    }
    Ok(lam.len())
}

/// FPC scores `ξ̂_ik`, an `n × κ` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub values: DMatrix<f64>,
}

/// `ξ̂_ik = λ̂_k^{−1/2} (1/d) Σ_j (h_i − m̂)(j/d) ψ̂_k(j/d)`.
pub fn fpc_scores(h: &NodeMatrix, mhat: &GridFunction, eigs: &EigenSystem, kappa: usize) -> Result<ScoreMatrix> {
    if h.d() != eigs.d() || mhat.len() != eigs.d() {
        return Err(Error::ShapeMismatch {
            expected: format!("grid of {} points", eigs.d()),
            got: format!("data {} / mean {}", h.d(), mhat.len()),
        });
    }
    if kappa > eigs.len() {
        return Err(Error::InvalidInput(format!("kappa {kappa} exceeds {} components", eigs.len())));
    }
    if let Some(k) = (0..kappa).find(|&k| !(eigs.eigenvalues()[k] > 0.0)) {
        return Err(Error::Numeric(format!("eigenvalue {} is not positive", k + 1)));
    }
    let mut centered = h.values().clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mhat.as_slice()[j]);
    }
    let d = eigs.d() as f64;
    let mut values = centered * eigs.eigenfunctions().columns(0, kappa) / d;
    for k in 0..kappa {
        let s = eigs.eigenvalues()[k].sqrt();
        values.column_mut(k).unscale_mut(s);
    }
    Ok(ScoreMatrix { values })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `1 − |⟨ψ̂, ψ⟩|`.
    HalfSquared,
    /// `(1 − ⟨ψ̂, ψ⟩²)^{1/2}`.
    Projection,
}

fn quad_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Sign `s ∈ {±1}` minimising `‖s ψ̂ − ψ‖` and the requested loss, after
/// normalising both vectors under the quadrature norm.
pub fn align_and_loss(est: &[f64], truth: &[f64], kind: LossKind) -> Result<(f64, f64)> {
    if est.len() != truth.len() || est.is_empty() {
        return Err(Error::ShapeMismatch {
            expected: format!("length {}", truth.len()),
            got: format!("length {}", est.len()),
        });
    }
    let (ne, nt) = (quad_dot(est, est).sqrt(), quad_dot(truth, truth).sqrt());
    if !(ne > 0.0 && nt > 0.0) {
        return Err(Error::InvalidInput("cannot align a zero vector".into()));
    }
    let c = (quad_dot(est, truth) / (ne * nt)).clamp(-1.0, 1.0);
    let sign = if c < 0.0 { -1.0 } else { 1.0 };
    let loss = match kind {
        LossKind::HalfSquared => 1.0 - c.abs(),
        LossKind::Projection => (1.0 - c * c).max(0.0).sqrt(),
    };
    Ok((sign, loss))
}

/// Index ranges of runs of (relatively) equal values in a descending list.
pub fn eigen_groups(values: &[f64], rtol: f64) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for k in 1..=values.len() {
        let split = k == values.len()
            || (values[k] - values[start]).abs() > rtol * values[start].abs().max(f64::MIN_POSITIVE);
        if split {
            groups.push(start..k);
            start = k;
        }
    }
    groups
}

/// Orthogonal `R` minimising `‖Ψ̂R − Ψ‖_F`, returned as `Ψ̂R` (columns are grid
/// functions under the quadrature norm).
pub fn procrustes_align(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> DMatrix<f64> {
    let m = est.transpose() * truth / est.nrows() as f64;
    let svd = m.svd(true, true);
    let r = svd.u.expect("requested U") * svd.v_t.expect("requested Vᵀ");
    est * r
}

/// Half the squared Frobenius distance between the eigenspace projectors,
/// `|S| − ‖Ψ̂ᵀΨ/d‖²_F`.
pub fn eigenspace_projection_loss(est: &DMatrix<f64>, truth: &DMatrix<f64>) -> f64 {
    let m = est.transpose() * truth / est.nrows() as f64;
    (truth.ncols() as f64 - m.norm_squared()).max(0.0)
}
