//! Random-knots and Random-knots-Spatial estimators.
//!
//! Under Bernoulli sparsification each node keeps coordinate `j` with
//! probability `p = js/d`. The Random-knots estimators rescale the zero-filled
//! vectors by `d/js`; the spatial variants instead rescale column `j` by
//! `β̄ / T(M_j)`, where `M_j` is the number of nodes that kept `j` and `T` is a
//! positive scaler on `{1..n}`.
//!
//! The closed-form mean squared errors are expressed through the energies
//! `R₁ = Σ_i ‖z_i‖⁴` and `R₂ = Σ_{i≠k} ⟨z_i, z_k⟩²` of the de-meaned rows
//! `z_i = x_i − m̄` (the Frobenius energies of the outer products `z_i z_iᵀ`).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{
    column_means, scaled_cross_product, subtract_row_vector, GridCovariance, GridFunction,
    NodeMatrix, Provenance,
};
use crate::sparsify::{CoverageCounts, Scheme, SparseBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerKind {
    Unit,
    Optimal,
    Avg,
    Custom,
}

/// Dense table of `T(r)` for `r = 1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialScaler {
    t_values: Vec<f64>,
    kind: ScalerKind,
}

impl SpatialScaler {
    /// `T ≡ 1`, which reduces the spatial estimators to Random-knots.
    pub fn unit(n: usize) -> Self {
        Self { t_values: vec![1.0; n], kind: ScalerKind::Unit }
    }

    pub fn custom(t_values: Vec<f64>) -> Result<Self> {
        Self::checked(t_values, ScalerKind::Custom)
    }

    fn checked(t_values: Vec<f64>, kind: ScalerKind) -> Result<Self> {
        if t_values.is_empty() {
            return Err(Error::InvalidInput("scaler needs at least one value".into()));
        }
        if let Some(r) = t_values.iter().position(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "scaler value T({}) = {} is not positive and finite",
                r + 1,
                t_values[r]
            )));
        }
        Ok(Self { t_values, kind })
    }

    pub fn n(&self) -> usize {
        self.t_values.len()
    }

    /// `T(r)` for `r` in `1..=n`.
    pub fn value(&self, r: usize) -> f64 {
        self.t_values[r - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.t_values
    }

    pub fn kind(&self) -> ScalerKind {
        self.kind
    }

    fn constant(&self) -> Option<f64> {
        let first = self.t_values[0];
        self.t_values.iter().all(|&t| t == first).then_some(first)
    }
}

/// MSE-optimal scaler `T*(r) = (1 + ratio·((r−1)/(n−1))²)^{1/2}` for the
/// energy ratio `ratio = R₂/R₁`.
pub fn t_optimal(ratio: f64, n: usize) -> Result<SpatialScaler> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::InvalidInput(format!("energy ratio must be >= 0, got {ratio}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("scaler needs n >= 1".into()));
    }
    let t = (1..=n)
        .map(|r| {
            if n == 1 {
                1.0
            } else {
                let s = (r - 1) as f64 / (n - 1) as f64;
                (1.0 + ratio * s * s).sqrt()
            }
        })
        .collect();
    SpatialScaler::checked(t, ScalerKind::Optimal)
}

/// Default scaler `T̃(r) = (1 + (n/2)((r−1)/(n−1))²)^{1/2}`, i.e. the optimal
/// scaler at the midpoint ratio `n/2`.
pub fn t_avg(n: usize) -> Result<SpatialScaler> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("average scaler needs n >= 2, got {n}")));
    }
    let mut s = t_optimal(n as f64 / 2.0, n)?;
    s.kind = ScalerKind::Avg;
    Ok(s)
}

/// Optimal scaler for the data at hand, using the ratio `R₂/R₁` (0 when every
/// row equals the mean).
pub fn optimal_scaler(x: &NodeMatrix) -> Result<SpatialScaler> {
    t_optimal(correlation_energy(x).ratio(), x.n())
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidInput(format!("retention probability must be in (0, 1], got {p}")));
    }
    Ok(())
}

/// Binomial(m, p) probabilities for `k = 0..=m`, evaluated in log space.
fn binomial_pmf(m: usize, p: f64) -> Vec<f64> {
    if p >= 1.0 {
        let mut v = vec![0.0; m + 1];
        v[m] = 1.0;
        return v;
    }
    let mut ln_fact = vec![0.0_f64; m + 1];
    for k in 2..=m {
        ln_fact[k] = ln_fact[k - 1] + (k as f64).ln();
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    (0..=m)
        .map(|k| {
            let ln_c = ln_fact[m] - ln_fact[k] - ln_fact[m - k];
            (ln_c + k as f64 * lp + (m - k) as f64 * lq).exp()
        })
        .collect()
}

fn check_scaler_len(t: &SpatialScaler, n: usize) -> Result<()> {
    if t.n() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("scaler over 1..={n}"),
            got: format!("scaler over 1..={}", t.n()),
        });
    }
    Ok(())
}

/// `β̄ = (Σ_{r=1}^n (p/T(r)) C(n−1, r−1) p^{r−1} (1−p)^{n−r})^{−1}`.
pub fn beta_bar(n: usize, p: f64, t: &SpatialScaler) -> Result<f64> {
    check_probability(p)?;
    check_scaler_len(t, n)?;
    if let Some(c) = t.constant() {
        return Ok(c / p);
    }
    let pmf = binomial_pmf(n - 1, p);
    let s: f64 = (1..=n).map(|r| p / t.value(r) * pmf[r - 1]).sum();
    Ok(1.0 / s)
}

/// `β̄` for retention `js` out of `d`; constant scalers give `c·d/js` exactly.
fn beta_bar_for(n: usize, d: usize, js: usize, t: &SpatialScaler) -> Result<f64> {
    check_scaler_len(t, n)?;
    match t.constant() {
        Some(c) => Ok(c * (d as f64 / js as f64)),
        None => beta_bar(n, js as f64 / d as f64, t),
    }
}

/// Normalisation and MSE constants of a Random-knots-Spatial estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialConstants {
    pub beta_bar: f64,
    pub c1: f64,
    pub c2: f64,
    pub p: f64,
    pub n: usize,
}

fn c1_value(n: usize, p: f64, t: &SpatialScaler, bb: f64) -> f64 {
    let pmf = binomial_pmf(n - 1, p);
    let s: f64 = (1..=n).map(|r| p / t.value(r).powi(2) * pmf[r - 1]).sum();
    bb * bb * s - 1.0 / p
}

fn c2_value(n: usize, p: f64, t: &SpatialScaler, bb: f64) -> f64 {
    let pmf = binomial_pmf(n - 2, p);
    let s: f64 = (2..=n).map(|r| p * p / t.value(r).powi(2) * pmf[r - 2]).sum();
    1.0 - bb * bb * s
}

/// `β̄`, `c₁` and `c₂` for `n` nodes, retention probability `p` and scaler `T`:
///
/// `c₁ = β̄² Σ_{r=1}^n p/T(r)² · C(n−1,r−1) p^{r−1}(1−p)^{n−r} − 1/p`
///
/// `c₂ = 1 − β̄² Σ_{r=2}^n p²/T(r)² · C(n−2,r−2) p^{r−2}(1−p)^{n−r}`
pub fn spatial_constants(n: usize, p: f64, t: &SpatialScaler) -> Result<SpatialConstants> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("spatial constants need n >= 2, got {n}")));
    }
    let beta_bar = beta_bar(n, p, t)?;
    let (c1, c2) = if t.constant().is_some() {
        (0.0, 0.0)
    } else {
        (c1_value(n, p, t, beta_bar), c2_value(n, p, t, beta_bar))
    };
    Ok(SpatialConstants { beta_bar, c1, c2, p, n })
}

/// Within-node energy `R₁` and cross-node energy `R₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationEnergy {
    pub r1: f64,
    pub r2: f64,
}

impl CorrelationEnergy {
    /// `R₂/R₁`, defined as 0 when `R₁ = 0`.
    pub fn ratio(&self) -> f64 {
        if self.r1 > 0.0 {
            self.r2 / self.r1
        } else {
            0.0
        }
    }
}

/// `R₁ = Σ_i ‖z_i‖⁴`, `R₂ = 2 Σ_{i<k} ⟨z_i z_iᵀ, z_k z_kᵀ⟩_F = 2 Σ_{i<k} ⟨z_i, z_k⟩²`.
///
/// `R₁ + R₂ = ‖Σ_i z_i z_iᵀ‖²_F` and `R₂/R₁ ∈ [0, n−1]`.
pub fn correlation_energy(x: &NodeMatrix) -> CorrelationEnergy {
    let mean = column_means(x.values());
    let z = subtract_row_vector(x.values(), &mean);
    let gram = &z * z.transpose();
    let n = x.n();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for i in 0..n {
        r1 += gram[(i, i)] * gram[(i, i)];
        for k in (i + 1)..n {
            r2 += 2.0 * gram[(i, k)] * gram[(i, k)];
        }
    }
    CorrelationEnergy { r1, r2 }
}

/// `E‖Ĝ − Ḡ‖²` of the Random-knots estimator: `(1/n²)((d/js)² − 1) R₁`.
pub fn closed_mse_rk(x: &NodeMatrix, js: usize) -> Result<f64> {
    closed_mse_rks(x, js, &SpatialScaler::unit(x.n()))
}

/// `E‖Ĝ − Ḡ‖²` of the Random-knots-Spatial estimator:
/// `(1/n²)((d/js + c₁)² − 1) R₁ + (1/n²)((1 − c₂)² − 1) R₂`.
pub fn closed_mse_rks(x: &NodeMatrix, js: usize, t: &SpatialScaler) -> Result<f64> {
    mse_from_energy(x.n(), x.d(), js, t, &correlation_energy(x))
}

/// The Random-knots-Spatial MSE formula evaluated for given energies.
pub fn mse_from_energy(
    n: usize,
    d: usize,
    js: usize,
    t: &SpatialScaler,
    energy: &CorrelationEnergy,
) -> Result<f64> {
    if js == 0 || js > d {
        return Err(Error::RetentionOutOfRange { js, d });
    }
    check_scaler_len(t, n)?;
    let scale = d as f64 / js as f64;
    let p = js as f64 / d as f64;
    let nn = (n * n) as f64;
    if n < 2 {
        // A single node has no cross-node term.
        let c1 = match t.constant() {
            Some(_) => 0.0,
            None => c1_value(n, p, t, beta_bar(n, p, t)?),
        };
        return Ok(((scale + c1).powi(2) - 1.0) * energy.r1 / nn);
    }
    let k = spatial_constants(n, p, t)?;
    Ok(((scale + k.c1).powi(2) - 1.0) * energy.r1 / nn
        + ((1.0 - k.c2).powi(2) - 1.0) * energy.r2 / nn)
}

/// How the sparsified values are centred before forming outer products.
#[derive(Debug, Clone, PartialEq)]
pub enum Centering {
    /// Subtract the column means `h̄_j` of the sparsified batch.
    Empirical,
    /// Subtract a known, non-random mean `m̄_j` from every retained entry;
    /// dropped entries contribute zero. This is the centring under which the
    /// closed-form MSE identities are derived, so it is intended for oracle
    /// checks where `m̄` is available.
    Fixed(GridFunction),
}

fn require_bernoulli(batch: &SparseBatch) -> Result<()> {
    if batch.scheme() != Scheme::Bernoulli {
        return Err(Error::SchemeMismatch { expected: "Bernoulli" });
    }
    Ok(())
}

fn scaled_mean(batch: &SparseBatch, factors: &[f64]) -> GridFunction {
    let means = column_means(batch.values());
    GridFunction::new(means.zip_map(&nalgebra::DVector::from_column_slice(factors), |m, f| m * f))
}

fn centered_values(batch: &SparseBatch, centering: &Centering) -> Result<DMatrix<f64>> {
    match centering {
        Centering::Empirical => Ok(subtract_row_vector(batch.values(), &column_means(batch.values()))),
        Centering::Fixed(center) => {
            if center.len() != batch.d() {
                return Err(Error::ShapeMismatch {
                    expected: format!("center of length {}", batch.d()),
                    got: format!("length {}", center.len()),
                });
            }
            let c = center.values();
            Ok(DMatrix::from_fn(batch.n(), batch.d(), |i, j| {
                if batch.is_retained(i, j) {
                    batch.values()[(i, j)] - c[j]
                } else {
                    0.0
                }
            }))
        }
    }
}

/// Random-knots mean `m̂ = (1/n)(d/js) Σ_i h_i`.
pub fn rk_mean(batch: &SparseBatch) -> Result<GridFunction> {
    require_bernoulli(batch)?;
    let f = batch.d() as f64 / batch.js() as f64;
    Ok(scaled_mean(batch, &vec![f; batch.d()]))
}

/// Random-knots covariance `Ĝ = (1/n)(d/js)² Σ_i (h_i − c)(h_i − c)ᵀ`.
pub fn rk_cov(batch: &SparseBatch, centering: &Centering) -> Result<GridCovariance> {
    require_bernoulli(batch)?;
    let f = batch.d() as f64 / batch.js() as f64;
    let centered = centered_values(batch, centering)?;
    Ok(GridCovariance::from_symmetric(
        scaled_cross_product(&centered, Some(&vec![f; batch.d()])),
        Provenance::RandomKnots,
    ))
}

/// Per-column factors `β̄/T(M_j)`, zero where `M_j = 0`.
fn spatial_factors(batch: &SparseBatch, coverage: &CoverageCounts, t: &SpatialScaler) -> Result<Vec<f64>> {
    if coverage.len() != batch.d() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} coverage counts", batch.d()),
            got: format!("{}", coverage.len()),
        });
    }
    let n = batch.n();
    let bb = beta_bar_for(n, batch.d(), batch.js(), t)?;
    coverage
        .counts()
        .iter()
        .map(|&m| match m {
            0 => Ok(0.0),
            m if m <= n => Ok(bb / t.value(m)),
            m => Err(Error::InvalidInput(format!("coverage count {m} exceeds n = {n}"))),
        })
        .collect()
}

/// Random-knots-Spatial mean `m̂_j = (1/n)(β̄/T(M_j)) Σ_i h_ij`; zero where
/// no node retained `j`.
pub fn rks_mean(batch: &SparseBatch, coverage: &CoverageCounts, t: &SpatialScaler) -> Result<GridFunction> {
    require_bernoulli(batch)?;
    let f = spatial_factors(batch, coverage, t)?;
    Ok(scaled_mean(batch, &f))
}

/// Random-knots-Spatial covariance
/// `Ĝ_jj' = (1/n) β̄²/(T(M_j)T(M_j')) Σ_i (h_ij − c_j)(h_ij' − c_j')`; rows and
/// columns with `M_j = 0` are zero.
pub fn rks_cov(
    batch: &SparseBatch,
    coverage: &CoverageCounts,
    t: &SpatialScaler,
    centering: &Centering,
) -> Result<GridCovariance> {
    require_bernoulli(batch)?;
    let f = spatial_factors(batch, coverage, t)?;
    let centered = centered_values(batch, centering)?;
    Ok(GridCovariance::from_symmetric(
        scaled_cross_product(&centered, Some(&f)),
        Provenance::RandomKnotsSpatial,
    ))
}
