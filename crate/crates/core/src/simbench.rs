//! Synthetic generator and replication harness.
//!
//! Curves follow `x_i(t) = m(t) + Σ_{k≤k0} ξ_ik √λ_k ψ_k(t)` with
//! `m(t) = sin(2π(t − 1/2))`, `ψ_{2k−1} = √2 cos(2kπt)`, `ψ_{2k} = √2 sin(2kπt)`,
//! `λ_k = (1/4)^{[k/2]}` and iid standard normal scores.
//!
//! Seeds: replicate `(n, d, r)` uses `derive_seed(seed, [n, d, r])`; within a
//! replicate, row `i` of the score matrix is drawn from ChaCha stream `i`, so
//! raising `k0` leaves earlier scores untouched.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bspline::{bspline_cov, bspline_mean, bspline_spatial, design_matrix, fit_batch, make_knots, FitMode};
use crate::error::{Error, Result};
use crate::fpca::{
    align_and_loss, eigen_groups, eigendecompose, eigenspace_projection_loss, procrustes_align,
    EigenSystem, LossKind,
};
use crate::grid::{
    frobenius_mse, sample_cov, sample_mean, uniform_grid, GridCovariance, GridFunction, NodeMatrix, Provenance,
};
use crate::random_knots::{optimal_scaler, rk_cov, rk_mean, rks_cov, rks_mean, t_avg, Centering, SpatialScaler};
use crate::selection::{select_knots, SelectionMethod};
use crate::sparsify::{bernoulli_sparsify, coverage_counts, derive_seed, fixed_positions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigenConvention {
    /// `λ_k = (1/4)^{⌊k/2⌋}`: 1, 1/4, 1/4, 1/16, 1/16, …
    Floor,
    /// `λ_k = (1/4)^{⌈k/2⌉}`: 1/4, 1/4, 1/16, 1/16, …
    Ceil,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n: usize,
    pub d: usize,
    pub k0: usize,
    pub convention: EigenConvention,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(n: usize, d: usize, seed: u64) -> Self {
        Self { n, d, k0: 1000, convention: EigenConvention::Floor, seed }
    }
}

/// `m(t) = sin(2π(t − 1/2))`.
pub fn mean_function(t: f64) -> f64 {
    (2.0 * PI * (t - 0.5)).sin()
}

/// `ψ_k(t)`, `k ≥ 1`.
pub fn eigenfunction(k: usize, t: f64) -> f64 {
    let freq = ((k + 1) / 2) as f64;
    if k % 2 == 1 {
        SQRT_2 * (2.0 * freq * PI * t).cos()
    } else {
        SQRT_2 * (2.0 * freq * PI * t).sin()
    }
}

/// `λ_k`, `k ≥ 1`.
pub fn eigenvalue(k: usize, convention: EigenConvention) -> f64 {
    let e = match convention {
        EigenConvention::Floor => k / 2,
        EigenConvention::Ceil => k.div_ceil(2),
    };
    0.25_f64.powi(e as i32)
}

/// Data with the quantities it was generated from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: NodeMatrix,
    pub mean: GridFunction,
    pub cov: GridCovariance,
    pub eigenvalues: Vec<f64>,
    /// `n × k0` standard normal scores `ξ_ik`.
    pub scores: DMatrix<f64>,
}

/// `ψ_k(j/d)` scaled by `√λ_k`, a `d × k0` matrix.
fn scaled_eigenfunctions(d: usize, k0: usize, convention: EigenConvention) -> DMatrix<f64> {
    let grid = uniform_grid(d);
    DMatrix::from_fn(d, k0, |j, k| eigenvalue(k + 1, convention).sqrt() * eigenfunction(k + 1, grid[j]))
}

pub fn generate_dataset(spec: &GeneratorSpec) -> Result<Dataset> {
    let GeneratorSpec { n, d, k0, convention, seed } = *spec;
    if n == 0 || d == 0 || k0 == 0 {
        return Err(Error::InvalidInput(format!("generator needs n, d, k0 >= 1, got {n}, {d}, {k0}")));
    }
    let mut scores = DMatrix::<f64>::zeros(n, k0);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        for k in 0..k0 {
            scores[(i, k)] = StandardNormal.sample(&mut rng);
        }
    }
    let phi = scaled_eigenfunctions(d, k0, convention);
    let mean: Vec<f64> = uniform_grid(d).into_iter().map(mean_function).collect();
    let mut x: DMatrix<f64> = &scores * phi.transpose();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        col.add_scalar_mut(mean[j]);
    }
    let cov = GridCovariance::new(&phi * phi.transpose(), Provenance::Truth)?;
    Ok(Dataset {
        x: NodeMatrix::new(x)?,
        mean: GridFunction::from_vec(mean),
        cov,
        eigenvalues: (1..=k0).map(|k| eigenvalue(k, convention)).collect(),
        scores,
    })
}

/// The analytic leading `kmax` eigenpairs on the grid.
pub fn true_eigensystem(d: usize, kmax: usize, convention: EigenConvention) -> Result<EigenSystem> {
    let grid = uniform_grid(d);
    let values = DVector::from_fn(kmax, |k, _| eigenvalue(k + 1, convention));
    let mut vectors = DMatrix::from_fn(d, kmax, |j, k| eigenfunction(k + 1, grid[j]));
    // Ceil has no unpaired leading value, so order is already descending for
    // both conventions; keep the sign convention of `eigendecompose`.
    for mut col in vectors.column_iter_mut() {
        let pivot = col.iamax();
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
    }
    EigenSystem::new(values, vectors)
}

/// Mean normalised Frobenius MSE over `(estimate, reference)` pairs.
pub fn amse_cov(pairs: &[(GridCovariance, GridCovariance)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no replicates".into()));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        total += frobenius_mse(a, b, true)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Per-replicate eigen errors against the truth over the leading `kappa`
/// components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenErrors {
    /// `(1/κ) Σ_k (λ̂_k − λ_k)²`.
    pub lambda: f64,
    /// `(1/(dκ)) Σ_k Σ_j (φ̂_k − φ_k)²(j/d)` with `φ = √λ ψ`, each `ψ̂_k`
    /// sign-aligned to `ψ_k`.
    pub phi_sign: f64,
    /// As `phi_sign`, but `ψ̂` is rotated within each group of equal true
    /// eigenvalues before comparison.
    pub phi_eigenspace: f64,
    /// `(1/κ) Σ_groups (|S| − ‖Ψ̂_Sᵀ Ψ_S/d‖²_F)`.
    pub projection: f64,
}

const GROUP_RTOL: f64 = 1e-9;

pub fn eigen_errors(est: &EigenSystem, truth: &EigenSystem, kappa: usize) -> Result<EigenErrors> {
    if kappa == 0 || kappa > est.len() || kappa > truth.len() {
        return Err(Error::InvalidInput(format!(
            "kappa {kappa} outside the available {} / {} components",
            est.len(),
            truth.len()
        )));
    }
    if est.d() != truth.d() {
        return Err(Error::ShapeMismatch { expected: format!("d = {}", truth.d()), got: format!("d = {}", est.d()) });
    }
    let d = truth.d();
    let (lh, lt) = (est.eigenvalues(), truth.eigenvalues());
    let (ph, pt) = (est.eigenfunctions(), truth.eigenfunctions());
    let kf = kappa as f64;

    let lambda = (0..kappa).map(|k| (lh[k] - lt[k]).powi(2)).sum::<f64>() / kf;

    let phi_sq = |aligned: &DMatrix<f64>, k: usize, col: usize| -> f64 {
        (0..d)
            .map(|j| (lh[k].sqrt() * aligned[(j, col)] - lt[k].sqrt() * pt[(j, k)]).powi(2))
            .sum::<f64>()
    };

    let mut phi_sign = 0.0;
    for k in 0..kappa {
        let (sign, _) = align_and_loss(ph.column(k).as_slice(), pt.column(k).as_slice(), LossKind::HalfSquared)?;
        let aligned = ph.columns(k, 1) * sign;
        phi_sign += phi_sq(&aligned, k, 0);
    }

    let mut phi_eigenspace = 0.0;
    let mut projection = 0.0;
    for g in eigen_groups(&lt.as_slice()[..kappa], GROUP_RTOL) {
        let e = ph.columns(g.start, g.len()).into_owned();
        let t = pt.columns(g.start, g.len()).into_owned();
        let aligned = procrustes_align(&e, &t);
        for (col, k) in g.clone().enumerate() {
            phi_eigenspace += phi_sq(&aligned, k, col);
        }
        projection += eigenspace_projection_loss(&e, &t);
    }

    Ok(EigenErrors {
        lambda,
        phi_sign: phi_sign / (d as f64 * kf),
        phi_eigenspace: phi_eigenspace / (d as f64 * kf),
        projection: projection / kf,
    })
}

/// Averages of [`eigen_errors`] over replicates: `(AMSE(λ̂), AMSE(φ̂))` with
/// sign-aligned eigenfunctions.
pub fn amse_eigensystem(estimates: &[EigenSystem], truth: &EigenSystem, kappa: usize) -> Result<(f64, f64)> {
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no replicates".into()));
    }
    let mut acc = (0.0, 0.0);
    for e in estimates {
        let r = eigen_errors(e, truth, kappa)?;
        acc.0 += r.lambda;
        acc.1 += r.phi_sign;
    }
    let m = estimates.len() as f64;
    Ok((acc.0 / m, acc.1 / m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Sample,
    RandomKnots,
    Rks,
    Bspline,
    BsplineSpatial,
}

impl Estimator {
    pub const ALL: [Estimator; 5] =
        [Estimator::Sample, Estimator::RandomKnots, Estimator::Rks, Estimator::Bspline, Estimator::BsplineSpatial];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Sample => "sample",
            Estimator::RandomKnots => "random-knots",
            Estimator::Rks => "rks",
            Estimator::Bspline => "bspline",
            Estimator::BsplineSpatial => "bspline-spatial",
        }
    }
}

/// Metric names in output order.
pub const METRICS: [&str; 7] =
    ["amse_cov", "sup_cov", "sup_mean", "amse_lambda", "amse_phi", "amse_phi_eigenspace", "proj_loss"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalerChoice {
    Unit,
    Avg,
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitChoice {
    Full,
    Sparse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub k0: usize,
    pub convention: EigenConvention,
    /// Spline order for the B-spline estimators.
    pub order: usize,
    pub fit: FitChoice,
    pub scaler: ScalerChoice,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ns: vec![50, 100, 200, 400],
            ds: vec![200],
            replicates: 100,
            seed: 20240101,
            k0: 1000,
            convention: EigenConvention::Floor,
            order: 4,
            fit: FitChoice::Full,
            scaler: ScalerChoice::Avg,
        }
    }
}

/// Outcome of one estimator in one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorOutcome {
    pub estimator: Estimator,
    pub js: usize,
    /// Values in [`METRICS`] order, or the error tag.
    pub metrics: std::result::Result<[f64; 7], &'static str>,
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub replicate: usize,
    pub n: usize,
    pub d: usize,
    pub outcomes: Vec<EstimatorOutcome>,
    pub runtime: Duration,
}

struct Truth {
    mean: GridFunction,
    cov: GridCovariance,
    eigen: EigenSystem,
    kappa: usize,
}

fn metrics_for(
    mean: &GridFunction,
    cov: &GridCovariance,
    ref_mean: &GridFunction,
    ref_cov: &GridCovariance,
    truth: &Truth,
) -> Result<[f64; 7]> {
    let eig = eigendecompose(cov)?;
    let e = eigen_errors(&eig, &truth.eigen, truth.kappa)?;
    Ok([
        frobenius_mse(cov, ref_cov, true)?,
        cov.sup_distance(ref_cov)?,
        mean.sup_distance(ref_mean)?,
        e.lambda,
        e.phi_sign,
        e.phi_eigenspace,
        e.projection,
    ])
}

fn scaler_for(choice: ScalerChoice, x: &NodeMatrix) -> Result<SpatialScaler> {
    match choice {
        ScalerChoice::Unit => Ok(SpatialScaler::unit(x.n())),
        ScalerChoice::Avg => t_avg(x.n()),
        ScalerChoice::Optimal => optimal_scaler(x),
    }
}

/// One replicate: generate, select knots, estimate with every estimator and
/// score against the sample quantities (the sample estimator against the
/// truth).
fn run_replicate(cfg: &ExperimentConfig, n: usize, d: usize, rep: usize, truth: &Truth) -> ReplicationResult {
    let start = Instant::now();
    let seed = derive_seed(cfg.seed, &[n as u64, d as u64, rep as u64]);
    let spec = GeneratorSpec { n, d, k0: cfg.k0, convention: cfg.convention, seed };
    let outcomes = match generate_dataset(&spec) {
        Ok(data) => estimate_all(cfg, &data.x, seed, truth),
        Err(e) => Estimator::ALL
            .iter()
            .map(|&estimator| EstimatorOutcome { estimator, js: 0, metrics: Err(e.tag()) })
            .collect(),
    };
    ReplicationResult { replicate: rep, n, d, outcomes, runtime: start.elapsed() }
}

fn estimate_all(cfg: &ExperimentConfig, x: &NodeMatrix, seed: u64, truth: &Truth) -> Vec<EstimatorOutcome> {
    let d = x.d();
    let gbar = sample_cov(x);
    let mbar = sample_mean(x);
    let mut out = Vec::with_capacity(5);
    let wrap = |estimator, js, r: Result<[f64; 7]>| EstimatorOutcome { estimator, js, metrics: r.map_err(|e| e.tag()) };

    out.push(wrap(Estimator::Sample, d, metrics_for(&mbar, &gbar, &truth.mean, &truth.cov, truth)));

    // Random-knots family: AIC with p = 0 on the scaled sparsified vectors.
    let rk_js = select_knots(x, 0, SelectionMethod::RandomKnots { seed: derive_seed(seed, &[1]) }).map(|s| s.chosen);
    let rk_batch = rk_js.and_then(|js| bernoulli_sparsify(x, js, derive_seed(seed, &[2])));
    let js = rk_batch.as_ref().map_or(0, |b| b.js());
    let rk = rk_batch.as_ref().map_err(|e| e.tag()).and_then(|b| {
        let r = (|| metrics_for(&rk_mean(b)?, &rk_cov(b, &Centering::Empirical)?, &mbar, &gbar, truth))();
        r.map_err(|e| e.tag())
    });
    out.push(EstimatorOutcome { estimator: Estimator::RandomKnots, js, metrics: rk });
    let rks = rk_batch.as_ref().map_err(|e| e.tag()).and_then(|b| {
        let r = (|| {
            let t = scaler_for(cfg.scaler, x)?;
            let m = coverage_counts(b);
            metrics_for(&rks_mean(b, &m, &t)?, &rks_cov(b, &m, &t, &Centering::Empirical)?, &mbar, &gbar, truth)
        })();
        r.map_err(|e| e.tag())
    });
    out.push(EstimatorOutcome { estimator: Estimator::Rks, js, metrics: rks });

    // B-spline family.
    let p = cfg.order;
    let method = match cfg.fit {
        FitChoice::Full => SelectionMethod::BsplineFull,
        FitChoice::Sparse => SelectionMethod::BsplineSparse,
    };
    let smoothed = (|| {
        let js = select_knots(x, p, method)?.chosen;
        let basis = design_matrix(d, &make_knots(js, p)?)?;
        let mode = match cfg.fit {
            FitChoice::Full => FitMode::Full,
            FitChoice::Sparse => FitMode::SparseKnotsOnly { positions: fixed_positions(d, js + p)? },
        };
        Ok::<_, Error>((js, fit_batch(x, &basis, &mode)?))
    })();
    match smoothed {
        Ok((js, h)) => {
            out.push(wrap(Estimator::Bspline, js, metrics_for(&bspline_mean(&h), &bspline_cov(&h), &mbar, &gbar, truth)));
            let r = (|| {
                let mask = bernoulli_sparsify(&h, js, derive_seed(seed, &[3]))?;
                let t = scaler_for(cfg.scaler, x)?;
                let (m, g) = bspline_spatial(&h, &mask, &t)?;
                metrics_for(&m, &g, &mbar, &gbar, truth)
            })();
            out.push(wrap(Estimator::BsplineSpatial, js, r));
        }
        Err(e) => {
            for est in [Estimator::Bspline, Estimator::BsplineSpatial] {
                out.push(EstimatorOutcome { estimator: est, js: 0, metrics: Err(e.tag()) });
            }
        }
    }
    out
}

fn truth_for(cfg: &ExperimentConfig, d: usize) -> Result<Truth> {
    let kmax = cfg.k0.min(d);
    let eigen = true_eigensystem(d, kmax, cfg.convention)?;
    // κ from the analytic spectrum over all k0 terms.
    let all: Vec<f64> = (1..=cfg.k0).map(|k| eigenvalue(k, cfg.convention)).collect();
    let total: f64 = all.iter().sum();
    let mut cum = 0.0;
    let mut kappa = all.len();
    for (k, l) in all.iter().enumerate() {
        cum += l;
        if cum - crate::fpca::FVE_THRESHOLD * total > 1e-12 * total {
            kappa = k + 1;
            break;
        }
    }
    // Keep whole groups of equal eigenvalues.
    while kappa < all.len() && (all[kappa] - all[kappa - 1]).abs() <= GROUP_RTOL * all[kappa - 1] {
        kappa += 1;
    }
    let phi = scaled_eigenfunctions(d, cfg.k0, cfg.convention);
    Ok(Truth {
        mean: GridFunction::from_vec(uniform_grid(d).into_iter().map(mean_function).collect()),
        cov: GridCovariance::new(&phi * phi.transpose(), Provenance::Truth)?,
        eigen,
        kappa: kappa.min(kmax),
    })
}

/// κ used for the eigen metrics: the 95% FVE count of the analytic spectrum,
/// extended to close a group of equal eigenvalues.
pub fn analytic_kappa(cfg: &ExperimentConfig, d: usize) -> Result<usize> {
    Ok(truth_for(cfg, d)?.kappa)
}

/// All replicates of the sweep, ordered by `(n, d, replicate)`.
pub fn run_replicates(cfg: &ExperimentConfig) -> Result<Vec<ReplicationResult>> {
    validate(cfg)?;
    let mut results = Vec::new();
    for &d in &cfg.ds {
        let truth = truth_for(cfg, d)?;
        for &n in &cfg.ns {
            let batch: Vec<ReplicationResult> =
                (0..cfg.replicates).into_par_iter().map(|r| run_replicate(cfg, n, d, r, &truth)).collect();
            results.extend(batch);
        }
    }
    results.sort_by_key(|r| (cfg.ns.iter().position(|&v| v == r.n), cfg.ds.iter().position(|&v| v == r.d), r.replicate));
    Ok(results)
}

fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.ns.is_empty() || cfg.ds.is_empty() || cfg.replicates == 0 {
        return Err(Error::InvalidInput("sweep needs at least one n, one d and one replicate".into()));
    }
    if let Some(&n) = cfg.ns.iter().find(|&&n| n < 2) {
        return Err(Error::InvalidInput(format!("every n must be >= 2, got {n}")));
    }
    if let Some(&d) = cfg.ds.iter().find(|&&d| d < 2) {
        return Err(Error::InvalidInput(format!("every d must be >= 2, got {d}")));
    }
    if cfg.k0 == 0 || cfg.order == 0 {
        return Err(Error::InvalidInput("k0 and spline order must be >= 1".into()));
    }
    Ok(())
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub estimator: &'static str,
    pub n: usize,
    pub d: usize,
    pub js: usize,
    pub metric: String,
    pub value: f64,
    pub replicates: usize,
    pub seed: u64,
}

/// Average every metric over the successful replicates of each
/// `(n, d, estimator)` cell. A cell with failures also gets a row
/// `error:<tag>` whose value is the number of failed replicates.
pub fn summarize(cfg: &ExperimentConfig, results: &[ReplicationResult]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        for &d in &cfg.ds {
            let cell: Vec<&ReplicationResult> = results.iter().filter(|r| r.n == n && r.d == d).collect();
            for (e_idx, est) in Estimator::ALL.iter().enumerate() {
                let outcomes: Vec<&EstimatorOutcome> =
                    cell.iter().filter_map(|r| r.outcomes.get(e_idx)).filter(|o| o.estimator == *est).collect();
                let ok: Vec<(&EstimatorOutcome, [f64; 7])> =
                    outcomes.iter().filter_map(|o| o.metrics.ok().map(|m| (*o, m))).collect();
                let mut js: Vec<usize> = ok.iter().map(|(o, _)| o.js).collect();
                let js = if js.is_empty() {
                    0
                } else {
                    js.sort_unstable();
                    js[(js.len() - 1) / 2]
                };
                let row = |metric: String, value: f64, reps: usize| ResultRow {
                    estimator: est.label(),
                    n,
                    d,
                    js,
                    metric,
                    value,
                    replicates: reps,
                    seed: cfg.seed,
                };
                if !ok.is_empty() {
                    for (m, name) in METRICS.iter().enumerate() {
                        let mean = ok.iter().map(|(_, v)| v[m]).sum::<f64>() / ok.len() as f64;
                        rows.push(row(name.to_string(), mean, ok.len()));
                    }
                }
                let mut tags: Vec<&'static str> = outcomes.iter().filter_map(|o| o.metrics.err()).collect();
                tags.sort_unstable();
                tags.dedup();
                for tag in tags {
                    let count = outcomes.iter().filter(|o| o.metrics.err() == Some(tag)).count();
                    rows.push(row(format!("error:{tag}"), count as f64, outcomes.len()));
                }
            }
        }
    }
    rows
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    Ok(summarize(cfg, &run_replicates(cfg)?))
}

pub const CSV_HEADER: &str = "estimator,n,d,js,metric,value,replicates,seed";

pub fn format_results(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(out, "{},{},{},{},{},{:e},{},{}", r.estimator, r.n, r.d, r.js, r.metric, r.value, r.replicates, r.seed)
            .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_closed_forms() {
        assert!((mean_function(0.25) + 1.0).abs() < 1e-15);
        assert_eq!(eigenfunction(1, 0.0), SQRT_2);
        assert!(eigenfunction(2, 0.0).abs() < 1e-15);
        assert!((eigenfunction(4, 0.125) - SQRT_2).abs() < 1e-14);
        let floor: Vec<f64> = (1..=5).map(|k| eigenvalue(k, EigenConvention::Floor)).collect();
        assert_eq!(floor, vec![1.0, 0.25, 0.25, 0.0625, 0.0625]);
        let ceil: Vec<f64> = (1..=4).map(|k| eigenvalue(k, EigenConvention::Ceil)).collect();
        assert_eq!(ceil, vec![0.25, 0.25, 0.0625, 0.0625]);
    }

    #[test]
    fn fve_of_truncated_expansion() {
        // Floor total: 1 + 2 Σ_{m≥1} 4^{-m} = 5/3.
        let partial: f64 = (1..=1000).map(|k| eigenvalue(k, EigenConvention::Floor)).sum();
        assert!(partial / (5.0 / 3.0) > 1.0 - 1e-10);
    }

    #[test]
    fn dataset_shapes_and_determinism() {
        let mut spec = GeneratorSpec::new(5, 16, 9);
        spec.k0 = 20;
        let a = generate_dataset(&spec).unwrap();
        let b = generate_dataset(&spec).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.x.n(), 5);
        assert_eq!(a.scores.ncols(), 20);
        spec.k0 = 30;
        let c = generate_dataset(&spec).unwrap();
        assert_eq!(c.scores.columns(0, 20), a.scores);
        // Rows are m + Σ ξ √λ ψ.
        let g = uniform_grid(16);
        let x00 = mean_function(g[0])
            + (0..20).map(|k| a.scores[(0, k)] * eigenvalue(k + 1, EigenConvention::Floor).sqrt() * eigenfunction(k + 1, g[0])).sum::<f64>();
        assert!((a.x.values()[(0, 0)] - x00).abs() < 1e-12);
    }

    #[test]
    fn truth_decomposes_to_analytic_spectrum() {
        let cfg = ExperimentConfig { k0: 1000, ..Default::default() };
        let truth = truth_for(&cfg, 200).unwrap();
        assert_eq!(truth.kappa, 5);
        let est = eigendecompose(&truth.cov).unwrap();
        for k in 0..5 {
            let rel = (est.eigenvalues()[k] - truth.eigen.eigenvalues()[k]).abs() / truth.eigen.eigenvalues()[k];
            assert!(rel < 0.02, "k = {k}: {rel}");
        }
        let e = eigen_errors(&est, &truth.eigen, 5).unwrap();
        assert!(e.lambda < 1e-4 && e.phi_eigenspace < 1e-4 && e.projection < 1e-4, "{e:?}");
    }

    #[test]
    fn amse_helpers() {
        let truth = true_eigensystem(40, 6, EigenConvention::Floor).unwrap();
        assert_eq!(amse_eigensystem(&[truth.clone()], &truth, 5).unwrap(), (0.0, 0.0));
        let flipped = EigenSystem::new(truth.eigenvalues().clone(), -truth.eigenfunctions()).unwrap();
        let (l, p) = amse_eigensystem(&[flipped], &truth, 5).unwrap();
        assert_eq!(l, 0.0);
        assert!(p < 1e-28);
        assert!(amse_eigensystem(&[truth.clone()], &truth, 7).is_err());

        let a = GridCovariance::new(DMatrix::identity(3, 3), Provenance::External).unwrap();
        let b = GridCovariance::new(DMatrix::zeros(3, 3), Provenance::External).unwrap();
        assert_eq!(amse_cov(&[(a.clone(), a.clone())]).unwrap(), 0.0);
        assert!((amse_cov(&[(a.clone(), b.clone()), (a.clone(), a.clone())]).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!(amse_cov(&[]).is_err());
    }

    #[test]
    fn tiny_sweep_runs() {
        let cfg = ExperimentConfig { ns: vec![20], ds: vec![30], replicates: 2, k0: 50, ..Default::default() };
        let rows = run_experiment(&cfg).unwrap();
        for est in Estimator::ALL {
            for m in METRICS {
                assert!(rows.iter().any(|r| r.estimator == est.label() && r.metric == m), "{est:?} {m}");
            }
        }
        assert!(rows.iter().all(|r| r.value >= 0.0));
        assert_eq!(format_results(&rows), format_results(&run_experiment(&cfg).unwrap()));
    }
}
