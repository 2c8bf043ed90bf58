//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p sparsecov-cli --test acceptance`.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsecov::bspline::{
    bspline_cov, bspline_mean, bspline_spatial, design_matrix, eval_basis, fit_batch, make_knots, smoother_matrix,
    FitMode,
};
use sparsecov::fpca::eigendecompose;
use sparsecov::grid::{sample_cov, sample_mean};
use sparsecov::random_knots::{
    closed_mse_rk, closed_mse_rks, correlation_energy, mse_from_energy, rk_cov, rk_mean, rks_cov, rks_mean, t_avg,
    t_optimal, Centering, CorrelationEnergy, SpatialScaler,
};
use sparsecov::selection::{candidates, select_knots, SelectionMethod};
use sparsecov::simbench::{
    analytic_kappa, eigenvalue, generate_dataset, run_experiment, EigenConvention, ExperimentConfig, GeneratorSpec,
    ResultRow,
};
use sparsecov::sparsify::{bernoulli_sparsify, coverage_counts, fixed_positions, SparseBatch};
use sparsecov::{GridCovariance, GridFunction, NodeMatrix};
use sparsecov_cli::{cmd_simulate, ConventionArg, FitArg, ScalerArg, SimulateArgs};
use sparsecov_oracle as oracle;

const INSTANCES: [(usize, usize, usize); 4] = [(2, 2, 1), (3, 3, 2), (3, 4, 2), (2, 4, 2)];
const SWEEP_ESTIMATORS: [&str; 4] = ["random-knots", "rks", "bspline", "bspline-spatial"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fixture(n: usize, d: usize) -> oracle::Matrix {
    (0..n)
        .map(|i| (0..d).map(|j| ((3 * i + 5 * j + 1) as f64 * 0.77).sin() * (1.0 + 0.3 * i as f64)).collect())
        .collect()
}

fn batch_for(x: &NodeMatrix, js: usize, bits: u64) -> SparseBatch {
    let (n, d) = (x.n(), x.d());
    let mask = DMatrix::from_fn(n, d, |i, j| oracle::mask_bit(bits, d, i, j));
    SparseBatch::with_mask(x, js, mask).unwrap()
}

fn rows(g: &GridCovariance) -> oracle::Matrix {
    let v = g.values();
    (0..v.nrows()).map(|j| (0..v.ncols()).map(|k| v[(j, k)]).collect()).collect()
}

/// Exact moments of the implementation's spatial estimator under fixed
/// centering at the sample mean.
fn exact_moments(x: &oracle::Matrix, js: usize, t: &SpatialScaler) -> oracle::MaskMoments {
    let xm = NodeMatrix::from_rows(x).unwrap();
    let center = Centering::Fixed(GridFunction::from_vec(oracle::naive_mean(x)));
    oracle::enumerate_moments(x, js, |bits| {
        let b = batch_for(&xm, js, bits);
        rows(&rks_cov(&b, &coverage_counts(&b), t, &center).unwrap())
    })
}

fn off_diagonal_energy(x: &oracle::Matrix) -> CorrelationEnergy {
    let (r1, r2) = oracle::energies_off_diagonal(x);
    CorrelationEnergy { r1, r2 }
}

fn seeded_scaler(n: usize, rng: &mut ChaCha8Rng) -> SpatialScaler {
    SpatialScaler::custom((0..n).map(|_| rng.random_range(0.2..5.0)).collect()).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut worst_off) = (0.0_f64, 0.0_f64);
    for (n, d, js) in INSTANCES {
        let x = fixture(n, d);
        let xm = NodeMatrix::from_rows(&x).unwrap();
        let m = exact_moments(&x, js, &SpatialScaler::unit(n));
        worst = worst.max((closed_mse_rk(&xm, js).unwrap() - m.mse).abs());
        let off = mse_from_energy(n, d, js, &SpatialScaler::unit(n), &off_diagonal_energy(&x)).unwrap();
        worst_off = worst_off.max((off - m.mse_off_diagonal).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(10),
        format!("max |closed - exact| = {worst:.3e} (off-diagonal part: {worst_off:.3e}), {elapsed:.2?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst, mut worst_off) = (0.0_f64, 0.0_f64);
    for (n, d, js) in INSTANCES {
        let x = fixture(n, d);
        let xm = NodeMatrix::from_rows(&x).unwrap();
        let mut scalers = vec![
            SpatialScaler::unit(n),
            t_avg(n).unwrap(),
            t_optimal(correlation_energy(&xm).ratio(), n).unwrap(),
        ];
        scalers.push(seeded_scaler(n, &mut rng));
        scalers.push(seeded_scaler(n, &mut rng));
        for t in &scalers {
            let m = exact_moments(&x, js, t);
            worst = worst.max((closed_mse_rks(&xm, js, t).unwrap() - m.mse).abs());
            let off = mse_from_energy(n, d, js, t, &off_diagonal_energy(&x)).unwrap();
            worst_off = worst_off.max((off - m.mse_off_diagonal).abs());
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(60),
        format!("max |closed - exact| = {worst:.3e} (off-diagonal part: {worst_off:.3e}), {elapsed:.2?}"),
    )
}

fn criterion_3() -> Outcome {
    let (n, d, js) = (3, 3, 2);
    let x = fixture(n, d);
    let gbar = oracle::naive_cov(&x);
    let xm = NodeMatrix::from_rows(&x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scalers = [
        SpatialScaler::unit(n),
        t_avg(n).unwrap(),
        t_optimal(correlation_energy(&xm).ratio(), n).unwrap(),
        seeded_scaler(n, &mut rng),
    ];
    let (mut worst, mut worst_off) = (0.0_f64, 0.0_f64);
    for t in &scalers {
        let m = exact_moments(&x, js, t);
        for j in 0..d {
            for k in 0..d {
                let e = (m.mean[j][k] - gbar[j][k]).abs();
                worst = worst.max(e);
                if j != k {
                    worst_off = worst_off.max(e);
                }
            }
        }
    }
    outcome(worst <= 1e-10, format!("max |E[G] - Gbar| = {worst:.3e} (off-diagonal: {worst_off:.3e})"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut violations, mut worst) = (0usize, f64::NEG_INFINITY);
    let mut worst_case = String::new();
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(2..=8);
        let js = rng.random_range(1..=d);
        let x = NodeMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let ratio = correlation_energy(&x).ratio();
        let star = t_optimal(ratio, n).unwrap();
        let best = closed_mse_rks(&x, js, &star).unwrap();
        for _ in 0..200 {
            let t = seeded_scaler(n, &mut rng);
            let gap = best - closed_mse_rks(&x, js, &t).unwrap();
            if gap > worst {
                worst = gap;
                worst_case = format!("n={n} d={d} js={js} R2/R1={ratio:.3} mse(T*)={best:.4e}");
            }
            if gap > 1e-12 {
                violations += 1;
            }
        }
    }
    outcome(violations == 0, format!("{violations}/4000 scalers beat T*, max excess {worst:.3e} at {worst_case}"))
}

fn metric_series(rows: &[ResultRow], estimator: &str, metric: &str, ns: &[usize]) -> Vec<f64> {
    ns.iter()
        .map(|&n| {
            rows.iter()
                .find(|r| r.estimator == estimator && r.metric == metric && r.n == n)
                .map_or(f64::NAN, |r| r.value)
        })
        .collect()
}

fn loglog_slope(ns: &[usize], values: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn nonincreasing(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite()) && values.windows(2).all(|w| w[1] <= w[0])
}

fn fmt_series(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(" ")
}

fn criterion_5(rows: &[ResultRow], ns: &[usize], elapsed: Duration) -> Outcome {
    let mut pass = elapsed < Duration::from_secs(600);
    let mut parts = Vec::new();
    for est in SWEEP_ESTIMATORS {
        let series = metric_series(rows, est, "amse_cov", ns);
        let slope = loglog_slope(ns, &series);
        let ok = (-1.3..=-0.7).contains(&slope) && nonincreasing(&series);
        pass &= ok;
        parts.push(format!("{est}: slope {slope:.2} [{}]", fmt_series(&series)));
    }
    outcome(pass, format!("{}; sweep {elapsed:.1?}", parts.join("; ")))
}

fn criterion_6(rows: &[ResultRow], ns: &[usize]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for est in SWEEP_ESTIMATORS {
        for metric in ["amse_lambda", "amse_phi_eigenspace"] {
            let series = metric_series(rows, est, metric, ns);
            if !nonincreasing(&series) {
                pass = false;
                parts.push(format!("{est} {metric} not monotone [{}]", fmt_series(&series)));
            }
        }
    }
    let d = 200;
    let cfg = ExperimentConfig::default();
    let kappa = analytic_kappa(&cfg, d).unwrap();
    let data = generate_dataset(&GeneratorSpec::new(2, d, 1)).unwrap();
    let eig = eigendecompose(&data.cov).unwrap();
    let worst = (1..=kappa)
        .map(|k| (eig.eigenvalues()[k - 1] - eigenvalue(k, EigenConvention::Floor)).abs() / eigenvalue(k, EigenConvention::Floor))
        .fold(0.0_f64, f64::max);
    pass &= worst <= 0.02;
    parts.push(format!("true-G eigenvalues within {:.3e} relative for k <= {kappa}", worst));
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pou = 0.0_f64;
    for p in [1, 2, 4] {
        for js in 1..=10 {
            let knots = make_knots(js, p).unwrap();
            for _ in 0..10_000 {
                let t: f64 = rng.random_range(0.0..=1.0);
                let s: f64 = eval_basis(t, &knots).unwrap().iter().sum();
                pou = pou.max((s - 1.0).abs());
            }
        }
    }
    let d = 200;
    let (mut idem, mut repro) = (0.0_f64, 0.0_f64);
    for p in [1, 2, 4] {
        for js in [1, 5, 10] {
            let basis = design_matrix(d, &make_knots(js, p).unwrap()).unwrap();
            let s = smoother_matrix(&basis);
            idem = idem.max((&s * &s - &s).amax());
            let coef = DMatrix::from_fn(js + p, 3, |_, _| rng.random_range(-1.0..1.0));
            let f = NodeMatrix::new((basis.design() * coef).transpose()).unwrap();
            let sparse = FitMode::SparseKnotsOnly { positions: fixed_positions(d, js + p).unwrap() };
            for mode in [FitMode::Full, sparse] {
                let h = fit_batch(&f, &basis, &mode).unwrap();
                repro = repro.max((h.values() - f.values()).amax());
            }
        }
    }
    outcome(
        pou < 1e-12 && idem < 1e-10 && repro <= 1e-10,
        format!("partition of unity {pou:.2e}, |S^2 - S| {idem:.2e}, reproduction {repro:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let x = generate_dataset(&GeneratorSpec::new(50, 200, 8)).unwrap().x;
    let pool = candidates(200);
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, method) in [
        ("full", SelectionMethod::BsplineFull),
        ("sparse", SelectionMethod::BsplineSparse),
        ("random-knots", SelectionMethod::RandomKnots { seed: 8 }),
    ] {
        let p = if label == "random-knots" { 0 } else { 4 };
        let a = select_knots(&x, p, method).unwrap();
        let b = select_knots(&x, p, method).unwrap();
        let ok = pool.contains(&a.chosen) && a == b;
        pass &= ok;
        parts.push(format!("{label} J={}{}", a.chosen, if ok { "" } else { " (unstable)" }));
    }
    let tiny = NodeMatrix::new(DMatrix::from_row_slice(2, 3, &[0.1, 0.7, -0.3, 1.2, 0.4, 0.9])).unwrap();
    for (label, p, method) in [
        ("random-knots", 0, SelectionMethod::RandomKnots { seed: 8 }),
        ("p=1", 1, SelectionMethod::BsplineFull),
        ("p=2", 2, SelectionMethod::BsplineFull),
    ] {
        let chosen = select_knots(&tiny, p, method).map(|s| s.chosen);
        pass &= chosen.as_ref().is_ok_and(|&c| c == 1);
        parts.push(format!("d=3 {label} -> {chosen:?}"));
    }
    outcome(pass, parts.join(", "))
}

fn bit_equal(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits())
}

fn vec_equal(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    a.len() == b.len() && a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits())
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut failures = Vec::new();
    for trial in 0..10 {
        let (n, d) = (rng.random_range(2..12), rng.random_range(6..30));
        let x = NodeMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0))).unwrap();
        let unit = SpatialScaler::unit(n);
        let full = bernoulli_sparsify(&x, d, trial).unwrap();
        let m = coverage_counts(&full);
        let (sm, sc) = (sample_mean(&x), sample_cov(&x));
        let c = Centering::Empirical;
        let checks = [
            ("rk mean", vec_equal(rk_mean(&full).unwrap().values(), sm.values())),
            ("rk cov", bit_equal(rk_cov(&full, &c).unwrap().values(), sc.values())),
            ("rks mean", vec_equal(rks_mean(&full, &m, &unit).unwrap().values(), sm.values())),
            ("rks cov", bit_equal(rks_cov(&full, &m, &unit, &c).unwrap().values(), sc.values())),
        ];
        failures.extend(checks.iter().filter(|(_, ok)| !ok).map(|(l, _)| format!("{l} (trial {trial})")));

        let basis = design_matrix(d, &make_knots(2, 4).unwrap()).unwrap();
        let h = fit_batch(&x, &basis, &FitMode::Full).unwrap();
        let hmask = bernoulli_sparsify(&h, d, trial).unwrap();
        let (bm, bc) = bspline_spatial(&h, &hmask, &unit).unwrap();
        if !vec_equal(bm.values(), bspline_mean(&h).values()) || !bit_equal(bc.values(), bspline_cov(&h).values()) {
            failures.push(format!("bspline-spatial (trial {trial})"));
        }

        let shared = bernoulli_sparsify(&x, d / 2, trial + 100).unwrap();
        let ms = coverage_counts(&shared);
        if !bit_equal(rks_cov(&shared, &ms, &unit, &c).unwrap().values(), rk_cov(&shared, &c).unwrap().values())
            || !vec_equal(rks_mean(&shared, &ms, &unit).unwrap().values(), rk_mean(&shared).unwrap().values())
        {
            failures.push(format!("rks vs rk on shared mask (trial {trial})"));
        }
    }
    let detail = if failures.is_empty() { "all reductions bit-identical".to_string() } else { failures.join(", ") };
    outcome(failures.is_empty(), detail)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, threads: usize| {
        let args = SimulateArgs {
            output_dir: dir.path().join(sub),
            n: vec![20, 40],
            d: vec![40],
            replicates: 6,
            seed: 10,
            k0: 200,
            convention: ConventionArg::Floor,
            order: 4,
            fit: FitArg::Full,
            scaler: ScalerArg::Avg,
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let path = pool.install(|| cmd_simulate(&args)).unwrap();
        std::fs::read(path).unwrap()
    };
    let (a, b, c) = (run("a", 1), run("b", 1), run("c", 3));
    outcome(a == b && a == c, format!("{} bytes, reruns identical: {}, thread-count identical: {}", a.len(), a == b, a == c))
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |id: usize, o: Outcome| {
        println!("{} criterion {id}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());

    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let rows = run_experiment(&cfg).unwrap();
    let elapsed = start.elapsed();
    report(5, criterion_5(&rows, &cfg.ns, elapsed));
    report(6, criterion_6(&rows, &cfg.ns));

    report(7, criterion_7());
    report(8, criterion_8());
    report(9, criterion_9());
    report(10, criterion_10());

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(id, _)| *id).collect();
    println!("{}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
