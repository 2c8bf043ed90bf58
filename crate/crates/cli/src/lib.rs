//! Command-line surface for `sparsecov`.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O (including unreadable input files),
//! 3 numeric failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use sparsecov::bspline::{bspline_cov, bspline_mean, bspline_spatial, design_matrix, fit_batch, make_knots, FitMode};
use sparsecov::fpca::{eigendecompose, fpc_scores, truncate_fve};
use sparsecov::grid::{sample_cov, sample_mean};
use sparsecov::io::{load_matrix, parse_matrix, save_matrix, save_vector};
use sparsecov::random_knots::{
    optimal_scaler, rk_cov, rk_mean, rks_cov, rks_mean, spatial_constants, t_avg, Centering, SpatialScaler,
};
use sparsecov::selection::{select_knots, KnotSelection, SelectionMethod};
use sparsecov::simbench::{format_results, run_experiment, EigenConvention, ExperimentConfig, FitChoice, ScalerChoice};
use sparsecov::sparsify::{bernoulli_sparsify, coverage_counts, derive_seed, fixed_positions};
use sparsecov::{Error, GridCovariance, GridFunction, NodeMatrix, Provenance};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io(_) | Error::Parse { .. } => CliError::Io(msg),
            Error::InvalidInput(_)
            | Error::ShapeMismatch { .. }
            | Error::RetentionOutOfRange { .. }
            | Error::PositionCollision { .. }
            | Error::SchemeMismatch { .. } => CliError::Usage(msg),
            _ => CliError::Numeric(msg),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "sparsecov", version, about = "Sparsified covariance estimation and functional PCA")]
pub struct Cli {
    /// Worker threads (default: SPARSECOV_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Flat key=value file; keys are flag names without dashes.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the mean and covariance of a data matrix.
    Estimate(EstimateArgs),
    /// Eigen-analysis of a covariance (given, or estimated from data).
    Fpca(FpcaArgs),
    /// Run the replication experiment on synthetic data.
    Simulate(SimulateArgs),
    /// AIC choice of the number of knots.
    SelectKnots(SelectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    Sample,
    RandomKnots,
    Rks,
    Bspline,
    BsplineSpatial,
}

impl EstimatorArg {
    fn label(self) -> &'static str {
        match self {
            EstimatorArg::Sample => "sample",
            EstimatorArg::RandomKnots => "random-knots",
            EstimatorArg::Rks => "rks",
            EstimatorArg::Bspline => "bspline",
            EstimatorArg::BsplineSpatial => "bspline-spatial",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CenteringArg {
    Empirical,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitArg {
    Full,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Floor,
    Ceil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    RandomKnots,
    BsplineFull,
    BsplineSparse,
}

/// `--js` value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsArg {
    Auto,
    Fixed(usize),
}

fn parse_js(s: &str) -> Result<JsArg, String> {
    if s == "auto" {
        return Ok(JsArg::Auto);
    }
    s.parse::<usize>().map(JsArg::Fixed).map_err(|_| format!("expected an integer or `auto`, got {s:?}"))
}

/// `--scaler` value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScalerArg {
    Unit,
    Avg,
    Optimal,
    Custom(PathBuf),
}

fn parse_scaler(s: &str) -> Result<ScalerArg, String> {
    match s {
        "unit" => Ok(ScalerArg::Unit),
        "avg" => Ok(ScalerArg::Avg),
        "optimal" => Ok(ScalerArg::Optimal),
        _ => match s.strip_prefix("custom:") {
            Some(p) if !p.is_empty() => Ok(ScalerArg::Custom(PathBuf::from(p))),
            _ => Err(format!("expected unit, avg, optimal or custom:<file>, got {s:?}")),
        },
    }
}

fn parse_order(s: &str) -> Result<usize, String> {
    match s {
        "1" | "2" | "4" => Ok(s.parse().expect("digit")),
        _ => Err(format!("spline order must be 1, 2 or 4, got {s:?}")),
    }
}

/// Estimator options shared by `estimate` and `fpca`.
#[derive(Debug, Clone, Args)]
pub struct EstimatorOpts {
    #[arg(long, value_enum, default_value = "sample")]
    pub estimator: EstimatorArg,
    /// Retained coordinates / interior knots, or `auto` for AIC.
    #[arg(long, value_parser = parse_js, default_value = "auto")]
    pub js: JsArg,
    #[arg(long, value_parser = parse_order, default_value = "4")]
    pub order: usize,
    #[arg(long, value_parser = parse_scaler, default_value = "avg")]
    pub scaler: ScalerArg,
    #[arg(long, value_enum, default_value = "empirical")]
    pub centering: CenteringArg,
    #[arg(long, value_enum, default_value = "full")]
    pub fit: FitArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    /// Headerless CSV, one node per row.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[command(flatten)]
    pub opts: EstimatorOpts,
}

#[derive(Debug, Clone, Args)]
pub struct FpcaArgs {
    /// Covariance matrix CSV.
    #[arg(long, conflicts_with = "input", required_unless_present = "input")]
    pub cov: Option<PathBuf>,
    /// Raw data CSV; the covariance is estimated first.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Also write FPC scores (needs --input).
    #[arg(long, requires = "input")]
    pub scores: bool,
    #[command(flatten)]
    pub opts: EstimatorOpts,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', default_value = "50,100,200,400")]
    pub n: Vec<usize>,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',', default_value = "200")]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub replicates: usize,
    #[arg(long, default_value_t = 20240101)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub k0: usize,
    #[arg(long, value_enum, default_value = "floor")]
    pub convention: ConventionArg,
    #[arg(long, value_parser = parse_order, default_value = "4")]
    pub order: usize,
    #[arg(long, value_enum, default_value = "full")]
    pub fit: FitArg,
    /// unit, avg or optimal.
    #[arg(long, value_parser = parse_scaler, default_value = "avg")]
    pub scaler: ScalerArg,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, value_enum, default_value = "bspline-full")]
    pub method: MethodArg,
    #[arg(long, value_parser = parse_order, default_value = "4")]
    pub order: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Splice `key=value` lines of `--config` into the argument list as flags,
/// skipping keys already given on the command line.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(Path::new(&path), e))?;
    let mut out = args;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{path}:{}: expected key=value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "config" {
            return Err(CliError::Usage(format!("{path}: nested config is not supported")));
        }
        let flag = format!("--{key}");
        let given = strs.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        if value == "true" && key == "scores" {
            out.push(flag.into());
        } else {
            out.push(format!("{flag}={value}").into());
        }
    }
    Ok(out)
}

/// Parse, run, and map the outcome to an exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize, CliError> {
    if let Some(n) = flag {
        return Ok(n);
    }
    match std::env::var("SPARSECOV_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("SPARSECOV_THREADS must be an integer, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Estimate(a) => cmd_estimate(a).map(|_| ()),
        Command::Fpca(a) => cmd_fpca(a).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(a).map(|_| ()),
        Command::SelectKnots(a) => cmd_select_knots(a).map(|_| ()),
    })
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn load(path: &Path) -> Result<NodeMatrix, CliError> {
    load_matrix(path).map_err(|e| match e {
        Error::Io(io) => io_err(path, io),
        other => CliError::from(other),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Estimates plus the values recorded in the manifest.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub mean: GridFunction,
    pub cov: GridCovariance,
    pub js: usize,
    pub js_auto: bool,
    pub selection: Option<KnotSelection>,
    pub constants: Option<(f64, f64, f64)>,
    pub scaler: Option<String>,
}

fn scaler_for(arg: &ScalerArg, data: &NodeMatrix) -> Result<SpatialScaler, CliError> {
    let n = data.n();
    Ok(match arg {
        ScalerArg::Unit => SpatialScaler::unit(n),
        ScalerArg::Avg => t_avg(n)?,
        ScalerArg::Optimal => optimal_scaler(data)?,
        ScalerArg::Custom(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let values: Vec<f64> = parse_matrix(&text)?.iter().copied().collect();
            if values.len() != n {
                return Err(CliError::Usage(format!(
                    "custom scaler {} has {} values, expected n = {n}",
                    path.display(),
                    values.len()
                )));
            }
            SpatialScaler::custom(values)?
        }
    })
}

fn describe_scaler(arg: &ScalerArg) -> String {
    match arg {
        ScalerArg::Unit => "unit".into(),
        ScalerArg::Avg => "avg".into(),
        ScalerArg::Optimal => "optimal".into(),
        ScalerArg::Custom(p) => format!("custom:{}", p.display()),
    }
}

fn centering_for(arg: CenteringArg, x: &NodeMatrix) -> Centering {
    match arg {
        CenteringArg::Empirical => Centering::Empirical,
        CenteringArg::Fixed => Centering::Fixed(sample_mean(x)),
    }
}

/// Run one estimator on `x`. Random draws use `derive_seed(seed, [1|2|3])`
/// for knot selection, the data mask and the smoothed-data mask.
pub fn estimate(x: &NodeMatrix, opts: &EstimatorOpts) -> Result<EstimateReport, CliError> {
    let d = x.d();
    let seed = opts.seed;
    let choose = |method: SelectionMethod, order: usize| -> Result<(usize, Option<KnotSelection>), CliError> {
        match opts.js {
            JsArg::Fixed(js) => Ok((js, None)),
            JsArg::Auto => {
                if d < 2 {
                    return Err(CliError::Usage("--js auto needs d >= 2".into()));
                }
                let s = select_knots(x, order, method)?;
                Ok((s.chosen, Some(s)))
            }
        }
    };
    let report = |mean, cov, js, selection: Option<KnotSelection>, constants, scaler| EstimateReport {
        mean,
        cov,
        js,
        js_auto: selection.is_some(),
        selection,
        constants,
        scaler,
    };
    match opts.estimator {
        EstimatorArg::Sample => Ok(report(sample_mean(x), sample_cov(x), d, None, None, None)),
        EstimatorArg::RandomKnots | EstimatorArg::Rks => {
            let (js, sel) = choose(SelectionMethod::RandomKnots { seed: derive_seed(seed, &[1]) }, 0)?;
            let batch = bernoulli_sparsify(x, js, derive_seed(seed, &[2]))?;
            let centering = centering_for(opts.centering, x);
            if opts.estimator == EstimatorArg::RandomKnots {
                return Ok(report(rk_mean(&batch)?, rk_cov(&batch, &centering)?, js, sel, None, None));
            }
            let t = scaler_for(&opts.scaler, x)?;
            let m = coverage_counts(&batch);
            let constants = constants_for(x.n(), js, d, &t)?;
            let (mean, cov) = (rks_mean(&batch, &m, &t)?, rks_cov(&batch, &m, &t, &centering)?);
            Ok(report(mean, cov, js, sel, constants, Some(describe_scaler(&opts.scaler))))
        }
        EstimatorArg::Bspline | EstimatorArg::BsplineSpatial => {
            let method = match opts.fit {
                FitArg::Full => SelectionMethod::BsplineFull,
                FitArg::Sparse => SelectionMethod::BsplineSparse,
            };
            let (js, sel) = choose(method, opts.order)?;
            let basis = design_matrix(d, &make_knots(js, opts.order)?)?;
            let mode = match opts.fit {
                FitArg::Full => FitMode::Full,
                FitArg::Sparse => FitMode::SparseKnotsOnly { positions: fixed_positions(d, js + opts.order)? },
            };
            let h = fit_batch(x, &basis, &mode)?;
            if opts.estimator == EstimatorArg::Bspline {
                return Ok(report(bspline_mean(&h), bspline_cov(&h), js, sel, None, None));
            }
            let mask = bernoulli_sparsify(&h, js, derive_seed(seed, &[3]))?;
            let t = scaler_for(&opts.scaler, &h)?;
            let constants = constants_for(x.n(), js, d, &t)?;
            let (mean, cov) = bspline_spatial(&h, &mask, &t)?;
            Ok(report(mean, cov, js, sel, constants, Some(describe_scaler(&opts.scaler))))
        }
    }
}

fn constants_for(n: usize, js: usize, d: usize, t: &SpatialScaler) -> Result<Option<(f64, f64, f64)>, CliError> {
    if n < 2 {
        return Ok(None);
    }
    let k = spatial_constants(n, js as f64 / d as f64, t)?;
    Ok(Some((k.beta_bar, k.c1, k.c2)))
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<EstimateReport, CliError> {
    let start = Instant::now();
    let x = load(&args.input)?;
    let report = estimate(&x, &args.opts)?;
    ensure_dir(&args.output_dir)?;
    save_vector(&args.output_dir.join("mean.csv"), report.mean.as_slice())?;
    save_matrix(&args.output_dir.join("cov.csv"), report.cov.values())?;
    let mut m = String::new();
    let o = &args.opts;
    let _ = writeln!(m, "estimator={}", o.estimator.label());
    let _ = writeln!(m, "n={}", x.n());
    let _ = writeln!(m, "d={}", x.d());
    let _ = writeln!(m, "js={}", report.js);
    let _ = writeln!(m, "js_source={}", if report.js_auto { "aic" } else { "fixed" });
    if let Some(s) = &report.selection {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let _ = writeln!(m, "js_candidates={}", list(&s.candidates));
        let _ = writeln!(m, "js_per_curve={}", list(&s.per_curve));
    }
    let _ = writeln!(m, "order={}", o.order);
    let _ = writeln!(m, "fit={}", if o.fit == FitArg::Full { "full" } else { "sparse" });
    let _ = writeln!(m, "centering={}", if o.centering == CenteringArg::Empirical { "empirical" } else { "fixed" });
    let _ = writeln!(m, "scaler={}", report.scaler.as_deref().unwrap_or("none"));
    if let Some((b, c1, c2)) = report.constants {
        let _ = writeln!(m, "beta_bar={b:e}");
        let _ = writeln!(m, "c1={c1:e}");
        let _ = writeln!(m, "c2={c2:e}");
    }
    let _ = writeln!(m, "seed={}", o.seed);
    let _ = writeln!(m, "elapsed_seconds={:.6}", start.elapsed().as_secs_f64());
    write_file(&args.output_dir.join("manifest.txt"), &m)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct FpcaReport {
    pub eigenvalues: Vec<f64>,
    pub kappa: usize,
}

pub fn cmd_fpca(args: &FpcaArgs) -> Result<FpcaReport, CliError> {
    let (cov, data) = match (&args.cov, &args.input) {
        (Some(path), _) => {
            let m = load(path)?;
            (GridCovariance::new(m.into_values(), Provenance::External)?, None)
        }
        (None, Some(path)) => {
            let x = load(path)?;
            let r = estimate(&x, &args.opts)?;
            (r.cov, Some((x, r.mean)))
        }
        (None, None) => return Err(CliError::Usage("fpca needs --cov or --input".into())),
    };
    let eig = eigendecompose(&cov)?;
    let kappa = truncate_fve(&eig)?;
    ensure_dir(&args.output_dir)?;
    save_vector(&args.output_dir.join("eigenvalues.csv"), eig.eigenvalues().as_slice())?;
    save_vector(&args.output_dir.join("eigenvalues_raw.csv"), eig.raw_eigenvalues().as_slice())?;
    save_matrix(&args.output_dir.join("eigenfunctions.csv"), &eig.eigenfunctions().columns(0, kappa).into_owned())?;
    write_file(&args.output_dir.join("kappa.txt"), &format!("{kappa}\n"))?;
    if args.scores {
        let (x, mean) = data.as_ref().ok_or_else(|| CliError::Usage("--scores needs --input".into()))?;
        // Scores are taken on the data the covariance was estimated from.
        let s = fpc_scores(x, mean, &eig, kappa)?;
        save_matrix(&args.output_dir.join("scores.csv"), &s.values)?;
    }
    Ok(FpcaReport { eigenvalues: eig.eigenvalues().as_slice().to_vec(), kappa })
}

pub fn simulate_config(args: &SimulateArgs) -> Result<ExperimentConfig, CliError> {
    let scaler = match args.scaler {
        ScalerArg::Unit => ScalerChoice::Unit,
        ScalerArg::Avg => ScalerChoice::Avg,
        ScalerArg::Optimal => ScalerChoice::Optimal,
        ScalerArg::Custom(_) => return Err(CliError::Usage("simulate supports unit, avg or optimal scalers".into())),
    };
    Ok(ExperimentConfig {
        ns: args.n.clone(),
        ds: args.d.clone(),
        replicates: args.replicates,
        seed: args.seed,
        k0: args.k0,
        convention: match args.convention {
            ConventionArg::Floor => EigenConvention::Floor,
            ConventionArg::Ceil => EigenConvention::Ceil,
        },
        order: args.order,
        fit: match args.fit {
            FitArg::Full => FitChoice::Full,
            FitArg::Sparse => FitChoice::Sparse,
        },
        scaler,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<PathBuf, CliError> {
    let cfg = simulate_config(args)?;
    let rows = run_experiment(&cfg)?;
    ensure_dir(&args.output_dir)?;
    let path = args.output_dir.join("results.csv");
    write_file(&path, &format_results(&rows))?;
    Ok(path)
}

pub fn cmd_select_knots(args: &SelectArgs) -> Result<KnotSelection, CliError> {
    let x = load(&args.input)?;
    let method = match args.method {
        MethodArg::RandomKnots => SelectionMethod::RandomKnots { seed: derive_seed(args.seed, &[1]) },
        MethodArg::BsplineFull => SelectionMethod::BsplineFull,
        MethodArg::BsplineSparse => SelectionMethod::BsplineSparse,
    };
    let s = select_knots(&x, args.order, method)?;
    ensure_dir(&args.output_dir)?;
    let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let text = format!(
        "chosen={}\ncandidates={}\nper_curve={}\n",
        s.chosen,
        list(&s.candidates),
        list(&s.per_curve)
    );
    write_file(&args.output_dir.join("selection.txt"), &text)?;
    Ok(s)
}

/// Read back a matrix written by one of the commands.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(parse_matrix(&text)?)
}
