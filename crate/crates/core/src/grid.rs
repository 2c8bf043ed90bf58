//! Data containers on the uniform grid `t_j = j/d` and the non-sparsified
//! sample mean / covariance baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Raw data: `n` node vectors (rows), each sampled at `d` grid points (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMatrix {
    values: DMatrix<f64>,
}

impl NodeMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "node matrix must be non-empty, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let n = values.nrows();
            return Err(Error::NonFinite(format!(
                "entry ({}, {})",
                pos % n + 1,
                pos / n + 1
            )));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::ShapeMismatch {
                expected: format!("{d} columns"),
                got: format!("{} columns in row {}", rows[i].len(), i + 1),
            });
        }
        Self::new(DMatrix::from_fn(n, d, |i, j| rows[i][j]))
    }

    /// Number of nodes.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of grid points per node.
    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// The grid `j/d`, `j = 1..=d`.
    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.d())
    }
}

/// `j/d` for `j = 1..=d`.
pub fn uniform_grid(d: usize) -> Vec<f64> {
    (1..=d).map(|j| j as f64 / d as f64).collect()
}

/// A function sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: DVector<f64>,
}

impl GridFunction {
    pub fn new(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self::new(DVector::from_vec(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self::new(DVector::zeros(d))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    /// `max_j |self_j - other_j|`.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("length {}", self.len()),
                got: format!("length {}", other.len()),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
    }
}

/// Which estimator produced a covariance surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Sample,
    RandomKnots,
    RandomKnotsSpatial,
    Bspline,
    BsplineSpatial,
    Truth,
    External,
}

impl Provenance {
    pub fn label(self) -> &'static str {
        match self {
            Provenance::Sample => "sample",
            Provenance::RandomKnots => "random-knots",
            Provenance::RandomKnotsSpatial => "rks",
            Provenance::Bspline => "bspline",
            Provenance::BsplineSpatial => "bspline-spatial",
            Provenance::Truth => "truth",
            Provenance::External => "external",
        }
    }
}

const SYMMETRY_RTOL: f64 = 1e-12;

/// A `d x d` covariance surface evaluated on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCovariance {
    values: DMatrix<f64>,
    provenance: Provenance,
}

impl GridCovariance {
    /// Validating constructor: square, finite and symmetric to `1e-12` relative
    /// to the largest entry.
    pub fn new(values: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::ShapeMismatch {
                expected: "square matrix".into(),
                got: format!("{}x{}", values.nrows(), values.ncols()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance entry".into()));
        }
        let scale = values.amax().max(f64::MIN_POSITIVE);
        let d = values.nrows();
        for j in 0..d {
            for k in (j + 1)..d {
                if (values[(j, k)] - values[(k, j)]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::InvalidInput(format!(
                        "covariance not symmetric at ({}, {})",
                        j + 1,
                        k + 1
                    )));
                }
            }
        }
        Ok(Self { values, provenance })
    }

    /// For matrices symmetric by construction.
    pub(crate) fn from_symmetric(values: DMatrix<f64>, provenance: Provenance) -> Self {
        debug_assert_eq!(values.nrows(), values.ncols());
        Self { values, provenance }
    }

    pub fn d(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// `max_{j,j'} |self - other|`.
    pub fn sup_distance(&self, other: &GridCovariance) -> Result<f64> {
        check_same_shape(self, other)?;
        Ok((&self.values - &other.values).amax())
    }
}

fn check_same_shape(a: &GridCovariance, b: &GridCovariance) -> Result<()> {
    if a.d() != b.d() {
        return Err(Error::ShapeMismatch {
            expected: format!("{0}x{0}", a.d()),
            got: format!("{0}x{0}", b.d()),
        });
    }
    Ok(())
}

/// Column averages `(1/n) sum_i v_ij`.
pub(crate) fn column_means(values: &DMatrix<f64>) -> DVector<f64> {
    let n = values.nrows() as f64;
    DVector::from_iterator(
        values.ncols(),
        values.column_iter().map(|c| c.iter().sum::<f64>() / n),
    )
}

/// `(1/n) C^T C` scaled entrywise by `f_j f_j'`, mirrored so the result is
/// exactly symmetric. All covariance estimators share this kernel, so
/// reductions to the sample covariance are bit-exact when the factors are 1.
pub(crate) fn scaled_cross_product(centered: &DMatrix<f64>, factors: Option<&[f64]>) -> DMatrix<f64> {
    let n = centered.nrows() as f64;
    let d = centered.ncols();
    let mut g = centered.transpose() * centered;
    for j in 0..d {
        for k in j..d {
            let mut v = g[(j, k)] / n;
            if let Some(f) = factors {
                v *= f[j] * f[k];
            }
            g[(j, k)] = v;
            g[(k, j)] = v;
        }
    }
    g
}

/// Sample mean `m̄_j = (1/n) sum_i x_ij`.
pub fn sample_mean(x: &NodeMatrix) -> GridFunction {
    GridFunction::new(column_means(x.values()))
}

/// Sample covariance with divisor `n`:
/// `Ḡ_jj' = (1/n) sum_i (x_ij - m̄_j)(x_ij' - m̄_j')`.
pub fn sample_cov(x: &NodeMatrix) -> GridCovariance {
    let mean = column_means(x.values());
    let centered = subtract_row_vector(x.values(), &mean);
    GridCovariance::from_symmetric(scaled_cross_product(&centered, None), Provenance::Sample)
}

pub(crate) fn subtract_row_vector(values: &DMatrix<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let mut out = values.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-v[j]);
    }
    out
}

/// Squared Frobenius distance between two covariance surfaces; with
/// `normalized` the sum is divided by `d^2`.
pub fn frobenius_mse(a: &GridCovariance, b: &GridCovariance, normalized: bool) -> Result<f64> {
    check_same_shape(a, b)?;
    let ss: f64 = a
        .values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    if normalized {
        let d = a.d() as f64;
        Ok(ss / (d * d))
    } else {
        Ok(ss)
    }
}
