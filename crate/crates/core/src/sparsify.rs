//! Sparsification of node vectors and coverage counting.
//!
//! Dropped coordinates are zero-filled, so the sparsified batch can be fed to
//! plain matrix algebra.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::NodeMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Each entry retained independently with probability `js/d`.
    Bernoulli,
    /// Every row keeps the same `js` columns.
    FixedPositions,
}

/// Sparsified vectors `H` with their retention mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBatch {
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    js: usize,
    scheme: Scheme,
    positions: Vec<usize>,
}

impl SparseBatch {
    /// Bernoulli-scheme batch built from an explicit mask (row `i`, column `j`
    /// retained when `mask[(i, j)]`). Used to evaluate estimators on
    /// enumerated or externally drawn masks.
    pub fn with_mask(x: &NodeMatrix, js: usize, mask: DMatrix<bool>) -> Result<Self> {
        check_js(js, x.d())?;
        if mask.shape() != x.values().shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} mask", x.n(), x.d()),
                got: format!("{}x{}", mask.nrows(), mask.ncols()),
            });
        }
        Ok(Self {
            values: apply_mask(x.values(), &mask),
            mask,
            js,
            scheme: Scheme::Bernoulli,
            positions: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    /// Zero-filled sparsified values `H`.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn is_retained(&self, i: usize, j: usize) -> bool {
        self.mask[(i, j)]
    }

    /// Target retention count per row.
    pub fn js(&self) -> usize {
        self.js
    }

    /// Retention probability `js/d`.
    pub fn retention_probability(&self) -> f64 {
        self.js as f64 / self.d() as f64
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Zero-based retained columns (fixed scheme only; empty otherwise).
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }
}

/// Per-column counts `M_j` of nodes that retained coordinate `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageCounts {
    counts: Vec<usize>,
}

impl CoverageCounts {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

fn check_js(js: usize, d: usize) -> Result<()> {
    if js == 0 || js > d {
        return Err(Error::RetentionOutOfRange { js, d });
    }
    Ok(())
}

fn apply_mask(values: &DMatrix<f64>, mask: &DMatrix<bool>) -> DMatrix<f64> {
    values.zip_map(mask, |v, keep| if keep { v } else { 0.0 })
}

/// Keep each entry independently with probability `js/d`. Deterministic in
/// `seed`; entries are drawn row by row.
pub fn bernoulli_sparsify(x: &NodeMatrix, js: usize, seed: u64) -> Result<SparseBatch> {
    let (n, d) = (x.n(), x.d());
    check_js(js, d)?;
    let p = js as f64 / d as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = DMatrix::from_element(n, d, false);
    for i in 0..n {
        for j in 0..d {
            mask[(i, j)] = rng.random::<f64>() < p;
        }
    }
    SparseBatch::with_mask(x, js, mask)
}

/// Zero-based columns nearest to the interior knots `l/(js+1)`:
/// grid index `round(l*d/(js+1))` (1-based, halves rounded up), clamped to
/// `[1, d]`.
pub fn fixed_positions(d: usize, js: usize) -> Result<Vec<usize>> {
    check_js(js, d)?;
    let denom = js + 1;
    let mut positions = Vec::with_capacity(js);
    for l in 1..=js {
        // round(l*d/denom) in integer arithmetic.
        let idx = (2 * l * d + denom) / (2 * denom);
        let idx = idx.clamp(1, d);
        if positions.last().is_some_and(|&last| last + 1 >= idx) {
            return Err(Error::PositionCollision { js, d });
        }
        positions.push(idx - 1);
    }
    Ok(positions)
}

/// Retain the same `js` fixed columns in every row.
pub fn fixed_sparsify(x: &NodeMatrix, js: usize) -> Result<SparseBatch> {
    let positions = fixed_positions(x.d(), js)?;
    let mut mask = DMatrix::from_element(x.n(), x.d(), false);
    for &j in &positions {
        mask.column_mut(j).fill(true);
    }
    Ok(SparseBatch {
        values: apply_mask(x.values(), &mask),
        mask,
        js,
        scheme: Scheme::FixedPositions,
        positions,
    })
}

/// Child seed for a labelled sub-stream: SplitMix64 folded over `parts`.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Column sums of the retention mask.
pub fn coverage_counts(batch: &SparseBatch) -> CoverageCounts {
    CoverageCounts::new(
        batch
            .mask
            .column_iter()
            .map(|c| c.iter().filter(|&&m| m).count())
            .collect(),
    )
}
