//! AIC choice of the number of knots `J_s`.
//!
//! Each curve picks the candidate `J ∈ {1..J*}`, `J* = min(10, ⌊d/2⌋)`,
//! minimising `log(RSS/d) + 2(J + p)/d`; the batch-level choice is the lower
//! median of the per-curve choices.

use nalgebra::DMatrix;

use crate::bspline::{design_matrix, fit_batch, make_knots, FitMode};
use crate::error::{Error, Result};
use crate::grid::NodeMatrix;
use crate::sparsify::{bernoulli_sparsify, derive_seed, fixed_positions};

pub const MAX_CANDIDATE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionMethod {
    /// Scaled sparsified vector `(d/J) h_i(J)`, one Bernoulli mask per
    /// candidate drawn from `seed`. The penalty uses `p = 0`.
    RandomKnots { seed: u64 },
    /// Spline least squares over all grid points.
    BsplineFull,
    /// Spline least squares over `J + p` fixed positions.
    BsplineSparse,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnotSelection {
    pub per_curve: Vec<usize>,
    pub chosen: usize,
    pub candidates: Vec<usize>,
}

/// `log(RSS/d) + 2(J + p)/d`.
pub fn aic_value(rss: f64, d: usize, j: usize, p_eff: usize) -> Result<f64> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(Error::InvalidInput(format!("AIC needs a positive finite RSS, got {rss}")));
    }
    if d == 0 {
        return Err(Error::InvalidInput("AIC needs d >= 1".into()));
    }
    Ok((rss / d as f64).ln() + 2.0 * (j + p_eff) as f64 / d as f64)
}

/// `1..=min(10, ⌊d/2⌋)`.
pub fn candidates(d: usize) -> Vec<usize> {
    (1..=MAX_CANDIDATE.min(d / 2)).collect()
}

/// Lower median of a non-empty multiset.
pub fn lower_median(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Trajectory estimates of every curve for candidate `j`, or `None` when the
/// candidate cannot be fitted.
fn trajectories(x: &NodeMatrix, j: usize, p: usize, method: SelectionMethod) -> Option<DMatrix<f64>> {
    let d = x.d();
    match method {
        SelectionMethod::RandomKnots { seed } => {
            let b = bernoulli_sparsify(x, j, derive_seed(seed, &[j as u64])).ok()?;
            Some(b.values() * (d as f64 / j as f64))
        }
        SelectionMethod::BsplineFull => {
            let basis = design_matrix(d, &make_knots(j, p).ok()?).ok()?;
            Some(fit_batch(x, &basis, &FitMode::Full).ok()?.into_values())
        }
        SelectionMethod::BsplineSparse => {
            let basis = design_matrix(d, &make_knots(j, p).ok()?).ok()?;
            let positions = fixed_positions(d, j + p).ok()?;
            Some(fit_batch(x, &basis, &FitMode::SparseKnotsOnly { positions }).ok()?.into_values())
        }
    }
}

/// Per-curve AIC argmin over the candidate pool, then the lower median.
///
/// A perfect fit (RSS at rounding level) is floored at `d·ε·mean(x_i²)` so
/// that the penalty decides between exact candidates; ties go to the smaller
/// `J`.
pub fn select_knots(x: &NodeMatrix, p_eff: usize, method: SelectionMethod) -> Result<KnotSelection> {
    let (n, d) = (x.n(), x.d());
    if d < 2 {
        return Err(Error::InvalidInput(format!("knot selection needs d >= 2, got {d}")));
    }
    let penalty_order = match method {
        SelectionMethod::RandomKnots { .. } => 0,
        _ => {
            if p_eff == 0 {
                return Err(Error::InvalidInput("spline order must be >= 1".into()));
            }
            p_eff
        }
    };
    let cands = candidates(d);
    let floors: Vec<f64> = (0..n)
        .map(|i| {
            let energy = x.values().row(i).norm_squared() / d as f64;
            let f = d as f64 * f64::EPSILON * energy;
            if f > 0.0 {
                f
            } else {
                f64::MIN_POSITIVE
            }
        })
        .collect();

    let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
    for &j in &cands {
        let Some(h) = trajectories(x, j, p_eff, method) else {
            continue;
        };
        let resid = x.values() - h;
        for i in 0..n {
            let rss = resid.row(i).norm_squared().max(floors[i]);
            let aic = aic_value(rss, d, j, penalty_order)?;
            if best[i].is_none_or(|(b, _)| aic < b) {
                best[i] = Some((aic, j));
            }
        }
    }
    let per_curve: Vec<usize> = best
        .into_iter()
        .map(|b| b.map(|(_, j)| j))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Numeric("no feasible knot count among the candidates".into()))?;
    Ok(KnotSelection { chosen: lower_median(&per_curve), per_curve, candidates: cands })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::uniform_grid;

    #[test]
    fn aic_examples() {
        assert!((aic_value(100.0, 100, 5, 4).unwrap() - 0.18).abs() < 1e-15);
        let a = aic_value(3.0, 50, 2, 4).unwrap();
        let b = aic_value(6.0, 50, 2, 4).unwrap();
        assert!((b - a - 2f64.ln()).abs() < 1e-14);
        assert!((aic_value(50.0, 100, 5, 4).unwrap() - (-0.513_147_180_559_945_3)).abs() < 1e-12);
        assert!(aic_value(0.0, 10, 1, 0).is_err());
    }

    #[test]
    fn candidate_pool() {
        assert_eq!(candidates(3), vec![1]);
        assert_eq!(candidates(9), vec![1, 2, 3, 4]);
        assert_eq!(candidates(200).len(), 10);
        assert_eq!(lower_median(&[4, 1, 3, 2]), 2);
        assert_eq!(lower_median(&[5]), 5);
    }

    #[test]
    fn tiny_grid_forces_one_knot() {
        let x = NodeMatrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.0, 1.0, 3.0]]).unwrap();
        let s = select_knots(&x, 0, SelectionMethod::RandomKnots { seed: 1 }).unwrap();
        assert_eq!(s.chosen, 1);
        assert_eq!(s.candidates, vec![1]);
        assert!(select_knots(&NodeMatrix::from_rows(&[vec![1.0]]).unwrap(), 4, SelectionMethod::BsplineFull).is_err());
    }

    #[test]
    fn cubic_curves_pick_few_knots() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                let a = 1.0 + i as f64;
                uniform_grid(100).iter().map(|t| a * t * t * t - 2.0 * t + 0.3 * a).collect()
            })
            .collect();
        let x = NodeMatrix::from_rows(&rows).unwrap();
        let s = select_knots(&x, 4, SelectionMethod::BsplineFull).unwrap();
        assert!(s.chosen <= 2, "{s:?}");
        let s = select_knots(&x, 4, SelectionMethod::BsplineSparse).unwrap();
        assert!(s.chosen <= 2, "{s:?}");
    }

    #[test]
    fn infeasible_everywhere_is_an_error() {
        // d = 5: candidates {1, 2}; sparse cubic fits need 5 and 6 distinct positions.
        let x = NodeMatrix::from_rows(&[vec![1.0, 0.0, 2.0, 1.0, 3.0]]).unwrap();
        assert!(select_knots(&x, 4, SelectionMethod::BsplineSparse).is_err());
    }

    #[test]
    fn row_permutation_invariant() {
        let x = NodeMatrix::new(DMatrix::from_fn(7, 60, |i, j| ((i + 2) as f64 * j as f64 * 0.11).sin())).unwrap();
        let mut rev = x.values().clone();
        for i in 0..7 {
            rev.set_row(i, &x.values().row(6 - i));
        }
        let y = NodeMatrix::new(rev).unwrap();
        let a = select_knots(&x, 4, SelectionMethod::BsplineFull).unwrap();
        let b = select_knots(&y, 4, SelectionMethod::BsplineFull).unwrap();
        assert_eq!(a.chosen, b.chosen);
    }
}
