//! Brute-force reference computations used by the test suites.
//!
//! Everything here is written with plain `Vec`s and direct loops, shares no
//! code with `sparsecov`, and favours obviousness over speed: expectations over
//! Bernoulli masks are computed by enumerating all `2^{nd}` masks.

pub type Matrix = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Matrix {
    vec![vec![0.0; c]; r]
}

pub fn naive_mean(x: &Matrix) -> Vec<f64> {
    let n = x.len() as f64;
    let d = x[0].len();
    (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect()
}

/// `(1/n) Σ_i (x_i − x̄)(x_i − x̄)ᵀ`.
pub fn naive_cov(x: &Matrix) -> Matrix {
    let m = naive_mean(x);
    let n = x.len() as f64;
    let d = m.len();
    let mut g = zeros(d, d);
    for r in x {
        for j in 0..d {
            for k in 0..d {
                g[j][k] += (r[j] - m[j]) * (r[k] - m[k]) / n;
            }
        }
    }
    g
}

/// Binomial coefficient by the multiplicative formula.
pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// `β̄` by direct summation; `t[r-1] = T(r)`.
pub fn beta_bar_direct(n: usize, p: f64, t: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 1..=n {
        s += p / t[r - 1] * choose(n - 1, r - 1) * p.powi(r as i32 - 1) * (1.0 - p).powi((n - r) as i32);
    }
    1.0 / s
}

pub fn c1_direct(n: usize, p: f64, t: &[f64]) -> f64 {
    let b = beta_bar_direct(n, p, t);
    let mut s = 0.0;
    for r in 1..=n {
        s += p / (t[r - 1] * t[r - 1]) * choose(n - 1, r - 1) * p.powi(r as i32 - 1) * (1.0 - p).powi((n - r) as i32);
    }
    b * b * s - 1.0 / p
}

pub fn c2_direct(n: usize, p: f64, t: &[f64]) -> f64 {
    let b = beta_bar_direct(n, p, t);
    let mut s = 0.0;
    for r in 2..=n {
        s += p * p / (t[r - 1] * t[r - 1]) * choose(n - 2, r - 2) * p.powi(r as i32 - 2) * (1.0 - p).powi((n - r) as i32);
    }
    1.0 - b * b * s
}

/// How the retained values are centred.
#[derive(Debug, Clone)]
pub enum Center {
    /// Column means of the zero-filled batch.
    Empirical,
    /// `h_ij − c_j` on retained entries, zero elsewhere.
    Fixed(Vec<f64>),
}

/// Mask `bits` over an `n × d` grid: bit `i·d + j` set means retained.
pub fn mask_bit(bits: u64, d: usize, i: usize, j: usize) -> bool {
    bits >> (i * d + j) & 1 == 1
}

fn centred(x: &Matrix, bits: u64, center: &Center) -> Matrix {
    let (n, d) = (x.len(), x[0].len());
    let h: Matrix = (0..n)
        .map(|i| (0..d).map(|j| if mask_bit(bits, d, i, j) { x[i][j] } else { 0.0 }).collect())
        .collect();
    match center {
        Center::Empirical => {
            let m = naive_mean(&h);
            h.iter().map(|r| r.iter().zip(&m).map(|(a, b)| a - b).collect()).collect()
        }
        Center::Fixed(c) => (0..n)
            .map(|i| (0..d).map(|j| if mask_bit(bits, d, i, j) { x[i][j] - c[j] } else { 0.0 }).collect())
            .collect(),
    }
}

/// Spatial covariance estimate for one mask with per-coverage scaler `t`
/// (`t` all ones gives Random-knots).
pub fn spatial_cov_for_mask(x: &Matrix, bits: u64, js: usize, t: &[f64], center: &Center) -> Matrix {
    let (n, d) = (x.len(), x[0].len());
    let p = js as f64 / d as f64;
    let constant = t.iter().all(|&v| v == t[0]);
    let b = if constant { t[0] * d as f64 / js as f64 } else { beta_bar_direct(n, p, t) };
    let coverage: Vec<usize> = (0..d).map(|j| (0..n).filter(|&i| mask_bit(bits, d, i, j)).count()).collect();
    let factor: Vec<f64> = coverage.iter().map(|&m| if m == 0 { 0.0 } else { b / t[m - 1] }).collect();
    let c = centred(x, bits, center);
    let mut g = zeros(d, d);
    for j in 0..d {
        for k in 0..d {
            let s: f64 = (0..n).map(|i| c[i][j] * c[i][k]).sum();
            g[j][k] = factor[j] * factor[k] * s / n as f64;
        }
    }
    g
}

/// Exact moments of an estimator over all Bernoulli(`js/d`) masks.
#[derive(Debug, Clone)]
pub struct MaskMoments {
    /// `E[Ĝ]`.
    pub mean: Matrix,
    /// `E ‖Ĝ − Ḡ‖²_F`.
    pub mse: f64,
    /// `E Σ_{j≠j'} (Ĝ − Ḡ)²_{jj'}`.
    pub mse_off_diagonal: f64,
}

pub fn enumerate_moments(x: &Matrix, js: usize, estimate: impl Fn(u64) -> Matrix) -> MaskMoments {
    let (n, d) = (x.len(), x[0].len());
    assert!(n * d <= 24, "enumeration limited to n·d <= 24");
    let p = js as f64 / d as f64;
    let gbar = naive_cov(x);
    let mut mean = zeros(d, d);
    let (mut mse, mut off) = (0.0, 0.0);
    for bits in 0..(1u64 << (n * d)) {
        let kept = bits.count_ones() as i32;
        let w = p.powi(kept) * (1.0 - p).powi((n * d) as i32 - kept);
        if w == 0.0 {
            continue;
        }
        let g = estimate(bits);
        for j in 0..d {
            for k in 0..d {
                mean[j][k] += w * g[j][k];
                let e = (g[j][k] - gbar[j][k]).powi(2);
                mse += w * e;
                if j != k {
                    off += w * e;
                }
            }
        }
    }
    MaskMoments { mean, mse, mse_off_diagonal: off }
}

/// Energies `(R₁, R₂)` of the de-meaned rows `z_i`:
/// `R₁ = Σ_i ‖z_i‖⁴`, `R₂ = Σ_{i≠k} ⟨z_i, z_k⟩²`.
pub fn energies(x: &Matrix) -> (f64, f64) {
    let z = demeaned(x);
    let n = z.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for i in 0..n {
        r1 += dot(&z[i], &z[i]).powi(2);
        for k in 0..n {
            if k != i {
                r2 += dot(&z[i], &z[k]).powi(2);
            }
        }
    }
    (r1, r2)
}

/// The same energies with the diagonal terms `j = j'` of the outer products
/// removed.
pub fn energies_off_diagonal(x: &Matrix) -> (f64, f64) {
    let z = demeaned(x);
    let (n, d) = (z.len(), z[0].len());
    let mut r1 = 0.0;
    let mut r2 = 0.0;
    for i in 0..n {
        for k in 0..n {
            for j in 0..d {
                for l in 0..d {
                    if j != l {
                        let v = z[i][j] * z[i][l] * z[k][j] * z[k][l];
                        if i == k {
                            r1 += v;
                        } else {
                            r2 += v;
                        }
                    }
                }
            }
        }
    }
    (r1, r2)
}

fn demeaned(x: &Matrix) -> Matrix {
    let m = naive_mean(x);
    x.iter().map(|r| r.iter().zip(&m).map(|(a, b)| a - b).collect()).collect()
}

/// `(1/n²)((d/js + c₁)² − 1) R₁ + (1/n²)((1 − c₂)² − 1) R₂` with constants by
/// direct summation.
pub fn mse_formula(n: usize, d: usize, js: usize, t: &[f64], r1: f64, r2: f64) -> f64 {
    let p = js as f64 / d as f64;
    let nn = (n * n) as f64;
    let c1 = c1_direct(n, p, t);
    let c2 = if n >= 2 { c2_direct(n, p, t) } else { 0.0 };
    ((d as f64 / js as f64 + c1).powi(2) - 1.0) * r1 / nn + ((1.0 - c2).powi(2) - 1.0) * r2 / nn
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_by_hand() {
        assert!((beta_bar_direct(2, 0.5, &[1.0, 2.0]) - 8.0 / 3.0).abs() < 1e-14);
        assert!((c2_direct(2, 0.5, &[1.0, 2.0]) - 5.0 / 9.0).abs() < 1e-14);
        assert!(c1_direct(4, 0.3, &[1.0; 4]).abs() < 1e-12);
        assert_eq!(choose(5, 2), 10.0);
    }

    #[test]
    fn full_retention_is_exact() {
        let x = vec![vec![1.0, 2.0], vec![0.5, -1.0]];
        let all = (1u64 << 4) - 1;
        let g = spatial_cov_for_mask(&x, all, 2, &[1.0, 1.0], &Center::Empirical);
        let s = naive_cov(&x);
        for j in 0..2 {
            for k in 0..2 {
                assert!((g[j][k] - s[j][k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn energies_sum_to_outer_product_energy() {
        let x = vec![vec![1.0, 2.0, 0.0], vec![0.5, -1.0, 3.0], vec![2.0, 0.0, 1.0]];
        let (r1, r2) = energies(&x);
        let g = naive_cov(&x);
        let total: f64 = g.iter().flatten().map(|v| (3.0 * v).powi(2)).sum();
        assert!((r1 + r2 - total).abs() < 1e-10);
    }
}
