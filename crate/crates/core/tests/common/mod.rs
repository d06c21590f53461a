//! Reference computations written independently of the library: plain loops,
//! Gaussian elimination and brute-force enumeration.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rows = Vec<Vec<f64>>;

/// Rows `[1, z_1, ..., z_d]` with standard normal `z`.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Rows {
    (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            r
        })
        .collect()
}

pub fn random_binary(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        if y.contains(&0.0) && y.contains(&1.0) {
            return y;
        }
    }
}

pub fn to_matrix(rows: &Rows) -> icls::Matrix {
    let cols = rows.first().map_or(0, Vec::len);
    icls::Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j])
}

pub fn to_vector(v: &[f64]) -> icls::Vector {
    icls::Vector::from_column_slice(v)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        a.swap(k, p);
        b.swap(k, p);
        assert!(a[k][k].abs() > 1e-300, "singular system");
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}

/// Least squares coefficients through the normal equations.
pub fn ols(rows: &Rows, y: &[f64]) -> Vec<f64> {
    let p = rows[0].len();
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, &t) in rows.iter().zip(y) {
        for i in 0..p {
            xty[i] += r[i] * t;
            for j in 0..p {
                xtx[i][j] += r[i] * r[j];
            }
        }
    }
    gauss_solve(xtx, xty)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean squared residual of `beta` on `(rows, y)`.
pub fn risk(rows: &Rows, y: &[f64], beta: &[f64]) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(r, t)| (dot(r, beta) - t).powi(2))
        .sum::<f64>()
        / y.len() as f64
}

/// Labeled loss of the least squares fit to labeled plus imputed targets.
pub fn imputed_objective(xl: &Rows, y: &[f64], xu: &Rows, yu: &[f64]) -> f64 {
    let rows: Rows = xl.iter().chain(xu).cloned().collect();
    let targets: Vec<f64> = y.iter().chain(yu).copied().collect();
    risk(xl, y, &ols(&rows, &targets))
}

/// Exact minimum over `[0,1]^U` for `U ∈ {1, 2}`, from the quadratic's
/// coefficients recovered by evaluation: interior stationary point, the
/// minimizer along each edge, and the corners.
pub fn box_minimum(f: &dyn Fn(&[f64]) -> f64, u: usize) -> f64 {
    let clamp = |t: f64| t.clamp(0.0, 1.0);
    // a t² + b t + c through t = 0, 1/2, 1
    let line = |g: &dyn Fn(f64) -> f64| {
        let (f0, fh, f1) = (g(0.0), g(0.5), g(1.0));
        let a = 2.0 * (f1 - 2.0 * fh + f0);
        let b = f1 - f0 - a;
        let t = if a > 0.0 { clamp(-b / (2.0 * a)) } else if f1 < f0 { 1.0 } else { 0.0 };
        g(t)
    };
    match u {
        1 => line(&|t| f(&[t])),
        2 => {
            let mut best = f64::INFINITY;
            for fixed in [0.0, 1.0] {
                best = best.min(line(&|t| f(&[fixed, t])));
                best = best.min(line(&|t| f(&[t, fixed])));
            }
            // f = ½ vᵀHv + gᵀv + c
            let f00 = f(&[0.0, 0.0]);
            let h11 = f(&[1.0, 0.0]) + f(&[-1.0, 0.0]) - 2.0 * f00;
            let h22 = f(&[0.0, 1.0]) + f(&[0.0, -1.0]) - 2.0 * f00;
            let h12 = (f(&[1.0, 1.0]) - f(&[1.0, 0.0]) - f(&[0.0, 1.0]) + f00
                - (f(&[-1.0, 1.0]) - f(&[-1.0, 0.0]) - f(&[0.0, 1.0]) + f00))
                / 2.0;
            let g1 = (f(&[1.0, 0.0]) - f(&[-1.0, 0.0])) / 2.0;
            let g2 = (f(&[0.0, 1.0]) - f(&[0.0, -1.0])) / 2.0;
            let det = h11 * h22 - h12 * h12;
            if det > 1e-14 * (h11 * h22).abs().max(1e-300) {
                let v1 = (-h22 * g1 + h12 * g2) / det;
                let v2 = (h12 * g1 - h11 * g2) / det;
                if (0.0..=1.0).contains(&v1) && (0.0..=1.0).contains(&v2) {
                    best = best.min(f(&[v1, v2]));
                }
            }
            best
        }
        _ => panic!("only U = 1 or 2"),
    }
}

/// Average ranks of `|d|` over the non-zero differences, in input order.
pub fn average_ranks(diffs: &[f64]) -> Vec<f64> {
    let n = diffs.len();
    (0..n)
        .map(|i| {
            let a = diffs[i].abs();
            let below = diffs.iter().filter(|d| d.abs() < a).count() as f64;
            let equal = diffs.iter().filter(|d| d.abs() == a).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

/// `P(W⁺ ≤ observed)` over all `2^n` sign patterns of the non-zero differences.
pub fn signed_rank_enumeration(a: &[f64], b: &[f64]) -> f64 {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return 1.0;
    }
    let ranks = average_ranks(&diffs);
    let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
    let mut count = 0u64;
    for mask in 0u64..(1 << n) {
        let w: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
        // ranks are multiples of 1/2, so sums compare exactly
        if w <= observed {
            count += 1;
        }
    }
    count as f64 / (1u64 << n) as f64
}
