//! Summary statistics and the Wilcoxon signed rank test.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of non-zero differences for which the exact null
/// distribution is used; above it the normal approximation takes over.
pub const EXACT_MAX_N: usize = 20;

/// Arithmetic mean, accumulated in index order.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator) divided by √n.
pub fn standard_error(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::input(format!(
            "standard error needs at least two values, got {n}"
        )));
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Ok((ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Sum of the ranks of the positive differences `a − b`.
    pub statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    /// Number of non-zero differences that entered the test.
    pub n_used: usize,
    pub exact: bool,
}

/// One-sided Wilcoxon signed rank test of the alternative `a < b`.
///
/// Zero differences are dropped and tied absolute differences share the mean
/// of their ranks. The p-value is `P(W⁺ ≤ observed)` under the null, exact
/// (by counting sign assignments) for up to [`EXACT_MAX_N`] differences and
/// from a tie-corrected normal approximation with continuity correction
/// above that.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64], alpha: f64) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 5 {
        return Err(Error::input("signed rank test needs at least 5 pairs"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in paired samples"));
    }

    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            significant: false,
            n_used: 0,
            exact: true,
        });
    }

    let doubled = doubled_ranks(&diffs);
    let w2: u64 = diffs
        .iter()
        .zip(&doubled)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();

    let (p_value, exact) = if n <= EXACT_MAX_N {
        (exact_lower_tail(&doubled, w2), true)
    } else {
        (normal_lower_tail(&doubled, w2), false)
    };
    Ok(WilcoxonResult {
        statistic: w2 as f64 / 2.0,
        p_value,
        significant: p_value < alpha,
        n_used: n,
        exact,
    })
}

/// Twice the average ranks of `|d|`, so that tied half ranks stay integral.
pub(crate) fn doubled_ranks(diffs: &[f64]) -> Vec<u64> {
    let n = diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let mut ranks = vec![0u64; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && diffs[order[end]].abs() == diffs[order[start]].abs() {
            end += 1;
        }
        // ranks start+1 ..= end share their mean; doubled: start + 1 + end
        let shared = (start + 1 + end) as u64;
        for &k in &order[start..end] {
            ranks[k] = shared;
        }
        start = end;
    }
    ranks
}

/// `P(W⁺ ≤ w)` over the 2ⁿ equally likely sign assignments, counted by
/// dynamic programming on the (doubled) rank sums.
fn exact_lower_tail(doubled: &[u64], w2_observed: u64) -> f64 {
    let total: u64 = doubled.iter().sum();
    let mut counts = vec![0f64; total as usize + 1];
    counts[0] = 1.0;
    let mut reach = 0usize;
    for &r in doubled {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] != 0.0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let below: f64 = counts[..=(w2_observed as usize)].iter().sum();
    below / 2f64.powi(doubled.len() as i32)
}

fn normal_lower_tail(doubled: &[u64], w2_observed: u64) -> f64 {
    let n = doubled.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = doubled.to_vec();
    sorted.sort_unstable();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let w = w2_observed as f64 / 2.0;
    let z = (w - mean + 0.5) / var.sqrt();
    Normal::standard().cdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute force over all 2ⁿ sign patterns of the ranks.
    fn enumeration_p(a: &[f64], b: &[f64]) -> f64 {
        let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
        let n = diffs.len();
        if n == 0 {
            return 1.0;
        }
        // average ranks by direct counting
        let ranks: Vec<f64> = diffs
            .iter()
            .map(|d| {
                let less = diffs.iter().filter(|e| e.abs() < d.abs()).count() as f64;
                let equal = diffs.iter().filter(|e| e.abs() == d.abs()).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect();
        let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let mut hits = 0u64;
        for mask in 0u64..(1 << n) {
            let w: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| ranks[k]).sum();
            if w <= observed + 1e-9 {
                hits += 1;
            }
        }
        hits as f64 / (1u64 << n) as f64
    }

    #[test]
    fn standard_error_cases() {
        assert_eq!(standard_error(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!((standard_error(&[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(standard_error(&[1.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..37).map(|_| rng.random_range(-5.0..5.0)).collect();
        let mut s = 0.0;
        for x in &v {
            s += x;
        }
        let m = s / 37.0;
        let mut ss = 0.0;
        for x in &v {
            ss += (x - m) * (x - m);
        }
        let oracle = (ss / 36.0).sqrt() / 37f64.sqrt();
        assert!((standard_error(&v).unwrap() - oracle).abs() < 1e-14);
    }

    #[test]
    fn identical_samples_are_not_significant() {
        let a = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let r = wilcoxon_signed_rank(&a, &a, 0.01).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(!r.significant);
    }

    #[test]
    fn uniformly_smaller_hits_minimum_p() {
        let b: Vec<f64> = (0..10).map(|i| i as f64 * 0.37).collect();
        let a: Vec<f64> = b.iter().map(|v| v - 1.0).collect();
        let r = wilcoxon_signed_rank(&a, &b, 0.01).unwrap();
        assert_eq!(r.p_value, 1.0 / 1024.0);
        assert!(r.significant);
        assert_eq!(r.statistic, 0.0);
        // the reverse direction is as far from significant as possible
        let r = wilcoxon_signed_rank(&b, &a, 0.01).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn random_pairs_match_full_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..40 {
            let n = 12;
            // coarse grid values produce ties and zero differences
            let a: Vec<f64> = (0..n).map(|_| (rng.random_range(0..8) as f64) / 4.0).collect();
            let b: Vec<f64> = (0..n)
                .map(|_| if trial % 2 == 0 { (rng.random_range(0..8) as f64) / 4.0 } else { rng.random_range(0.0..2.0) })
                .collect();
            let r = wilcoxon_signed_rank(&a, &b, 0.01).unwrap();
            assert!((r.p_value - enumeration_p(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_approximation_tracks_exact_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..40).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v + rng.random_range(-0.3..0.6)).collect();
        let r = wilcoxon_signed_rank(&a, &b, 0.01).unwrap();
        assert!(!r.exact && r.n_used == 40);
        let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let exact = exact_lower_tail(&doubled_ranks(&d), (r.statistic * 2.0) as u64);
        assert!((r.p_value - exact).abs() < 5e-3, "{} vs {}", r.p_value, exact);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(wilcoxon_signed_rank(&[1.0; 4], &[2.0; 4], 0.01).is_err());
        assert!(wilcoxon_signed_rank(&[1.0; 6], &[2.0; 5], 0.01).is_err());
        assert!(wilcoxon_signed_rank(&[f64::NAN; 6], &[2.0; 6], 0.01).is_err());
    }

    #[test]
    fn doubled_ranks_average_ties() {
        assert_eq!(doubled_ranks(&[0.5, -0.5, 2.0, 0.1]), vec![5, 5, 8, 2]);
    }
}
