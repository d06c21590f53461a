//! Univariate least squares without intercept, `y ≈ xβ`.
//!
//! With the feature distribution known, every labeling `E[y|x] ∈ [0,1]` gives a
//! risk minimizer, and those minimizers form an interval. The true minimizer β*
//! lies in it, the risk is a parabola around β*, so clipping the supervised
//! estimate into the interval can never increase the risk. Here the known
//! distribution is a large finite population and every integral is a sum over
//! it, which makes the guarantee checkable exactly.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_POPULATION: usize = 100_000;
/// Absolute slack on the risk comparison.
pub const RISK_TOL: f64 = 1e-12;

/// A finite population standing in for the joint distribution of `(x, y)`.
#[derive(Debug, Clone)]
pub struct Population1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
    sum_xx: f64,
    sum_xy: f64,
    sum_yy: f64,
}

impl Population1D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::dim(format!(
                "{} feature values for {} labels",
                xs.len(),
                ys.len()
            )));
        }
        if xs.is_empty() {
            return Err(Error::input("empty population"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite population value"));
        }
        if ys.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::input("population labels must be 0 or 1"));
        }
        let sum_xx: f64 = xs.iter().map(|x| x * x).sum();
        if sum_xx == 0.0 {
            return Err(Error::input("second moment of x is zero"));
        }
        let sum_xy = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sum_yy = ys.iter().map(|y| y * y).sum();
        Ok(Population1D {
            xs,
            ys,
            sum_xx,
            sum_xy,
            sum_yy,
        })
    }

    /// Equal-prior mixture with class 0 ~ N(−1, 1) and class 1 ~ N(+1, 1).
    pub fn two_gaussians(size: usize, seed: u64) -> Result<Self> {
        let mut rng = rng::master(seed);
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let mut xs = Vec::with_capacity(size);
        let mut ys = Vec::with_capacity(size);
        for _ in 0..size {
            let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            xs.push(2.0 * y - 1.0 + noise.sample(&mut rng));
            ys.push(y);
        }
        Population1D::new(xs, ys)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// The risk minimizer under the population's own labeling.
    pub fn beta_star(&self) -> f64 {
        self.sum_xy / self.sum_xx
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaInterval {
    pub lo: f64,
    pub hi: f64,
}

impl BetaInterval {
    pub fn contains(&self, beta: f64) -> bool {
        self.lo <= beta && beta <= self.hi
    }
}

/// `Σ xᵢyᵢ / Σ xᵢ²`.
pub fn supervised_beta_1d(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::dim("xs and ys differ in length"));
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if !(sxx > 0.0) {
        return Err(Error::input("all feature values are zero"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    Ok(sxy / sxx)
}

/// Range of `Σ xᵢqᵢ / Σ xᵢ²` over soft labels `qᵢ ∈ [0, 1]`.
pub fn constrained_interval(xs: &[f64]) -> Result<BetaInterval> {
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if !(sxx > 0.0) {
        return Err(Error::input("all feature values are zero"));
    }
    let neg: f64 = xs.iter().filter(|&&x| x < 0.0).sum();
    let pos: f64 = xs.iter().filter(|&&x| x > 0.0).sum();
    Ok(BetaInterval {
        lo: neg / sxx,
        hi: pos / sxx,
    })
}

/// Reachable coefficients when labeled objects keep their labels and only the
/// unlabeled ones vary over `[0, 1]`: the finite-sample counterpart of
/// [`constrained_interval`] that a multivariate ICLS fit with one feature and
/// no intercept works with.
pub fn semi_supervised_interval(
    xs_labeled: &[f64],
    ys_labeled: &[f64],
    xs_unlabeled: &[f64],
) -> Result<BetaInterval> {
    if xs_labeled.len() != ys_labeled.len() {
        return Err(Error::dim("xs and ys differ in length"));
    }
    let sxx: f64 = xs_labeled.iter().chain(xs_unlabeled).map(|x| x * x).sum();
    if !(sxx > 0.0) {
        return Err(Error::input("all feature values are zero"));
    }
    let fixed: f64 = xs_labeled.iter().zip(ys_labeled).map(|(x, y)| x * y).sum();
    let neg: f64 = xs_unlabeled.iter().filter(|&&x| x < 0.0).sum();
    let pos: f64 = xs_unlabeled.iter().filter(|&&x| x > 0.0).sum();
    Ok(BetaInterval {
        lo: (fixed + neg) / sxx,
        hi: (fixed + pos) / sxx,
    })
}

/// Mean squared loss of `β` over the population, from its cached moments.
pub fn risk_1d(beta: f64, population: &Population1D) -> f64 {
    let n = population.len() as f64;
    (beta * beta * population.sum_xx - 2.0 * beta * population.sum_xy + population.sum_yy) / n
}

/// The supervised estimate clipped into the interval.
pub fn icls_1d(beta_sup: f64, interval: BetaInterval) -> f64 {
    beta_sup.clamp(interval.lo, interval.hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub trials: usize,
    pub violations: usize,
    /// `risk(β_sup) − risk(β_semi)`, averaged over trials.
    pub mean_improvement: f64,
    pub max_improvement: f64,
    /// Trials where the supervised estimate fell outside the interval.
    pub clipped: usize,
    /// Labeled draws discarded because every drawn feature was zero.
    pub redraws: usize,
    pub interval: BetaInterval,
    pub beta_star: f64,
}

struct TrialOutcome {
    improvement: f64,
    violated: bool,
    clipped: bool,
    redraws: usize,
}

/// Draws `trials` labeled samples from the population and checks that the
/// clipped estimate never has higher population risk than the supervised one.
pub fn verify_theorem1(
    population: &Population1D,
    labeled_draw_size: usize,
    trials: usize,
    seed: u64,
) -> Result<Theorem1Report> {
    if trials == 0 {
        return Err(Error::input("trials must be at least 1"));
    }
    if labeled_draw_size == 0 || labeled_draw_size > population.len() {
        return Err(Error::input(format!(
            "labeled draw of {} from a population of {}",
            labeled_draw_size,
            population.len()
        )));
    }
    let interval = constrained_interval(population.xs())?;

    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::for_unit(seed, t as u64);
            let mut redraws = 0;
            let (xs, ys) = loop {
                let idx = index::sample(&mut rng, population.len(), labeled_draw_size);
                let xs: Vec<f64> = idx.iter().map(|i| population.xs[i]).collect();
                if xs.iter().any(|&x| x != 0.0) {
                    let ys: Vec<f64> = idx.iter().map(|i| population.ys[i]).collect();
                    break (xs, ys);
                }
                redraws += 1;
            };
            let beta_sup = supervised_beta_1d(&xs, &ys).expect("non-zero draw");
            let beta_semi = icls_1d(beta_sup, interval);
            let risk_sup = risk_1d(beta_sup, population);
            let risk_semi = risk_1d(beta_semi, population);
            TrialOutcome {
                improvement: risk_sup - risk_semi,
                violated: risk_semi > risk_sup + RISK_TOL,
                clipped: !interval.contains(beta_sup),
                redraws,
            }
        })
        .collect();

    let improvements: Vec<f64> = outcomes.iter().map(|o| o.improvement).collect();
    Ok(Theorem1Report {
        trials,
        violations: outcomes.iter().filter(|o| o.violated).count(),
        mean_improvement: improvements.iter().sum::<f64>() / trials as f64,
        max_improvement: improvements.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        clipped: outcomes.iter().filter(|o| o.clipped).count(),
        redraws: outcomes.iter().map(|o| o.redraws).sum(),
        interval,
        beta_star: population.beta_star(),
    })
}
