//! Supervised least squares classifier.
//!
//! Classes are encoded as 0 and 1, the coefficients are the least squares fit
//! to those targets, and an object is assigned class 1 when its decision value
//! is at least 0.5. The design matrix carries the intercept as an explicit
//! leading column of ones (see [`crate::data`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};

/// Decision values at or above this are class 1.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub beta: Vector,
}

impl LinearModel {
    pub fn new(beta: Vector) -> Result<Self> {
        linalg::ensure_finite_vec(&beta, "coefficients")?;
        Ok(LinearModel { beta })
    }

    pub fn n_coef(&self) -> usize {
        self.beta.len()
    }
}

/// On-disk form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub beta: Vec<f64>,
    pub intercept_first: bool,
    pub class0: String,
    pub class1: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
}

impl ModelFile {
    pub fn model(&self) -> Result<LinearModel> {
        LinearModel::new(Vector::from_vec(self.beta.clone()))
    }
}

pub fn fit_supervised(design: &Matrix, labels: &Vector) -> Result<LinearModel> {
    if design.nrows() == 0 || design.ncols() == 0 {
        return Err(Error::input("empty design matrix"));
    }
    check_unit_labels(labels)?;
    let beta = linalg::solve_normal_equations(design, labels)?;
    LinearModel::new(beta)
}

pub(crate) fn check_unit_labels(labels: &Vector) -> Result<()> {
    if labels.iter().all(|&y| (0.0..=1.0).contains(&y)) {
        Ok(())
    } else {
        Err(Error::input("labels must lie in [0, 1]"))
    }
}

pub fn decision_values(model: &LinearModel, design: &Matrix) -> Result<Vector> {
    if design.ncols() != model.n_coef() {
        return Err(Error::dim(format!(
            "model has {} coefficients but design has {} columns",
            model.n_coef(),
            design.ncols()
        )));
    }
    Ok(design * &model.beta)
}

pub fn threshold(scores: &Vector) -> Vector {
    scores.map(|s| if s >= THRESHOLD { 1.0 } else { 0.0 })
}

pub fn classify(model: &LinearModel, design: &Matrix) -> Result<Vector> {
    Ok(threshold(&decision_values(model, design)?))
}

/// Fraction of positions where `predicted` and `actual` disagree.
pub fn error_rate(predicted: &Vector, actual: &Vector) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::input("cannot compute an error rate on zero objects"));
    }
    let wrong = predicted
        .iter()
        .zip(actual.iter())
        .filter(|(p, a)| p != a)
        .count();
    Ok(wrong as f64 / predicted.len() as f64)
}

/// Mean squared residual `(1/n)·||Xβ − y||²` on the given data.
pub fn empirical_risk(model: &LinearModel, design: &Matrix, labels: &Vector) -> Result<f64> {
    let scores = decision_values(model, design)?;
    if scores.len() != labels.len() {
        return Err(Error::dim("labels do not match design rows"));
    }
    if labels.is_empty() {
        return Err(Error::input("empty data"));
    }
    Ok((scores - labels).norm_squared() / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn interpolates_two_points() {
        let x = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        let y = Vector::from_vec(vec![0.0, 1.0]);
        let m = fit_supervised(&x, &y).unwrap();
        assert!((m.beta[0]).abs() < 1e-12 && (m.beta[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_labels_give_intercept_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Matrix::from_fn(10, 3, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y = Vector::from_element(10, 0.7);
        let m = fit_supervised(&x, &y).unwrap();
        assert!((m.beta[0] - 0.7).abs() < 1e-10);
        assert!(m.beta.rows(1, 2).amax() < 1e-10);
    }

    #[test]
    fn training_risk_matches_iterative_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = Matrix::from_fn(20, 3, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y = Vector::from_fn(20, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let m = fit_supervised(&x, &y).unwrap();
        let risk = empirical_risk(&m, &x, &y).unwrap();

        let mut b = Vector::zeros(3);
        let step = 20.0 / (2.0 * (x.transpose() * &x).norm());
        for _ in 0..100_000 {
            let g = 2.0 / 20.0 * x.transpose() * (&x * &b - &y);
            if g.amax() < 1e-14 {
                break;
            }
            b -= step * g;
        }
        let oracle = LinearModel::new(b).unwrap();
        let oracle_risk = empirical_risk(&oracle, &x, &y).unwrap();
        assert!((risk - oracle_risk).abs() < 1e-8);
    }

    #[test]
    fn fitted_beta_is_global_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = Matrix::from_fn(15, 3, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let y = Vector::from_fn(15, |_, _| if rng.random_bool(0.4) { 1.0 } else { 0.0 });
        let m = fit_supervised(&x, &y).unwrap();
        let base = empirical_risk(&m, &x, &y).unwrap();
        for _ in 0..100 {
            let delta = Vector::from_fn(3, |_, _| rng.random_range(-0.1..0.1));
            let perturbed = LinearModel::new(&m.beta + delta).unwrap();
            assert!(empirical_risk(&perturbed, &x, &y).unwrap() >= base - 1e-10);
        }
    }

    #[test]
    fn decision_values_and_threshold() {
        let m = LinearModel::new(Vector::from_vec(vec![0.25, 0.5])).unwrap();
        let row = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert_eq!(decision_values(&m, &row).unwrap()[0], 0.75);

        let zero = LinearModel::new(Vector::zeros(2)).unwrap();
        let x = Matrix::from_row_slice(3, 2, &[1.0, 4.0, 1.0, -2.0, 1.0, 0.0]);
        assert!(decision_values(&zero, &x).unwrap().iter().all(|&s| s == 0.0));
        assert!(classify(&zero, &x).unwrap().iter().all(|&c| c == 0.0));

        let s = Vector::from_vec(vec![0.5, 0.49999, 0.50001, -3.0, 7.0]);
        assert_eq!(threshold(&s).as_slice(), &[1.0, 0.0, 1.0, 0.0, 1.0]);

        assert!(decision_values(&m, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn random_scores_match_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = LinearModel::new(Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let x = Matrix::from_fn(30, 4, |_, _| rng.random_range(-2.0..2.0));
        let s = decision_values(&m, &x).unwrap();
        let c = classify(&m, &x).unwrap();
        for i in 0..30 {
            let dot: f64 = (0..4).map(|j| x[(i, j)] * m.beta[j]).sum();
            assert!((s[i] - dot).abs() < 1e-13);
            assert_eq!(c[i], if s[i] >= 0.5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn error_rates() {
        let a = Vector::from_vec(vec![0.0, 1.0, 1.0, 0.0]);
        let b = Vector::from_vec(vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(error_rate(&a, &a).unwrap(), 0.0);
        assert_eq!(error_rate(&a, &a.map(|v| 1.0 - v)).unwrap(), 1.0);
        assert_eq!(error_rate(&a, &b).unwrap(), 0.25);
        assert!(error_rate(&Vector::zeros(0), &Vector::zeros(0)).is_err());
        assert!(error_rate(&a, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn row_permutation_permutes_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = LinearModel::new(Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let x = Matrix::from_fn(12, 3, |_, _| rng.random_range(-2.0..2.0));
        let perm: Vec<usize> = (0..12).rev().collect();
        let px = linalg::select_rows(&x, &perm);
        let c = classify(&m, &x).unwrap();
        let pc = classify(&m, &px).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(pc[k], c[i]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(fit_supervised(&Matrix::zeros(0, 2), &Vector::zeros(0)).is_err());
        let x = Matrix::from_element(2, 2, 1.0);
        assert!(fit_supervised(&x, &Vector::from_vec(vec![0.0, 2.0])).is_err());
    }

    #[test]
    fn model_file_json_shape() {
        let f = ModelFile {
            beta: vec![0.0, 1.0],
            intercept_first: true,
            class0: "a".into(),
            class1: "b".into(),
            feature_names: None,
        };
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"beta":[0.0,1.0],"intercept_first":true,"class0":"a","class1":"b"}"#);
        let back: ModelFile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
