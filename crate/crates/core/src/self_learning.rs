//! Self-learning baseline: impute hard labels on the unlabeled objects with the
//! current classifier, refit on everything, repeat until the labels stop
//! changing.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::supervised::{self, LinearModel};

pub const DEFAULT_MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfLearnReport {
    pub iterations: usize,
    /// Labels changed at each iteration. The first entry counts every imputed label.
    pub label_flips_per_iter: Vec<usize>,
    pub converged: bool,
    /// Stopped on a two-iteration label oscillation.
    pub cycled: bool,
}

pub fn fit_self_learning(
    labeled_design: &Matrix,
    labels: &Vector,
    unlabeled_design: &Matrix,
    max_iter: usize,
) -> Result<(LinearModel, Vector, SelfLearnReport)> {
    if unlabeled_design.ncols() != labeled_design.ncols() {
        return Err(Error::dim(format!(
            "labeled design has {} columns, unlabeled has {}",
            labeled_design.ncols(),
            unlabeled_design.ncols()
        )));
    }
    if max_iter == 0 {
        return Err(Error::input("max_iter must be at least 1"));
    }
    let sup = supervised::fit_supervised(labeled_design, labels)?;
    let u = unlabeled_design.nrows();
    if u == 0 {
        return Ok((
            sup,
            Vector::zeros(0),
            SelfLearnReport {
                iterations: 1,
                label_flips_per_iter: vec![0],
                converged: true,
                cycled: false,
            },
        ));
    }

    let extended = linalg::vstack(labeled_design, unlabeled_design)?;
    let projector = linalg::least_squares_projector(&extended)?;
    let refit = |imputed: &Vector| -> Result<LinearModel> {
        let stacked = Vector::from_iterator(
            labels.len() + u,
            labels.iter().chain(imputed.iter()).copied(),
        );
        LinearModel::new(&projector * stacked)
    };

    let mut model = sup;
    // (labels, model fitted on them) for the last two iterations
    let mut last: Option<(Vector, LinearModel)> = None;
    let mut before_last: Option<(Vector, LinearModel)> = None;
    let mut flips = Vec::new();

    for iteration in 1..=max_iter {
        let imputed = supervised::classify(&model, unlabeled_design)?;
        let changed = match &last {
            Some((prev, _)) => count_differences(prev, &imputed),
            None => u,
        };
        flips.push(changed);

        if let Some((prev, prev_model)) = &last {
            if changed == 0 {
                return Ok((
                    prev_model.clone(),
                    prev.clone(),
                    SelfLearnReport {
                        iterations: iteration,
                        label_flips_per_iter: flips,
                        converged: true,
                        cycled: false,
                    },
                ));
            }
            if let Some((older, older_model)) = &before_last {
                if count_differences(older, &imputed) == 0 {
                    let risk_last =
                        supervised::empirical_risk(prev_model, labeled_design, labels)?;
                    let risk_older =
                        supervised::empirical_risk(older_model, labeled_design, labels)?;
                    let (keep_labels, keep_model) = if risk_older < risk_last {
                        (older.clone(), older_model.clone())
                    } else {
                        (prev.clone(), prev_model.clone())
                    };
                    return Ok((
                        keep_model,
                        keep_labels,
                        SelfLearnReport {
                            iterations: iteration,
                            label_flips_per_iter: flips,
                            converged: false,
                            cycled: true,
                        },
                    ));
                }
            }
        }

        model = refit(&imputed)?;
        before_last = last.take();
        last = Some((imputed, model.clone()));
    }

    let (imputed, model) = last.expect("at least one iteration ran");
    Ok((
        model,
        imputed,
        SelfLearnReport {
            iterations: max_iter,
            label_flips_per_iter: flips,
            converged: false,
            cycled: false,
        },
    ))
}

fn count_differences(a: &Vector, b: &Vector) -> usize {
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn design(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Matrix {
        Matrix::from_fn(n, d + 1, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) })
    }

    #[test]
    fn no_unlabeled_returns_supervised() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = design(&mut rng, 8, 2);
        let y = Vector::from_fn(8, |i, _| (i % 2) as f64);
        let (m, imputed, rep) = fit_self_learning(&x, &y, &Matrix::zeros(0, 3), 100).unwrap();
        let sup = supervised::fit_supervised(&x, &y).unwrap();
        assert_eq!(m, sup);
        assert!(imputed.is_empty());
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
    }

    #[test]
    fn hand_executed_one_dimensional_trace() {
        // labeled (x=1, y=1), (x=-1, y=0); unlabeled x=3
        let x = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, -1.0]);
        let y = Vector::from_vec(vec![1.0, 0.0]);
        let xu = Matrix::from_row_slice(1, 2, &[1.0, 3.0]);
        // supervised line 0.5 + 0.5x scores 2 at x=3 -> label 1;
        // refit on x=(1,-1,3), y=(1,0,1): slope 2/8, intercept 2/3 - 1/4
        // scores 5/12 + 3/4 > 0.5 at x=3 -> label 1 again, converged
        let (m, imputed, rep) = fit_self_learning(&x, &y, &xu, 100).unwrap();
        assert_eq!(imputed.as_slice(), &[1.0]);
        assert!((m.beta[0] - 5.0 / 12.0).abs() < 1e-12);
        assert!((m.beta[1] - 0.25).abs() < 1e-12);
        assert_eq!(rep.iterations, 2);
        assert_eq!(rep.label_flips_per_iter, vec![1, 0]);
        assert!(rep.converged);
    }

    #[test]
    fn fixed_point_after_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..30 {
            let x = design(&mut rng, 12, 2);
            let y = Vector::from_fn(12, |i, _| (i % 2) as f64);
            let xu = design(&mut rng, 30, 2);
            let (m, imputed, rep) = fit_self_learning(&x, &y, &xu, 100).unwrap();
            assert!(rep.iterations <= 100);
            if rep.converged {
                assert_eq!(*rep.label_flips_per_iter.last().unwrap(), 0);
                let again = supervised::classify(&m, &xu).unwrap();
                assert_eq!(again, imputed);
                // one more refit on the same labels reproduces the model
                let xe = linalg::vstack(&x, &xu).unwrap();
                let stacked = Vector::from_iterator(42, y.iter().chain(imputed.iter()).copied());
                let refit = linalg::solve_normal_equations(&xe, &stacked).unwrap();
                assert!((refit - &m.beta).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_points_converge_to_own_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = design(&mut rng, 20, 2);
        let y = Vector::from_fn(20, |i, _| if x[(i, 1)] > 0.0 { 1.0 } else { 0.0 });
        let (m, imputed, rep) = fit_self_learning(&x, &y, &x, 100).unwrap();
        assert!(rep.converged);
        assert_eq!(supervised::classify(&m, &x).unwrap(), imputed);
        // cleanly separable along x1: the supervised predictions already are a fixed point
        let sup = supervised::fit_supervised(&x, &y).unwrap();
        assert_eq!(supervised::classify(&sup, &x).unwrap(), imputed);
    }

    #[test]
    fn iteration_cap_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = design(&mut rng, 10, 2);
        let y = Vector::from_fn(10, |i, _| (i % 2) as f64);
        let xu = design(&mut rng, 50, 2);
        let (_, _, rep) = fit_self_learning(&x, &y, &xu, 1).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(!rep.converged);
        assert!(fit_self_learning(&x, &y, &xu, 0).is_err());
        assert!(fit_self_learning(&x, &y, &Matrix::zeros(2, 2), 10).is_err());
    }
}
