//! Implicitly constrained least squares.
//!
//! Every soft labeling `y_u ∈ [0,1]^U` of the unlabeled objects defines a
//! least squares fit on the stacked data `X_e = [X; X_u]`:
//!
//! ```text
//! β(y_u) = pinv(X_eᵀX_e) X_eᵀ [y; y_u] = P [y; y_u]
//! ```
//!
//! ICLS picks the labeling whose fit has the smallest squared loss on the
//! labeled objects alone. With `A = X P` split column-wise into `[A_l | A_u]`
//! the loss is `(1/L)·||A_u y_u + A_l y − y||²`, a convex quadratic in `y_u`
//! with box constraints. [`solve_box_qp`] minimizes it with a projected
//! limited-memory quasi-Newton method.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::supervised::{self, LinearModel};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 5000;

/// Slack allowed on soft labels before they are rejected as outside the box.
const BOX_SLACK: f64 = 1e-12;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// The residual is recomputed from scratch this often to stop drift.
const REFRESH_EVERY: usize = 50;

/// The quadratic program over soft labels for one (labeled, unlabeled) pair.
#[derive(Debug, Clone)]
pub struct IclsProblem {
    /// `L×L` block of `X P` acting on the known labels.
    pub a_labeled: Matrix,
    /// `L×U` block of `X P` acting on the soft labels.
    pub a_unlabeled: Matrix,
    pub labels: Vector,
    /// `pinv(X_eᵀX_e) X_eᵀ`, `(d+1)×(L+U)`.
    pub projector: Matrix,
    /// `A_l y − y`, the residual when every soft label is zero.
    offset: Vector,
}

impl IclsProblem {
    pub fn n_labeled(&self) -> usize {
        self.labels.len()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.a_unlabeled.ncols()
    }

    fn residual(&self, y_u: &Vector) -> Vector {
        &self.a_unlabeled * y_u + &self.offset
    }

    /// Hessian of the objective, `(2/L) A_uᵀ A_u`. Only used by diagnostics and tests.
    pub fn hessian(&self) -> Matrix {
        self.a_unlabeled.transpose() * &self.a_unlabeled * (2.0 / self.n_labeled() as f64)
    }

    /// Coefficients `P [y; y_u]` implied by a soft labeling.
    pub fn coefficients(&self, y_u: &SoftLabels) -> Result<Vector> {
        self.check_len(y_u)?;
        let stacked = Vector::from_iterator(
            self.n_labeled() + self.n_unlabeled(),
            self.labels.iter().chain(y_u.values.iter()).copied(),
        );
        Ok(&self.projector * stacked)
    }

    fn check_len(&self, y_u: &SoftLabels) -> Result<()> {
        if y_u.len() != self.n_unlabeled() {
            return Err(Error::dim(format!(
                "{} soft labels for {} unlabeled objects",
                y_u.len(),
                self.n_unlabeled()
            )));
        }
        Ok(())
    }
}

/// Soft labels in `[0, 1]` for the unlabeled objects.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels {
    pub values: Vector,
}

impl SoftLabels {
    /// Accepts values within `[−1e-12, 1 + 1e-12]` and clamps them into the box.
    pub fn new(values: Vector) -> Result<Self> {
        if values
            .iter()
            .any(|&v| !(-BOX_SLACK..=1.0 + BOX_SLACK).contains(&v))
        {
            return Err(Error::input("soft labels must lie in [0, 1]"));
        }
        Ok(SoftLabels {
            values: values.map(|v| v.clamp(0.0, 1.0)),
        })
    }

    /// Clamps arbitrary finite values into the box.
    pub fn clamped(values: &Vector) -> Self {
        SoftLabels {
            values: values.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_objective: f64,
    pub projected_gradient_inf_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the projected gradient's infinity norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of curvature pairs kept by the quasi-Newton update.
    pub memory: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            memory: 10,
        }
    }
}

pub fn build_problem(
    labeled_design: &Matrix,
    labels: &Vector,
    unlabeled_design: &Matrix,
) -> Result<IclsProblem> {
    let l = labeled_design.nrows();
    if l == 0 {
        return Err(Error::input("no labeled objects"));
    }
    if labels.len() != l {
        return Err(Error::dim(format!(
            "{} labels for {} labeled rows",
            labels.len(),
            l
        )));
    }
    if unlabeled_design.ncols() != labeled_design.ncols() {
        return Err(Error::dim(format!(
            "labeled design has {} columns, unlabeled has {}",
            labeled_design.ncols(),
            unlabeled_design.ncols()
        )));
    }
    linalg::ensure_finite(unlabeled_design, "unlabeled design")?;
    linalg::ensure_finite_vec(labels, "labels")?;
    supervised::check_unit_labels(labels)?;

    let extended = linalg::vstack(labeled_design, unlabeled_design)?;
    let projector = linalg::least_squares_projector(&extended)?;
    let hat = labeled_design * &projector;
    let u = unlabeled_design.nrows();
    let a_labeled = hat.columns(0, l).into_owned();
    let a_unlabeled = hat.columns(l, u).into_owned();
    let offset = &a_labeled * labels - labels;

    Ok(IclsProblem {
        a_labeled,
        a_unlabeled,
        labels: labels.clone(),
        projector,
        offset,
    })
}

/// Squared loss on the labeled objects of the fit implied by `y_u`.
pub fn objective(problem: &IclsProblem, y_u: &SoftLabels) -> Result<f64> {
    problem.check_len(y_u)?;
    Ok(problem.residual(&y_u.values).norm_squared() / problem.n_labeled() as f64)
}

/// `(2/L) A_uᵀ (A_l y + A_u y_u − y)`.
pub fn gradient(problem: &IclsProblem, y_u: &SoftLabels) -> Result<Vector> {
    problem.check_len(y_u)?;
    Ok(grad_from_residual(problem, &problem.residual(&y_u.values)))
}

fn grad_from_residual(problem: &IclsProblem, r: &Vector) -> Vector {
    problem.a_unlabeled.tr_mul(r) * (2.0 / problem.n_labeled() as f64)
}

/// Gradient with the components that point out of an active bound zeroed.
pub fn projected_gradient(x: &Vector, g: &Vector) -> Vector {
    Vector::from_iterator(
        x.len(),
        x.iter().zip(g.iter()).map(|(&xi, &gi)| {
            if xi <= 0.0 {
                gi.min(0.0)
            } else if xi >= 1.0 {
                gi.max(0.0)
            } else {
                gi
            }
        }),
    )
}

pub fn solve_box_qp(
    problem: &IclsProblem,
    init: &SoftLabels,
    tol: f64,
    max_iter: usize,
) -> Result<(SoftLabels, SolverReport)> {
    let opts = SolverOptions {
        tol,
        max_iter,
        ..SolverOptions::default()
    };
    solve_box_qp_with(problem, init, &opts)
}

struct Pair {
    s: Vector,
    y: Vector,
}

/// Dot product restricted to the free coordinates.
fn masked_dot(a: &Vector, b: &Vector, free: &[bool]) -> f64 {
    a.iter()
        .zip(b.iter())
        .zip(free)
        .filter(|(_, &f)| f)
        .map(|((x, y), _)| x * y)
        .sum()
}

/// Two-loop recursion applied to `-g` on the free coordinates.
fn quasi_newton_direction(g: &Vector, free: &[bool], history: &VecDeque<Pair>) -> Vector {
    let mut q = Vector::from_iterator(
        g.len(),
        g.iter().zip(free).map(|(&gi, &f)| if f { -gi } else { 0.0 }),
    );
    let mut alphas = Vec::with_capacity(history.len());
    let mut rhos = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let sy = masked_dot(&pair.s, &pair.y, free);
        let rho = if sy > 0.0 { 1.0 / sy } else { 0.0 };
        let alpha = rho * masked_dot(&pair.s, &q, free);
        for i in 0..q.len() {
            if free[i] {
                q[i] -= alpha * pair.y[i];
            }
        }
        alphas.push(alpha);
        rhos.push(rho);
    }
    if let Some(last) = history.back() {
        let sy = masked_dot(&last.s, &last.y, free);
        let yy = masked_dot(&last.y, &last.y, free);
        if sy > 0.0 && yy > 0.0 {
            q *= sy / yy;
        }
    }
    for (k, pair) in history.iter().enumerate() {
        let idx = history.len() - 1 - k;
        let beta = rhos[idx] * masked_dot(&pair.y, &q, free);
        let coef = alphas[idx] - beta;
        for i in 0..q.len() {
            if free[i] {
                q[i] += coef * pair.s[i];
            }
        }
    }
    q
}

struct Step {
    x: Vector,
    s: Vector,
    r: Vector,
    f: f64,
}

/// Projected backtracking along `d`, starting from the exact minimizer of the
/// quadratic along the unprojected ray.
fn line_search(
    problem: &IclsProblem,
    x: &Vector,
    r: &Vector,
    f: f64,
    g: &Vector,
    d: &Vector,
) -> Option<Step> {
    let n_l = problem.n_labeled() as f64;
    let slope = g.dot(d);
    if !(slope < 0.0) {
        return None;
    }
    let curvature = 2.0 / n_l * (&problem.a_unlabeled * d).norm_squared();
    if !(curvature > 0.0) {
        return None;
    }
    let mut t = -slope / curvature;
    for _ in 0..MAX_BACKTRACKS {
        let trial = (x + d * t).map(|v| v.clamp(0.0, 1.0));
        let s = &trial - x;
        let decrease = g.dot(&s);
        if decrease < 0.0 {
            let r_trial = r + &problem.a_unlabeled * &s;
            let f_trial = r_trial.norm_squared() / n_l;
            if f_trial <= f + ARMIJO * decrease {
                return Some(Step {
                    x: trial,
                    s,
                    r: r_trial,
                    f: f_trial,
                });
            }
        }
        t *= 0.5;
    }
    None
}

pub fn solve_box_qp_with(
    problem: &IclsProblem,
    init: &SoftLabels,
    opts: &SolverOptions,
) -> Result<(SoftLabels, SolverReport)> {
    if !(opts.tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    problem.check_len(init)?;
    let init = SoftLabels::new(init.values.clone())?;
    let n_l = problem.n_labeled() as f64;

    let mut x = init.values;
    let mut r = problem.residual(&x);
    let mut f = r.norm_squared() / n_l;
    let mut g = grad_from_residual(problem, &r);
    let mut pg_norm = projected_gradient(&x, &g).amax();
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut converged = pg_norm <= opts.tol;

    while !converged && iterations < opts.max_iter {
        // coordinates held at a bound by the gradient stay fixed this iteration
        let free: Vec<bool> = x
            .iter()
            .zip(g.iter())
            .map(|(&xi, &gi)| !((xi <= 0.0 && gi > 0.0) || (xi >= 1.0 && gi < 0.0)))
            .collect();

        let mut step = None;
        if !history.is_empty() {
            let d = quasi_newton_direction(&g, &free, &history);
            step = line_search(problem, &x, &r, f, &g, &d);
            if step.is_none() {
                history.clear();
            }
        }
        if step.is_none() {
            let d = quasi_newton_direction(&g, &free, &history);
            step = line_search(problem, &x, &r, f, &g, &d);
        }
        let Some(Step { x: x_new, s, r: mut r_new, f: f_new }) = step else {
            break;
        };

        iterations += 1;
        if iterations % REFRESH_EVERY == 0 {
            r_new = problem.residual(&x_new);
        }
        let g_new = grad_from_residual(problem, &r_new);
        let y = &g_new - &g;
        if s.dot(&y) > 1e-14 * s.norm() * y.norm() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y });
        }
        x = x_new;
        r = r_new;
        f = f_new;
        g = g_new;
        pg_norm = projected_gradient(&x, &g).amax();
        converged = pg_norm <= opts.tol;
    }

    let labels = SoftLabels::clamped(&x);
    let final_objective = objective(problem, &labels)?;
    Ok((
        labels,
        SolverReport {
            iterations,
            final_objective,
            projected_gradient_inf_norm: pg_norm,
            converged,
        },
    ))
}

/// Supervised predictions on the unlabeled objects, clamped into the box.
pub fn default_init(
    labeled_design: &Matrix,
    labels: &Vector,
    unlabeled_design: &Matrix,
) -> Result<SoftLabels> {
    let sup = supervised::fit_supervised(labeled_design, labels)?;
    Ok(SoftLabels::clamped(&supervised::decision_values(
        &sup,
        unlabeled_design,
    )?))
}

pub fn fit_icls(
    labeled_design: &Matrix,
    labels: &Vector,
    unlabeled_design: &Matrix,
) -> Result<(LinearModel, SoftLabels, SolverReport)> {
    fit_icls_with(labeled_design, labels, unlabeled_design, &SolverOptions::default())
}

pub fn fit_icls_with(
    labeled_design: &Matrix,
    labels: &Vector,
    unlabeled_design: &Matrix,
    opts: &SolverOptions,
) -> Result<(LinearModel, SoftLabels, SolverReport)> {
    let problem = build_problem(labeled_design, labels, unlabeled_design)?;
    let init = default_init(labeled_design, labels, unlabeled_design)?;
    let (y_u, report) = solve_box_qp_with(&problem, &init, opts)?;
    let beta = problem.coefficients(&y_u)?;
    Ok((LinearModel::new(beta)?, y_u, report))
}
