//! Semi-supervised least squares classification.
//!
//! The crate implements the implicitly constrained least squares (ICLS)
//! classifier: the supervised squared loss on the labeled objects is minimized
//! over the set of coefficient vectors that a least squares fit on labeled plus
//! unlabeled objects can produce when the unknown labels range over `[0, 1]`.
//! That search reduces to a box-constrained convex quadratic program in the
//! soft labels, solved here by a projected quasi-Newton method.
//!
//! Alongside the classifier live the pieces needed to evaluate it:
//!
//! * [`supervised`]: the plain least squares classifier it is compared against,
//! * [`self_learning`]: hard-label self-training as a semi-supervised baseline,
//! * [`theory`]: the univariate no-intercept setting in which ICLS provably
//!   never increases the risk, with a randomized checker,
//! * [`data`]: CSV loading, dummy coding, splits and a synthetic generator,
//! * [`experiments`] and [`stats`]: learning-curve and cross-validation
//!   protocols, standard errors and the Wilcoxon signed rank test.

pub mod data;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod rng;
pub mod self_learning;
pub mod solver;
pub mod stats;
pub mod supervised;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use supervised::LinearModel;
