//! Learning-curve and cross-validation drivers.
//!
//! Every repeat (and every fold) draws its randomness from its own stream
//! derived from the master seed, and results are gathered in index order, so
//! reports do not depend on the number of worker threads.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{self, Dataset, LabeledSizeRule};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng;
use crate::self_learning;
use crate::solver::{self, SolverOptions};
use crate::stats::{self, WilcoxonResult};
use crate::supervised::{self, LinearModel};

/// Significance level of the paired tests in a CV report.
pub const CV_ALPHA: f64 = 0.01;
/// Slack allowed when comparing the labeled objective of ICLS and self-learning.
pub const DOMINANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Classifier {
    Supervised,
    #[serde(rename = "selflearn")]
    SelfLearning,
    Icls,
    Oracle,
}

impl Classifier {
    pub fn name(self) -> &'static str {
        match self {
            Classifier::Supervised => "supervised",
            Classifier::SelfLearning => "selflearn",
            Classifier::Icls => "icls",
            Classifier::Oracle => "oracle",
        }
    }
}

const CURVE_CLASSIFIERS: [Classifier; 3] =
    [Classifier::Supervised, Classifier::SelfLearning, Classifier::Icls];
const CV_CLASSIFIERS: [Classifier; 4] = [
    Classifier::Supervised,
    Classifier::SelfLearning,
    Classifier::Icls,
    Classifier::Oracle,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub labeled_rule: LabeledSizeRule,
    pub solver: SolverOptions,
    pub self_learning_max_iter: usize,
    /// Z-score features on the training rows of each split before fitting.
    pub standardize: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            labeled_rule: LabeledSizeRule::default(),
            solver: SolverOptions::default(),
            self_learning_max_iter: self_learning::DEFAULT_MAX_ITER,
            standardize: false,
        }
    }
}

/// 2, 4, 8, ..., 1024.
pub fn default_u_schedule() -> Vec<usize> {
    (1..=10).map(|k| 1usize << k).collect()
}

/// One error measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub dataset: String,
    pub classifier: Classifier,
    #[serde(rename = "U")]
    pub u: Option<usize>,
    #[serde(rename = "L")]
    pub l: usize,
    pub repeat: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub classifier: Classifier,
    #[serde(rename = "U")]
    pub u: usize,
    pub test_size: usize,
    pub n_repeats: usize,
    pub mean_error: f64,
    /// Absent when there is a single repeat.
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearningCurveReport {
    pub dataset: String,
    pub seed: u64,
    #[serde(rename = "L")]
    pub labeled: usize,
    pub repeats: usize,
    pub u_schedule: Vec<usize>,
    /// Requested unlabeled sizes dropped because `L + U` reached `N`.
    pub truncated: Vec<usize>,
    pub points: Vec<CurvePoint>,
    /// (repeat, U) pairs where ICLS had a higher labeled objective than self-learning.
    pub dominance_violations: usize,
    #[serde(skip)]
    pub records: Vec<ErrorRecord>,
}

impl LearningCurveReport {
    pub fn point(&self, classifier: Classifier, u: usize) -> Option<&CurvePoint> {
        self.points
            .iter()
            .find(|p| p.classifier == classifier && p.u == u)
    }

    pub fn curve(&self, classifier: Classifier) -> Vec<&CurvePoint> {
        self.points
            .iter()
            .filter(|p| p.classifier == classifier)
            .collect()
    }
}

/// Training data for one fit, with the evaluation rows alongside.
struct Fold {
    labeled: Matrix,
    labels: Vector,
    unlabeled: Matrix,
    test: Matrix,
    test_labels: Vector,
}

struct SemiFits {
    supervised: LinearModel,
    self_learning: LinearModel,
    icls: LinearModel,
    dominance_violated: bool,
}

fn fit_all(fold: &Fold, opts: &ExperimentOptions) -> Result<SemiFits> {
    let sup = supervised::fit_supervised(&fold.labeled, &fold.labels)?;
    let (sl, _, _) = self_learning::fit_self_learning(
        &fold.labeled,
        &fold.labels,
        &fold.unlabeled,
        opts.self_learning_max_iter,
    )?;
    let (icls, _, _) =
        solver::fit_icls_with(&fold.labeled, &fold.labels, &fold.unlabeled, &opts.solver)?;
    let icls_obj = supervised::empirical_risk(&icls, &fold.labeled, &fold.labels)?;
    let sl_obj = supervised::empirical_risk(&sl, &fold.labeled, &fold.labels)?;
    Ok(SemiFits {
        supervised: sup,
        self_learning: sl,
        icls,
        dominance_violated: icls_obj > sl_obj + DOMINANCE_TOL,
    })
}

fn wrong_count(model: &LinearModel, design: &Matrix, labels: &Vector) -> Result<usize> {
    let pred = supervised::classify(model, design)?;
    Ok(pred.iter().zip(labels.iter()).filter(|(p, y)| p != y).count())
}

/// Design restricted to `rows`, standardized on `fit_rows` when requested.
fn prepared_design(dataset: &Dataset, standardize: bool, fit_rows: &[usize]) -> Matrix {
    let mut design = dataset.design.clone();
    if standardize {
        data::standardize(&mut design, fit_rows, dataset.intercept);
    }
    design
}

fn check_dataset(dataset: &Dataset) -> Result<()> {
    let (zeros, ones) = dataset.class_counts();
    if zeros == 0 || ones == 0 {
        return Err(Error::input(format!("{}: only one class present", dataset.name)));
    }
    Ok(())
}

struct RepeatCurve {
    /// errors[classifier][u index]
    errors: [Vec<f64>; 3],
    violations: usize,
}

/// Errors of supervised, self-learning and ICLS for growing unlabeled sets.
///
/// Within a repeat the labeled draw is fixed and the unlabeled sets are nested
/// prefixes of one random ordering of the remaining objects; whatever is not
/// used as unlabeled data is the test set.
pub fn run_learning_curve(
    dataset: &Dataset,
    u_schedule: &[usize],
    repeats: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<LearningCurveReport> {
    if repeats == 0 {
        return Err(Error::input("repeats must be at least 1"));
    }
    check_dataset(dataset)?;
    let n = dataset.n_objects();
    let l = opts.labeled_rule.labeled_size(dataset.n_features());
    if l >= n {
        return Err(Error::SplitTooLarge {
            n,
            labeled: l,
            unlabeled: 0,
        });
    }
    let mut requested = u_schedule.to_vec();
    requested.sort_unstable();
    requested.dedup();
    let (schedule, truncated): (Vec<usize>, Vec<usize>) =
        requested.into_iter().partition(|&u| l + u < n);
    if schedule.is_empty() {
        return Err(Error::input(format!(
            "no unlabeled size in the schedule fits {} objects with L = {l}",
            n
        )));
    }

    let per_repeat: Vec<RepeatCurve> = (0..repeats)
        .into_par_iter()
        .map(|r| -> Result<RepeatCurve> {
            let mut rng = rng::for_unit(seed, r as u64);
            let all: Vec<usize> = (0..n).collect();
            let labeled_idx = data::draw_labeled(&all, &dataset.labels, l, &mut rng)?;
            let mut is_labeled = vec![false; n];
            for &i in &labeled_idx {
                is_labeled[i] = true;
            }
            let mut rest: Vec<usize> = (0..n).filter(|&i| !is_labeled[i]).collect();
            rest.shuffle(&mut rng);

            let mut errors: [Vec<f64>; 3] = Default::default();
            let mut violations = 0;
            for &u in &schedule {
                let (unl_idx, test_idx) = rest.split_at(u);
                let fit_rows: Vec<usize> = labeled_idx.iter().chain(unl_idx).copied().collect();
                let design = prepared_design(dataset, opts.standardize, &fit_rows);
                let fold = Fold {
                    labeled: linalg::select_rows(&design, &labeled_idx),
                    labels: linalg::select_entries(&dataset.labels, &labeled_idx),
                    unlabeled: linalg::select_rows(&design, unl_idx),
                    test: linalg::select_rows(&design, test_idx),
                    test_labels: linalg::select_entries(&dataset.labels, test_idx),
                };
                let fits = fit_all(&fold, opts)?;
                violations += usize::from(fits.dominance_violated);
                for (slot, model) in
                    errors
                        .iter_mut()
                        .zip([&fits.supervised, &fits.self_learning, &fits.icls])
                {
                    let wrong = wrong_count(model, &fold.test, &fold.test_labels)?;
                    slot.push(wrong as f64 / test_idx.len() as f64);
                }
            }
            Ok(RepeatCurve { errors, violations })
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut records = Vec::new();
    for (c, &classifier) in CURVE_CLASSIFIERS.iter().enumerate() {
        for (k, &u) in schedule.iter().enumerate() {
            let errs: Vec<f64> = per_repeat.iter().map(|rep| rep.errors[c][k]).collect();
            for (r, &error) in errs.iter().enumerate() {
                records.push(ErrorRecord {
                    dataset: dataset.name.clone(),
                    classifier,
                    u: Some(u),
                    l,
                    repeat: r,
                    error,
                });
            }
            points.push(CurvePoint {
                classifier,
                u,
                test_size: n - l - u,
                n_repeats: repeats,
                mean_error: stats::mean(&errs),
                standard_error: stats::standard_error(&errs).ok(),
            });
        }
    }

    Ok(LearningCurveReport {
        dataset: dataset.name.clone(),
        seed,
        labeled: l,
        repeats,
        u_schedule: schedule,
        truncated,
        points,
        dominance_violations: per_repeat.iter().map(|r| r.violations).sum(),
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvClassifierSummary {
    pub classifier: Classifier,
    pub mean_error: f64,
    pub standard_error: Option<f64>,
    /// Repeats in which this classifier erred more than the supervised one.
    /// Only set for the semi-supervised classifiers.
    pub degradation_count: Option<usize>,
    /// Test of this classifier's error being lower than the other
    /// semi-supervised classifier's.
    pub better_than_other: Option<WilcoxonResult>,
    /// Test of the supervised error being lower than this classifier's.
    pub worse_than_supervised: Option<WilcoxonResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvReport {
    pub dataset: String,
    pub seed: u64,
    pub folds: usize,
    pub repeats: usize,
    #[serde(rename = "L")]
    pub labeled: usize,
    pub alpha: f64,
    pub classifiers: Vec<CvClassifierSummary>,
    /// Folds where ICLS had a higher labeled objective than self-learning.
    pub dominance_violations: usize,
    #[serde(skip)]
    pub records: Vec<ErrorRecord>,
}

impl CvReport {
    pub fn summary(&self, classifier: Classifier) -> &CvClassifierSummary {
        self.classifiers
            .iter()
            .find(|s| s.classifier == classifier)
            .expect("every classifier is summarized")
    }
}

struct FoldOutcome {
    /// Wrong predictions per classifier, in `CV_CLASSIFIERS` order.
    wrong: [usize; 4],
    violated: bool,
}

/// Repeated k-fold cross-validation. In each fold `L` of the training objects
/// keep their labels, the remaining training objects are unlabeled, and an
/// oracle is fitted on all training labels. A repeat's error is the fraction of
/// all `N` held-out predictions that are wrong.
pub fn run_cv(
    dataset: &Dataset,
    folds: usize,
    repeats: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<CvReport> {
    let n = dataset.n_objects();
    if folds < 2 {
        return Err(Error::input("need at least 2 folds"));
    }
    if folds > n {
        return Err(Error::input(format!("{folds} folds for {n} objects")));
    }
    if repeats == 0 {
        return Err(Error::input("repeats must be at least 1"));
    }
    check_dataset(dataset)?;
    // the smallest training set has n − ceil(n / folds) objects
    let min_train = n - n.div_ceil(folds);
    let l = opts
        .labeled_rule
        .labeled_size(dataset.n_features())
        .min(min_train);

    let assignments: Vec<Vec<usize>> = (0..repeats)
        .map(|r| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::for_unit(seed, r as u64));
            let mut fold_of = vec![0; n];
            for (pos, &i) in order.iter().enumerate() {
                fold_of[i] = pos % folds;
            }
            fold_of
        })
        .collect();

    let units: Vec<(usize, usize)> = (0..repeats)
        .flat_map(|r| (0..folds).map(move |k| (r, k)))
        .collect();
    let outcomes: Vec<FoldOutcome> = units
        .par_iter()
        .map(|&(r, k)| -> Result<FoldOutcome> {
            let fold_of = &assignments[r];
            let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != k).collect();
            let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == k).collect();
            let mut rng = rng::for_unit(rng::child_seed(seed, r as u64), k as u64);
            let labeled_idx = data::draw_labeled(&train, &dataset.labels, l, &mut rng)?;
            let mut is_labeled = vec![false; n];
            for &i in &labeled_idx {
                is_labeled[i] = true;
            }
            let unl_idx: Vec<usize> = train.iter().copied().filter(|&i| !is_labeled[i]).collect();

            let design = prepared_design(dataset, opts.standardize, &train);
            let fold = Fold {
                labeled: linalg::select_rows(&design, &labeled_idx),
                labels: linalg::select_entries(&dataset.labels, &labeled_idx),
                unlabeled: linalg::select_rows(&design, &unl_idx),
                test: linalg::select_rows(&design, &test),
                test_labels: linalg::select_entries(&dataset.labels, &test),
            };
            let fits = fit_all(&fold, opts)?;
            let oracle = supervised::fit_supervised(
                &linalg::select_rows(&design, &train),
                &linalg::select_entries(&dataset.labels, &train),
            )?;
            let mut wrong = [0; 4];
            for (slot, model) in wrong
                .iter_mut()
                .zip([&fits.supervised, &fits.self_learning, &fits.icls, &oracle])
            {
                *slot = wrong_count(model, &fold.test, &fold.test_labels)?;
            }
            Ok(FoldOutcome {
                wrong,
                violated: fits.dominance_violated,
            })
        })
        .collect::<Result<_>>()?;

    // errors[classifier][repeat]
    let mut errors = vec![vec![0.0; repeats]; CV_CLASSIFIERS.len()];
    for r in 0..repeats {
        for (c, series) in errors.iter_mut().enumerate() {
            let wrong: usize = outcomes[r * folds..(r + 1) * folds]
                .iter()
                .map(|o| o.wrong[c])
                .sum();
            series[r] = wrong as f64 / n as f64;
        }
    }

    let [sup, sl, icls, _] = [0, 1, 2, 3].map(|c| errors[c].as_slice());
    let test = |a: &[f64], b: &[f64]| -> Option<WilcoxonResult> {
        (repeats >= 5)
            .then(|| stats::wilcoxon_signed_rank(a, b, CV_ALPHA))
            .transpose()
            .ok()
            .flatten()
    };
    let degradations = |semi: &[f64]| semi.iter().zip(sup).filter(|(s, p)| s > p).count();

    let mut classifiers = Vec::new();
    let mut records = Vec::new();
    for (c, &classifier) in CV_CLASSIFIERS.iter().enumerate() {
        let errs = &errors[c];
        let (degradation_count, better_than_other, worse_than_supervised) = match classifier {
            Classifier::SelfLearning => (Some(degradations(sl)), test(sl, icls), test(sup, sl)),
            Classifier::Icls => (Some(degradations(icls)), test(icls, sl), test(sup, icls)),
            _ => (None, None, None),
        };
        classifiers.push(CvClassifierSummary {
            classifier,
            mean_error: stats::mean(errs),
            standard_error: stats::standard_error(errs).ok(),
            degradation_count,
            better_than_other,
            worse_than_supervised,
        });
        for (r, &error) in errs.iter().enumerate() {
            records.push(ErrorRecord {
                dataset: dataset.name.clone(),
                classifier,
                u: None,
                l,
                repeat: r,
                error,
            });
        }
    }

    Ok(CvReport {
        dataset: dataset.name.clone(),
        seed,
        folds,
        repeats,
        labeled: l,
        alpha: CV_ALPHA,
        classifiers,
        dominance_violations: outcomes.iter().filter(|o| o.violated).count(),
        records,
    })
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::input(format!("CSV serialization failed: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::input(format!("CSV serialization failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// One row per (classifier, U, repeat): dataset, classifier, U, L, repeat, error.
pub fn records_csv(records: &[ErrorRecord]) -> Result<String> {
    to_csv(records)
}

#[derive(Serialize)]
struct CurveSummaryRow<'a> {
    dataset: &'a str,
    classifier: Classifier,
    #[serde(rename = "U")]
    u: usize,
    #[serde(rename = "L")]
    l: usize,
    test_size: usize,
    n_repeats: usize,
    mean_error: f64,
    standard_error: Option<f64>,
}

/// One row per (classifier, U) with mean and standard error.
pub fn curve_summary_csv(report: &LearningCurveReport) -> Result<String> {
    to_csv(report.points.iter().map(|p| CurveSummaryRow {
        dataset: &report.dataset,
        classifier: p.classifier,
        u: p.u,
        l: report.labeled,
        test_size: p.test_size,
        n_repeats: p.n_repeats,
        mean_error: p.mean_error,
        standard_error: p.standard_error,
    }))
}

#[derive(Serialize)]
struct CvSummaryRow<'a> {
    dataset: &'a str,
    classifier: Classifier,
    #[serde(rename = "L")]
    l: usize,
    repeats: usize,
    mean_error: f64,
    standard_error: Option<f64>,
    degradation_count: Option<usize>,
    better_than_other_p: Option<f64>,
    better_than_other: Option<bool>,
    worse_than_supervised_p: Option<f64>,
    worse_than_supervised: Option<bool>,
}

/// One row per classifier with mean error, degradations and test outcomes.
pub fn cv_summary_csv(report: &CvReport) -> Result<String> {
    to_csv(report.classifiers.iter().map(|s| CvSummaryRow {
        dataset: &report.dataset,
        classifier: s.classifier,
        l: report.labeled,
        repeats: report.repeats,
        mean_error: s.mean_error,
        standard_error: s.standard_error,
        degradation_count: s.degradation_count,
        better_than_other_p: s.better_than_other.map(|w| w.p_value),
        better_than_other: s.better_than_other.map(|w| w.significant),
        worse_than_supervised_p: s.worse_than_supervised.map(|w| w.p_value),
        worse_than_supervised: s.worse_than_supervised.map(|w| w.significant),
    }))
}
