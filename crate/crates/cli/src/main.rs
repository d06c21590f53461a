use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use icls::data::{self, Dataset, LabeledSizeRule, LoadOptions};
use icls::experiments::{self, Classifier, ExperimentOptions};
use icls::self_learning;
use icls::solver::{self, SolverOptions, SolverReport};
use icls::supervised::{self, ModelFile};
use icls::theory::{self, Population1D};
use icls::{Matrix, Vector};

mod parse;

/// Exit status when a run finished but one of its internal checks failed.
const CHECK_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "icls", version, about = "Semi-supervised least squares classification")]
struct Cli {
    /// Worker threads for experiment repeats (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print a machine-readable JSON summary instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a classifier and write it as JSON.
    Fit(FitArgs),
    /// Apply a fitted model to a CSV file.
    Predict(PredictArgs),
    /// Error as a function of the number of unlabeled objects.
    LearningCurve(CurveArgs),
    /// Repeated k-fold cross-validation of all classifiers.
    Cv(CvArgs),
    /// Check the one-dimensional risk guarantee by simulation.
    Theory1d(TheoryArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Supervised,
    Icls,
    Selflearn,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    /// max(d + 6, 20)
    FullRankPlusFive,
    /// max(d + 5, 20)
    DPlusFive,
}

impl From<RuleArg> for LabeledSizeRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::FullRankPlusFive => LabeledSizeRule::FullRankPlusFive,
            RuleArg::DPlusFive => LabeledSizeRule::DPlusFive,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    /// Labeled CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Unlabeled CSV with the same feature columns; a label column is ignored.
    #[arg(long)]
    unlabeled: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_col: String,
    #[arg(long, value_enum, default_value = "icls")]
    method: Method,
    /// Where to write the model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Projected-gradient tolerance of the ICLS solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Do not add an intercept column.
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// If this column is present its values are compared with the predictions.
    #[arg(long, default_value = "label")]
    label_col: String,
    /// Predictions CSV (row, decision_value, class).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Labeled CSV with a header row.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Two-Gaussian data instead of a file, e.g. "dim=2,sep=2,n=2000".
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value = "label")]
    label_col: String,
    #[arg(long)]
    no_intercept: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Directory for records.csv, summary.csv and summary.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    /// Z-score features on each split's training rows.
    #[arg(long)]
    standardize: bool,
    #[arg(long, value_enum, default_value = "full-rank-plus-five")]
    labeled_rule: RuleArg,
}

#[derive(Args)]
struct CurveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value = "2,4,...,1024")]
    u_schedule: String,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
}

#[derive(Args)]
struct TheoryArgs {
    /// Size of the simulated population.
    #[arg(long, default_value_t = theory::DEFAULT_POPULATION)]
    population: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Labeled objects drawn per trial.
    #[arg(long, default_value_t = 10)]
    labeled: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the report as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Returns whether all internal checks held.
fn run(cli: Cli) -> Result<bool> {
    if let Some(threads) = cli.threads {
        ensure!(threads > 0, "--threads must be positive");
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Fit(args) => cmd_fit(args, cli.json),
        Command::Predict(args) => cmd_predict(args, cli.json),
        Command::LearningCurve(args) => cmd_learning_curve(args, cli.json),
        Command::Cv(args) => cmd_cv(args, cli.json),
        Command::Theory1d(args) => cmd_theory1d(args, cli.json),
    }
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn solver_options(tol: Option<f64>) -> Result<SolverOptions> {
    let mut opts = SolverOptions::default();
    if let Some(tol) = tol {
        ensure!(tol.is_finite() && tol > 0.0, "--tol must be positive");
        opts.tol = tol;
    }
    Ok(opts)
}

#[derive(Serialize)]
struct FitSummary<'a> {
    method: &'a str,
    labeled: usize,
    unlabeled: usize,
    objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<SolverReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    self_learning: Option<self_learning::SelfLearnReport>,
    dropped_rows: usize,
}

fn cmd_fit(args: FitArgs, json: bool) -> Result<bool> {
    let opts = solver_options(args.tol)?;
    let ds = data::load_csv_with(
        &args.data,
        &args.label_col,
        LoadOptions { intercept: !args.no_intercept },
    )
    .with_context(|| format!("loading {}", args.data.display()))?;
    let mut dropped = ds.dropped_rows;
    let unlabeled = match &args.unlabeled {
        Some(path) => {
            let t = data::load_features_like(path, &ds.feature_names, &args.label_col)
                .with_context(|| format!("loading {}", path.display()))?;
            dropped += t.dropped_rows;
            t.design
        }
        None => Matrix::zeros(0, ds.design.ncols()),
    };

    let (model, method, solver_report, sl_report) = match args.method {
        Method::Supervised => (
            supervised::fit_supervised(&ds.design, &ds.labels)?,
            "supervised",
            None,
            None,
        ),
        Method::Icls => {
            let (m, _, rep) = solver::fit_icls_with(&ds.design, &ds.labels, &unlabeled, &opts)?;
            (m, "icls", Some(rep), None)
        }
        Method::Selflearn => {
            let (m, _, rep) = self_learning::fit_self_learning(
                &ds.design,
                &ds.labels,
                &unlabeled,
                self_learning::DEFAULT_MAX_ITER,
            )?;
            (m, "selflearn", None, Some(rep))
        }
    };
    let objective = supervised::empirical_risk(&model, &ds.design, &ds.labels)?;
    let file = ModelFile {
        beta: model.beta.iter().copied().collect(),
        intercept_first: ds.intercept,
        class0: ds.class_names.0.clone(),
        class1: ds.class_names.1.clone(),
        feature_names: Some(ds.feature_names.clone()),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    write_atomic(&args.out, text.as_bytes())?;

    let converged = solver_report.is_none_or(|r| r.converged);
    let summary = FitSummary {
        method,
        labeled: ds.n_objects(),
        unlabeled: unlabeled.nrows(),
        objective,
        solver: solver_report,
        self_learning: sl_report,
        dropped_rows: dropped,
    };
    if json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        println!(
            "{method}: L={} U={} labeled objective {objective}",
            summary.labeled, summary.unlabeled
        );
        if let Some(rep) = solver_report {
            println!(
                "solver: {} iterations, projected gradient {:.3e}{}",
                rep.iterations,
                rep.projected_gradient_inf_norm,
                if rep.converged { "" } else { " (not converged)" }
            );
        }
        if dropped > 0 {
            eprintln!("note: dropped {dropped} rows with missing values");
        }
    }
    Ok(converged)
}

#[derive(Serialize)]
struct PredictSummary {
    rows: usize,
    dropped_rows: usize,
    error_rate: Option<f64>,
}

fn cmd_predict(args: PredictArgs, json: bool) -> Result<bool> {
    let text = std::fs::read_to_string(&args.model)
        .with_context(|| format!("reading {}", args.model.display()))?;
    let file: ModelFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.model.display()))?;
    let model = file.model()?;
    let table = match &file.feature_names {
        Some(names) => {
            ensure!(
                names.len() == model.n_coef(),
                "model lists {} features for {} coefficients",
                names.len(),
                model.n_coef()
            );
            data::load_features_like(&args.data, names, &args.label_col)?
        }
        None => data::load_features_csv(
            &args.data,
            &args.label_col,
            LoadOptions { intercept: file.intercept_first },
        )?,
    };
    if table.design.ncols() != model.n_coef() {
        bail!(
            "model has {} coefficients but {} encodes to {} columns",
            model.n_coef(),
            args.data.display(),
            table.design.ncols()
        );
    }
    let scores = supervised::decision_values(&model, &table.design)?;
    let classes = supervised::threshold(&scores);

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["row", "decision_value", "class"])?;
    for (i, (s, c)) in scores.iter().zip(classes.iter()).enumerate() {
        let name = if *c == 1.0 { &file.class1 } else { &file.class0 };
        writer.write_record([i.to_string(), s.to_string(), name.clone()])?;
    }
    write_atomic(&args.out, &writer.into_inner()?)?;

    let error_rate = match &table.raw_labels {
        Some(raw) if !raw.is_empty() => {
            let actual: Option<Vec<f64>> = raw
                .iter()
                .map(|r| {
                    if *r == file.class1 {
                        Some(1.0)
                    } else if *r == file.class0 {
                        Some(0.0)
                    } else {
                        None
                    }
                })
                .collect();
            match actual {
                Some(a) => Some(supervised::error_rate(&classes, &Vector::from_vec(a))?),
                None => {
                    eprintln!("note: label column has values outside the model's classes");
                    None
                }
            }
        }
        _ => None,
    };
    let summary = PredictSummary {
        rows: scores.len(),
        dropped_rows: table.dropped_rows,
        error_rate,
    };
    if json {
        println!("{}", serde_json::to_string(&summary)?);
    } else {
        print!("predicted {} rows", summary.rows);
        match error_rate {
            Some(e) => println!(", error rate {e}"),
            None => println!(),
        }
    }
    Ok(true)
}

fn load_dataset(args: &DataArgs, seed: u64) -> Result<Dataset> {
    if let Some(spec) = &args.synthetic {
        let (spec, n) = parse::synthetic(spec)?;
        // keep data generation off the streams the repeats use
        return Ok(data::gen_synthetic(&spec, n, icls::rng::child_seed(seed, u64::MAX))?);
    }
    let path = args.data.as_ref().expect("clap requires --data or --synthetic");
    let ds = data::load_csv_with(
        path,
        &args.label_col,
        LoadOptions { intercept: !args.no_intercept },
    )
    .with_context(|| format!("loading {}", path.display()))?;
    if let Some(entry) = data::find_entry(&data::builtin_registry(), &ds.name) {
        if let Err(e) = data::check_against_registry(&ds, entry) {
            eprintln!("warning: {e}");
        }
    }
    if ds.dropped_rows > 0 {
        eprintln!("note: dropped {} rows with missing values", ds.dropped_rows);
    }
    Ok(ds)
}

fn experiment_options(args: &ExperimentArgs) -> Result<ExperimentOptions> {
    Ok(ExperimentOptions {
        labeled_rule: args.labeled_rule.into(),
        solver: solver_options(args.tol)?,
        standardize: args.standardize,
        ..ExperimentOptions::default()
    })
}

fn write_reports(dir: &Path, records: &str, summary: &str, json: &str) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(&dir.join("records.csv"), records.as_bytes())?;
    write_atomic(&dir.join("summary.csv"), summary.as_bytes())?;
    write_atomic(&dir.join("summary.json"), json.as_bytes())?;
    Ok(())
}

fn fmt_se(se: Option<f64>) -> String {
    se.map_or_else(|| "-".to_string(), |s| format!("{s:.4}"))
}

fn cmd_learning_curve(args: CurveArgs, json: bool) -> Result<bool> {
    let schedule = parse::u_schedule(&args.u_schedule)?;
    let opts = experiment_options(&args.exp)?;
    let ds = load_dataset(&args.data, args.exp.seed)?;
    let report = experiments::run_learning_curve(&ds, &schedule, args.repeats, args.exp.seed, &opts)?;
    let summary_json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(dir) = &args.exp.out {
        write_reports(
            dir,
            &experiments::records_csv(&report.records)?,
            &experiments::curve_summary_csv(&report)?,
            &summary_json,
        )?;
    }
    if json {
        print!("{summary_json}");
    } else {
        if !report.truncated.is_empty() {
            eprintln!(
                "note: unlabeled sizes {:?} do not fit {} objects with L = {}",
                report.truncated,
                ds.n_objects(),
                report.labeled
            );
        }
        println!(
            "{}: L={} repeats={} seed={}",
            report.dataset, report.labeled, report.repeats, report.seed
        );
        println!("{:>6}  {:>16}  {:>16}  {:>16}", "U", "supervised", "selflearn", "icls");
        for &u in &report.u_schedule {
            let cell = |c| {
                let p = report.point(c, u).expect("point exists");
                format!("{:.4} ± {}", p.mean_error, fmt_se(p.standard_error))
            };
            println!(
                "{u:>6}  {:>16}  {:>16}  {:>16}",
                cell(Classifier::Supervised),
                cell(Classifier::SelfLearning),
                cell(Classifier::Icls)
            );
        }
    }
    if report.dominance_violations > 0 {
        eprintln!(
            "check failed: ICLS labeled objective exceeded self-learning's {} times",
            report.dominance_violations
        );
    }
    Ok(report.dominance_violations == 0)
}

fn cmd_cv(args: CvArgs, json: bool) -> Result<bool> {
    let opts = experiment_options(&args.exp)?;
    let ds = load_dataset(&args.data, args.exp.seed)?;
    let report = experiments::run_cv(&ds, args.folds, args.repeats, args.exp.seed, &opts)?;
    let summary_json = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(dir) = &args.exp.out {
        write_reports(
            dir,
            &experiments::records_csv(&report.records)?,
            &experiments::cv_summary_csv(&report)?,
            &summary_json,
        )?;
    }
    if json {
        print!("{summary_json}");
    } else {
        println!(
            "{}: {} folds x {} repeats, L={} seed={}",
            report.dataset, report.folds, report.repeats, report.labeled, report.seed
        );
        for s in &report.classifiers {
            let mut line = format!(
                "{:>10}  {:.4} ± {}",
                s.classifier.name(),
                s.mean_error,
                fmt_se(s.standard_error)
            );
            if let Some(d) = s.degradation_count {
                line += &format!("  worse than supervised in {d}/{}", report.repeats);
            }
            if s.better_than_other.is_some_and(|w| w.significant) {
                line += "  [significantly better than the other]";
            }
            if s.worse_than_supervised.is_some_and(|w| w.significant) {
                line += "  [significantly worse than supervised]";
            }
            println!("{line}");
        }
    }
    if report.dominance_violations > 0 {
        eprintln!(
            "check failed: ICLS labeled objective exceeded self-learning's in {} folds",
            report.dominance_violations
        );
    }
    Ok(report.dominance_violations == 0)
}

fn cmd_theory1d(args: TheoryArgs, json: bool) -> Result<bool> {
    let pop = Population1D::two_gaussians(
        args.population,
        icls::rng::child_seed(args.seed, u64::MAX),
    )?;
    let report = theory::verify_theorem1(&pop, args.labeled, args.trials, args.seed)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    if let Some(path) = &args.out {
        write_atomic(path, text.as_bytes())?;
    }
    if json {
        print!("{text}");
    } else {
        println!(
            "{} trials, {} violations, {} clipped; interval [{:.4}, {:.4}], beta* {:.4}, mean risk improvement {:.3e}",
            report.trials,
            report.violations,
            report.clipped,
            report.interval.lo,
            report.interval.hi,
            report.beta_star,
            report.mean_improvement
        );
    }
    Ok(report.violations == 0)
}
