//! Command drivers: wire parsed arguments through the library pipeline and
//! emit reports.

use std::path::Path;

use expaft::{
    bootstrap_covariance, confidence_intervals, fit_censored_expectile, plug_in_covariance,
    two_stage_fit, CovarianceEstimate, DataGenConfig, ExpectileIndex, FitResult, KaplanMeierCurve,
    SolverConfig, StudyConfig, SurvivalSample, TrueModel, WeightScheme,
};

use crate::args::{Cli, Command, FitArgs, KmArgs, SeArg, SimulateArgs};
use crate::data::{header_columns, read_csv, read_time_status, DatasetSchema};
use crate::error::{CliError, Result};
use crate::report::{
    curve_csv, study_csv, to_json_string, write_atomic, CurveRow, Envelope, FitReport,
    SCHEMA_VERSION,
};

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Km(args) => cmd_km(&args),
    }
}

fn set_threads(threads: usize) {
    if threads > 0 {
        // Only effective once per process; later calls are no-ops.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0 && v < 1.0) {
        return Err(CliError::Usage(format!(
            "--{name} must lie strictly inside (0, 1), got {v}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::Usage(format!(
            "--{name} must be finite and positive, got {v}"
        )));
    }
    Ok(())
}

fn emit(out: Option<&Path>, bytes: &str) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes.as_bytes()),
        None => {
            print!("{bytes}");
            Ok(())
        }
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    check_unit_interval("tau", args.tau)?;
    check_unit_interval("level", args.level)?;
    check_positive("gamma", args.gamma)?;
    if let Some(l) = args.lambda {
        if !(l.is_finite() && l >= 0.0) {
            return Err(CliError::Usage(format!(
                "--lambda must be finite and nonnegative, got {l}"
            )));
        }
    }
    if !(args.g_floor.is_finite() && args.g_floor >= 0.0 && args.g_floor < 1.0) {
        return Err(CliError::Usage(format!(
            "--g-floor must lie in [0, 1), got {}",
            args.g_floor
        )));
    }
    if matches!(args.se, SeArg::Bootstrap) && args.boot_reps < 2 {
        return Err(CliError::Usage(format!(
            "--boot-reps must be at least 2, got {}",
            args.boot_reps
        )));
    }
    set_threads(args.threads);

    let covariates = if args.covariates.is_empty() {
        header_columns(&args.data.data)?
            .into_iter()
            .filter(|c| c != &args.data.time_column && c != &args.data.status_column)
            .collect()
    } else {
        args.covariates.clone()
    };
    if covariates.is_empty() {
        return Err(CliError::Usage(
            "no covariate columns left after removing time and status".into(),
        ));
    }

    let schema = DatasetSchema {
        time_column: args.data.time_column.clone(),
        status_column: args.data.status_column.clone(),
        covariate_columns: covariates.clone(),
        standardize: args.standardize(),
    };
    let loaded = read_csv(&args.data.data, &schema)?;
    let sample = if args.intercept() {
        loaded.sample.with_intercept()
    } else {
        loaded.sample
    };
    let offset = args.intercept() as usize;
    let n = sample.n();
    let censoring_fraction = sample.censored_fraction();

    let scheme = WeightScheme {
        convention: args.km_convention.into(),
        floor: args.g_floor,
        ..WeightScheme::default()
    };
    let (curve, weights) = scheme.weights(&sample)?;
    let tau = ExpectileIndex::new(args.tau)?;
    let config = SolverConfig::default();
    let lambda = args.lambda.unwrap_or_else(|| (n as f64).powf(0.4));

    struct RefitPieces {
        selected_cols: Vec<usize>,
        fit: Option<FitResult>,
        refit_skipped: bool,
    }

    let pieces = if args.penalize() {
        let ts = two_stage_fit(&sample, tau, &weights, lambda, args.gamma, false, &config)?;
        let selected: Vec<usize> = ts
            .refit_columns
            .iter()
            .copied()
            .filter(|&c| c >= offset)
            .collect();
        RefitPieces {
            refit_skipped: ts.refit.is_none(),
            selected_cols: selected,
            fit: ts.refit,
        }
    } else {
        let fit = fit_censored_expectile(&sample, tau, &weights, &config, None)?;
        RefitPieces {
            selected_cols: (offset..sample.p()).collect(),
            fit: Some(fit),
            refit_skipped: false,
        }
    };

    let mut selected_variables = Vec::new();
    let mut coefficients = Vec::new();
    let mut standard_errors = Vec::new();
    let mut intervals = Vec::new();
    let mut intercept_value = None;

    if let Some(fit) = &pieces.fit {
        // Columns the reported fit was run on: the intercept (when declared)
        // followed by the selected covariates.
        let mut fit_cols = Vec::new();
        if offset == 1 {
            fit_cols.push(0);
        }
        fit_cols.extend(&pieces.selected_cols);
        let sub = if fit_cols.len() == sample.p() {
            sample.clone()
        } else {
            sample.select_columns(&fit_cols)?
        };
        let cov: CovarianceEstimate = match args.se {
            SeArg::Plugin => plug_in_covariance(&sub, fit, &curve, &weights)?.1,
            SeArg::Bootstrap => {
                bootstrap_covariance(&sub, tau, &scheme, args.boot_reps, args.seed, &config)?
            }
        };
        let cis = confidence_intervals(&fit.beta, &cov, args.level)?;
        for (k, &col) in fit_cols.iter().enumerate() {
            if col < offset {
                intercept_value = Some(fit.beta[k]);
                continue;
            }
            selected_variables.push(covariates[col - offset].clone());
            coefficients.push(fit.beta[k]);
            standard_errors.push(cov.standard_errors[k]);
            intervals.push(cis[k]);
        }
    }

    let report = FitReport {
        selected_variables,
        coefficients,
        intercept: intercept_value,
        standard_errors,
        confidence_intervals: intervals,
        confidence_level: args.level,
        tau: args.tau,
        lambda: args.penalize().then_some(lambda),
        gamma: args.penalize().then_some(args.gamma),
        n_used: loaded.n_used,
        n_dropped: loaded.n_dropped,
        censoring_fraction,
        refit_skipped: pieces.refit_skipped,
    };
    print_fit_table(&report);

    let flags = serde_json::json!({
        "data": args.data.data.display().to_string(),
        "time_column": args.data.time_column,
        "status_column": args.data.status_column,
        "covariates": covariates,
        "standardize": args.standardize(),
        "tau": args.tau,
        "lambda": args.penalize().then_some(lambda),
        "gamma": args.gamma,
        "penalize": args.penalize(),
        "intercept": args.intercept(),
        "se": match args.se { SeArg::Plugin => "plugin", SeArg::Bootstrap => "bootstrap" },
        "boot_reps": args.boot_reps,
        "seed": args.seed,
        "km_convention": match args.km_convention {
            crate::args::KmConventionArg::Censoring => "censoring",
            crate::args::KmConventionArg::Event => "event",
        },
        "g_floor": args.g_floor,
        "level": args.level,
    });
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        command: "fit".to_string(),
        flags,
        results: report,
    };
    emit(args.out.as_deref(), &to_json_string(&envelope))
}

fn print_fit_table(report: &FitReport) {
    let mut t = String::new();
    t.push_str(&format!(
        "n = {} (dropped {}), censoring fraction = {:.3}, tau = {}\n",
        report.n_used, report.n_dropped, report.censoring_fraction, report.tau
    ));
    if let Some(l) = report.lambda {
        t.push_str(&format!(
            "lambda = {l}, gamma = {}\n",
            report.gamma.unwrap_or(f64::NAN)
        ));
    }
    if let Some(b0) = report.intercept {
        t.push_str(&format!("intercept = {b0:.6}\n"));
    }
    if report.refit_skipped {
        t.push_str("selection kept no covariates; nothing to refit\n");
    } else {
        let name_w = report
            .selected_variables
            .iter()
            .map(|s| s.len())
            .max()
            .unwrap_or(8)
            .max(8);
        let pct = report.confidence_level * 100.0;
        t.push_str(&format!(
            "{:name_w$}  {:>12}  {:>12}  {pct}% interval\n",
            "variable", "coefficient", "std error"
        ));
        for (k, name) in report.selected_variables.iter().enumerate() {
            t.push_str(&format!(
                "{:name_w$}  {:>12.6}  {:>12.6}  [{:.6}, {:.6}]\n",
                name,
                report.coefficients[k],
                report.standard_errors[k],
                report.confidence_intervals[k].0,
                report.confidence_intervals[k].1
            ));
        }
    }
    eprint!("{t}");
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    check_unit_interval("censoring-rate", args.censoring_rate)?;
    check_positive("gamma", args.gamma)?;
    if args.p < 5 {
        return Err(CliError::Usage(format!(
            "--p must be at least 5 (the first five slopes are nonzero), got {}",
            args.p
        )));
    }
    if args.n < 10 {
        return Err(CliError::Usage(format!(
            "--n must be at least 10, got {}",
            args.n
        )));
    }
    if args.reps == 0 {
        return Err(CliError::Usage("--reps must be positive".into()));
    }
    if args.methods.is_empty() {
        return Err(CliError::Usage(
            "--methods must name at least one method".into(),
        ));
    }
    if !(args.g_floor.is_finite() && args.g_floor >= 0.0 && args.g_floor < 1.0) {
        return Err(CliError::Usage(format!(
            "--g-floor must lie in [0, 1), got {}",
            args.g_floor
        )));
    }
    set_threads(args.threads);

    let model = TrueModel::sparse_default(args.p)?;
    // The bound here is a placeholder; run_study calibrates it to the
    // requested rate before generating anything.
    let template = DataGenConfig::standard(args.n, args.p, args.error.into(), 1.0, args.seed);
    let study = StudyConfig {
        methods: args.methods.iter().map(|&m| m.into()).collect(),
        penalized: args.penalize(),
        lambda_rule: args.lambda_rule,
        gamma: args.gamma,
        intercept_mode: args.intercept_mode.into(),
        reps: args.reps,
        target_censoring: args.censoring_rate,
        seed: args.seed,
        scheme: WeightScheme {
            convention: args.km_convention.into(),
            floor: args.g_floor,
            ..WeightScheme::default()
        },
        ..StudyConfig::default()
    };
    let report = expaft::run_study(&model, &template, &study)?;

    let flags = serde_json::json!({
        "n": args.n,
        "p": args.p,
        "error": match args.error {
            crate::args::ErrorArg::Gumbel => "gumbel",
            crate::args::ErrorArg::ShiftedUniform => "shifted-uniform",
        },
        "censoring_rate": args.censoring_rate,
        "lambda_rule": report.lambda_rule.label(),
        "gamma": args.gamma,
        "methods": report.methods.iter().map(|m| m.method.label()).collect::<Vec<_>>(),
        "intercept_mode": match args.intercept_mode {
            crate::args::InterceptModeArg::Without => "without",
            crate::args::InterceptModeArg::With => "with",
        },
        "penalize": args.penalize(),
        "reps": args.reps,
        "seed": args.seed,
        "km_convention": match args.km_convention {
            crate::args::KmConventionArg::Censoring => "censoring",
            crate::args::KmConventionArg::Event => "event",
        },
        "g_floor": args.g_floor,
    });
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        command: "simulate".to_string(),
        flags,
        results: report.clone(),
    };

    let csv_path = args.out.with_extension("csv");
    let json_path = args.out.with_extension("json");
    write_atomic(&csv_path, study_csv(&report).as_bytes())?;
    write_atomic(&json_path, to_json_string(&envelope).as_bytes())?;

    for m in &report.methods {
        eprintln!(
            "{}: mean L2 error {:.4} (sd {:.4}), excluded {}",
            m.method.label(),
            m.l2_error,
            m.l2_sd,
            m.excluded
        );
    }
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

pub fn cmd_km(args: &KmArgs) -> Result<()> {
    let (y, delta, _dropped) = read_time_status(
        &args.data.data,
        &args.data.time_column,
        &args.data.status_column,
    )?;
    let max_y = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // The curve depends only on times and statuses; the sample type wants at
    // least one covariate column, so feed it a dummy.
    let dummy = nalgebra::DMatrix::zeros(y.len(), 1);
    let sample = SurvivalSample::new(y, delta, dummy)?;
    let curve = KaplanMeierCurve::fit(&sample, args.km_convention.into())?;

    let mut rows = vec![CurveRow {
        time: 0.0,
        survival: 1.0,
    }];
    for (t, v) in curve.jump_times().iter().zip(curve.values()) {
        rows.push(CurveRow {
            time: *t,
            survival: *v,
        });
    }
    // End marker: carry the last value to the largest observed time so the
    // plotted step extends over the whole follow-up.
    if rows.last().map(|r| r.time) != Some(max_y) {
        let last = rows.last().map(|r| r.survival).unwrap_or(1.0);
        rows.push(CurveRow {
            time: max_y,
            survival: last,
        });
    }
    emit(args.out.as_deref(), &curve_csv(&rows))
}

/// Machine-readable error envelope printed to stderr on failure.
pub fn error_json(err: &CliError) -> String {
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "error": {
            "exit_code": err.exit_code(),
            "kind": err.kind(),
            "message": err.to_string(),
        }
    });
    let mut s = serde_json::to_string(&doc).expect("error serialization");
    s.push('\n');
    s
}
