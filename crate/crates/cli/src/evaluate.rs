//! `evaluate`: SCT, MCT, FP (per reference model), and MSPE for the count,
//! EB (when covariates are supplied), and smoothed estimators over an ordered
//! period pair, shaped like the usual comparison tables.

use std::fmt::Write as _;

use roadrisk::data::{load_crash_csv, LoadOptions, NetworkDataset};
use roadrisk::eb::{build_design, eb_estimate, fit_nb_regression, SPFModel};
use roadrisk::eval::{
    align_periods, evaluate_methods, AlignedPeriods, EvaluationConfig, EvaluationReport,
    MethodPair,
};
use roadrisk::sma::{sma_estimate, SmaOptions};

use crate::args::EvaluateArgs;
use crate::output::{self, CliError};

pub fn run(args: &EvaluateArgs, config_json: &str) -> Result<(), CliError> {
    let input_bytes = std::fs::read(&args.input)?;
    let header = output::run_header(
        "evaluate",
        config_json,
        "input",
        &output::sha256_hex(&input_bytes),
    );

    let load_options = LoadOptions {
        schema: args.columns.to_map(),
        fill_gaps_zero: args.fill_gaps_zero,
        ..Default::default()
    };
    let dataset = load_crash_csv(&args.input, &load_options)?;
    let known_periods = dataset.periods();

    let pairs: Vec<(String, String)> = if args.average_pairs {
        if known_periods.len() < 2 {
            return Err(output::usage(format!(
                "--average-pairs needs at least two periods; dataset has {:?}",
                known_periods
            )));
        }
        known_periods
            .windows(2)
            .map(|w| (w[0].clone(), w[1].clone()))
            .collect()
    } else {
        if args.periods.len() != 2 {
            return Err(output::usage(format!(
                "--periods needs an ordered pair (dataset has periods {:?})",
                known_periods
            )));
        }
        vec![(args.periods[0].clone(), args.periods[1].clone())]
    };

    for alpha in &args.alphas {
        if !(*alpha > 0.0 && *alpha < 1.0) {
            return Err(output::usage(format!("alpha {alpha} is outside (0, 1)")));
        }
    }

    let mut reports = Vec::with_capacity(pairs.len());
    let mut models: Vec<(String, SPFModel)> = Vec::new();
    for (p1, p2) in &pairs {
        let (report, pair_models) = evaluate_pair(&dataset, p1, p2, args)?;
        reports.push(report);
        models.extend(pair_models);
    }
    let report = average_reports(reports);

    let mut files = vec![
        ("report.csv".to_string(), render_report_csv(&report)),
        ("report.txt".to_string(), render_report_text(&report)),
        (
            "report.json".to_string(),
            serde_json::to_string_pretty(&report)
                .map_err(output::computation)?
                + "\n",
        ),
    ];
    for (period, model) in &models {
        files.push((
            format!("spf_model_{period}.json"),
            serde_json::to_string_pretty(model).map_err(output::computation)? + "\n",
        ));
        files.push((
            format!("spf_coefficients_{period}.csv"),
            render_coefficients(model),
        ));
    }

    output::commit(&args.out, &header, files)
}

fn evaluate_pair(
    dataset: &NetworkDataset,
    period_1: &str,
    period_2: &str,
    args: &EvaluateArgs,
) -> Result<(EvaluationReport, Vec<(String, SPFModel)>), CliError> {
    let aligned = align_periods(dataset, period_1, period_2)?;

    let sma_options = SmaOptions {
        levels: args.levels,
        grid_size: args.grid_size,
        ..Default::default()
    };
    let sma_p1 = pooled_sma(dataset, &aligned, true, &sma_options)?;
    let sma_p2 = pooled_sma(dataset, &aligned, false, &sma_options)?;

    let mut methods = vec![
        MethodPair {
            name: "count".into(),
            estimates_p1: aligned.counts_p1.clone(),
            estimates_p2: aligned.counts_p2.clone(),
        },
        MethodPair {
            name: "sma".into(),
            estimates_p1: sma_p1,
            estimates_p2: sma_p2,
        },
    ];

    let mut eb_note = None;
    let mut models = Vec::new();
    if args.eb_covariates.is_empty() {
        eb_note = Some("eb omitted: no covariates supplied (pass --eb-covariates)".to_string());
    } else {
        let (eb_p1, model_p1) =
            eb_pooled(dataset, &aligned, period_1, &args.eb_covariates, true)?;
        let (eb_p2, model_p2) =
            eb_pooled(dataset, &aligned, period_2, &args.eb_covariates, false)?;
        models.push((period_1.to_string(), model_p1));
        models.push((period_2.to_string(), model_p2));
        methods.insert(
            1,
            MethodPair {
                name: "eb".into(),
                estimates_p1: eb_p1,
                estimates_p2: eb_p2,
            },
        );
    }

    let config = EvaluationConfig {
        alphas: args.alphas.clone(),
        period_1: period_1.to_string(),
        period_2: period_2.to_string(),
    };
    let mut report = evaluate_methods(&methods, &aligned.counts_p2, &config)?;
    if let Some(note) = eb_note {
        report.warnings.push(note);
    }
    Ok((report, models))
}

/// Smoothed estimates for every aligned series of one period, pooled in
/// universe order.
fn pooled_sma(
    dataset: &NetworkDataset,
    aligned: &AlignedPeriods,
    first_period: bool,
    options: &SmaOptions,
) -> Result<Vec<f64>, CliError> {
    let mut pooled = Vec::with_capacity(aligned.counts_p1.len());
    for &(i, j) in &aligned.series_pairs {
        let series = &dataset.series[if first_period { i } else { j }];
        let estimate = sma_estimate(series, options).map_err(output::computation)?;
        pooled.extend(estimate.estimates);
    }
    Ok(pooled)
}

/// EB estimates for one period: fit the SPF on that period's pooled sections,
/// then blend predictions with observed counts.
fn eb_pooled(
    dataset: &NetworkDataset,
    aligned: &AlignedPeriods,
    period: &str,
    covariates: &[String],
    first_period: bool,
) -> Result<(Vec<f64>, SPFModel), CliError> {
    let (x, names, y) = build_design(dataset, period, covariates).map_err(to_cli)?;
    let model = fit_nb_regression(&x, &names, &y).map_err(output::computation)?;

    // build_design pools in dataset order for the period; map back onto the
    // aligned universe order via the series pair list
    let period_indices = dataset.series_indices_for_period(period);
    let mut offsets = std::collections::HashMap::new();
    let mut offset = 0usize;
    for &idx in &period_indices {
        offsets.insert(idx, offset);
        offset += dataset.series[idx].len();
    }

    let mut estimates = Vec::with_capacity(aligned.counts_p1.len());
    for &(i, j) in &aligned.series_pairs {
        let idx = if first_period { i } else { j };
        let series = &dataset.series[idx];
        let start = offsets[&idx];
        for k in 0..series.len() {
            let mu = model.fitted_mu[start + k];
            estimates.push(eb_estimate(
                mu,
                model.overdispersion,
                series.counts[k] as f64,
            ));
        }
    }
    Ok((estimates, model))
}

fn to_cli(err: roadrisk::eb::EbError) -> CliError {
    use roadrisk::eb::EbError;
    match err {
        EbError::UnknownCovariate(_) | EbError::EmptyPeriod(_) | EbError::SchemaMismatch { .. } => {
            output::usage(err.to_string())
        }
        other => output::computation(other),
    }
}

/// Element-wise average of per-pair reports; a single report passes through.
fn average_reports(mut reports: Vec<EvaluationReport>) -> EvaluationReport {
    if reports.len() == 1 {
        return reports.pop().expect("nonempty");
    }
    let divisor = reports.len() as f64;
    let mut merged = reports[0].clone();
    merged.period_labels = (
        reports.first().expect("nonempty").period_labels.0.clone(),
        reports.last().expect("nonempty").period_labels.1.clone(),
    );
    merged.warnings.push(format!(
        "averaged over {} consecutive period pairs",
        reports.len()
    ));
    for report in &reports[1..] {
        for (a, row) in merged.sct.iter_mut().enumerate() {
            for (m, value) in row.iter_mut().enumerate() {
                *value += report.sct[a][m];
            }
        }
        for (a, row) in merged.mct.iter_mut().enumerate() {
            for (m, value) in row.iter_mut().enumerate() {
                *value += report.mct[a][m];
            }
        }
        for (a, grid) in merged.fp.iter_mut().enumerate() {
            for (r, row) in grid.iter_mut().enumerate() {
                for (m, value) in row.iter_mut().enumerate() {
                    *value += report.fp[a][r][m];
                }
            }
        }
        for (m, value) in merged.mspe.iter_mut().enumerate() {
            *value += report.mspe[m];
        }
        merged.warnings.extend(report.warnings.iter().cloned());
    }
    for row in &mut merged.sct {
        row.iter_mut().for_each(|v| *v /= divisor);
    }
    for row in &mut merged.mct {
        row.iter_mut().for_each(|v| *v /= divisor);
    }
    for grid in &mut merged.fp {
        for row in grid.iter_mut() {
            row.iter_mut().for_each(|v| *v /= divisor);
        }
    }
    merged.mspe.iter_mut().for_each(|v| *v /= divisor);
    merged
}

/// Long-format rows: `test,alpha,reference,method,value`.
fn render_report_csv(report: &EvaluationReport) -> String {
    let mut rows = String::from("test,alpha,reference,method,value\n");
    for (a, &alpha) in report.alphas.iter().enumerate() {
        for (m, method) in report.methods.iter().enumerate() {
            let _ = writeln!(rows, "sct,{alpha},,{method},{}", report.sct[a][m]);
        }
    }
    for (a, &alpha) in report.alphas.iter().enumerate() {
        for (m, method) in report.methods.iter().enumerate() {
            let _ = writeln!(rows, "mct,{alpha},,{method},{}", report.mct[a][m]);
        }
    }
    for (a, &alpha) in report.alphas.iter().enumerate() {
        for (r, reference) in report.methods.iter().enumerate() {
            for (m, method) in report.methods.iter().enumerate() {
                let _ = writeln!(
                    rows,
                    "fp,{alpha},{reference},{method},{}",
                    report.fp[a][r][m]
                );
            }
        }
    }
    for (m, method) in report.methods.iter().enumerate() {
        let _ = writeln!(rows, "mspe,,,{method},{}", report.mspe[m]);
    }
    rows
}

fn alpha_label(alpha: f64) -> String {
    format!("Top {}%", alpha * 100.0)
}

/// Three text tables shaped like the usual comparison reports.
fn render_report_text(report: &EvaluationReport) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "Method comparison, period {} -> {}",
        report.period_labels.0, report.period_labels.1
    );
    let _ = writeln!(text, "Tie policy: {}", report.tie_break);
    for warning in &report.warnings {
        let _ = writeln!(text, "Note: {warning}");
    }

    let method_header = report
        .methods
        .iter()
        .map(|m| format!("{m:>10}"))
        .collect::<String>();

    let _ = writeln!(text, "\nSegment Consistency (higher is better)");
    let _ = writeln!(text, "{:<12}{method_header}", "alpha");
    for (a, &alpha) in report.alphas.iter().enumerate() {
        let _ = write!(text, "{:<12}", alpha_label(alpha));
        for value in &report.sct[a] {
            let _ = write!(text, "{value:>10.4}");
        }
        text.push('\n');
    }

    let _ = writeln!(text, "\nMethod Consistency (higher is better)");
    let _ = writeln!(text, "{:<12}{method_header}", "alpha");
    for (a, &alpha) in report.alphas.iter().enumerate() {
        let _ = write!(text, "{:<12}", alpha_label(alpha));
        for value in &report.mct[a] {
            let _ = write!(text, "{:>9.2}%", value * 100.0);
        }
        text.push('\n');
    }

    let _ = writeln!(text, "\nFalse Positive (lower is better) and MSPE");
    let _ = writeln!(text, "{:<12}{:<14}{method_header}", "alpha", "reference");
    for (a, &alpha) in report.alphas.iter().enumerate() {
        for (r, reference) in report.methods.iter().enumerate() {
            let label = if r == 0 { alpha_label(alpha) } else { String::new() };
            let _ = write!(text, "{label:<12}{:<14}", format!("{reference} model"));
            for value in &report.fp[a][r] {
                let _ = write!(text, "{:>9.2}%", value * 100.0);
            }
            text.push('\n');
        }
    }
    let _ = write!(text, "{:<12}{:<14}", "MSPE", "-");
    for value in &report.mspe {
        let _ = write!(text, "{value:>10.4}");
    }
    text.push('\n');
    text
}

/// Coefficient table in the usual regression-report shape.
fn render_coefficients(model: &SPFModel) -> String {
    let mut rows = String::from("parameter,estimate,std_error,p_value\n");
    let _ = writeln!(rows, "overdispersion,{},,", model.overdispersion);
    for (i, name) in model.covariate_names.iter().enumerate() {
        let _ = writeln!(
            rows,
            "{name},{},{},{}",
            model.coefficients[i], model.std_errors[i], model.p_values[i]
        );
    }
    let _ = writeln!(rows, "log_likelihood,{},,", model.log_likelihood);
    let _ = writeln!(rows, "aic,{},,", model.aic);
    let _ = writeln!(rows, "bic,{},,", model.bic);
    rows
}
