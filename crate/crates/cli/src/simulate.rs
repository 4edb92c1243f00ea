//! `simulate`: seeded synthetic experiments against a known risk profile —
//! per-method accuracy against the truth, or the PURE unbiasedness check.

use std::fmt::Write as _;

use roadrisk::data::{circular_rectangular_mean, SectionSeries};
use roadrisk::sma::{sma_estimate, SmaOptions};
use roadrisk::synth::{
    build_profile, default_unbiasedness_grid, preset, pure_check_preset,
    pure_unbiasedness_experiment, sample_counts, RiskProfile, SegmentSpec,
};

use crate::args::SimulateArgs;
use crate::output::{self, CliError};

pub fn run(args: &SimulateArgs, config_json: &str) -> Result<(), CliError> {
    let profile = resolve_profile(args)?;
    let profile_json =
        serde_json::to_string(&profile.segments).map_err(output::computation)? + "\n";
    let header = output::run_header(
        "simulate",
        config_json,
        "profile",
        &output::sha256_hex(profile_json.as_bytes()),
    );

    let mut files = vec![("profile.json".to_string(), profile_json)];

    if args.replicates == 0 {
        return Err(output::usage("--replicates must be at least 1"));
    }

    if args.pure_check {
        files.push((
            "pure_unbiasedness.csv".to_string(),
            pure_table(args, &profile)?,
        ));
    } else {
        files.push(("mse_table.csv".to_string(), mse_table(args, &profile)?));
    }

    if args.export_draws {
        files.push(("draws.csv".to_string(), draws_csv(args, &profile)));
    }

    output::commit(&args.out, &header, files)
}

fn resolve_profile(args: &SimulateArgs) -> Result<RiskProfile, CliError> {
    if let Some(name) = &args.preset {
        return preset(name)
            .ok_or_else(|| output::usage(format!("unknown preset '{name}' (try figure2)")));
    }
    if let Some(path) = &args.profile {
        let text = output::strip_comment_preamble(&std::fs::read_to_string(path)?);
        let segments: Vec<SegmentSpec> = serde_json::from_str(&text)
            .map_err(|e| output::usage(format!("bad profile spec {}: {e}", path.display())))?;
        return build_profile(&segments).map_err(|e| output::usage(e.to_string()));
    }
    if args.pure_check {
        return Ok(pure_check_preset());
    }
    Err(output::usage(
        "simulate needs --preset NAME or --profile FILE",
    ))
}

/// Mean squared error against the true risk for the raw counts, the adaptive
/// estimator, and a fixed-window average, across seeded replicates.
fn mse_table(args: &SimulateArgs, profile: &RiskProfile) -> Result<String, CliError> {
    let n = profile.len();
    if n < 2 {
        return Err(output::usage("profile needs at least 2 sections"));
    }
    let batch = sample_counts(profile, args.seed, args.replicates);
    let sma_options = SmaOptions {
        grid_size: args.grid_size,
        ..Default::default()
    };
    let window = args.ma_window.min(n);

    let mut mse = vec![Vec::with_capacity(args.replicates); 3];
    for draw in &batch.draws {
        let series = SectionSeries::new("sim", "-", "sim", 0.1, 0.0, draw.clone())
            .map_err(output::computation)?;
        let counts = series.counts_f64();
        let estimate = sma_estimate(&series, &sma_options).map_err(output::computation)?;
        let averaged = circular_rectangular_mean(&counts, window, (window - 1) / 2);
        for (k, values) in [&counts, &estimate.estimates, &averaged].into_iter().enumerate() {
            let err = values
                .iter()
                .zip(&profile.lambda)
                .map(|(v, l)| (v - l) * (v - l))
                .sum::<f64>()
                / n as f64;
            mse[k].push(err);
        }
    }

    let names = ["count", "sma", &format!("ma{window}")];
    let mut rows = String::from("method,mean_mse,se_mean_mse,replicates,wins_vs_count\n");
    for (k, name) in names.iter().enumerate() {
        let (mean, se) = mean_se(&mse[k]);
        let wins = mse[k]
            .iter()
            .zip(&mse[0])
            .filter(|(own, count)| own < count)
            .count();
        let se_text = se.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(rows, "{name},{mean},{se_text},{},{wins}", args.replicates);
    }
    Ok(rows)
}

fn pure_table(args: &SimulateArgs, profile: &RiskProfile) -> Result<String, CliError> {
    let grid = default_unbiasedness_grid(profile, args.pure_grid_points);
    let table = pure_unbiasedness_experiment(profile, &grid, args.seed, args.replicates)
        .map_err(|e| output::usage(e.to_string()))?;
    let mut rows = String::from(
        "threshold,mean_pure,mean_true_mse,se_pure,se_mse,combined_se,gap,gap_over_se\n",
    );
    for row in &table.rows {
        let combined = row.combined_se();
        let gap = row.mean_pure - row.mean_true_mse;
        let _ = writeln!(
            rows,
            "{},{},{},{},{},{},{gap},{}",
            row.threshold,
            row.mean_pure,
            row.mean_true_mse,
            optional(row.se_pure),
            optional(row.se_mse),
            optional(combined),
            optional(combined.map(|se| gap.abs() / se)),
        );
    }
    Ok(rows)
}

fn draws_csv(args: &SimulateArgs, profile: &RiskProfile) -> String {
    let batch = sample_counts(profile, args.seed, args.replicates);
    let mut rows = String::from("replicate,section,count\n");
    for (r, draw) in batch.draws.iter().enumerate() {
        for (i, count) in draw.iter().enumerate() {
            let _ = writeln!(rows, "{r},{i},{count}");
        }
    }
    rows
}

fn optional(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}
