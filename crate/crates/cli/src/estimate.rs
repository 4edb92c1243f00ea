//! `estimate`: per-section risk estimates, bandwidth map, and bandwidth
//! histogram for a crash-count CSV.

use std::fmt::Write as _;

use roadrisk::data::{load_crash_csv, LoadOptions};
use roadrisk::haar::{decompose, max_levels};
use roadrisk::sma::{bandwidth_histogram, estimate_network, SmaOptions};

use crate::args::EstimateArgs;
use crate::output::{self, CliError};

pub fn run(args: &EstimateArgs, config_json: &str) -> Result<(), CliError> {
    let input_bytes = std::fs::read(&args.input)?;
    let header = output::run_header(
        "estimate",
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

    if let Some(levels) = args.levels {
        for series in &dataset.series {
            if series.len() < 2 {
                continue;
            }
            let max = max_levels(series.len()).map_err(output::computation)?;
            if levels == 0 || levels > max {
                return Err(output::usage(format!(
                    "--levels {levels} is invalid for route {} {} ({} sections, max {max})",
                    series.route_id,
                    series.direction,
                    series.len()
                )));
            }
        }
    }

    let sma_options = SmaOptions {
        levels: args.levels,
        grid_size: args.grid_size,
        clamp: !args.disable_clamp,
        keep_pure_profiles: args.pure_profiles,
    };
    let estimates = estimate_network(&dataset, &sma_options).map_err(output::computation)?;

    let mut estimate_rows =
        String::from("route_id,direction,milepost,count,period,sma_risk,bandwidth_miles\n");
    let mut bandwidth_rows = String::from("route_id,direction,milepost,period,bandwidth_miles\n");
    for est in &estimates {
        let series = &est.series;
        for i in 0..series.len() {
            let milepost = roadrisk::data::format_milepost(series.milepost(i));
            let _ = writeln!(
                estimate_rows,
                "{},{},{},{},{},{},{}",
                series.route_id,
                series.direction,
                milepost,
                series.counts[i],
                series.period_label,
                est.estimates[i],
                est.bandwidth_miles[i]
            );
            let _ = writeln!(
                bandwidth_rows,
                "{},{},{},{},{}",
                series.route_id,
                series.direction,
                milepost,
                series.period_label,
                est.bandwidth_miles[i]
            );
        }
    }

    let mut histogram_rows = String::from("bandwidth_miles,proportion\n");
    for (bandwidth, proportion) in bandwidth_histogram(&estimates) {
        let _ = writeln!(histogram_rows, "{bandwidth},{proportion}");
    }

    let mut files = vec![
        ("estimates.csv".to_string(), estimate_rows),
        ("bandwidth_map.csv".to_string(), bandwidth_rows),
        ("bandwidth_histogram.csv".to_string(), histogram_rows),
    ];

    if args.pure_profiles {
        let mut rows = String::from("route_id,direction,period,level,threshold,pure\n");
        for est in &estimates {
            if let Some(profiles) = &est.thresholds.pure_profiles {
                for (level, profile) in profiles.iter().enumerate() {
                    for (threshold, pure) in profile {
                        let _ = writeln!(
                            rows,
                            "{},{},{},{},{threshold},{pure}",
                            est.series.route_id,
                            est.series.direction,
                            est.series.period_label,
                            level + 1
                        );
                    }
                }
            }
        }
        files.push(("pure_profiles.csv".to_string(), rows));
    }

    if args.dump_decomposition {
        let (sums, diffs) = decomposition_dump(&dataset, args.levels)?;
        files.push(("decomposition_sums.csv".to_string(), sums));
        files.push(("decomposition_diffs.csv".to_string(), diffs));
    }

    output::commit(&args.out, &header, files)
}

/// Long-format dump of the per-level sums/differences matrices, one row per
/// section with `level_1..level_L` columns (L = the deepest level used by any
/// series; shorter series leave higher levels empty).
fn decomposition_dump(
    dataset: &roadrisk::data::NetworkDataset,
    levels_override: Option<usize>,
) -> Result<(String, String), CliError> {
    let deepest = dataset
        .series
        .iter()
        .filter(|s| s.len() >= 2)
        .map(|s| levels_override.unwrap_or_else(|| s.len().ilog2() as usize))
        .max()
        .unwrap_or(0);

    let mut header_row = String::from("route_id,direction,period,section");
    for level in 1..=deepest {
        let _ = write!(header_row, ",level_{level}");
    }
    header_row.push('\n');

    let mut sums_rows = header_row.clone();
    let mut diffs_rows = header_row;
    for series in &dataset.series {
        if series.len() < 2 {
            continue;
        }
        let levels =
            levels_override.unwrap_or_else(|| series.len().ilog2() as usize);
        let decomposition =
            decompose(&series.counts_f64(), levels).map_err(output::computation)?;
        for i in 0..series.len() {
            for (rows, matrix) in [(&mut sums_rows, false), (&mut diffs_rows, true)] {
                let _ = write!(
                    rows,
                    "{},{},{},{}",
                    series.route_id, series.direction, series.period_label, i
                );
                for level in 0..deepest {
                    if level < levels {
                        let value = if matrix {
                            decomposition.diffs(level)[i]
                        } else {
                            decomposition.sums(level)[i]
                        };
                        let _ = write!(rows, ",{value}");
                    } else {
                        rows.push(',');
                    }
                }
                rows.push('\n');
            }
        }
    }
    Ok((sums_rows, diffs_rows))
}
