//! `aggregate`: expose fixed-factor aggregation and the fixed-window moving
//! average, the two classical routes to the same smoothing.

use std::fmt::Write as _;

use roadrisk::data::{
    aggregate, format_milepost, load_crash_csv, moving_average, LoadOptions,
};

use crate::args::AggregateArgs;
use crate::output::{self, CliError};

pub fn run(args: &AggregateArgs, config_json: &str) -> Result<(), CliError> {
    let input_bytes = std::fs::read(&args.input)?;
    let header = output::run_header(
        "aggregate",
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

    let files = match (args.factor, args.window) {
        (Some(factor), None) => {
            if factor < 1 {
                return Err(output::usage("--factor must be at least 1"));
            }
            let mut rows =
                String::from("route_id,direction,milepost,count,period,partial_tail\n");
            for series in &dataset.series {
                let (agg, partial) = aggregate(series, factor)?;
                for i in 0..agg.len() {
                    let is_partial_tail = partial && i == agg.len() - 1;
                    let _ = writeln!(
                        rows,
                        "{},{},{},{},{},{}",
                        agg.route_id,
                        agg.direction,
                        format_milepost(agg.milepost(i)),
                        agg.counts[i],
                        agg.period_label,
                        u8::from(is_partial_tail)
                    );
                }
            }
            vec![("aggregated.csv".to_string(), rows)]
        }
        (None, Some(window)) => {
            let mut rows =
                String::from("route_id,direction,milepost,count,period,moving_average\n");
            for series in &dataset.series {
                let averaged = moving_average(series, window)?;
                for i in 0..series.len() {
                    let _ = writeln!(
                        rows,
                        "{},{},{},{},{},{}",
                        series.route_id,
                        series.direction,
                        format_milepost(series.milepost(i)),
                        series.counts[i],
                        series.period_label,
                        averaged[i]
                    );
                }
            }
            vec![("moving_average.csv".to_string(), rows)]
        }
        _ => {
            return Err(output::usage(
                "aggregate needs exactly one of --factor or --window",
            ))
        }
    };

    output::commit(&args.out, &header, files)
}
