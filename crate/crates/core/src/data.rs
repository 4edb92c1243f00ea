//! Linearly referenced crash-count data: per-route section series, network
//! datasets with optional covariates, and CSV ingestion/output.
//!
//! A series is one `(route_id, direction, period)` run of uniformly spaced
//! sections. Routes are never concatenated: the circular transform downstream
//! must not wrap one road onto another. Milepost gaps are a hard error unless
//! zero-filling is explicitly requested, since a silent fill would fabricate
//! "no crash" observations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

/// Tolerance (miles) for treating milepost spacing as uniform.
const SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    InvalidRow { row: u64, message: String },
    #[error(
        "route {route} {direction} period {period}: milepost spacing is not uniform near \
         milepost {milepost} (delta {delta}); pass the zero-fill flag to fill whole-section gaps"
    )]
    Spacing {
        route: String,
        direction: String,
        period: String,
        milepost: f64,
        delta: f64,
    },
    #[error("route {route} {direction} period {period}: duplicate milepost {milepost}")]
    DuplicateMilepost {
        route: String,
        direction: String,
        period: String,
        milepost: f64,
    },
    #[error("cannot zero-fill gaps when covariate columns are present")]
    FillWithCovariates,
    #[error("empty input: no data rows")]
    EmptyInput,
    #[error("section series must have at least one count")]
    EmptySeries,
    #[error("section length must be positive (got {0})")]
    NonPositiveSectionLength(f64),
    #[error("aggregation factor must be at least 1")]
    BadFactor,
    #[error("moving average window must be odd (got {0})")]
    EvenWindow(usize),
    #[error("moving average window {window} exceeds series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Ordered crash counts for one route direction over one period, at a fixed
/// section length.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionSeries {
    pub route_id: String,
    pub direction: String,
    pub period_label: String,
    /// Uniform section length in miles.
    pub section_length: f64,
    pub start_milepost: f64,
    pub counts: Vec<u32>,
}

impl SectionSeries {
    pub fn new(
        route_id: impl Into<String>,
        direction: impl Into<String>,
        period_label: impl Into<String>,
        section_length: f64,
        start_milepost: f64,
        counts: Vec<u32>,
    ) -> Result<Self, DataError> {
        if counts.is_empty() {
            return Err(DataError::EmptySeries);
        }
        if !(section_length > 0.0) {
            return Err(DataError::NonPositiveSectionLength(section_length));
        }
        Ok(SectionSeries {
            route_id: route_id.into(),
            direction: direction.into(),
            period_label: period_label.into(),
            section_length,
            start_milepost,
            counts,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Milepost of section `i`, snapped to a nanomile grid so that derived
    /// mileposts survive text round-trips.
    pub fn milepost(&self, i: usize) -> f64 {
        snap(self.start_milepost + i as f64 * self.section_length)
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// A collection of series keyed by `(route_id, direction, period)` plus
/// optional per-section covariate columns aligned to each series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkDataset {
    /// Sorted by (route_id, direction, period_label).
    pub series: Vec<SectionSeries>,
    pub covariate_names: Vec<String>,
    /// `covariate_values[series][covariate][section]`; empty when the dataset
    /// has no covariates.
    pub covariate_values: Vec<Vec<Vec<f64>>>,
}

impl NetworkDataset {
    pub fn has_covariates(&self) -> bool {
        !self.covariate_names.is_empty()
    }

    /// Distinct period labels in sorted order.
    pub fn periods(&self) -> Vec<String> {
        let mut periods: Vec<String> = self
            .series
            .iter()
            .map(|s| s.period_label.clone())
            .collect();
        periods.sort();
        periods.dedup();
        periods
    }

    /// Indices of series with the given period, in dataset order.
    pub fn series_indices_for_period(&self, period: &str) -> Vec<usize> {
        self.series
            .iter()
            .enumerate()
            .filter(|(_, s)| s.period_label == period)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn total_sections(&self) -> usize {
        self.series.iter().map(|s| s.len()).sum()
    }
}

/// Maps the canonical column roles to the header names used in a file.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnMap {
    pub route_id: String,
    pub direction: String,
    pub milepost: String,
    pub count: String,
    pub period: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            route_id: "route_id".into(),
            direction: "direction".into(),
            milepost: "milepost".into(),
            count: "count".into(),
            period: "period".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub schema: ColumnMap,
    /// Fill whole-section milepost gaps with zero counts instead of erroring.
    pub fill_gaps_zero: bool,
    /// Section length assigned to single-row series, where spacing cannot be
    /// inferred.
    pub default_section_length: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            schema: ColumnMap::default(),
            fill_gaps_zero: false,
            default_section_length: 0.1,
        }
    }
}

/// Round to a nanomile grid; keeps derived mileposts and inferred spacings on
/// the decimal values the file intended.
fn snap(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

struct RawRow {
    milepost: f64,
    count: u32,
    covariates: Vec<f64>,
}

/// Load a crash-count CSV into a dataset.
///
/// Required columns (under `options.schema`): route id, direction, milepost,
/// count, period. Every other column is read as a numeric covariate. Rows are
/// grouped by `(route_id, direction, period)` and sorted by milepost; spacing
/// must be uniform within 1e-6 miles, except that whole-section gaps may be
/// zero-filled when `fill_gaps_zero` is set. Lines starting with `#` are
/// treated as comments.
pub fn load_crash_csv(path: &Path, options: &LoadOptions) -> Result<NetworkDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;

    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let schema = &options.schema;
    let idx_route = find(&schema.route_id)?;
    let idx_direction = find(&schema.direction)?;
    let idx_milepost = find(&schema.milepost)?;
    let idx_count = find(&schema.count)?;
    let idx_period = find(&schema.period)?;
    let reserved = [idx_route, idx_direction, idx_milepost, idx_count, idx_period];

    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !reserved.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();
    let covariate_names: Vec<String> = covariate_cols.iter().map(|(_, n)| n.clone()).collect();

    let mut groups: BTreeMap<(String, String, String), Vec<RawRow>> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize| record.get(idx).unwrap_or("").to_string();

        let milepost: f64 = field(idx_milepost).parse().map_err(|_| DataError::InvalidRow {
            row: line,
            message: format!("milepost '{}' is not a number", field(idx_milepost)),
        })?;
        let count = parse_count(&field(idx_count), line)?;
        let covariates = covariate_cols
            .iter()
            .map(|(idx, name)| {
                field(*idx).parse::<f64>().map_err(|_| DataError::InvalidRow {
                    row: line,
                    message: format!("covariate '{}' value '{}' is not numeric", name, field(*idx)),
                })
            })
            .collect::<Result<Vec<f64>, DataError>>()?;

        groups
            .entry((field(idx_route), field(idx_direction), field(idx_period)))
            .or_default()
            .push(RawRow {
                milepost,
                count,
                covariates,
            });
    }
    if groups.is_empty() {
        return Err(DataError::EmptyInput);
    }

    let mut dataset = NetworkDataset {
        covariate_names,
        ..Default::default()
    };
    for ((route, direction, period), mut rows) in groups {
        rows.sort_by(|a, b| a.milepost.total_cmp(&b.milepost));
        let (series, covs) = assemble_series(route, direction, period, rows, options, dataset.covariate_names.len())?;
        dataset.series.push(series);
        dataset.covariate_values.push(covs);
    }
    if dataset.covariate_names.is_empty() {
        dataset.covariate_values.clear();
    }
    Ok(dataset)
}

fn parse_count(text: &str, line: u64) -> Result<u32, DataError> {
    let value: f64 = text.parse().map_err(|_| DataError::InvalidRow {
        row: line,
        message: format!("count '{text}' is not a number"),
    })?;
    if value < 0.0 {
        return Err(DataError::InvalidRow {
            row: line,
            message: format!("count {value} is negative"),
        });
    }
    if value.fract() != 0.0 || value > u32::MAX as f64 {
        return Err(DataError::InvalidRow {
            row: line,
            message: format!("count {value} is not a nonnegative integer"),
        });
    }
    Ok(value as u32)
}

fn assemble_series(
    route: String,
    direction: String,
    period: String,
    rows: Vec<RawRow>,
    options: &LoadOptions,
    n_covariates: usize,
) -> Result<(SectionSeries, Vec<Vec<f64>>), DataError> {
    let spacing_error = |milepost: f64, delta: f64| DataError::Spacing {
        route: route.clone(),
        direction: direction.clone(),
        period: period.clone(),
        milepost,
        delta,
    };

    let section_length = if rows.len() == 1 {
        options.default_section_length
    } else {
        let mut min_delta = f64::INFINITY;
        for pair in rows.windows(2) {
            let delta = pair[1].milepost - pair[0].milepost;
            if delta <= SPACING_TOLERANCE {
                return Err(DataError::DuplicateMilepost {
                    route: route.clone(),
                    direction: direction.clone(),
                    period: period.clone(),
                    milepost: pair[1].milepost,
                });
            }
            min_delta = min_delta.min(delta);
        }
        snap(min_delta)
    };

    let mut counts: Vec<u32> = Vec::with_capacity(rows.len());
    let mut covariates: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); n_covariates];
    fn push_row(counts: &mut Vec<u32>, covariates: &mut [Vec<f64>], row: &RawRow) {
        counts.push(row.count);
        for (k, v) in row.covariates.iter().enumerate() {
            covariates[k].push(*v);
        }
    }

    push_row(&mut counts, &mut covariates, &rows[0]);
    for pair in rows.windows(2) {
        let delta = pair[1].milepost - pair[0].milepost;
        let steps = delta / section_length;
        let k = steps.round();
        if (steps - k).abs() * section_length > SPACING_TOLERANCE || k < 1.0 {
            return Err(spacing_error(pair[1].milepost, delta));
        }
        let k = k as usize;
        if k > 1 {
            if !options.fill_gaps_zero {
                return Err(spacing_error(pair[1].milepost, delta));
            }
            if n_covariates > 0 {
                return Err(DataError::FillWithCovariates);
            }
            counts.extend(std::iter::repeat(0).take(k - 1));
        }
        push_row(&mut counts, &mut covariates, &pair[1]);
    }

    let series = SectionSeries::new(
        route,
        direction,
        period,
        section_length,
        rows[0].milepost,
        counts,
    )?;
    Ok((series, covariates))
}

/// Milepost formatting with at least three decimals; falls back to the
/// shortest round-trip form for values that do not sit on a 3-decimal grid.
pub fn format_milepost(m: f64) -> String {
    let fixed = format!("{m:.3}");
    if fixed.parse::<f64>() == Ok(m) {
        fixed
    } else {
        format!("{m}")
    }
}

/// Write a dataset in the canonical schema (`route_id,direction,milepost,
/// count,period`, then covariates). The inverse of [`load_crash_csv`].
pub fn write_crash_csv(dataset: &NetworkDataset, path: &Path) -> Result<(), DataError> {
    let mut body = String::new();
    body.push_str("route_id,direction,milepost,count,period");
    for name in &dataset.covariate_names {
        let _ = write!(body, ",{name}");
    }
    body.push('\n');
    for (series_idx, series) in dataset.series.iter().enumerate() {
        for i in 0..series.len() {
            let _ = write!(
                body,
                "{},{},{},{},{}",
                series.route_id,
                series.direction,
                format_milepost(series.milepost(i)),
                series.counts[i],
                series.period_label
            );
            if dataset.has_covariates() {
                for k in 0..dataset.covariate_names.len() {
                    let _ = write!(body, ",{}", dataset.covariate_values[series_idx][k][i]);
                }
            }
            body.push('\n');
        }
    }
    std::fs::write(path, body)?;
    Ok(())
}

/// Sum non-overlapping blocks of `factor` sections. The trailing remainder
/// block, if any, is kept as a partial sum; the returned flag says whether
/// one exists. `factor == 1` returns the series unchanged.
pub fn aggregate(series: &SectionSeries, factor: usize) -> Result<(SectionSeries, bool), DataError> {
    if factor < 1 {
        return Err(DataError::BadFactor);
    }
    if factor == 1 {
        return Ok((series.clone(), false));
    }
    let mut counts: Vec<u32> = Vec::with_capacity(series.len().div_ceil(factor));
    for block in series.counts.chunks(factor) {
        counts.push(block.iter().sum());
    }
    let has_partial = series.len() % factor != 0;
    let aggregated = SectionSeries::new(
        series.route_id.clone(),
        series.direction.clone(),
        series.period_label.clone(),
        series.section_length * factor as f64,
        series.start_milepost,
        counts,
    )?;
    Ok((aggregated, has_partial))
}

/// Centered rectangular moving average with circular wrap-around, the
/// simplest fixed-bandwidth kernel smoother. The window must be odd so the
/// mean is centered; sampling the result every `window` sections and
/// multiplying by `window` reproduces [`aggregate`] on block boundaries.
pub fn moving_average(series: &SectionSeries, window: usize) -> Result<Vec<f64>, DataError> {
    if window % 2 == 0 {
        return Err(DataError::EvenWindow(window));
    }
    let n = series.len();
    if window > n {
        return Err(DataError::WindowTooLarge { window, len: n });
    }
    Ok(circular_rectangular_mean(&series.counts_f64(), window, (window - 1) / 2))
}

/// Mean of `window` consecutive values around each position on a circular
/// series, starting `left` positions before it. Supports even windows for
/// block-aligned comparisons.
pub fn circular_rectangular_mean(values: &[f64], window: usize, left: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for offset in 0..window {
                acc += values[(i + n - (left % n) + offset) % n];
            }
            acc / window as f64
        })
        .collect()
}
