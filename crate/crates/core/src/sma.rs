//! The end-to-end estimator: decompose a series, pick a PURE-optimal
//! threshold per level, shrink the differences, reconstruct, and read off the
//! effective smoothing bandwidth at every section.
//!
//! A section's bandwidth is the widest dyadic aggregation it was merged into:
//! `section_length * 2^k`, where `k` counts the consecutive finest levels at
//! which both thresholded differences feeding the section are zero. Sections
//! in flat low-count stretches end up with large bandwidths (heavy
//! averaging); sections next to genuine risk changes keep small ones.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{NetworkDataset, SectionSeries};
use crate::haar::{decompose, max_levels, reconstruct, HaarError};
use crate::threshold::{
    apply_threshold, optimal_threshold, ThresholdError, ThresholdKind, ThresholdSet,
    DEFAULT_GRID_SIZE,
};

#[derive(Debug, Error)]
pub enum SmaError {
    #[error(transparent)]
    Haar(#[from] HaarError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
}

/// Pipeline knobs. Defaults reproduce the standard estimator; `clamp` exists
/// only so tests can check exact mass conservation, which the clamped
/// estimator guarantees only as an inequality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SmaOptions {
    /// Decomposition depth; `None` means the maximum for the series length.
    pub levels: Option<usize>,
    pub grid_size: usize,
    pub clamp: bool,
    /// Retain the per-level (threshold, PURE) profiles for diagnostics.
    pub keep_pure_profiles: bool,
}

impl Default for SmaOptions {
    fn default() -> Self {
        SmaOptions {
            levels: None,
            grid_size: DEFAULT_GRID_SIZE,
            clamp: true,
            keep_pure_profiles: false,
        }
    }
}

/// Estimated expected crash count per section, with the smoothing bandwidth
/// actually applied at each section and the thresholds that produced it.
#[derive(Debug, Clone)]
pub struct RiskEstimate {
    pub estimates: Vec<f64>,
    pub bandwidth_miles: Vec<f64>,
    pub thresholds: ThresholdSet,
    /// The input series this estimate belongs to.
    pub series: SectionSeries,
}

impl RiskEstimate {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn total_estimated(&self) -> f64 {
        self.estimates.iter().sum()
    }
}

/// Run the full pipeline on one series.
///
/// A single-section series cannot be decomposed; it degrades to the count
/// itself at the native bandwidth so batch runs over heterogeneous networks
/// stay alive.
pub fn sma_estimate(series: &SectionSeries, options: &SmaOptions) -> Result<RiskEstimate, SmaError> {
    let n = series.len();
    if n == 1 {
        log::warn!(
            "route {} {} period {}: single-section series, returning the raw count",
            series.route_id,
            series.direction,
            series.period_label
        );
        return Ok(RiskEstimate {
            estimates: vec![series.counts[0] as f64],
            bandwidth_miles: vec![series.section_length],
            thresholds: ThresholdSet {
                per_level_threshold: Vec::new(),
                grid_size: options.grid_size,
                pure_profiles: None,
            },
            series: series.clone(),
        });
    }

    let counts = series.counts_f64();
    let levels = match options.levels {
        Some(levels) => levels,
        None => max_levels(n)?,
    };
    let decomposition = decompose(&counts, levels)?;

    let mut per_level_threshold = Vec::with_capacity(levels);
    let mut profiles = Vec::with_capacity(levels);
    let mut t_diffs: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for level in 0..levels {
        let (th, profile) = optimal_threshold(
            decomposition.sums(level),
            decomposition.diffs(level),
            options.grid_size,
        )?;
        per_level_threshold.push(th);
        if options.keep_pure_profiles {
            profiles.push(profile);
        }
        t_diffs.push(
            decomposition
                .diffs(level)
                .iter()
                .map(|&d| apply_threshold(d, th, ThresholdKind::Continuous))
                .collect(),
        );
    }

    let estimates = reconstruct(decomposition.coarsest_sums(), &t_diffs, options.clamp)?;
    let bandwidth_miles = bandwidth_map(&t_diffs, series.section_length);

    Ok(RiskEstimate {
        estimates,
        bandwidth_miles,
        thresholds: ThresholdSet {
            per_level_threshold,
            grid_size: options.grid_size,
            pure_profiles: options.keep_pure_profiles.then_some(profiles),
        },
        series: series.clone(),
    })
}

/// Estimate every series of a dataset, in parallel. Series are independent,
/// so the result is identical however many threads run; output order follows
/// the dataset's series order.
pub fn estimate_network(
    dataset: &NetworkDataset,
    options: &SmaOptions,
) -> Result<Vec<RiskEstimate>, SmaError> {
    dataset
        .series
        .par_iter()
        .map(|series| sma_estimate(series, options))
        .collect()
}

/// Effective smoothing bandwidth per section from the thresholded
/// differences.
///
/// Section `i` is merged through level `l` when both differences that feed it
/// during reconstruction — positions `i` and `(i - 2^l) mod n` — were zeroed.
/// `k_i` is the number of consecutive merged levels starting at the finest,
/// and the bandwidth is `section_length * 2^{k_i}`.
pub fn bandwidth_map(t_diffs: &[Vec<f64>], section_length: f64) -> Vec<f64> {
    if t_diffs.is_empty() {
        return Vec::new();
    }
    let n = t_diffs[0].len();
    (0..n)
        .map(|i| {
            let mut merged_levels = 0usize;
            for (level, column) in t_diffs.iter().enumerate() {
                let stride = (1usize << level) % n;
                let partner = (i + n - stride) % n;
                if column[i] == 0.0 && column[partner] == 0.0 {
                    merged_levels = level + 1;
                } else {
                    break;
                }
            }
            section_length * (1u64 << merged_levels) as f64
        })
        .collect()
}

/// Pooled distribution of bandwidths over all sections of all estimates:
/// `(bandwidth_miles, proportion)` rows sorted by bandwidth, proportions
/// summing to one.
pub fn bandwidth_histogram(estimates: &[RiskEstimate]) -> Vec<(f64, f64)> {
    let mut bandwidths: Vec<f64> = estimates
        .iter()
        .flat_map(|e| e.bandwidth_miles.iter().copied())
        .collect();
    if bandwidths.is_empty() {
        return Vec::new();
    }
    bandwidths.sort_by(f64::total_cmp);
    let total = bandwidths.len() as f64;
    let mut histogram: Vec<(f64, f64)> = Vec::new();
    for bw in bandwidths {
        match histogram.last_mut() {
            Some((value, count)) if *value == bw => *count += 1.0,
            _ => histogram.push((bw, 1.0)),
        }
    }
    for (_, count) in &mut histogram {
        *count /= total;
    }
    histogram
}
