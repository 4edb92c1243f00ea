//! The four method-comparison tests over two consecutive periods: segment
//! consistency (SCT), method consistency (MCT), false positive rate against
//! an independent reference (FP), and mean square prediction error (MSPE).
//!
//! Hazardous-section identification takes the top `⌈αN⌉` sections by
//! estimate; ties at the cutoff go to the smaller section index, and that
//! policy is recorded in every report so comparisons stay auditable. SCT,
//! MCT, and FP are rank statistics — any strictly increasing transform of a
//! method's estimates leaves them unchanged — while MSPE is not.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::NetworkDataset;

/// Tie policy string embedded in every report.
pub const TIE_BREAK_POLICY: &str =
    "top ceil(alpha*N) by estimate; ties at the cutoff broken by smaller section index";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("alpha must be strictly between 0 and 1 (got {0})")]
    AlphaOutOfRange(f64),
    #[error("estimates are empty")]
    Empty,
    #[error("misaligned inputs: {left} vs {right} sections")]
    Misaligned { left: usize, right: usize },
    #[error("evaluation needs at least one method")]
    NoMethods,
    #[error("period '{0}' is not present in the dataset")]
    PeriodMissing(String),
    #[error(
        "route {route} {direction}: periods {period_1} and {period_2} do not cover the same \
         sections"
    )]
    SeriesMismatch {
        route: String,
        direction: String,
        period_1: String,
        period_2: String,
    },
}

/// One method's per-section estimates, aligned to a fixed section universe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodEstimates {
    pub method_name: String,
    pub estimates: Vec<f64>,
}

impl MethodEstimates {
    pub fn new(method_name: impl Into<String>, estimates: Vec<f64>) -> Self {
        MethodEstimates {
            method_name: method_name.into(),
            estimates,
        }
    }
}

/// Indices of the `⌈alpha·N⌉` highest-estimate sections, ascending.
///
/// The small subtraction before `ceil` guards against `alpha * N` landing one
/// ulp above an integer and inflating the set by one.
pub fn top_alpha(estimates: &[f64], alpha: f64) -> Result<Vec<usize>, EvalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::AlphaOutOfRange(alpha));
    }
    let n = estimates.len();
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let k = ((alpha * n as f64 - 1e-9).ceil().max(1.0) as usize).min(n);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        estimates[b]
            .total_cmp(&estimates[a])
            .then_with(|| a.cmp(&b))
    });
    let mut top = order[..k].to_vec();
    top.sort_unstable();
    Ok(top)
}

/// Segment consistency: mean next-period count over the sections identified
/// from this period's estimates. Higher is better.
pub fn sct(estimates_p1: &[f64], counts_p2: &[f64], alpha: f64) -> Result<f64, EvalError> {
    check_aligned(estimates_p1.len(), counts_p2.len())?;
    let top = top_alpha(estimates_p1, alpha)?;
    Ok(top.iter().map(|&i| counts_p2[i]).sum::<f64>() / top.len() as f64)
}

/// Method consistency: fraction of period-1 identified sections that the same
/// method identifies again in period 2. Higher is better.
pub fn mct(estimates_p1: &[f64], estimates_p2: &[f64], alpha: f64) -> Result<f64, EvalError> {
    check_aligned(estimates_p1.len(), estimates_p2.len())?;
    let first = top_alpha(estimates_p1, alpha)?;
    let second = top_alpha(estimates_p2, alpha)?;
    Ok(intersection_size(&first, &second) as f64 / first.len() as f64)
}

/// False positive rate: fraction of the method's identified sections that lie
/// outside the reference model's hazardous set. The reference must come from
/// an independent period so it does not favor any evaluated method. Lower is
/// better.
pub fn fp_rate(
    method_p1: &[f64],
    reference_p2: &[f64],
    alpha: f64,
) -> Result<f64, EvalError> {
    check_aligned(method_p1.len(), reference_p2.len())?;
    let identified = top_alpha(method_p1, alpha)?;
    let reference = top_alpha(reference_p2, alpha)?;
    let hits = intersection_size(&identified, &reference);
    Ok((identified.len() - hits) as f64 / identified.len() as f64)
}

/// Mean square prediction error of this period's estimates against next
/// period's counts. Lower is better.
pub fn mspe(estimates_p1: &[f64], counts_p2: &[f64]) -> Result<f64, EvalError> {
    check_aligned(estimates_p1.len(), counts_p2.len())?;
    let n = estimates_p1.len() as f64;
    Ok(estimates_p1
        .iter()
        .zip(counts_p2)
        .map(|(e, c)| (c - e) * (c - e))
        .sum::<f64>()
        / n)
}

fn check_aligned(left: usize, right: usize) -> Result<(), EvalError> {
    if left != right {
        return Err(EvalError::Misaligned { left, right });
    }
    Ok(())
}

/// Sorted-vector intersection size.
fn intersection_size(a: &[usize], b: &[usize]) -> usize {
    let mut count = 0;
    let mut i = 0;
    let mut j = 0;
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

/// A two-period section universe: the same `(route, direction)` series
/// matched across both periods, pooled in dataset order.
#[derive(Debug, Clone)]
pub struct AlignedPeriods {
    pub period_1: String,
    pub period_2: String,
    /// Dataset series indices: (period-1 series, matching period-2 series).
    pub series_pairs: Vec<(usize, usize)>,
    pub counts_p1: Vec<f64>,
    pub counts_p2: Vec<f64>,
}

/// Match every period-1 series with the period-2 series of the same route and
/// direction, requiring identical section coverage. The pooled universe is
/// the concatenation of all matched series in dataset order.
pub fn align_periods(
    dataset: &NetworkDataset,
    period_1: &str,
    period_2: &str,
) -> Result<AlignedPeriods, EvalError> {
    let p1 = dataset.series_indices_for_period(period_1);
    let p2 = dataset.series_indices_for_period(period_2);
    if p1.is_empty() {
        return Err(EvalError::PeriodMissing(period_1.to_string()));
    }
    if p2.is_empty() {
        return Err(EvalError::PeriodMissing(period_2.to_string()));
    }

    let mut series_pairs = Vec::with_capacity(p1.len());
    for &i in &p1 {
        let a = &dataset.series[i];
        let mismatch = || EvalError::SeriesMismatch {
            route: a.route_id.clone(),
            direction: a.direction.clone(),
            period_1: period_1.to_string(),
            period_2: period_2.to_string(),
        };
        let j = *p2
            .iter()
            .find(|&&j| {
                dataset.series[j].route_id == a.route_id
                    && dataset.series[j].direction == a.direction
            })
            .ok_or_else(mismatch)?;
        let b = &dataset.series[j];
        if a.len() != b.len()
            || (a.start_milepost - b.start_milepost).abs() > 1e-9
            || (a.section_length - b.section_length).abs() > 1e-9
        {
            return Err(mismatch());
        }
        series_pairs.push((i, j));
    }

    let counts_p1 = series_pairs
        .iter()
        .flat_map(|&(i, _)| dataset.series[i].counts.iter().map(|&c| c as f64))
        .collect();
    let counts_p2 = series_pairs
        .iter()
        .flat_map(|&(_, j)| dataset.series[j].counts.iter().map(|&c| c as f64))
        .collect();
    Ok(AlignedPeriods {
        period_1: period_1.to_string(),
        period_2: period_2.to_string(),
        series_pairs,
        counts_p1,
        counts_p2,
    })
}

/// One evaluated method: estimates from each of the two periods. The period-2
/// estimates identify the method's own reference hazardous set for FP and its
/// second-period set for MCT.
#[derive(Debug, Clone)]
pub struct MethodPair {
    pub name: String,
    pub estimates_p1: Vec<f64>,
    pub estimates_p2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EvaluationConfig {
    pub alphas: Vec<f64>,
    pub period_1: String,
    pub period_2: String,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            alphas: vec![0.01, 0.025, 0.05, 0.10],
            period_1: String::new(),
            period_2: String::new(),
        }
    }
}

/// The full comparison report: SCT/MCT per alpha and method, FP per alpha,
/// reference, and method, and MSPE per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub period_labels: (String, String),
    pub alphas: Vec<f64>,
    pub methods: Vec<String>,
    pub tie_break: String,
    /// `sct[alpha_idx][method_idx]`
    pub sct: Vec<Vec<f64>>,
    /// `mct[alpha_idx][method_idx]`
    pub mct: Vec<Vec<f64>>,
    /// `fp[alpha_idx][reference_idx][method_idx]`; references are the same
    /// methods, fitted on period 2.
    pub fp: Vec<Vec<Vec<f64>>>,
    /// `mspe[method_idx]`
    pub mspe: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Run all four tests for every method over one ordered period pair.
pub fn evaluate_methods(
    methods: &[MethodPair],
    counts_p2: &[f64],
    config: &EvaluationConfig,
) -> Result<EvaluationReport, EvalError> {
    if methods.is_empty() {
        return Err(EvalError::NoMethods);
    }
    for m in methods {
        check_aligned(m.estimates_p1.len(), counts_p2.len())?;
        check_aligned(m.estimates_p2.len(), counts_p2.len())?;
    }

    let mut warnings = Vec::new();
    if config.period_1 == config.period_2 {
        warnings.push(format!(
            "reference period '{}' equals the evaluation period; FP references are not independent",
            config.period_2
        ));
    }

    let mut sct_rows = Vec::with_capacity(config.alphas.len());
    let mut mct_rows = Vec::with_capacity(config.alphas.len());
    let mut fp_rows = Vec::with_capacity(config.alphas.len());
    for &alpha in &config.alphas {
        let sct_row: Vec<f64> = methods
            .iter()
            .map(|m| sct(&m.estimates_p1, counts_p2, alpha))
            .collect::<Result<_, _>>()?;
        let mct_row: Vec<f64> = methods
            .iter()
            .map(|m| mct(&m.estimates_p1, &m.estimates_p2, alpha))
            .collect::<Result<_, _>>()?;
        let fp_row: Vec<Vec<f64>> = methods
            .iter()
            .map(|reference| {
                methods
                    .iter()
                    .map(|m| fp_rate(&m.estimates_p1, &reference.estimates_p2, alpha))
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<_, _>>()?;
        sct_rows.push(sct_row);
        mct_rows.push(mct_row);
        fp_rows.push(fp_row);
    }
    let mspe_row: Vec<f64> = methods
        .iter()
        .map(|m| mspe(&m.estimates_p1, counts_p2))
        .collect::<Result<_, _>>()?;

    Ok(EvaluationReport {
        period_labels: (config.period_1.clone(), config.period_2.clone()),
        alphas: config.alphas.clone(),
        methods: methods.iter().map(|m| m.name.clone()).collect(),
        tie_break: TIE_BREAK_POLICY.to_string(),
        sct: sct_rows,
        mct: mct_rows,
        fp: fp_rows,
        mspe: mspe_row,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_alpha_ranks_and_sizes() {
        let top = top_alpha(&[5.0, 1.0, 4.0, 2.0, 3.0], 0.4).unwrap();
        assert_eq!(top, vec![0, 2]); // values 5 and 4

        let equal = top_alpha(&[7.0; 10], 0.2).unwrap();
        assert_eq!(equal, vec![0, 1]); // tie-break by index

        let thousand: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(top_alpha(&thousand, 0.01).unwrap().len(), 10);
    }

    #[test]
    fn top_alpha_rejects_bad_alpha() {
        assert!(matches!(top_alpha(&[1.0], 0.0), Err(EvalError::AlphaOutOfRange(_))));
        assert!(matches!(top_alpha(&[1.0], 1.0), Err(EvalError::AlphaOutOfRange(_))));
        assert!(matches!(top_alpha(&[], 0.5), Err(EvalError::Empty)));
    }

    #[test]
    fn sct_hand_cases() {
        // top 3 of 6 by estimate are indices 0,1,2; next-period counts there
        // average to 6
        let estimates = [9.0, 8.0, 7.0, 1.0, 1.0, 1.0];
        let next = [6.0, 8.0, 4.0, 0.0, 0.0, 0.0];
        assert_eq!(sct(&estimates, &next, 0.5).unwrap(), 6.0);
        assert_eq!(sct(&estimates, &[0.0; 6], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn sct_covering_everything_is_the_global_mean() {
        let counts: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let estimates: Vec<f64> = (0..10).map(|i| (10 - i) as f64).collect();
        let value = sct(&estimates, &counts, 0.9999).unwrap();
        assert!((value - 4.5).abs() < 1e-12);
    }

    #[test]
    fn mct_extremes() {
        let a = [5.0, 4.0, 3.0, 2.0, 1.0, 0.5];
        assert_eq!(mct(&a, &a, 0.5).unwrap(), 1.0);
        let reversed = [0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(mct(&a, &reversed, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn mct_symmetric_when_sets_have_equal_size() {
        let p1 = [9.0, 2.0, 7.0, 1.0, 5.0, 3.0, 8.0, 0.0];
        let p2 = [1.0, 8.0, 2.0, 7.0, 3.0, 9.0, 0.0, 5.0];
        for alpha in [0.25, 0.5] {
            assert_eq!(mct(&p1, &p2, alpha).unwrap(), mct(&p2, &p1, alpha).unwrap());
        }
    }

    #[test]
    fn fp_extremes() {
        let method = [9.0, 8.0, 1.0, 1.0];
        let agreeing_reference = [9.0, 8.0, 1.0, 1.0];
        assert_eq!(fp_rate(&method, &agreeing_reference, 0.5).unwrap(), 0.0);
        let disjoint_reference = [1.0, 1.0, 9.0, 8.0];
        assert_eq!(fp_rate(&method, &disjoint_reference, 0.5).unwrap(), 1.0);
        // a method evaluated against itself in the same period is never wrong
        assert_eq!(fp_rate(&method, &method, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn mspe_hand_cases() {
        assert_eq!(mspe(&[2.0, 4.0], &[2.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mspe(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5);
        assert!(matches!(
            mspe(&[1.0], &[1.0, 2.0]),
            Err(EvalError::Misaligned { left: 1, right: 2 })
        ));
    }

    #[test]
    fn rank_statistics_are_monotone_invariant_and_mspe_is_not() {
        let p1: Vec<f64> = vec![3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        let p2: Vec<f64> = vec![2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0, 8.0];
        let counts: Vec<f64> = vec![1.0, 0.0, 3.0, 2.0, 4.0, 9.0, 0.0, 5.0];
        let transform = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| 2.0 * x * x * x + 1.0).collect() };

        for alpha in [0.25, 0.5] {
            assert_eq!(
                sct(&p1, &counts, alpha).unwrap(),
                sct(&transform(&p1), &counts, alpha).unwrap()
            );
            assert_eq!(
                mct(&p1, &p2, alpha).unwrap(),
                mct(&transform(&p1), &transform(&p2), alpha).unwrap()
            );
            assert_eq!(
                fp_rate(&p1, &p2, alpha).unwrap(),
                fp_rate(&transform(&p1), &transform(&p2), alpha).unwrap()
            );
        }
        assert_ne!(mspe(&p1, &counts).unwrap(), mspe(&transform(&p1), &counts).unwrap());
    }

    #[test]
    fn align_periods_matches_series_and_rejects_mismatches() {
        use crate::data::SectionSeries;
        let mut dataset = NetworkDataset::default();
        for (route, period, counts) in [
            ("I64", "2014", vec![1, 2, 3]),
            ("I64", "2015", vec![4, 5, 6]),
            ("I81", "2014", vec![7, 8]),
            ("I81", "2015", vec![9, 10]),
        ] {
            dataset
                .series
                .push(SectionSeries::new(route, "E", period, 0.1, 0.0, counts).unwrap());
        }
        let aligned = align_periods(&dataset, "2014", "2015").unwrap();
        assert_eq!(aligned.counts_p1, vec![1.0, 2.0, 3.0, 7.0, 8.0]);
        assert_eq!(aligned.counts_p2, vec![4.0, 5.0, 6.0, 9.0, 10.0]);

        assert!(matches!(
            align_periods(&dataset, "2014", "2016"),
            Err(EvalError::PeriodMissing(_))
        ));

        dataset
            .series
            .push(SectionSeries::new("I95", "E", "2014", 0.1, 0.0, vec![1]).unwrap());
        assert!(matches!(
            align_periods(&dataset, "2014", "2015"),
            Err(EvalError::SeriesMismatch { .. })
        ));
    }

    #[test]
    fn report_shape_and_overlap_warning() {
        let methods = vec![
            MethodPair {
                name: "count".into(),
                estimates_p1: vec![1.0, 2.0, 3.0, 4.0],
                estimates_p2: vec![1.0, 2.0, 3.0, 4.0],
            },
            MethodPair {
                name: "sma".into(),
                estimates_p1: vec![1.5, 1.5, 3.5, 3.5],
                estimates_p2: vec![1.5, 1.5, 3.5, 3.5],
            },
        ];
        let counts = vec![1.0, 1.0, 4.0, 5.0];
        let config = EvaluationConfig {
            alphas: vec![0.25, 0.5],
            period_1: "2014".into(),
            period_2: "2015".into(),
        };
        let report = evaluate_methods(&methods, &counts, &config).unwrap();
        assert_eq!(report.sct.len(), 2);
        assert_eq!(report.sct[0].len(), 2);
        assert_eq!(report.fp[0].len(), 2);
        assert_eq!(report.fp[0][0].len(), 2);
        assert_eq!(report.mspe.len(), 2);
        assert!(report.warnings.is_empty());

        let overlapping = EvaluationConfig {
            alphas: vec![0.25],
            period_1: "2014".into(),
            period_2: "2014".into(),
        };
        let report = evaluate_methods(&methods, &counts, &overlapping).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }
}
