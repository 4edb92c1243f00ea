//! Ground-truth risk profiles, seeded Poisson sampling, and simulation
//! oracles for validating the estimators against a known truth.
//!
//! Reproducibility contract: draws depend only on `(profile, seed, replicate
//! index)`. Replicate `r` reads from a ChaCha8 stream keyed by the seed with
//! stream id `r`, uniforms take the high 53 bits of each 64-bit word, and
//! Poisson variates use inversion by sequential search below the fixed
//! mean cutoff of 10 and Hörmann's PTRS transformed rejection above it.
//! Changing any of those pieces would invalidate frozen golden values, so
//! they are pinned here rather than delegated to a distributions crate.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::threshold::{continuous_threshold, pure_risk};

/// Fixed mean above which Poisson sampling switches from inversion to PTRS.
const POISSON_INVERSION_CUTOFF: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("profile needs at least one segment")]
    EmptyProfile,
    #[error("segment {index} produces nonpositive risk {value}")]
    NonPositiveRisk { index: usize, value: f64 },
    #[error("segment {index} has zero length")]
    EmptySegment { index: usize },
    #[error("estimates have length {estimates} but the profile has {profile} sections")]
    LengthMismatch { estimates: usize, profile: usize },
    #[error("at least one replicate is required")]
    NoReplicates,
}

/// One building block of a ground-truth risk profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SegmentSpec {
    /// `length` sections of constant risk.
    Constant { length: usize, level: f64 },
    /// Linear interpolation from `from` to `to` across `length` sections.
    LinearRamp { length: usize, from: f64, to: f64 },
    /// `base + amplitude * sin(2π (i + phase) / period)` for `i` in
    /// `0..length`.
    Sinusoid {
        length: usize,
        base: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// A single section that stands out from its surroundings.
    Spike { level: f64 },
}

impl SegmentSpec {
    pub fn length(&self) -> usize {
        match self {
            SegmentSpec::Constant { length, .. }
            | SegmentSpec::LinearRamp { length, .. }
            | SegmentSpec::Sinusoid { length, .. } => *length,
            SegmentSpec::Spike { .. } => 1,
        }
    }

    fn emit(&self, out: &mut Vec<f64>) {
        match *self {
            SegmentSpec::Constant { length, level } => {
                out.extend(std::iter::repeat(level).take(length));
            }
            SegmentSpec::LinearRamp { length, from, to } => {
                if length == 1 {
                    out.push(from);
                } else {
                    let span = (length - 1) as f64;
                    out.extend((0..length).map(|i| from + (to - from) * i as f64 / span));
                }
            }
            SegmentSpec::Sinusoid {
                length,
                base,
                amplitude,
                period,
                phase,
            } => {
                out.extend((0..length).map(|i| {
                    base + amplitude
                        * (2.0 * std::f64::consts::PI * (i as f64 + phase) / period).sin()
                }));
            }
            SegmentSpec::Spike { level } => out.push(level),
        }
    }
}

/// A strictly positive per-section risk vector with the segments that built it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub lambda: Vec<f64>,
    pub segments: Vec<SegmentSpec>,
}

impl RiskProfile {
    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Index of the single highest-risk section.
    pub fn spike_index(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.lambda.iter().enumerate() {
            if v > self.lambda[best] {
                best = i;
            }
        }
        best
    }

    /// Section ranges covered by each segment, in order.
    pub fn segment_ranges(&self) -> Vec<(std::ops::Range<usize>, &SegmentSpec)> {
        let mut ranges = Vec::with_capacity(self.segments.len());
        let mut start = 0;
        for seg in &self.segments {
            let end = start + seg.length();
            ranges.push((start..end, seg));
            start = end;
        }
        ranges
    }
}

/// Concatenate `segments` into a profile, rejecting nonpositive risk.
pub fn build_profile(segments: &[SegmentSpec]) -> Result<RiskProfile, SynthError> {
    if segments.is_empty() {
        return Err(SynthError::EmptyProfile);
    }
    let mut lambda = Vec::new();
    for (index, seg) in segments.iter().enumerate() {
        if seg.length() == 0 {
            return Err(SynthError::EmptySegment { index });
        }
        let before = lambda.len();
        seg.emit(&mut lambda);
        if let Some(&bad) = lambda[before..].iter().find(|&&v| v <= 0.0) {
            return Err(SynthError::NonPositiveRisk { index, value: bad });
        }
    }
    Ok(RiskProfile {
        lambda,
        segments: segments.to_vec(),
    })
}

/// Canonical 1024-section test profile: two long low-risk rural stretches of
/// constant 0.2 around an urban area where the risk oscillates between 1 and
/// 6, plus one isolated section of risk 25 inside the urban area whose
/// neighbors sit at the oscillation minimum.
pub fn figure2_preset() -> RiskProfile {
    build_profile(&[
        SegmentSpec::Constant {
            length: 400,
            level: 0.2,
        },
        SegmentSpec::Sinusoid {
            length: 191,
            base: 3.5,
            amplitude: 2.5,
            period: 40.0,
            phase: 0.0,
        },
        SegmentSpec::Spike { level: 25.0 },
        SegmentSpec::Sinusoid {
            length: 113,
            base: 3.5,
            amplitude: 2.5,
            period: 40.0,
            phase: 30.0,
        },
        SegmentSpec::Constant {
            length: 319,
            level: 0.2,
        },
    ])
    .expect("preset is valid")
}

/// 256-section profile with risk between 2 and 10, used by the PURE
/// unbiasedness experiment.
pub fn pure_check_preset() -> RiskProfile {
    build_profile(&[SegmentSpec::Sinusoid {
        length: 256,
        base: 6.0,
        amplitude: 4.0,
        period: 64.0,
        phase: 0.0,
    }])
    .expect("preset is valid")
}

/// Look a preset up by name.
pub fn preset(name: &str) -> Option<RiskProfile> {
    match name {
        "figure2" => Some(figure2_preset()),
        "pure-check" => Some(pure_check_preset()),
        _ => None,
    }
}

/// Poisson draws for every section and replicate, reproducible from
/// `(profile, seed)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateBatch {
    pub seed: u64,
    pub replicates: usize,
    /// `draws[r][i]` is replicate `r`'s count at section `i`.
    pub draws: Vec<Vec<u32>>,
}

/// The RNG stream for one replicate: ChaCha8 keyed by `seed`, stream `r`.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// A uniform in the open interval (0, 1) built from the high 53 bits.
#[inline]
fn uniform_open(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One Poisson draw. Inversion by sequential search below the cutoff mean,
/// Hörmann's PTRS transformed rejection above it.
pub fn sample_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    debug_assert!(lambda > 0.0);
    if lambda < POISSON_INVERSION_CUTOFF {
        poisson_inversion(rng, lambda)
    } else {
        poisson_ptrs(rng, lambda)
    }
}

fn poisson_inversion(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    let u = uniform_open(rng);
    let mut k = 0u32;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    // the tail underflows long before k reaches the cap; the cap only guards
    // against a stalled accumulation for u pathologically close to 1
    while u > cdf && k < 500 {
        k += 1;
        p *= lambda / k as f64;
        cdf += p;
    }
    k
}

/// Transformed rejection with squeeze (Hörmann 1993), valid for mean >= 10.
fn poisson_ptrs(rng: &mut ChaCha8Rng, lambda: f64) -> u32 {
    let slam = lambda.sqrt();
    let log_lambda = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = uniform_open(rng) - 0.5;
        let v = uniform_open(rng);
        let u_shifted = 0.5 - u.abs();
        let k = ((2.0 * a / u_shifted + b) * u + lambda + 0.43).floor();
        if u_shifted >= 0.07 && v <= v_r {
            return k as u32;
        }
        if k < 0.0 || (u_shifted < 0.013 && v > u_shifted) {
            continue;
        }
        let lhs = (v * inv_alpha / (a / (u_shifted * u_shifted) + b)).ln();
        let rhs = k * log_lambda - lambda - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u32;
        }
    }
}

/// Draw `replicates` independent count vectors from the profile. Replicates
/// are generated in parallel on independent streams, so the result is
/// identical however many threads run.
pub fn sample_counts(profile: &RiskProfile, seed: u64, replicates: usize) -> ReplicateBatch {
    let draws: Vec<Vec<u32>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            profile
                .lambda
                .iter()
                .map(|&lam| sample_poisson(&mut rng, lam))
                .collect()
        })
        .collect();
    ReplicateBatch {
        seed,
        replicates,
        draws,
    }
}

/// Mean squared error of `estimates` against the profile's true risk.
pub fn mse_vs_truth(estimates: &[f64], profile: &RiskProfile) -> Result<f64, SynthError> {
    if estimates.len() != profile.len() {
        return Err(SynthError::LengthMismatch {
            estimates: estimates.len(),
            profile: profile.len(),
        });
    }
    let n = estimates.len() as f64;
    Ok(estimates
        .iter()
        .zip(&profile.lambda)
        .map(|(e, l)| (e - l) * (e - l))
        .sum::<f64>()
        / n)
}

/// One row of the PURE unbiasedness table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureUnbiasednessRow {
    pub threshold: f64,
    pub mean_pure: f64,
    pub mean_true_mse: f64,
    /// Standard errors are undefined for a single replicate.
    pub se_pure: Option<f64>,
    pub se_mse: Option<f64>,
}

impl PureUnbiasednessRow {
    /// `sqrt(se_pure² + se_mse²)`, the scale against which the difference of
    /// means is judged.
    pub fn combined_se(&self) -> Option<f64> {
        match (self.se_pure, self.se_mse) {
            (Some(a), Some(b)) => Some((a * a + b * b).sqrt()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PureUnbiasednessTable {
    pub seed: u64,
    pub replicates: usize,
    pub rows: Vec<PureUnbiasednessRow>,
}

/// Default 10-point threshold grid for the unbiasedness experiment: 0 up to
/// `sqrt(2 max λ) * sqrt(8 ln n)`, mirroring the selection grid's upper bound
/// at the level-1 scale.
pub fn default_unbiasedness_grid(profile: &RiskProfile, points: usize) -> Vec<f64> {
    let n = profile.len().max(2) as f64;
    let lam_max = profile.lambda.iter().fold(0.0f64, |a, &b| a.max(b));
    let upper = (2.0 * lam_max).sqrt() * (8.0 * n.ln()).sqrt();
    crate::threshold::threshold_grid(upper, points.max(2))
}

/// Compare the mean of PURE with the mean of the true squared error of the
/// thresholded level-1 differences, over Poisson replicates from `profile`.
///
/// For each replicate the level-1 circular sums `s_i = y_i + y_{i+1}` and
/// differences `d_i = y_i - y_{i+1}` are formed; the true error reference is
/// `Σ (φ(d_i) - dλ_i)²` with `dλ` the level-1 differences of the profile
/// itself. If PURE is unbiased the two means agree up to Monte Carlo noise.
pub fn pure_unbiasedness_experiment(
    profile: &RiskProfile,
    th_grid: &[f64],
    seed: u64,
    replicates: usize,
) -> Result<PureUnbiasednessTable, SynthError> {
    if replicates == 0 {
        return Err(SynthError::NoReplicates);
    }
    let n = profile.len();
    let lambda = &profile.lambda;
    let d_lambda: Vec<f64> = (0..n).map(|i| lambda[i] - lambda[(i + 1) % n]).collect();

    // per_replicate[r] = (pure values per threshold, mse values per threshold)
    let per_replicate: Vec<(Vec<f64>, Vec<f64>)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let y: Vec<f64> = lambda
                .iter()
                .map(|&lam| sample_poisson(&mut rng, lam) as f64)
                .collect();
            let s: Vec<f64> = (0..n).map(|i| y[i] + y[(i + 1) % n]).collect();
            let d: Vec<f64> = (0..n).map(|i| y[i] - y[(i + 1) % n]).collect();
            let pure: Vec<f64> = th_grid
                .iter()
                .map(|&th| pure_risk(&s, &d, th).expect("equal lengths"))
                .collect();
            let mse: Vec<f64> = th_grid
                .iter()
                .map(|&th| {
                    d.iter()
                        .zip(&d_lambda)
                        .map(|(&di, &dl)| {
                            let e = continuous_threshold(di, th) - dl;
                            e * e
                        })
                        .sum()
                })
                .collect();
            (pure, mse)
        })
        .collect();

    let rows = th_grid
        .iter()
        .enumerate()
        .map(|(k, &th)| {
            let pures: Vec<f64> = per_replicate.iter().map(|(p, _)| p[k]).collect();
            let mses: Vec<f64> = per_replicate.iter().map(|(_, m)| m[k]).collect();
            let (mean_pure, se_pure) = mean_and_se(&pures);
            let (mean_true_mse, se_mse) = mean_and_se(&mses);
            PureUnbiasednessRow {
                threshold: th,
                mean_pure,
                mean_true_mse,
                se_pure,
                se_mse,
            }
        })
        .collect();

    Ok(PureUnbiasednessTable {
        seed,
        replicates,
        rows,
    })
}

fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}
