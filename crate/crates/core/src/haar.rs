//! Circular, undecimated, unnormalized Haar decomposition and reconstruction.
//!
//! At level 1 every section is paired with its circular right neighbor:
//! `s_i = y_i + y_{i+1}` and `d_i = y_i - y_{i+1}`. Coarser levels repeat the
//! pairing on the previous level's sums with a stride that doubles each time,
//! so level `l` sums cover `2^l` consecutive sections at every position (no
//! decimation). Reconstruction inverts the recursion one level at a time,
//! averaging the two half-resolution estimates each position participates in,
//! which is why thresholded (non-invertible) differences still yield a
//! mass-preserving estimate.
//!
//! The transform is circular: the last section pairs with the first. Callers
//! are expected to decompose each physical route separately so the wrap never
//! joins unrelated roads.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HaarError {
    #[error("series of length {0} has no decomposable pair; need at least 2 sections")]
    TooShort(usize),
    #[error("requested {requested} levels but a series of length {n} supports at most {max}")]
    TooManyLevels {
        requested: usize,
        n: usize,
        max: usize,
    },
    #[error("levels must be at least 1")]
    ZeroLevels,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Per-level sums and differences of a series, finest level first.
///
/// `sums(0)` holds the pairwise neighbor sums, `sums(levels - 1)` the
/// coarsest aggregation; likewise for `diffs`. Every column has the full
/// series length because the transform is undecimated.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiresDecomposition {
    n: usize,
    levels: usize,
    sums: Vec<Vec<f64>>,
    diffs: Vec<Vec<f64>>,
}

impl MultiresDecomposition {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Sums at `level` (0-based; level 0 pairs adjacent sections).
    pub fn sums(&self, level: usize) -> &[f64] {
        &self.sums[level]
    }

    /// Differences at `level` (0-based).
    pub fn diffs(&self, level: usize) -> &[f64] {
        &self.diffs[level]
    }

    /// The coarsest sum column, the starting point for reconstruction.
    pub fn coarsest_sums(&self) -> &[f64] {
        self.sums.last().expect("decomposition has at least one level")
    }

    pub fn all_diffs(&self) -> &[Vec<f64>] {
        &self.diffs
    }
}

/// Maximum decomposition depth for a series of `n` sections: floor(log2 n).
pub fn max_levels(n: usize) -> Result<usize, HaarError> {
    if n < 2 {
        return Err(HaarError::TooShort(n));
    }
    Ok(n.ilog2() as usize)
}

/// Rotate `v` circularly by `k` positions; positive `k` rotates right,
/// negative rotates left, zero is the identity.
pub fn circular_shift(v: &[f64], k: isize) -> Vec<f64> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let n_i = n as isize;
    (0..n_i)
        .map(|i| v[(i - k).rem_euclid(n_i) as usize])
        .collect()
}

/// Full undecimated decomposition of `counts` down to `levels` levels.
///
/// Level `l` (0-based) pairs position `i` with position `(i + 2^l) mod n` of
/// the previous level's sums.
pub fn decompose(counts: &[f64], levels: usize) -> Result<MultiresDecomposition, HaarError> {
    let n = counts.len();
    let max = max_levels(n)?;
    if levels == 0 {
        return Err(HaarError::ZeroLevels);
    }
    if levels > max {
        return Err(HaarError::TooManyLevels {
            requested: levels,
            n,
            max,
        });
    }

    let mut sums: Vec<Vec<f64>> = Vec::with_capacity(levels);
    let mut diffs: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for level in 0..levels {
        let stride = 1usize << level;
        let prev: &[f64] = if level == 0 { counts } else { &sums[level - 1] };
        let mut s = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 0..n {
            let j = (i + stride) % n;
            s[i] = prev[i] + prev[j];
            d[i] = prev[i] - prev[j];
        }
        sums.push(s);
        diffs.push(d);
    }
    Ok(MultiresDecomposition {
        n,
        levels,
        sums,
        diffs,
    })
}

/// Invert the decomposition from the coarsest sums and (possibly thresholded)
/// per-level differences.
///
/// Each step halves the aggregation length: position `i` averages the pair
/// estimate `(R_i + D_i)` with the complementary estimate from position
/// `(i - 2^l) mod n`, hence the division by four. When `clamp` is set,
/// negatives are zeroed after every step except the first (coarsest) one.
pub fn reconstruct(
    coarse_sums: &[f64],
    t_diffs: &[Vec<f64>],
    clamp: bool,
) -> Result<Vec<f64>, HaarError> {
    let levels = t_diffs.len();
    if levels == 0 {
        return Err(HaarError::ZeroLevels);
    }
    let n = coarse_sums.len();
    if n == 0 {
        return Err(HaarError::TooShort(0));
    }
    for (level, column) in t_diffs.iter().enumerate() {
        if column.len() != n {
            return Err(HaarError::DimensionMismatch(format!(
                "difference column {} has length {} but the series has {} sections",
                level + 1,
                column.len(),
                n
            )));
        }
    }
    if 1usize << (levels - 1) >= n {
        return Err(HaarError::DimensionMismatch(format!(
            "{} difference levels exceed what {} sections support",
            levels, n
        )));
    }

    let mut risk = refine_step(coarse_sums, &t_diffs[levels - 1], 1usize << (levels - 1));
    for level in (0..levels - 1).rev() {
        risk = refine_step(&risk, &t_diffs[level], 1usize << level);
        if clamp {
            for v in &mut risk {
                *v = v.max(0.0);
            }
        }
    }
    Ok(risk)
}

#[inline]
fn refine_step(risk: &[f64], t_diff: &[f64], stride: usize) -> Vec<f64> {
    let n = risk.len();
    (0..n)
        .map(|i| {
            let j = (i + n - stride) % n;
            ((risk[i] + t_diff[i]) + (risk[j] - t_diff[j])) / 4.0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn as_f64(v: &[i64]) -> Vec<f64> {
        v.iter().map(|&x| x as f64).collect()
    }

    #[test]
    fn max_levels_matches_floor_log2() {
        assert_eq!(max_levels(2).unwrap(), 1);
        assert_eq!(max_levels(1000).unwrap(), 9);
        assert_eq!(max_levels(1023).unwrap(), 9);
        assert_eq!(max_levels(1024).unwrap(), 10);
        assert!(matches!(max_levels(1), Err(HaarError::TooShort(1))));
        assert!(matches!(max_levels(0), Err(HaarError::TooShort(0))));
    }

    #[test]
    fn circular_shift_directions() {
        assert_eq!(circular_shift(&[1.0, 2.0, 3.0, 4.0], -1), vec![2.0, 3.0, 4.0, 1.0]);
        assert_eq!(circular_shift(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 4.0, 1.0, 2.0]);
        assert_eq!(circular_shift(&[1.0, 2.0, 3.0, 4.0], 0), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(circular_shift(&[1.0, 2.0], 5), vec![2.0, 1.0]);
    }

    #[test]
    fn decompose_hand_case() {
        let dec = decompose(&[1.0, 3.0, 2.0, 0.0], 2).unwrap();
        assert_eq!(dec.sums(0), &[4.0, 5.0, 2.0, 1.0]);
        assert_eq!(dec.diffs(0), &[-2.0, 1.0, 2.0, -1.0]);
        assert_eq!(dec.sums(1), &[6.0, 6.0, 6.0, 6.0]);
        assert_eq!(dec.diffs(1), &[2.0, 4.0, -2.0, -4.0]);
    }

    #[test]
    fn decompose_single_pair() {
        let dec = decompose(&[5.0, 1.0], 1).unwrap();
        assert_eq!(dec.sums(0), &[6.0, 6.0]);
        assert_eq!(dec.diffs(0), &[4.0, -4.0]);
    }

    #[test]
    fn constant_input_has_zero_diffs() {
        let dec = decompose(&[3.0; 17], 4).unwrap();
        for level in 0..4 {
            assert!(dec.diffs(level).iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn sums_total_doubles_per_level() {
        let counts = as_f64(&[4, 0, 7, 2, 9, 1, 1, 3, 0, 5, 2]);
        let total: f64 = counts.iter().sum();
        let dec = decompose(&counts, 3).unwrap();
        for level in 0..3 {
            let col_total: f64 = dec.sums(level).iter().sum();
            assert!((col_total - total * (1u64 << (level + 1)) as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn too_many_levels_rejected() {
        assert!(matches!(
            decompose(&[1.0, 2.0, 3.0], 2),
            Err(HaarError::TooManyLevels { requested: 2, n: 3, max: 1 })
        ));
    }

    #[test]
    fn reconstruct_identity_on_untouched_diffs() {
        let counts = as_f64(&[1, 3, 2, 0]);
        let dec = decompose(&counts, 2).unwrap();
        let out = reconstruct(dec.coarsest_sums(), dec.all_diffs(), true).unwrap();
        for (a, b) in out.iter().zip(&counts) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn reconstruct_zero_diffs_gives_global_mean() {
        let counts = as_f64(&[1, 3, 2, 0]);
        let dec = decompose(&counts, 2).unwrap();
        let zeros = vec![vec![0.0; 4]; 2];
        let out = reconstruct(dec.coarsest_sums(), &zeros, true).unwrap();
        assert_eq!(out, vec![1.5, 1.5, 1.5, 1.5]);
    }

    #[test]
    fn reconstruct_dimension_mismatch() {
        let diffs = vec![vec![0.0; 3]];
        assert!(matches!(
            reconstruct(&[1.0, 2.0, 3.0, 4.0], &diffs, true),
            Err(HaarError::DimensionMismatch(_))
        ));
    }

    proptest! {
        #[test]
        fn perfect_reconstruction(
            counts in proptest::collection::vec(0u32..50, 2..300),
        ) {
            let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let levels = max_levels(counts.len()).unwrap();
            let dec = decompose(&counts, levels).unwrap();
            let out = reconstruct(dec.coarsest_sums(), dec.all_diffs(), true).unwrap();
            for (a, b) in out.iter().zip(&counts) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn mass_conserved_without_clamp(
            counts in proptest::collection::vec(0u32..50, 4..200),
            knock in proptest::collection::vec(0.0f64..1.0, 16),
        ) {
            let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let levels = max_levels(counts.len()).unwrap();
            let dec = decompose(&counts, levels).unwrap();
            // zero out an arbitrary subset of differences, scale others
            let t_diffs: Vec<Vec<f64>> = (0..levels)
                .map(|l| {
                    dec.diffs(l)
                        .iter()
                        .enumerate()
                        .map(|(i, &d)| d * knock[(l + i) % knock.len()])
                        .collect()
                })
                .collect();
            let out = reconstruct(dec.coarsest_sums(), &t_diffs, false).unwrap();
            let total_in: f64 = counts.iter().sum();
            let total_out: f64 = out.iter().sum();
            let tol = 1e-6 * total_in.max(1.0);
            prop_assert!((total_in - total_out).abs() <= tol);
        }

        #[test]
        fn clamp_never_loses_mass(
            counts in proptest::collection::vec(0u32..50, 4..200),
        ) {
            let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let levels = max_levels(counts.len()).unwrap();
            let dec = decompose(&counts, levels).unwrap();
            let zeros: Vec<Vec<f64>> = (0..levels).map(|_| vec![0.0; counts.len()]).collect();
            let out = reconstruct(dec.coarsest_sums(), &zeros, true).unwrap();
            let total_in: f64 = counts.iter().sum();
            let total_out: f64 = out.iter().sum();
            prop_assert!(out.iter().all(|&v| v >= 0.0));
            prop_assert!(total_out >= total_in - 1e-6 * total_in.max(1.0));
        }

        #[test]
        fn decompose_is_shift_equivariant(
            counts in proptest::collection::vec(0u32..50, 4..128),
            k in -64isize..64,
        ) {
            let counts: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
            let levels = max_levels(counts.len()).unwrap();
            let shifted = circular_shift(&counts, k);
            let dec = decompose(&counts, levels).unwrap();
            let dec_shifted = decompose(&shifted, levels).unwrap();
            for level in 0..levels {
                prop_assert_eq!(&circular_shift(dec.sums(level), k), dec_shifted.sums(level));
                prop_assert_eq!(&circular_shift(dec.diffs(level), k), dec_shifted.diffs(level));
            }
        }
    }
}
