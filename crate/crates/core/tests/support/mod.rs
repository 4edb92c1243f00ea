//! Shared helpers for the integration test targets: the independent
//! whole-vector reference implementation of the estimator, and a tiny
//! deterministic generator for test cases.

#![allow(dead_code)]

/// Deliberately literal reference implementation of the estimation pipeline,
/// written in whole-vector style with its own shift, linspace, thresholding,
/// PURE, and reconstruction code. It shares nothing with the library; parity
/// is checked on raw f64 bit patterns.
pub mod reference {
    /// Circular shift via an explicit index vector; positive sizes rotate
    /// right, nonpositive rotate left.
    pub fn shift(x: &[f64], shift_size: isize) -> Vec<f64> {
        let n = x.len();
        let id: Vec<usize> = (0..n).collect();
        let id = if shift_size > 0 {
            let k = shift_size as usize;
            let mut out = Vec::with_capacity(n);
            out.extend_from_slice(&id[n - k..]);
            out.extend_from_slice(&id[..n - k]);
            out
        } else {
            let k = (-shift_size) as usize;
            let mut out = Vec::with_capacity(n);
            out.extend_from_slice(&id[k..]);
            out.extend_from_slice(&id[..k]);
            out
        };
        id.into_iter().map(|i| x[i]).collect()
    }

    pub fn calculate_sums_differences(
        crash_counts: &[f64],
        levels: usize,
    ) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = crash_counts.len();
        let mut sums: Vec<Vec<f64>> = Vec::with_capacity(levels);
        let mut differences: Vec<Vec<f64>> = Vec::with_capacity(levels);
        let shifted = shift(crash_counts, -1);
        sums.push((0..n).map(|i| crash_counts[i] + shifted[i]).collect());
        differences.push((0..n).map(|i| crash_counts[i] - shifted[i]).collect());
        for level in 2..=levels {
            let prev = sums[level - 2].clone();
            let shifted = shift(&prev, -(1isize << (level - 1)));
            sums.push((0..n).map(|i| prev[i] + shifted[i]).collect());
            differences.push((0..n).map(|i| prev[i] - shifted[i]).collect());
        }
        (sums, differences)
    }

    fn sign(x: f64) -> f64 {
        if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// `sign(d) .* max(abs(d) .* (1 - (th ./ abs(d)).^2), 0)`, with max
    /// treating NaN as missing so the 0/0 case collapses to zero.
    pub fn threshold(d: &[f64], th: f64) -> Vec<f64> {
        d.iter()
            .map(|&di| {
                let magnitude = di.abs();
                sign(di) * f64::max(magnitude * (1.0 - (th / magnitude).powi(2)), 0.0)
            })
            .collect()
    }

    pub fn pure(s: &[f64], d: &[f64], th: f64) -> f64 {
        let t1 = threshold(d, th);
        let d_minus: Vec<f64> = d.iter().map(|&x| x - 1.0).collect();
        let d_plus: Vec<f64> = d.iter().map(|&x| x + 1.0).collect();
        let t2 = threshold(&d_minus, th);
        let t3 = threshold(&d_plus, th);
        let mut total = 0.0;
        for i in 0..s.len() {
            let f1 = t1[i] - d[i];
            let f2 = t2[i] - d_minus[i];
            let f3 = t3[i] - d_plus[i];
            total +=
                s[i] + f1 * f1 + (2.0 * d[i]) * f1 - (s[i] + d[i]) * f2 + (s[i] - d[i]) * f3;
        }
        total
    }

    /// Evenly spaced grid with pinned endpoints.
    fn linspace(from: f64, to: f64, points: usize) -> Vec<f64> {
        let mut grid: Vec<f64> = (0..points)
            .map(|k| from + (k as f64 * (to - from)) / (points - 1) as f64)
            .collect();
        grid[0] = from;
        grid[points - 1] = to;
        grid
    }

    pub fn determine_threshold(s: &[f64], d: &[f64]) -> f64 {
        let n = s.len();
        let num_of_test_thresholds = 40;
        let max_sqrt_s = s
            .iter()
            .map(|&v| v.sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        let grid = linspace(
            0.0,
            max_sqrt_s * (8.0 * (n as f64).ln()).sqrt(),
            num_of_test_thresholds,
        );
        let mut best = 0;
        let mut best_value = f64::INFINITY;
        for (i, &th) in grid.iter().enumerate() {
            let value = pure(s, d, th);
            if value < best_value {
                best_value = value;
                best = i;
            }
        }
        grid[best]
    }

    pub fn threshold_differences(sums: &[Vec<f64>], differences: &[Vec<f64>]) -> Vec<Vec<f64>> {
        sums.iter()
            .zip(differences)
            .map(|(s, d)| threshold(d, determine_threshold(s, d)))
            .collect()
    }

    pub fn estimate_crash_risk(sums: &[Vec<f64>], t_differences: &[Vec<f64>]) -> Vec<f64> {
        let levels = t_differences.len();
        let n = sums[0].len();
        let coarsest = &sums[levels - 1];
        let finest_td = &t_differences[levels - 1];
        let residual: Vec<f64> = (0..n).map(|i| coarsest[i] - finest_td[i]).collect();
        let shifted = shift(&residual, 1isize << (levels - 1));
        let mut crash_risk: Vec<f64> = (0..n)
            .map(|i| (coarsest[i] + finest_td[i] + shifted[i]) / 2.0 / 2.0)
            .collect();
        for level in (1..levels).rev() {
            let td = &t_differences[level - 1];
            let residual: Vec<f64> = (0..n).map(|i| crash_risk[i] - td[i]).collect();
            let shifted = shift(&residual, 1isize << (level - 1));
            crash_risk = (0..n)
                .map(|i| f64::max((crash_risk[i] + td[i] + shifted[i]) / 2.0 / 2.0, 0.0))
                .collect();
        }
        crash_risk
    }

    pub fn sma(crash_counts: &[f64]) -> Vec<f64> {
        let num_levels = (crash_counts.len() as f64).log2().floor() as usize;
        let (sums, differences) = calculate_sums_differences(crash_counts, num_levels);
        let t_differences = threshold_differences(&sums, &differences);
        estimate_crash_risk(&sums, &t_differences)
    }
}

/// Knuth MMIX linear congruential step; only used to vary test cases.
pub fn lcg(state: &mut u64) -> u64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    *state
}

pub fn random_counts(state: &mut u64, n: usize, max: u32) -> Vec<u32> {
    (0..n).map(|_| (lcg(state) >> 33) as u32 % max).collect()
}

/// Uniform in [0, 1) for test-case construction.
pub fn lcg_uniform(state: &mut u64) -> f64 {
    (lcg(state) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
