//! Bit-for-bit parity between the production pipeline and the independent
//! reference implementation in `support::reference`. Agreement is checked on
//! raw f64 bit patterns so any arithmetic reordering in the pipeline shows up
//! immediately.

mod support;

use roadrisk::data::SectionSeries;
use roadrisk::sma::{sma_estimate, SmaOptions};
use support::{lcg, random_counts, reference};

#[test]
fn pipeline_matches_reference_bit_for_bit() {
    let mut state = 0xB00Fu64;
    let started = std::time::Instant::now();
    for case in 0..100 {
        let n = 2 + (lcg(&mut state) % 1023) as usize; // 2..=1024
        let counts = random_counts(&mut state, n, 40);
        let series = SectionSeries::new("R", "E", "p1", 0.1, 0.0, counts).unwrap();

        let expected = reference::sma(&series.counts_f64());
        let actual = sma_estimate(&series, &SmaOptions::default()).unwrap();

        assert_eq!(expected.len(), actual.estimates.len(), "case {case} (n = {n})");
        for i in 0..n {
            assert_eq!(
                expected[i].to_bits(),
                actual.estimates[i].to_bits(),
                "case {case} (n = {n}), section {i}: {} vs {}",
                expected[i],
                actual.estimates[i]
            );
        }
    }
    assert!(
        started.elapsed().as_secs_f64() < 30.0,
        "parity check took {:?}",
        started.elapsed()
    );
}

#[test]
fn reference_shift_conventions() {
    assert_eq!(reference::shift(&[1.0, 2.0, 3.0, 4.0], -1), vec![2.0, 3.0, 4.0, 1.0]);
    assert_eq!(reference::shift(&[1.0, 2.0, 3.0, 4.0], 2), vec![3.0, 4.0, 1.0, 2.0]);
    assert_eq!(reference::shift(&[1.0, 2.0, 3.0, 4.0], 0), vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn reference_decomposition_hand_case() {
    let (sums, diffs) = reference::calculate_sums_differences(&[1.0, 3.0, 2.0, 0.0], 2);
    assert_eq!(sums[0], vec![4.0, 5.0, 2.0, 1.0]);
    assert_eq!(diffs[0], vec![-2.0, 1.0, 2.0, -1.0]);
    assert_eq!(sums[1], vec![6.0, 6.0, 6.0, 6.0]);
    assert_eq!(diffs[1], vec![2.0, 4.0, -2.0, -4.0]);
}

#[test]
fn reference_threshold_pins_the_hand_value() {
    assert_eq!(reference::threshold(&[10.0], 5.0), vec![7.5]);
    assert_eq!(reference::threshold(&[4.0, -4.0, 0.0], 5.0), vec![0.0, 0.0, 0.0]);
    assert_eq!(reference::pure(&[4.0], &[-2.0], 3.0), 0.0);
}
