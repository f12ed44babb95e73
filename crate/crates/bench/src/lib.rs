//! Shared fixtures for the criterion benchmarks.

use auctionflow::clustering::{quintile_standardize, FeatureMatrix};

/// Deterministic pseudo-random KPI-like matrix, standardized to quintiles.
pub fn quintile_matrix(n: usize, seed: u64) -> FeatureMatrix {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        state
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let total = (next() % 400) as f64 + 1.0;
            let per_day = (next() % 50) as f64 / 3.0 + 1.0;
            let rate = (next() % 101) as f64 / 100.0;
            let cats = (next() % 12) as f64 + 1.0;
            let forum = (next() % 10 == 0) as u8 as f64;
            vec![total, per_day, rate, cats, forum]
        })
        .collect();
    let raw = FeatureMatrix::new(
        ["total", "per_day", "rate", "cats", "forum"]
            .map(String::from)
            .to_vec(),
        vec![false, false, false, false, true],
        &rows,
    )
    .expect("finite rows");
    quintile_standardize(&raw).expect("non-empty")
}
