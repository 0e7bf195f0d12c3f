//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sltc_core::slb::MappingMatrix;

/// Random class-to-screenline matrix with `l` classes over `k` screenlines,
/// each class crossing up to four screenlines, and a gap vector in ±50.
pub fn ridge_instance(l: usize, k: usize, seed: u64) -> (MappingMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..l)
        .map(|_| {
            let mut row: Vec<usize> = (0..rng.random_range(1..=4.min(k))).map(|_| rng.random_range(0..k)).collect();
            row.sort_unstable();
            row.dedup();
            row
        })
        .collect();
    let y = (0..k).map(|_| rng.random_range(-50.0..50.0)).collect();
    (MappingMatrix::from_rows(rows, k), y)
}
