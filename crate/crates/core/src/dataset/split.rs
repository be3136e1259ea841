use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, TraceDataset};

/// Deterministic train/test partition. The test side gets
/// `round(test_fraction * rows)` rows, at least one. Both sides keep the
/// original row order.
pub fn split(
    ds: &TraceDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(TraceDataset, TraceDataset), DatasetError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DatasetError::BadFraction(test_fraction));
    }
    let n = ds.len();
    let n_test = ((test_fraction * n as f64).round() as usize).max(1);
    if n_test >= n {
        return Err(DatasetError::DatasetTooSmall { rows: n });
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &idx[..n_test] {
        is_test[i] = true;
    }

    let (mut train, mut test) = (Vec::with_capacity(n - n_test), Vec::with_capacity(n_test));
    for (row, t) in ds.rows.iter().zip(is_test) {
        if t {
            test.push(row.clone());
        } else {
            train.push(row.clone());
        }
    }
    Ok((ds.with_rows(train), ds.with_rows(test)))
}
