//! Hand-verified contents of `fixtures/sparse_minimal`.

use std::path::PathBuf;

pub fn fixture_dir() -> PathBuf {
    super::fixture_path("sparse_minimal")
}

/// Tracks as (view index, u, v) in crate pixel convention (file value - 0.5).
/// Views are ordered by image id: 1 -> 0, 2 -> 1, 3 -> 2.
pub fn expected_tracks() -> Vec<Vec<(usize, f64, f64)>> {
    vec![
        vec![(0, 10.0, 12.0), (1, 8.0, 12.0), (2, 10.0, 12.0)],
        vec![(0, 20.0, 30.0), (1, 21.0, 30.0)],
        vec![(1, 45.0, 20.0), (2, 33.0, 20.0)],
        vec![(1, 0.5, 0.5)],
    ]
}
