//! Shared fixtures for the pipeline benchmarks.

use geogan_core::grid::CategoricalGrid;

/// Binary striped grid used as a stand-in training image / facies field.
pub fn striped_grid(n: usize) -> CategoricalGrid {
    let data: Vec<u8> = (0..n * n).map(|i| u8::from((i / n) % 7 < 3)).collect();
    CategoricalGrid::new(&[n, n], 2, data).expect("valid grid")
}
