//! Seeded random generation. PCG-64 with the 53-bit mantissa convention for
//! uniform draws on [0, 1).

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use crate::linalg::DenseMatrix;

pub type SeededRng = Pcg64;

pub fn seeded(seed: u64) -> SeededRng {
    Pcg64::seed_from_u64(seed)
}

/// Entries i.i.d. uniform on [0, 1), drawn in row-major order.
pub fn uniform_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    DenseMatrix::from_row_slice(rows, cols, &data)
}

/// Entries i.i.d. uniform on [−1, 1), row-major.
pub fn symmetric_uniform_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    uniform_matrix(rng, rows, cols).map(|v| 2.0 * v - 1.0)
}

/// Standard normal entries by Box-Muller, row-major.
pub fn gaussian_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> DenseMatrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| gaussian(rng)).collect();
    DenseMatrix::from_row_slice(rows, cols, &data)
}

pub fn gaussian(rng: &mut SeededRng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `k` distinct indices from `0..total`, returned sorted.
pub fn sample_without_replacement(rng: &mut SeededRng, total: usize, k: usize) -> Vec<usize> {
    let mut v = index::sample(rng, total, k).into_vec();
    v.sort_unstable();
    v
}
