//! Seeded random fixtures.

use normseg_core::seeds;
use normseg_core::vol3::{Dims3, Mask3, Volume3};
use rand::Rng;

/// Windowed volume with i.i.d. values in `[0, 1)`.
pub fn random_volume(dims: Dims3, seed: u64) -> Volume3 {
    let mut rng = seeds::rng_from(seed);
    let data: Vec<f32> = (0..dims.len()).map(|_| rng.random_range(0.0..1.0)).collect();
    Volume3::new_windowed(dims, [1.0, 1.0, 1.0], data).unwrap()
}

/// Random mask with the given fill density.
pub fn random_mask(dims: Dims3, seed: u64, density: f64) -> Mask3 {
    let mut rng = seeds::rng_from(seed);
    Mask3::from_bits(dims, (0..dims.len()).map(|_| rng.random_bool(density)).collect()).unwrap()
}

/// Random box dims between `lo` and `hi` voxels per side.
pub fn random_dims(seed: u64, lo: usize, hi: usize) -> Dims3 {
    let mut rng = seeds::rng_from(seed);
    Dims3::new(
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
        rng.random_range(lo..=hi),
    )
}
