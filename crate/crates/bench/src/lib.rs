//! Fixtures shared by the benchmarks.

use hsdetect::{BackgroundModel, Region, Signature, SpectralCube};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform random BIP cube of `lines × samples × bands`.
pub fn random_cube(lines: usize, samples: usize, bands: usize, seed: u64) -> SpectralCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..lines * samples * bands).map(|_| rng.gen_range(0.0..1.0)).collect();
    let region = Region::whole("bench", lines, samples).expect("non-empty extents");
    SpectralCube::from_bip(region, bands, values, None).expect("consistent sizes")
}

/// Background model and a target signature for `cube`.
pub fn model_and_target(cube: &SpectralCube, seed: u64) -> (BackgroundModel, Signature) {
    let model = BackgroundModel::estimate_from(cube).expect("enough pixels");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = (0..cube.bands()).map(|_| rng.gen_range(0.5..1.5)).collect();
    (model, Signature::new(t, "bench").expect("finite target"))
}
