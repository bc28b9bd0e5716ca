use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImagePlane;

pub fn random_plane(width: usize, height: usize, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height).map(|_| rng.random::<f64>()).collect();
    ImagePlane::new(width, height, data).unwrap()
}

/// Approximately Gaussian noise (sum of uniforms) added to `base`.
pub fn noisy(base: &ImagePlane, sigma: f64, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = base
        .data()
        .iter()
        .map(|&v| {
            let s: f64 = (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0;
            v + sigma * s
        })
        .collect();
    ImagePlane::new(base.width(), base.height(), data).unwrap()
}

/// Vertical step: `lo` left of column `edge`, `hi` from it onwards.
pub fn step(width: usize, height: usize, edge: usize, lo: f64, hi: f64) -> ImagePlane {
    ImagePlane::from_fn(width, height, |x, _| if x < edge { lo } else { hi })
}
