//! Seeded synthetic models and probe inputs.
//!
//! ChaCha8 is used for its stable, platform-independent stream; the same seed
//! always yields the same bytes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{Activation, FloatModel, LayerDef};

/// `count` draws from N(0, sigma²), clamped to [-1, 1].
pub fn clamped_normal(count: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(format!("sigma {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| normal.sample(&mut rng).clamp(-1.0, 1.0)).collect())
}

/// Dense ReLU network with layer widths `dims` (input first). Weights and
/// biases are clamped-normal with standard deviation `sigma`.
pub fn gen_model(dims: &[usize], sigma: f64, seed: u64) -> Result<FloatModel> {
    if dims.len() < 2 {
        return Err(Error::Config("need at least an input and an output width".into()));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw =
        |count: usize| -> Vec<f32> { (0..count).map(|_| normal.sample(&mut rng).clamp(-1.0, 1.0) as f32).collect() };
    let layers = dims
        .windows(2)
        .map(|w| {
            let (in_dim, out_dim) = (w[0], w[1]);
            let weights = draw(in_dim * out_dim);
            let bias = draw(out_dim);
            LayerDef::new(out_dim, in_dim, weights, bias, Activation::Relu)
        })
        .collect::<Result<Vec<_>>>()?;
    FloatModel::new(layers)
}

/// `count` probe vectors with entries uniform in [0, 1), like non-negative
/// magnitude features.
pub fn gen_probes(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect()).collect()
}
