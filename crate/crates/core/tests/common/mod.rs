#![allow(dead_code)]

pub mod oracles;

use fpvit::tokenizer::TokenSequence;
use fpvit::vit::{ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Tiny model with randomized, well-scaled parameters so that every
/// gradient coordinate is far from the finite-difference noise floor.
pub fn random_params(config: &ModelConfig, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f64>::init(config).unwrap();
    let names = ModelParams::<f64>::tensor_names(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (name, t) in names.iter().zip(p.tensors_mut()) {
        let fan_in = if t.shape.len() == 2 { t.shape[0] as f64 } else { 1.0 };
        for v in t.data.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v = if name.ends_with(".scale") {
                1.0 + 0.2 * z
            } else if name.ends_with(".weight") {
                z / fan_in.sqrt()
            } else {
                0.2 * z
            };
        }
    }
    p
}

pub fn random_tokens(config: &ModelConfig, seed: u64) -> TokenSequence<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.num_tokens();
    let d = config.in_dim_per_token;
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    TokenSequence::from_data(n, d, config.patch_size, config.map_channels(), data).unwrap()
}

/// Relative error with a 1e-5 floor in the denominator so that
/// coordinates whose true gradient is ~0 are compared absolutely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}
