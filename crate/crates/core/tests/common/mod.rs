#![allow(dead_code)]

use ochoice::data::{CoefficientMode, Dataset};
use ochoice::reslogit::ReslogitParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `|a − b| / max(|a|, |b|, 1)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

pub fn names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Standard-normal features with uniformly drawn labels.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize) -> Dataset {
    let features: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    let labels: Vec<u32> = (0..n).map(|_| rng.random_range(1..=k as u32)).collect();
    Dataset::new(names(p), features, labels, k).unwrap()
}

/// Parameters with every block drawn at random; in alternative-specific
/// mode roughly one coefficient in five is excluded.
pub fn random_params(rng: &mut ChaCha8Rng, p: usize, k: usize, m: usize, mode: CoefficientMode) -> ReslogitParams {
    let mut params = ReslogitParams::zeros(p, k, m, mode);
    for (b, mask) in params.beta.iter_mut().zip(params.beta_mask.iter_mut()) {
        if mode == CoefficientMode::AlternativeSpecific && rng.random::<f64>() < 0.2 {
            *mask = false;
        } else {
            *b = rng.random_range(-1.0..1.0);
        }
    }
    for w in &mut params.residual_weights {
        for v in w.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    for v in &mut params.coral_weights {
        *v = rng.random_range(-1.0..1.0);
    }
    for v in &mut params.coral_biases {
        *v = rng.random_range(-2.0..2.0);
    }
    params
}
