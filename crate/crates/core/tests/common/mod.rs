#![allow(dead_code)]

use iolama::Constellation;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random alphabet with 2..=max_size distinct points in the unit square and
/// random strictly positive priors.
pub fn random_alphabet(rng: &mut ChaCha8Rng, max_size: usize) -> Constellation {
    loop {
        let size = rng.random_range(2..=max_size);
        let points: Vec<Complex64> = (0..size)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let raw: Vec<f64> = (0..size).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let priors = raw.iter().map(|p| p / total).collect();
        if let Ok(c) = Constellation::custom(points, priors) {
            if c.variance() > 1e-3 {
                return c;
            }
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Q-function via the complementary error function.
pub fn q_func(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}
