use rand::Rng;

use super::Tensor;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`, shaped `[fan_in, fan_out]`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(&[fan_in, fan_out], bound, rng)
}

pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape/data agree by construction")
}
