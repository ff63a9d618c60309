//! Deterministic inputs shared by the benchmarks.

use mdust::Tensor;

/// Smooth pseudo-random values in `[-1, 1]`.
pub fn field(shape: &[usize], phase: f64) -> Tensor<f32> {
    Tensor::from_fn(shape.to_vec(), |i| ((i as f64 * 0.618_034 + phase).sin()) as f32)
}

/// A `[1, 1, H, W, L]` input with a bright blob in the middle.
pub fn volume(extents: [usize; 3]) -> Tensor<f32> {
    let [h, w, l] = extents;
    Tensor::from_fn([1, 1, h, w, l], |i| {
        let (a, b, c) = (i / (w * l), i / l % w, i % l);
        let d = ((a as f64 - h as f64 / 2.0) / h as f64).powi(2)
            + ((b as f64 - w as f64 / 2.0) / w as f64).powi(2)
            + ((c as f64 - l as f64 / 2.0) / l as f64).powi(2);
        if d < 0.04 { 0.4 } else { 0.3 }
    })
}
