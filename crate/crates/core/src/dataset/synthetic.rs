//! A deterministic stand-in for MNIST.
//!
//! Each class is a fixed arrangement of Gaussian blobs drawn from the seed.
//! Samples jitter the arrangement by at most one pixel, vary its intensity and
//! add bounded pixel noise. Pixels are quantized to multiples of 1/255 so the
//! data survives an IDX round trip unchanged.

use rand::Rng;

use super::Example;
use crate::error::{Error, Result};
use crate::seed::{self, derived_rng};
use crate::tensor::Tensor;
use crate::{IMAGE_SIDE, NUM_CLASSES};

const BLOBS_PER_CLASS: usize = 3;
const MAX_SHIFT: i64 = 1;
const PIXEL_NOISE: f64 = 0.45;
const TAG_PATTERN: u64 = 0;
const TAG_SAMPLE: u64 = 1;

fn class_pattern(seed: u64, class: usize) -> Vec<f64> {
    let mut rng = derived_rng(&[seed, TAG_PATTERN, class as u64]);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..BLOBS_PER_CLASS)
        .map(|_| {
            (
                rng.gen_range(6.0..22.0),
                rng.gen_range(6.0..22.0),
                rng.gen_range(1.8..3.2),
                rng.gen_range(0.6..1.0),
            )
        })
        .collect();
    let mut pattern = vec![0.0; IMAGE_SIDE * IMAGE_SIDE];
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let v: f64 = blobs
                .iter()
                .map(|&(cy, cx, sigma, amp)| {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    amp * (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .sum();
            pattern[y * IMAGE_SIDE + x] = v.min(1.0);
        }
    }
    pattern
}

fn render(pattern: &[f64], rng: &mut seed::Rng) -> Vec<f64> {
    let dy = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
    let dx = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
    let gain = rng.gen_range(0.7..1.0);
    let side = IMAGE_SIDE as i64;
    let mut img = vec![0.0; IMAGE_SIDE * IMAGE_SIDE];
    for y in 0..side {
        for x in 0..side {
            let (sy, sx) = (y - dy, x - dx);
            let base = if (0..side).contains(&sy) && (0..side).contains(&sx) {
                pattern[(sy * side + sx) as usize]
            } else {
                0.0
            };
            let noise = rng.gen_range(-PIXEL_NOISE..PIXEL_NOISE);
            let v = (gain * base + noise).clamp(0.0, 1.0);
            img[(y * side + x) as usize] = (v * 255.0).round() / 255.0;
        }
    }
    img
}

/// `n` labelled examples; example `i` has label `i % num_classes`.
pub fn synthetic_dataset(seed: u64, n: usize, num_classes: usize) -> Result<Vec<Example>> {
    if num_classes == 0 || num_classes > NUM_CLASSES {
        return Err(Error::invalid(format!(
            "num_classes must be in 1..={NUM_CLASSES}, got {num_classes}"
        )));
    }
    if n < num_classes {
        return Err(Error::invalid(format!(
            "synthetic dataset needs at least {num_classes} examples, got {n}"
        )));
    }
    let patterns: Vec<Vec<f64>> = (0..num_classes).map(|c| class_pattern(seed, c)).collect();
    (0..n)
        .map(|i| {
            let label = i % num_classes;
            let mut rng = derived_rng(&[seed, TAG_SAMPLE, i as u64]);
            let image = Tensor::from_vec(&[1, IMAGE_SIDE, IMAGE_SIDE], render(&patterns[label], &mut rng))?;
            Ok(Example { image, label })
        })
        .collect()
}
