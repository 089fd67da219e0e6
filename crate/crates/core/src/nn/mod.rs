//! The classifier shared by the server and every client:
//!
//! ```text
//! 1@28x28 -> conv3x3(16) -> ReLU -> maxpool2 -> conv3x3(32) -> ReLU -> maxpool2
//!         -> flatten(1568) -> fc(256) -> ReLU -> fc(10) -> softmax
//! ```

mod adam;
pub mod layers;
mod model;

pub use adam::{adam_step, AdamState};
pub use layers::{conv2d, maxpool2};
pub use model::{evaluate, model_backward, model_forward, model_logits, predict, FLAT_LEN};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CONV1_CHANNELS: usize = 16;
pub const CONV2_CHANNELS: usize = 32;
pub const HIDDEN: usize = 256;

/// Weights and biases of the network, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    pub conv2_w: Tensor,
    pub conv2_b: Tensor,
    pub fc1_w: Tensor,
    pub fc1_b: Tensor,
    pub fc2_w: Tensor,
    pub fc2_b: Tensor,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

impl ModelParams {
    pub const NAMES: [&'static str; 8] = [
        "conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b",
    ];

    pub fn shapes() -> [Vec<usize>; 8] {
        [
            vec![CONV1_CHANNELS, 1, 3, 3],
            vec![CONV1_CHANNELS],
            vec![CONV2_CHANNELS, CONV1_CHANNELS, 3, 3],
            vec![CONV2_CHANNELS],
            vec![HIDDEN, FLAT_LEN],
            vec![HIDDEN],
            vec![crate::NUM_CLASSES, HIDDEN],
            vec![crate::NUM_CLASSES],
        ]
    }

    pub fn zeros() -> Self {
        let [a, b, c, d, e, f, g, h] = Self::shapes().map(|s| Tensor::zeros(&s));
        ModelParams {
            conv1_w: a,
            conv1_b: b,
            conv2_w: c,
            conv2_b: d,
            fc1_w: e,
            fc1_b: f,
            fc2_w: g,
            fc2_b: h,
        }
    }

    /// Fan-in scaled uniform initialization: weights ~ U(-1/sqrt(fan_in),
    /// 1/sqrt(fan_in)), biases zero.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut p = Self::zeros();
        for w in [&mut p.conv1_w, &mut p.conv2_w, &mut p.fc1_w, &mut p.fc2_w] {
            let fan_in: usize = w.shape()[1..].iter().product();
            let bound = (1.0 / fan_in as f64).sqrt();
            w.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-bound..bound));
        }
        p
    }

    pub fn tensors(&self) -> [&Tensor; 8] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Errors unless every tensor has the canonical shape.
    pub fn validate(&self) -> Result<()> {
        for ((t, shape), name) in self.tensors().iter().zip(Self::shapes()).zip(Self::NAMES) {
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    context: "ModelParams",
                    dimension: name,
                    expected: shape.iter().product(),
                    found: t.len(),
                });
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(factor));
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn axpy(&mut self, alpha: f64, other: &ModelParams) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn shapes_and_param_count() {
        let p = ModelParams::zeros();
        p.validate().unwrap();
        assert_eq!(p.fc1_w.shape(), &[256, 1568]);
        assert_eq!(
            p.num_params(),
            16 * 9 + 16 + 32 * 16 * 9 + 32 + 256 * 1568 + 256 + 10 * 256 + 10
        );
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let p = ModelParams::init(&mut seed::rng(5));
        let bound = |fan_in: f64| (1.0 / fan_in).sqrt();
        assert!(p.conv1_w.data().iter().all(|v| v.abs() < bound(9.0)));
        assert!(p.conv2_w.data().iter().all(|v| v.abs() < bound(144.0)));
        assert!(p.fc1_w.data().iter().all(|v| v.abs() < bound(1568.0)));
        assert!(p.fc2_w.data().iter().all(|v| v.abs() < bound(256.0)));
        assert!(p.conv1_b.data().iter().all(|&v| v == 0.0));
        assert!(p.fc2_b.data().iter().all(|&v| v == 0.0));
        assert_eq!(p, ModelParams::init(&mut seed::rng(5)));
    }

    #[test]
    fn validate_names_bad_tensor() {
        let mut p = ModelParams::zeros();
        p.fc2_b = Tensor::zeros(&[9]);
        let err = p.validate().unwrap_err();
        assert!(matches!(err, Error::Shape { dimension: "fc2_b", .. }));
    }
}
