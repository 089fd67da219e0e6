//! Examples, client shards and the two data-poisoning attacks.

mod idx;
mod synthetic;

pub use idx::{
    load_idx_images, load_idx_images_file, load_idx_labels, load_idx_labels_file,
    write_idx_images, write_idx_labels, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use synthetic::synthetic_dataset;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

/// One labelled `[1, 28, 28]` image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image: Tensor,
    pub label: usize,
}

/// A client's private slice of the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub client_id: usize,
    pub examples: Vec<Example>,
    /// Positions of the examples in the source dataset.
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoisonKind {
    None,
    /// Blend every pixel with uniform noise: `(1 - r) * pixel + r * u`.
    NoiseMix(f64),
    /// Replace every label with a uniformly chosen wrong one.
    LabelFlip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoisonSpec {
    pub kind: PoisonKind,
    pub seed: u64,
}

impl PoisonSpec {
    pub fn none() -> Self {
        PoisonSpec {
            kind: PoisonKind::None,
            seed: 0,
        }
    }

    pub fn is_attack(&self) -> bool {
        self.kind != PoisonKind::None
    }
}

/// Pairs images with labels from a loaded IDX image/label file pair.
pub fn zip_examples(images: Vec<Tensor>, labels: Vec<usize>) -> Result<Vec<Example>> {
    if images.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    Ok(images
        .into_iter()
        .zip(labels)
        .map(|(image, label)| Example { image, label })
        .collect())
}

/// Loads `train-*` and `t10k-*` MNIST files from `dir`, returning
/// `(training, test)` examples.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Vec<Example>, Vec<Example>)> {
    let dir = dir.as_ref();
    let load = |images: &str, labels: &str| -> Result<Vec<Example>> {
        zip_examples(
            load_idx_images_file(dir.join(images))?,
            load_idx_labels_file(dir.join(labels))?,
        )
    };
    Ok((
        load("train-images-idx3-ubyte", "train-labels-idx1-ubyte")?,
        load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")?,
    ))
}

/// Shuffles the dataset indices with `seed` and hands out consecutive,
/// disjoint slices of `per_client` examples.
pub fn partition_iid(
    dataset: &[Example],
    n_clients: usize,
    per_client: usize,
    seed: u64,
) -> Result<Vec<Shard>> {
    let required = n_clients
        .checked_mul(per_client)
        .ok_or_else(|| Error::invalid("client count times shard size overflows"))?;
    if required > dataset.len() {
        return Err(Error::InsufficientData {
            required,
            available: dataset.len(),
        });
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    Ok(order
        .chunks(per_client.max(1))
        .take(n_clients)
        .enumerate()
        .map(|(client_id, idx)| {
            let idx = &idx[..per_client.min(idx.len())];
            Shard {
                client_id,
                examples: idx.iter().map(|&i| dataset[i].clone()).collect(),
                source_indices: idx.to_vec(),
            }
        })
        .collect())
}

/// Mixes an image with i.i.d. U[0,1] noise; one draw per pixel is consumed
/// regardless of `ratio`.
pub fn apply_noise_mix<R: Rng + ?Sized>(image: &Tensor, ratio: f64, rng: &mut R) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::invalid(format!("noise ratio {ratio} outside [0, 1]")));
    }
    let mut out = image.clone();
    for v in out.data_mut() {
        let u: f64 = rng.gen();
        *v = ((1.0 - ratio) * *v + ratio * u).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// A label drawn uniformly from the `num_classes - 1` wrong ones.
pub fn apply_label_flip<R: Rng + ?Sized>(label: usize, num_classes: usize, rng: &mut R) -> Result<usize> {
    if num_classes < 2 {
        return Err(Error::invalid("label flipping needs at least two classes"));
    }
    if label >= num_classes {
        return Err(Error::LabelOutOfRange { label, num_classes });
    }
    let draw = rng.gen_range(0..num_classes - 1);
    Ok(if draw >= label { draw + 1 } else { draw })
}

/// Applies `spec` to every example of the shard with a generator seeded by
/// `spec.seed`.
pub fn poison_shard(shard: &Shard, spec: &PoisonSpec) -> Result<Shard> {
    let mut rng = seed::rng(spec.seed);
    let examples = shard
        .examples
        .iter()
        .map(|ex| {
            Ok(match spec.kind {
                PoisonKind::None => ex.clone(),
                PoisonKind::NoiseMix(r) => Example {
                    image: apply_noise_mix(&ex.image, r, &mut rng)?,
                    label: ex.label,
                },
                PoisonKind::LabelFlip => Example {
                    image: ex.image.clone(),
                    label: apply_label_flip(ex.label, NUM_CLASSES, &mut rng)?,
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(Shard {
        client_id: shard.client_id,
        examples,
        source_indices: shard.source_indices.clone(),
    })
}
