use super::layers::{conv3x3_backward, conv3x3_forward, maxpool2_backward, maxpool2_forward};
use super::{ModelParams, CONV1_CHANNELS, CONV2_CHANNELS, HIDDEN};
use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::{IMAGE_SIDE, NUM_CLASSES};

const S1: usize = IMAGE_SIDE;
const S2: usize = IMAGE_SIDE / 2;
const S3: usize = IMAGE_SIDE / 4;
const PIXELS: usize = S1 * S1;

/// Length of the flattened activation entering the first dense layer.
pub const FLAT_LEN: usize = CONV2_CHANNELS * S3 * S3;

/// Intermediate values of one example, kept for the backward pass.
struct Activations {
    a1: Vec<f64>,
    p1: Vec<f64>,
    idx1: Vec<usize>,
    a2: Vec<f64>,
    flat: Vec<f64>,
    idx2: Vec<usize>,
    hidden: Vec<f64>,
    logits: [f64; NUM_CLASSES],
}

impl Activations {
    fn new() -> Self {
        Activations {
            a1: vec![0.0; CONV1_CHANNELS * S1 * S1],
            p1: vec![0.0; CONV1_CHANNELS * S2 * S2],
            idx1: vec![0; CONV1_CHANNELS * S2 * S2],
            a2: vec![0.0; CONV2_CHANNELS * S2 * S2],
            flat: vec![0.0; FLAT_LEN],
            idx2: vec![0; FLAT_LEN],
            hidden: vec![0.0; HIDDEN],
            logits: [0.0; NUM_CLASSES],
        }
    }

    fn forward(&mut self, p: &ModelParams, image: &[f64]) {
        conv3x3_forward(
            image,
            1,
            S1,
            S1,
            p.conv1_w.data(),
            p.conv1_b.data(),
            &mut self.a1,
        );
        relu(&mut self.a1);
        maxpool2_forward(&self.a1, CONV1_CHANNELS, S1, S1, &mut self.p1, &mut self.idx1);
        conv3x3_forward(
            &self.p1,
            CONV1_CHANNELS,
            S2,
            S2,
            p.conv2_w.data(),
            p.conv2_b.data(),
            &mut self.a2,
        );
        relu(&mut self.a2);
        maxpool2_forward(&self.a2, CONV2_CHANNELS, S2, S2, &mut self.flat, &mut self.idx2);
        dense(p.fc1_w.data(), p.fc1_b.data(), &self.flat, &mut self.hidden);
        relu(&mut self.hidden);
        dense(p.fc2_w.data(), p.fc2_b.data(), &self.hidden, &mut self.logits);
    }
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn dense(w: &[f64], b: &[f64], input: &[f64], out: &mut [f64]) {
    let n_in = input.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * n_in..(j + 1) * n_in];
        *o = b[j] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
    }
}

fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|z| (z - max).exp());
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

fn check_batch(batch: &Tensor) -> Result<usize> {
    let shape = batch.shape();
    let expected = [shape.first().copied().unwrap_or(0), 1, S1, S1];
    if shape.len() != 4 {
        return Err(Error::Shape {
            context: "model input",
            dimension: "rank",
            expected: 4,
            found: shape.len(),
        });
    }
    for (i, name) in ["batch", "channels", "height", "width"].into_iter().enumerate() {
        if shape[i] != expected[i] {
            return Err(Error::Shape {
                context: "model input",
                dimension: name,
                expected: expected[i],
                found: shape[i],
            });
        }
    }
    if !batch.all_finite() {
        return Err(Error::invalid("model input contains non-finite values"));
    }
    Ok(shape[0])
}

fn forward_rows(
    params: &ModelParams,
    batch: &Tensor,
    f: impl Fn(&[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES],
) -> Result<Tensor> {
    let n = check_batch(batch)?;
    let mut acts = Activations::new();
    let mut out = Vec::with_capacity(n * NUM_CLASSES);
    for image in batch.data().chunks_exact(PIXELS) {
        acts.forward(params, image);
        out.extend_from_slice(&f(&acts.logits));
    }
    Tensor::from_vec(&[n, NUM_CLASSES], out)
}

/// Class probabilities `[N, 10]` for a batch `[N, 1, 28, 28]`.
pub fn model_forward(params: &ModelParams, batch: &Tensor) -> Result<Tensor> {
    forward_rows(params, batch, softmax)
}

/// Pre-softmax outputs `[N, 10]`.
pub fn model_logits(params: &ModelParams, batch: &Tensor) -> Result<Tensor> {
    forward_rows(params, batch, |l| *l)
}

/// Mean softmax cross-entropy of the batch and its exact gradient.
pub fn model_backward(
    params: &ModelParams,
    batch: &Tensor,
    labels: &[usize],
) -> Result<(f64, ModelParams)> {
    let n = check_batch(batch)?;
    if labels.len() != n {
        return Err(Error::Shape {
            context: "model_backward",
            dimension: "label count",
            expected: n,
            found: labels.len(),
        });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: NUM_CLASSES,
        });
    }

    let mut grads = ModelParams::zeros();
    let mut acts = Activations::new();
    let mut d_flat = vec![0.0; FLAT_LEN];
    let mut d_a2 = vec![0.0; CONV2_CHANNELS * S2 * S2];
    let mut d_p1 = vec![0.0; CONV1_CHANNELS * S2 * S2];
    let mut d_a1 = vec![0.0; CONV1_CHANNELS * S1 * S1];
    let mut d_hidden = [0.0; HIDDEN];
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;

    for (image, &label) in batch.data().chunks_exact(PIXELS).zip(labels) {
        acts.forward(params, image);
        let probs = softmax(&acts.logits);
        let max = acts.logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = acts.logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss -= acts.logits[label] - max - log_sum;

        let mut d_logits = probs;
        d_logits[label] -= 1.0;
        d_logits.iter_mut().for_each(|v| *v *= inv_n);

        // fc2
        d_hidden.fill(0.0);
        for (k, &g) in d_logits.iter().enumerate() {
            grads.fc2_b.data_mut()[k] += g;
            let w_row = &params.fc2_w.data()[k * HIDDEN..(k + 1) * HIDDEN];
            let gw_row = &mut grads.fc2_w.data_mut()[k * HIDDEN..(k + 1) * HIDDEN];
            for j in 0..HIDDEN {
                gw_row[j] += g * acts.hidden[j];
                d_hidden[j] += g * w_row[j];
            }
        }

        // fc1 (ReLU mask from the stored post-activation)
        d_flat.fill(0.0);
        for j in 0..HIDDEN {
            if acts.hidden[j] <= 0.0 {
                continue;
            }
            let g = d_hidden[j];
            grads.fc1_b.data_mut()[j] += g;
            let w_row = &params.fc1_w.data()[j * FLAT_LEN..(j + 1) * FLAT_LEN];
            let gw_row = &mut grads.fc1_w.data_mut()[j * FLAT_LEN..(j + 1) * FLAT_LEN];
            for i in 0..FLAT_LEN {
                gw_row[i] += g * acts.flat[i];
                d_flat[i] += g * w_row[i];
            }
        }

        // pool2, relu2
        d_a2.fill(0.0);
        maxpool2_backward(&d_flat, &acts.idx2, &mut d_a2);
        mask_relu(&mut d_a2, &acts.a2);

        // conv2
        d_p1.fill(0.0);
        conv3x3_backward(
            &acts.p1,
            CONV1_CHANNELS,
            S2,
            S2,
            params.conv2_w.data(),
            &d_a2,
            grads.conv2_w.data_mut(),
            grads.conv2_b.data_mut(),
            Some(&mut d_p1),
        );

        // pool1, relu1, conv1
        d_a1.fill(0.0);
        maxpool2_backward(&d_p1, &acts.idx1, &mut d_a1);
        mask_relu(&mut d_a1, &acts.a1);
        conv3x3_backward(
            image,
            1,
            S1,
            S1,
            params.conv1_w.data(),
            &d_a1,
            grads.conv1_w.data_mut(),
            grads.conv1_b.data_mut(),
            None,
        );
    }
    Ok((loss * inv_n, grads))
}

fn mask_relu(grad: &mut [f64], activation: &[f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted class of a single `[1, 28, 28]` image.
pub fn predict(params: &ModelParams, image: &Tensor) -> Result<usize> {
    let batch = image.clone().reshape(&[1, 1, S1, S1])?;
    Ok(argmax(model_logits(params, &batch)?.data()))
}

/// Fraction of examples whose predicted class equals the label.
pub fn evaluate(params: &ModelParams, dataset: &[Example]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    let mut acts = Activations::new();
    let mut correct = 0usize;
    for ex in dataset {
        if ex.image.len() != PIXELS {
            return Err(Error::Shape {
                context: "evaluate",
                dimension: "image size",
                expected: PIXELS,
                found: ex.image.len(),
            });
        }
        acts.forward(params, ex.image.data());
        // softmax is monotone, so the logit argmax is the probability argmax
        if argmax(&softmax(&acts.logits)) == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}
