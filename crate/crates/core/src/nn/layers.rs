//! 3x3 same-padding convolution, 2x2 max-pooling and their backward passes.
//!
//! The slice kernels below operate on one example at a time in `[C, H, W]`
//! row-major layout. Tensor-level wrappers validate shapes.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) const KERNEL: usize = 3;

/// Column range `x` for which `x + dx - 1` stays inside `0..w`.
#[inline]
fn valid_cols(dx: usize, w: usize) -> (usize, usize) {
    (1usize.saturating_sub(dx), (w + 1 - dx).min(w))
}

/// `out = bias + conv(input, kernels)` with zero padding 1 and stride 1.
pub(crate) fn conv3x3_forward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    kernels: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let c_out = bias.len();
    let plane = h * w;
    debug_assert_eq!(input.len(), c_in * plane);
    debug_assert_eq!(out.len(), c_out * plane);
    for o in 0..c_out {
        let out_plane = &mut out[o * plane..(o + 1) * plane];
        out_plane.fill(bias[o]);
        for c in 0..c_in {
            let in_plane = &input[c * plane..(c + 1) * plane];
            let k = &kernels[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
            for dy in 0..KERNEL {
                for dx in 0..KERNEL {
                    let kv = k[dy * KERNEL + dx];
                    let (x0, x1) = valid_cols(dx, w);
                    for y in 0..h {
                        let sy = y + dy;
                        if sy == 0 || sy > h {
                            continue;
                        }
                        let in_row = &in_plane[(sy - 1) * w..sy * w];
                        let out_row = &mut out_plane[y * w..(y + 1) * w];
                        for x in x0..x1 {
                            out_row[x] += kv * in_row[x + dx - 1];
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates kernel and bias gradients, and optionally the input gradient,
/// given the gradient of the convolution output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3x3_backward(
    input: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    kernels: &[f64],
    grad_out: &[f64],
    grad_kernels: &mut [f64],
    grad_bias: &mut [f64],
    mut grad_input: Option<&mut [f64]>,
) {
    let c_out = grad_bias.len();
    let plane = h * w;
    for o in 0..c_out {
        let g_plane = &grad_out[o * plane..(o + 1) * plane];
        grad_bias[o] += g_plane.iter().sum::<f64>();
        for c in 0..c_in {
            let in_plane = &input[c * plane..(c + 1) * plane];
            let kidx = (o * c_in + c) * 9;
            for dy in 0..KERNEL {
                for dx in 0..KERNEL {
                    let (x0, x1) = valid_cols(dx, w);
                    let kv = kernels[kidx + dy * KERNEL + dx];
                    let mut acc = 0.0;
                    for y in 0..h {
                        let sy = y + dy;
                        if sy == 0 || sy > h {
                            continue;
                        }
                        let in_row = &in_plane[(sy - 1) * w..sy * w];
                        let g_row = &g_plane[y * w..(y + 1) * w];
                        for x in x0..x1 {
                            acc += g_row[x] * in_row[x + dx - 1];
                        }
                        if let Some(gi) = grad_input.as_deref_mut() {
                            let gi_row = &mut gi[c * plane + (sy - 1) * w..c * plane + sy * w];
                            for x in x0..x1 {
                                gi_row[x + dx - 1] += kv * g_row[x];
                            }
                        }
                    }
                    grad_kernels[kidx + dy * KERNEL + dx] += acc;
                }
            }
        }
    }
}

/// 2x2 stride-2 max-pooling. Writes the pooled values and, for every output
/// cell, the flat input index of the winning element (first maximum in
/// row-major window order).
pub(crate) fn maxpool2_forward(
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    out: &mut [f64],
    argmax: &mut [usize],
) {
    let (oh, ow) = (h / 2, w / 2);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let first = base + 2 * oy * w + 2 * ox;
                let mut best = first;
                for idx in [first + 1, first + w, first + w + 1] {
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                let o = ch * oh * ow + oy * ow + ox;
                out[o] = input[best];
                argmax[o] = best;
            }
        }
    }
}

pub(crate) fn maxpool2_backward(grad_out: &[f64], argmax: &[usize], grad_input: &mut [f64]) {
    for (&g, &idx) in grad_out.iter().zip(argmax) {
        grad_input[idx] += g;
    }
}

/// Same-size 3x3 convolution of a `[C_in, H, W]` input.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let &[c_in, h, w] = input.shape() else {
        return Err(Error::Shape {
            context: "conv2d input",
            dimension: "rank",
            expected: 3,
            found: input.shape().len(),
        });
    };
    let &[c_out, k_in, kh, kw] = kernels.shape() else {
        return Err(Error::Shape {
            context: "conv2d kernels",
            dimension: "rank",
            expected: 4,
            found: kernels.shape().len(),
        });
    };
    let dim_err = |dimension, expected, found| Error::Shape {
        context: "conv2d",
        dimension,
        expected,
        found,
    };
    if kh != KERNEL {
        return Err(dim_err("kernel height", KERNEL, kh));
    }
    if kw != KERNEL {
        return Err(dim_err("kernel width", KERNEL, kw));
    }
    if k_in != c_in {
        return Err(dim_err("input channels", k_in, c_in));
    }
    if bias.shape() != [c_out] {
        return Err(dim_err("bias length", c_out, bias.len()));
    }
    let mut out = Tensor::zeros(&[c_out, h, w]);
    conv3x3_forward(
        input.data(),
        c_in,
        h,
        w,
        kernels.data(),
        bias.data(),
        out.data_mut(),
    );
    Ok(out)
}

/// 2x2 max-pooling of a `[C, H, W]` input. Returns the pooled tensor and the
/// flat input index selected for each output cell.
pub fn maxpool2(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::Shape {
            context: "maxpool2 input",
            dimension: "rank",
            expected: 3,
            found: input.shape().len(),
        });
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!(
            "maxpool2 needs even height and width, got {h}x{w}"
        )));
    }
    let mut out = Tensor::zeros(&[c, h / 2, w / 2]);
    let mut argmax = vec![0; out.len()];
    maxpool2_forward(input.data(), c, h, w, out.data_mut(), &mut argmax);
    Ok((out, argmax))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = seed::rng(seed);
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct definition: out[o,y,x] = b[o] + sum input[c,y+dy-1,x+dx-1] * k[o,c,dy,dx].
    fn naive_conv(input: &Tensor, k: &Tensor, b: &Tensor) -> Vec<f64> {
        let [c_in, h, w] = input.shape().try_into().unwrap();
        let c_out = k.shape()[0];
        let mut out = vec![0.0; c_out * h * w];
        for o in 0..c_out {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut s = b.data()[o];
                    for c in 0..c_in {
                        for dy in 0..3isize {
                            for dx in 0..3isize {
                                let (sy, sx) = (y + dy - 1, x + dx - 1);
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let iv = input.data()[c * h * w + sy as usize * w + sx as usize];
                                let kv = k.data()[((o * c_in + c) * 3 + dy as usize) * 3 + dx as usize];
                                s += iv * kv;
                            }
                        }
                    }
                    out[o * h * w + y as usize * w + x as usize] = s;
                }
            }
        }
        out
    }

    #[test]
    fn center_delta_kernel_is_identity() {
        let input = random(&[1, 5, 6], 1);
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let out = conv2d(&input, &k, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn constant_input_padding_arithmetic() {
        let c = 0.7;
        let input = Tensor::full(&[1, 4, 4], c);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0);
        let out = conv2d(&input, &k, &Tensor::zeros(&[1])).unwrap();
        let d = out.data();
        assert!((d[5] - 9.0 * c).abs() < 1e-12);
        assert!((d[0] - 4.0 * c).abs() < 1e-12);
        assert!((d[15] - 4.0 * c).abs() < 1e-12);
        assert!((d[1] - 6.0 * c).abs() < 1e-12);
    }

    #[test]
    fn matches_naive_convolution() {
        let input = random(&[1, 4, 4], 11);
        let k = random(&[1, 1, 3, 3], 12);
        let b = random(&[1], 13);
        let out = conv2d(&input, &k, &b).unwrap();
        for (a, e) in out.data().iter().zip(naive_conv(&input, &k, &b)) {
            assert!((a - e).abs() <= 1e-12);
        }
        let input = random(&[3, 6, 5], 21);
        let k = random(&[4, 3, 3, 3], 22);
        let b = random(&[4], 23);
        let out = conv2d(&input, &k, &b).unwrap();
        for (a, e) in out.data().iter().zip(naive_conv(&input, &k, &b)) {
            assert!((a - e).abs() <= 1e-12);
        }
    }

    #[test]
    fn conv_is_linear_in_input() {
        let x = random(&[2, 6, 6], 31);
        let y = random(&[2, 6, 6], 32);
        let k = random(&[3, 2, 3, 3], 33);
        let zero = Tensor::zeros(&[3]);
        let (a, b) = (1.7, -0.4);
        let mut mix = x.clone();
        mix.scale(a);
        mix.axpy(b, &y).unwrap();
        let lhs = conv2d(&mix, &k, &zero).unwrap();
        let mut rhs = conv2d(&x, &k, &zero).unwrap();
        rhs.scale(a);
        rhs.axpy(b, &conv2d(&y, &k, &zero).unwrap()).unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            assert!((l - r).abs() <= 1e-9);
        }
    }

    #[test]
    fn conv_shape_errors_name_dimension() {
        let input = Tensor::zeros(&[2, 4, 4]);
        let err = conv2d(&input, &Tensor::zeros(&[1, 3, 3, 3]), &Tensor::zeros(&[1])).unwrap_err();
        assert!(matches!(err, Error::Shape { dimension: "input channels", .. }));
        let err = conv2d(&input, &Tensor::zeros(&[1, 2, 5, 5]), &Tensor::zeros(&[1])).unwrap_err();
        assert!(matches!(err, Error::Shape { dimension: "kernel height", .. }));
        let err = conv2d(&input, &Tensor::zeros(&[1, 2, 3, 3]), &Tensor::zeros(&[2])).unwrap_err();
        assert!(matches!(err, Error::Shape { dimension: "bias length", .. }));
    }

    #[test]
    fn maxpool_basic_cases() {
        let (out, _) = maxpool2(&Tensor::full(&[2, 4, 4], 0.3)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.3));
        assert_eq!(out.shape(), &[2, 2, 2]);

        let t = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, idx) = maxpool2(&t).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(idx, vec![3]);

        // ties resolve to the first element in row-major order
        let t = Tensor::from_vec(&[1, 2, 2], vec![0.0, 5.0, 5.0, 5.0]).unwrap();
        assert_eq!(maxpool2(&t).unwrap().1, vec![1]);

        assert!(maxpool2(&Tensor::zeros(&[1, 3, 4])).is_err());
        assert!(maxpool2(&Tensor::zeros(&[1, 4, 5])).is_err());
    }

    #[test]
    fn maxpool_matches_window_scan() {
        let t = random(&[2, 4, 4], 41);
        let (out, idx) = maxpool2(&t).unwrap();
        for c in 0..2 {
            for oy in 0..2 {
                for ox in 0..2 {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(t.data()[c * 16 + (2 * oy + dy) * 4 + 2 * ox + dx]);
                        }
                    }
                    let o = c * 4 + oy * 2 + ox;
                    assert_eq!(out.data()[o], m);
                    assert_eq!(t.data()[idx[o]], m);
                }
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        // loss = sum(g * conv(x)), so dloss/dx and dloss/dk are exact linear maps
        let x = random(&[2, 5, 4], 51);
        let k = random(&[3, 2, 3, 3], 52);
        let b = random(&[3], 53);
        let g = random(&[3, 5, 4], 54);
        let loss = |x: &Tensor, k: &Tensor| -> f64 {
            let out = conv2d(x, k, &b).unwrap();
            out.data().iter().zip(g.data()).map(|(a, b)| a * b).sum()
        };
        let mut gk = vec![0.0; k.len()];
        let mut gb = vec![0.0; 3];
        let mut gx = vec![0.0; x.len()];
        conv3x3_backward(x.data(), 2, 5, 4, k.data(), g.data(), &mut gk, &mut gb, Some(&mut gx));
        let eps = 1e-6;
        for i in 0..k.len() {
            let (mut kp, mut km) = (k.clone(), k.clone());
            kp.data_mut()[i] += eps;
            km.data_mut()[i] -= eps;
            let fd = (loss(&x, &kp) - loss(&x, &km)) / (2.0 * eps);
            assert!((fd - gk[i]).abs() < 1e-7, "kernel {i}: {fd} vs {}", gk[i]);
        }
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += eps;
            xm.data_mut()[i] -= eps;
            let fd = (loss(&xp, &k) - loss(&xm, &k)) / (2.0 * eps);
            assert!((fd - gx[i]).abs() < 1e-7, "input {i}: {fd} vs {}", gx[i]);
        }
        for o in 0..3 {
            let expected: f64 = g.data()[o * 20..(o + 1) * 20].iter().sum();
            assert!((gb[o] - expected).abs() < 1e-12);
        }
    }
}
