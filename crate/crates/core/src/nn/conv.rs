//! 2D convolution (cross-correlation) with shape-preserving zero padding.

use super::tensor::{Scalar, Tensor};
use crate::error::{MarError, Result};
use rayon::prelude::*;

/// Weights, bias and stride of one convolution layer. Padding is implied:
/// `(k - 1) / 2` zeros on each side, so stride 1 preserves spatial dims.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    /// (out_ch, in_ch, k, k)
    pub weights: Tensor<T>,
    /// (out_ch, 1, 1, 1)
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(out_ch: usize, in_ch: usize, k: usize, stride: usize) -> Result<Self> {
        if k % 2 == 0 {
            return Err(MarError::config(format!("kernel size {k} must be odd")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(MarError::config(format!("stride {stride} must be 1 or 2")));
        }
        Ok(ConvParams {
            weights: Tensor::zeros([out_ch, in_ch, k, k]),
            bias: Tensor::zeros([out_ch, 1, 1, 1]),
            stride,
        })
    }

    /// Kaiming-normal weight init (fan-in), zero bias.
    pub fn init_he(&mut self, rng: &mut crate::rng::SeedRng) {
        let [_, ic, kh, kw] = self.weights.shape();
        let std = (2.0 / (ic * kh * kw) as f64).sqrt();
        for w in self.weights.data_mut() {
            *w = T::from_f64(rng.normal_f64(0.0, std));
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn param_count(&self) -> usize {
        self.weights.numel() + self.bias.numel()
    }
}

pub(crate) fn out_dim(dim: usize, k: usize, stride: usize) -> usize {
    // pad = (k-1)/2 both sides
    (dim + (k - 1) - k) / stride + 1
}

/// Fill `cols` (shape `ic*k*k` x `oh*ow`, row-major) with unfolded windows of
/// one batch item. Out-of-bounds positions are zero.
pub(crate) fn im2col<T: Scalar>(
    x: &[T],
    ic: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    cols: &mut [T],
) {
    let pad = (k - 1) / 2;
    let oh = out_dim(h, k, stride);
    let ow = out_dim(w, k, stride);
    debug_assert_eq!(cols.len(), ic * k * k * oh * ow);
    for c in 0..ic {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut cols[row + oy * ow..row + (oy + 1) * ow];
                    if iy < 0 || iy as usize >= h {
                        dst.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src_row = (c * h + iy as usize) * w;
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix >= 0 && (ix as usize) < w {
                            x[src_row + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add `cols` gradients (same layout as [`im2col`]) back to an item.
pub(crate) fn col2im_add<T: Scalar>(
    cols: &[T],
    ic: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    x_grad: &mut [T],
) {
    let pad = (k - 1) / 2;
    let oh = out_dim(h, k, stride);
    let ow = out_dim(w, k, stride);
    for c in 0..ic {
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * (oh * ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let dst_row = (c * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && (ix as usize) < w {
                            x_grad[dst_row + ix as usize] += cols[row + oy * ow + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_input<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<(usize, usize)> {
    let [_, c, h, w] = x.shape();
    if c != p.in_channels() {
        return Err(MarError::dim(format!(
            "conv expects {} input channels, got {c}",
            p.in_channels()
        )));
    }
    Ok((out_dim(h, p.kernel(), p.stride), out_dim(w, p.kernel(), p.stride)))
}

/// Standard convolution forward pass.
pub fn conv2d_forward<T: Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    let [n, ic, h, w] = x.shape();
    let (oh, ow) = check_input(x, p)?;
    let oc = p.out_channels();
    let k = p.kernel();
    let ick2 = ic * k * k;
    let spatial = oh * ow;

    let mut y = Tensor::zeros([n, oc, oh, ow]);
    let x_items: Vec<&[T]> = x.data().chunks(ic * h * w).collect();
    y.data_mut()
        .par_chunks_mut(oc * spatial)
        .zip(x_items)
        .for_each(|(y_item, x_item)| {
            let mut cols = vec![T::zero(); ick2 * spatial];
            im2col(x_item, ic, h, w, k, p.stride, &mut cols);
            T::gemm(
                oc,
                ick2,
                spatial,
                T::one(),
                p.weights.data(),
                ick2 as isize,
                1,
                &cols,
                spatial as isize,
                1,
                T::zero(),
                y_item,
                spatial as isize,
                1,
            );
            // Unconditional add keeps the arithmetic identical to the
            // partial-convolution path (bitwise, zeros included).
            for o in 0..oc {
                let b = p.bias.data()[o];
                y_item[o * spatial..(o + 1) * spatial]
                    .iter_mut()
                    .for_each(|v| *v += b);
            }
        });
    Ok(y)
}

/// Gradients of [`conv2d_forward`] w.r.t. input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    p: &ConvParams<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, ic, h, w] = x.shape();
    let (oh, ow) = check_input(x, p)?;
    let oc = p.out_channels();
    if upstream.shape() != [n, oc, oh, ow] {
        return Err(MarError::dim(format!(
            "upstream shape {:?} does not match conv output [{n}, {oc}, {oh}, {ow}]",
            upstream.shape()
        )));
    }
    let k = p.kernel();
    let ick2 = ic * k * k;
    let spatial = oh * ow;

    let mut gx = Tensor::zeros(x.shape());
    // Per-item weight/bias gradients, reduced in item order afterwards so the
    // result does not depend on scheduling.
    let per_item: Vec<(Vec<T>, Vec<T>)> = gx
        .data_mut()
        .par_chunks_mut(ic * h * w)
        .zip(x.data().par_chunks(ic * h * w))
        .zip(upstream.data().par_chunks(oc * spatial))
        .map(|((gx_item, x_item), up_item)| {
            let mut cols = vec![T::zero(); ick2 * spatial];
            im2col(x_item, ic, h, w, k, p.stride, &mut cols);

            let mut gw = vec![T::zero(); oc * ick2];
            T::gemm(
                oc,
                spatial,
                ick2,
                T::one(),
                up_item,
                spatial as isize,
                1,
                &cols,
                1,
                spatial as isize,
                T::zero(),
                &mut gw,
                ick2 as isize,
                1,
            );

            let mut gcols = vec![T::zero(); ick2 * spatial];
            T::gemm(
                ick2,
                oc,
                spatial,
                T::one(),
                p.weights.data(),
                1,
                ick2 as isize,
                up_item,
                spatial as isize,
                1,
                T::zero(),
                &mut gcols,
                spatial as isize,
                1,
            );
            col2im_add(&gcols, ic, h, w, k, p.stride, gx_item);

            let gb: Vec<T> = (0..oc)
                .map(|o| up_item[o * spatial..(o + 1) * spatial].iter().copied().sum())
                .collect();
            (gw, gb)
        })
        .collect();

    let mut gw = Tensor::zeros(p.weights.shape());
    let mut gb = Tensor::zeros(p.bias.shape());
    for (gw_item, gb_item) in &per_item {
        for (a, b) in gw.data_mut().iter_mut().zip(gw_item) {
            *a += *b;
        }
        for (a, b) in gb.data_mut().iter_mut().zip(gb_item) {
            *a += *b;
        }
    }
    Ok((gx, gw, gb))
}
