//! Partial convolution: convolution conditioned on valid pixels only.
//!
//! Each window is evaluated on the masked input and renormalized by
//! `(in-bounds window size) / (valid count in window)`, so the response is
//! independent of values at invalid positions. Windows with no valid pixel
//! output zero with the bias omitted. The updated mask marks windows that saw
//! at least one valid pixel.
//!
//! Both counts run over in-bounds positions, which makes a full mask reduce
//! the operator to plain zero-padded convolution bit for bit (the
//! renormalization factor is exactly one everywhere, including borders).
//! The mask is a single channel broadcast over input channels and carries no
//! gradient; masked input positions receive exactly zero gradient.

use super::conv::{col2im_add, im2col, out_dim, ConvParams};
use super::tensor::{Scalar, Tensor};
use crate::error::{MarError, Result};
use rayon::prelude::*;

fn check_mask<T: Scalar>(x: &Tensor<T>, mask: &Tensor<T>) -> Result<()> {
    let [n, _, h, w] = x.shape();
    if mask.shape() != [n, 1, h, w] {
        return Err(MarError::dim(format!(
            "mask shape {:?} must be [{n}, 1, {h}, {w}]",
            mask.shape()
        )));
    }
    if !mask
        .data()
        .iter()
        .all(|&v| v == T::zero() || v == T::one())
    {
        return Err(MarError::config("partial conv mask must be binary"));
    }
    Ok(())
}

/// Per-window in-bounds size and valid count for one item's mask.
/// Returns (area, valid) as u32 grids of oh*ow.
fn window_counts<T: Scalar>(
    mask_item: &[T],
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
) -> (Vec<u32>, Vec<u32>) {
    let pad = (k - 1) / 2;
    let oh = out_dim(h, k, stride);
    let ow = out_dim(w, k, stride);
    let mut area = vec![0u32; oh * ow];
    let mut valid = vec![0u32; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut a = 0u32;
            let mut v = 0u32;
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy as usize >= h {
                    continue;
                }
                let row = iy as usize * w;
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix >= 0 && (ix as usize) < w {
                        a += 1;
                        if mask_item[row + ix as usize] == T::one() {
                            v += 1;
                        }
                    }
                }
            }
            area[oy * ow + ox] = a;
            valid[oy * ow + ox] = v;
        }
    }
    (area, valid)
}

fn masked_input<T: Scalar>(x_item: &[T], mask_item: &[T], ic: usize, hw: usize) -> Vec<T> {
    let mut xm = vec![T::zero(); x_item.len()];
    for c in 0..ic {
        let off = c * hw;
        for i in 0..hw {
            if mask_item[i] == T::one() {
                xm[off + i] = x_item[off + i];
            }
        }
    }
    xm
}

/// Partial convolution forward: returns the output and the updated mask.
pub fn partial_conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    mask: &Tensor<T>,
    p: &ConvParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_mask(x, mask)?;
    let [n, ic, h, w] = x.shape();
    if ic != p.in_channels() {
        return Err(MarError::dim(format!(
            "partial conv expects {} input channels, got {ic}",
            p.in_channels()
        )));
    }
    let k = p.kernel();
    let oc = p.out_channels();
    let oh = out_dim(h, k, p.stride);
    let ow = out_dim(w, k, p.stride);
    let ick2 = ic * k * k;
    let spatial = oh * ow;

    let mut y = Tensor::zeros([n, oc, oh, ow]);
    let mut m_out = Tensor::zeros([n, 1, oh, ow]);
    let x_items: Vec<&[T]> = x.data().chunks(ic * h * w).collect();
    let m_items: Vec<&[T]> = mask.data().chunks(h * w).collect();

    y.data_mut()
        .par_chunks_mut(oc * spatial)
        .zip(m_out.data_mut().par_chunks_mut(spatial))
        .zip(x_items.into_par_iter().zip(m_items))
        .for_each(|((y_item, mo_item), (x_item, mask_item))| {
            let (area, valid) = window_counts(mask_item, h, w, k, p.stride);
            let xm = masked_input(x_item, mask_item, ic, h * w);
            let mut cols = vec![T::zero(); ick2 * spatial];
            im2col(&xm, ic, h, w, k, p.stride, &mut cols);
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
            for (i, (&a, &v)) in area.iter().zip(&valid).enumerate() {
                mo_item[i] = if v > 0 { T::one() } else { T::zero() };
                if v > 0 {
                    let r = T::from_usize(a as usize) / T::from_usize(v as usize);
                    for o in 0..oc {
                        let idx = o * spatial + i;
                        y_item[idx] = y_item[idx] * r + p.bias.data()[o];
                    }
                } else {
                    for o in 0..oc {
                        y_item[o * spatial + i] = T::zero();
                    }
                }
            }
        });
    Ok((y, m_out))
}

/// Gradients of [`partial_conv2d_forward`] w.r.t. input, weights and bias.
/// The renormalization factor is a constant of the mask; the mask itself
/// carries no gradient.
pub fn partial_conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    mask: &Tensor<T>,
    p: &ConvParams<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    check_mask(x, mask)?;
    let [n, ic, h, w] = x.shape();
    let k = p.kernel();
    let oc = p.out_channels();
    let oh = out_dim(h, k, p.stride);
    let ow = out_dim(w, k, p.stride);
    if upstream.shape() != [n, oc, oh, ow] {
        return Err(MarError::dim(format!(
            "upstream shape {:?} does not match output [{n}, {oc}, {oh}, {ow}]",
            upstream.shape()
        )));
    }
    let ick2 = ic * k * k;
    let spatial = oh * ow;

    let mut gx = Tensor::zeros(x.shape());
    let per_item: Vec<(Vec<T>, Vec<T>)> = gx
        .data_mut()
        .par_chunks_mut(ic * h * w)
        .zip(x.data().par_chunks(ic * h * w))
        .zip(mask.data().par_chunks(h * w))
        .zip(upstream.data().par_chunks(oc * spatial))
        .map(|(((gx_item, x_item), mask_item), up_item)| {
            let (area, valid) = window_counts(mask_item, h, w, k, p.stride);
            // Upstream scaled by the per-window factor; zero where no valid
            // pixel existed (those outputs are constant zero).
            let mut g_eff = vec![T::zero(); oc * spatial];
            let mut gb = vec![T::zero(); oc];
            for (i, (&a, &v)) in area.iter().zip(&valid).enumerate() {
                if v == 0 {
                    continue;
                }
                let r = T::from_usize(a as usize) / T::from_usize(v as usize);
                for o in 0..oc {
                    let idx = o * spatial + i;
                    g_eff[idx] = up_item[idx] * r;
                    gb[o] += up_item[idx];
                }
            }

            let xm = masked_input(x_item, mask_item, ic, h * w);
            let mut cols = vec![T::zero(); ick2 * spatial];
            im2col(&xm, ic, h, w, k, p.stride, &mut cols);

            let mut gw = vec![T::zero(); oc * ick2];
            T::gemm(
                oc,
                spatial,
                ick2,
                T::one(),
                &g_eff,
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
                &g_eff,
                spatial as isize,
                1,
                T::zero(),
                &mut gcols,
                spatial as isize,
                1,
            );
            col2im_add(&gcols, ic, h, w, k, p.stride, gx_item);
            // Masked positions receive exactly zero gradient.
            let hw = h * w;
            for c in 0..ic {
                let off = c * hw;
                for i in 0..hw {
                    if mask_item[i] != T::one() {
                        gx_item[off + i] = T::zero();
                    }
                }
            }
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
