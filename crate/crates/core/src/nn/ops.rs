//! Pointwise and resampling operators plus the training loss.

use super::tensor::{Scalar, Tensor};
use crate::error::{MarError, Result};

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Upstream gradient routed through the ReLU mask of the forward input
/// (subgradient zero at exactly zero).
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, upstream: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(x.shape(), upstream.shape());
    let mut g = Tensor::zeros(x.shape());
    for ((gv, &xv), &uv) in g.data_mut().iter_mut().zip(x.data()).zip(upstream.data()) {
        *gv = if xv > T::zero() { uv } else { T::zero() };
    }
    g
}

/// Argmax positions (flat indices into the input data) of a 2x2 max pool.
pub struct MaxPoolIndices {
    pub input_shape: [usize; 4],
    pub argmax: Vec<u32>,
}

/// 2x2 max pooling with stride 2. Ties go to the first (row-major) maximal
/// element. Odd spatial dims are an error; the architectures keep dims even.
pub fn maxpool2x2_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolIndices)> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(MarError::dim(format!(
            "maxpool2x2 requires even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0u32; n * c * oh * ow];
    let mut oi = 0;
    for nn in 0..n {
        for cc in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = x.idx(nn, cc, 2 * oy, 2 * ox);
                    let mut best = x.data()[best_idx];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = x.idx(nn, cc, 2 * oy + dy, 2 * ox + dx);
                        if x.data()[idx] > best {
                            best = x.data()[idx];
                            best_idx = idx;
                        }
                    }
                    y.data_mut()[oi] = best;
                    argmax[oi] = best_idx as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((
        y,
        MaxPoolIndices {
            input_shape: x.shape(),
            argmax,
        },
    ))
}

pub fn maxpool2x2_backward<T: Scalar>(idx: &MaxPoolIndices, upstream: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(idx.argmax.len(), upstream.numel());
    let mut g = Tensor::zeros(idx.input_shape);
    for (&i, &u) in idx.argmax.iter().zip(upstream.data()) {
        g.data_mut()[i as usize] += u;
    }
    g
}

/// Nearest-neighbor 2x upsampling: each pixel becomes a 2x2 block.
pub fn upsample_nearest2x<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let mut y = Tensor::zeros([n, c, 2 * h, 2 * w]);
    for nn in 0..n {
        for cc in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let v = x.at(nn, cc, yy, xx);
                    y.set(nn, cc, 2 * yy, 2 * xx, v);
                    y.set(nn, cc, 2 * yy, 2 * xx + 1, v);
                    y.set(nn, cc, 2 * yy + 1, 2 * xx, v);
                    y.set(nn, cc, 2 * yy + 1, 2 * xx + 1, v);
                }
            }
        }
    }
    y
}

/// Gradient of [`upsample_nearest2x`]: sum over each 2x2 block.
pub fn upsample_nearest2x_backward<T: Scalar>(upstream: &Tensor<T>) -> Tensor<T> {
    let [n, c, h2, w2] = upstream.shape();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut g = Tensor::zeros([n, c, h, w]);
    for nn in 0..n {
        for cc in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let s = upstream.at(nn, cc, 2 * yy, 2 * xx)
                        + upstream.at(nn, cc, 2 * yy, 2 * xx + 1)
                        + upstream.at(nn, cc, 2 * yy + 1, 2 * xx)
                        + upstream.at(nn, cc, 2 * yy + 1, 2 * xx + 1);
                    g.set(nn, cc, yy, xx, s);
                }
            }
        }
    }
    g
}

/// Concatenate along the channel axis.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let [na, ca, ha, wa] = a.shape();
    let [nb, cb, hb, wb] = b.shape();
    if na != nb || ha != hb || wa != wb {
        return Err(MarError::dim(format!(
            "concat shapes {:?} and {:?} disagree",
            a.shape(),
            b.shape()
        )));
    }
    let mut y = Tensor::zeros([na, ca + cb, ha, wa]);
    let plane = ha * wa;
    for n in 0..na {
        let ya = n * (ca + cb) * plane;
        y.data_mut()[ya..ya + ca * plane]
            .copy_from_slice(&a.data()[n * ca * plane..(n + 1) * ca * plane]);
        y.data_mut()[ya + ca * plane..ya + (ca + cb) * plane]
            .copy_from_slice(&b.data()[n * cb * plane..(n + 1) * cb * plane]);
    }
    Ok(y)
}

/// Split a channel-concatenated gradient back into the two parts.
pub fn split_channels<T: Scalar>(g: &Tensor<T>, ca: usize) -> (Tensor<T>, Tensor<T>) {
    let [n, c, h, w] = g.shape();
    debug_assert!(ca <= c);
    let cb = c - ca;
    let mut a = Tensor::zeros([n, ca, h, w]);
    let mut b = Tensor::zeros([n, cb, h, w]);
    let plane = h * w;
    for nn in 0..n {
        let gb = nn * c * plane;
        a.data_mut()[nn * ca * plane..(nn + 1) * ca * plane]
            .copy_from_slice(&g.data()[gb..gb + ca * plane]);
        b.data_mut()[nn * cb * plane..(nn + 1) * cb * plane]
            .copy_from_slice(&g.data()[gb + ca * plane..gb + c * plane]);
    }
    (a, b)
}

/// Reflect-pad the bottom/right edges (pad must be smaller than the dim).
pub fn reflect_pad2d<T: Scalar>(x: &Tensor<T>, pad_h: usize, pad_w: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape();
    if pad_h >= h || pad_w >= w {
        return Err(MarError::config(format!(
            "reflect padding ({pad_h}, {pad_w}) too large for {h}x{w}"
        )));
    }
    let (nh, nw) = (h + pad_h, w + pad_w);
    let mut y = Tensor::zeros([n, c, nh, nw]);
    for nn in 0..n {
        for cc in 0..c {
            for yy in 0..nh {
                let sy = if yy < h { yy } else { 2 * h - 2 - yy };
                for xx in 0..nw {
                    let sx = if xx < w { xx } else { 2 * w - 2 - xx };
                    let v = x.at(nn, cc, sy, sx);
                    y.set(nn, cc, yy, xx, v);
                }
            }
        }
    }
    Ok(y)
}

/// Keep the top-left `h x w` region.
pub fn crop2d<T: Scalar>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let [n, c, xh, xw] = x.shape();
    debug_assert!(h <= xh && w <= xw);
    let mut y = Tensor::zeros([n, c, h, w]);
    for nn in 0..n {
        for cc in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let v = x.at(nn, cc, yy, xx);
                    y.set(nn, cc, yy, xx, v);
                }
            }
        }
    }
    y
}

/// Embed a gradient of the cropped region into the padded shape (zeros
/// elsewhere); adjoint of [`crop2d`].
pub fn crop2d_backward<T: Scalar>(g: &Tensor<T>, padded: [usize; 4]) -> Tensor<T> {
    let [n, c, h, w] = g.shape();
    let mut y = Tensor::zeros(padded);
    for nn in 0..n {
        for cc in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let v = g.at(nn, cc, yy, xx);
                    y.set(nn, cc, yy, xx, v);
                }
            }
        }
    }
    y
}

pub fn clamp01<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()).min(T::one()))
}

/// Mean over all elements of `w * |pred - target|` with `w = hole_weight` on
/// the hole and 1 elsewhere. Returns the loss and its gradient w.r.t. `pred`
/// (subgradient zero at exact ties). The hole mask is a single channel
/// broadcast over prediction channels; `hole = 1` marks hole pixels.
pub fn l1_loss_weighted<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    hole: &Tensor<T>,
    hole_weight: T,
) -> Result<(T, Tensor<T>)> {
    let [n, c, h, w] = pred.shape();
    if target.shape() != pred.shape() {
        return Err(MarError::dim(format!(
            "loss shapes {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    if hole.shape() != [n, 1, h, w] {
        return Err(MarError::dim(format!(
            "hole mask shape {:?} must be [{n}, 1, {h}, {w}]",
            hole.shape()
        )));
    }
    let numel = pred.numel();
    let inv = T::one() / T::from_usize(numel);
    let plane = h * w;
    let mut grad = Tensor::zeros(pred.shape());
    let mut acc = 0.0f64;
    for nn in 0..n {
        for cc in 0..c {
            let off = (nn * c + cc) * plane;
            let hoff = nn * plane;
            for i in 0..plane {
                let d = pred.data()[off + i] - target.data()[off + i];
                let wgt = if hole.data()[hoff + i] == T::one() {
                    hole_weight
                } else {
                    T::one()
                };
                acc += (wgt * d.abs()).to_f64();
                grad.data_mut()[off + i] = if d > T::zero() {
                    wgt * inv
                } else if d < T::zero() {
                    -wgt * inv
                } else {
                    T::zero()
                };
            }
        }
    }
    Ok((T::from_f64(acc / numel as f64), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    #[test]
    fn relu_basic() {
        let x = Tensor::from_vec([1, 1, 1, 3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let up = Tensor::filled([1, 1, 1, 3], 1.0);
        assert_eq!(relu_backward(&x, &up).data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_constant_routes_to_first_element() {
        let x = Tensor::<f64>::filled([1, 1, 4, 4], 2.5);
        let (y, idx) = maxpool2x2_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
        // First (row-major) element of each window wins ties.
        assert_eq!(idx.argmax, vec![0, 2, 8, 10]);
        let up = Tensor::filled([1, 1, 2, 2], 1.0);
        let g = maxpool2x2_backward(&idx, &up);
        assert_eq!(g.data()[0], 1.0);
        assert_eq!(g.data()[1], 0.0);
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        let x = Tensor::<f64>::zeros([1, 1, 5, 4]);
        assert!(maxpool2x2_forward(&x).is_err());
    }

    #[test]
    fn upsample_replicates_blocks() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_nearest2x(&x);
        assert_eq!(y.at(0, 0, 0, 0), 1.0);
        assert_eq!(y.at(0, 0, 0, 1), 1.0);
        assert_eq!(y.at(0, 0, 1, 1), 1.0);
        assert_eq!(y.at(0, 0, 3, 3), 4.0);
        let g = upsample_nearest2x_backward(&y);
        assert_eq!(g.data(), &[4.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn concat_then_split_roundtrips() {
        let mut rng = SeedRng::new(1);
        let a = Tensor::from_vec(
            [2, 3, 2, 2],
            (0..24).map(|_| rng.uniform_f64(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let b = Tensor::from_vec(
            [2, 2, 2, 2],
            (0..16).map(|_| rng.uniform_f64(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let y = concat_channels(&a, &b).unwrap();
        assert_eq!(y.shape(), [2, 5, 2, 2]);
        let (a2, b2) = split_channels(&y, 3);
        assert_eq!(a.data(), a2.data());
        assert_eq!(b.data(), b2.data());
    }

    #[test]
    fn reflect_pad_mirrors_edges() {
        let x = Tensor::from_vec([1, 1, 3, 3], (0..9).map(|i| i as f64).collect()).unwrap();
        let y = reflect_pad2d(&x, 2, 1).unwrap();
        assert_eq!(y.shape(), [1, 1, 5, 4]);
        // Row 3 mirrors row 1, row 4 mirrors row 0.
        assert_eq!(y.at(0, 0, 3, 0), 3.0);
        assert_eq!(y.at(0, 0, 4, 0), 0.0);
        // Col 3 mirrors col 1.
        assert_eq!(y.at(0, 0, 0, 3), 1.0);
        let back = crop2d(&y, 3, 3);
        assert_eq!(back.data(), x.data());
    }

    #[test]
    fn loss_zero_when_equal_and_plain_mae_when_weight_one() {
        let mut rng = SeedRng::new(2);
        let pred = Tensor::from_vec(
            [1, 1, 3, 3],
            (0..9).map(|_| rng.uniform_f64(-1.0, 1.0)).collect(),
        )
        .unwrap();
        let hole = Tensor::zeros([1, 1, 3, 3]);
        let (l, g) = l1_loss_weighted(&pred, &pred, &hole, 6.0).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.data().iter().all(|&v| v == 0.0));

        let target = Tensor::zeros([1, 1, 3, 3]);
        let (l1, _) = l1_loss_weighted(&pred, &target, &hole, 1.0).unwrap();
        let mae: f64 = pred.data().iter().map(|v| v.abs()).sum::<f64>() / 9.0;
        assert!((l1 - mae).abs() < 1e-12);
    }

    #[test]
    fn loss_weights_hole_pixels() {
        let pred = Tensor::from_vec([1, 1, 1, 2], vec![1.0f64, 1.0]).unwrap();
        let target = Tensor::zeros([1, 1, 1, 2]);
        let hole = Tensor::from_vec([1, 1, 1, 2], vec![1.0f64, 0.0]).unwrap();
        let (l, g) = l1_loss_weighted(&pred, &target, &hole, 6.0).unwrap();
        assert!((l - (6.0 + 1.0) / 2.0).abs() < 1e-12);
        assert_eq!(g.data(), &[3.0, 0.5]);
    }
}
