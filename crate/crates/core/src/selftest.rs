//! Oracle suites behind the `selftest` CLI subcommand.
//!
//! [`reference`] holds independent verification implementations: closed
//! forms, naive loops and brute-force morphology. They deliberately avoid
//! the optimized code paths they are used to check, and they back both these
//! suites and the unit tests.

use crate::corruption::SinogramMask;
use crate::limar::limar_inpaint;
use crate::nn::{
    self, conv2d_backward, conv2d_forward, l1_loss_weighted, maxpool2x2_backward,
    maxpool2x2_forward, partial_conv2d_backward, partial_conv2d_forward, relu_backward,
    relu_forward, ConvParams, Tensor,
};
use crate::rng::SeedRng;
use crate::tomo::{
    backproject, fbp_filter, iradon_fbp, radon, FilterKind, Image2D, ProjectionGeometry, Sinogram,
};

/// Independent oracle implementations.
pub mod reference {
    use super::*;
    use crate::shapegen::VoxelMask;

    /// Chord length of a line at signed distance `s` through a disk of the
    /// given radius.
    pub fn disk_chord_length(radius: f64, s: f64) -> f64 {
        if s.abs() >= radius {
            0.0
        } else {
            2.0 * (radius * radius - s * s).sqrt()
        }
    }

    fn smoothstep01(t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }

    /// Deterministic smooth head-like phantom: soft elliptical ring, gently
    /// textured interior, one hypodense dip. All transitions are smoothstep
    /// blends so the reconstruction error is dominated by the operator, not
    /// by edges.
    pub fn smooth_phantom(size: usize) -> Image2D {
        let s = size as f64;
        let (cx, cy) = (s / 2.0, s / 2.0);
        let (ax_o, ay_o) = (0.42 * s, 0.46 * s);
        let (ax_i, ay_i) = (ax_o - 4.0, ay_o - 4.0);
        let mut pixels = vec![0.0f64; size * size];
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let r_o = ((dx / ax_o).powi(2) + (dy / ay_o).powi(2)).sqrt();
                let r_i = ((dx / ax_i).powi(2) + (dy / ay_i).powi(2)).sqrt();
                let d_o = (1.0 - r_o) * ax_o.min(ay_o);
                let d_i = (1.0 - r_i) * ax_i.min(ay_i);
                let mut v = -1000.0;
                v += (900.0 - v) * smoothstep01(d_o / 3.0);
                let bump = 25.0 * (-((dx - 0.1 * s).powi(2) + (dy + 0.08 * s).powi(2))
                    / (2.0 * (s / 6.0).powi(2)))
                .exp();
                let dip = -30.0
                    * (-((dx + 0.08 * s).powi(2) + (dy - 0.05 * s).powi(2))
                        / (2.0 * (s / 10.0).powi(2)))
                    .exp();
                let interior = 40.0 + bump + dip;
                v += (interior - v) * smoothstep01(d_i / 3.0);
                pixels[y * size + x] = v;
            }
        }
        Image2D::new(size, 1.0, pixels).expect("valid phantom")
    }

    /// RMSE between two images restricted to the inscribed circle.
    pub fn rmse_in_circle(a: &Image2D, b: &Image2D) -> f64 {
        assert_eq!(a.size(), b.size());
        let mut acc = 0.0;
        let mut n = 0usize;
        for y in 0..a.size() {
            for x in 0..a.size() {
                if a.in_reconstruction_circle(y, x) {
                    acc += (a.get(y, x) - b.get(y, x)).powi(2);
                    n += 1;
                }
            }
        }
        (acc / n as f64).sqrt()
    }

    pub fn dynamic_range(img: &Image2D) -> f64 {
        let mut lo = f64::MAX;
        let mut hi = f64::MIN;
        for &v in img.pixels() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi - lo
    }

    /// Rotate an image by `alpha` radians about its center (bilinear, zero
    /// outside). Rotation convention matches the projection geometry: the
    /// sinogram of the rotated image at angle `theta` equals the original at
    /// `theta - alpha`.
    pub fn rotate_image(img: &Image2D, alpha: f64) -> Image2D {
        let size = img.size();
        let c = (size as f64 - 1.0) / 2.0;
        let (sin_a, cos_a) = alpha.sin_cos();
        let mut pixels = vec![0.0f64; size * size];
        for y in 0..size {
            for x in 0..size {
                let (px, py) = (x as f64 - c, y as f64 - c);
                // Source point: rotate by -alpha.
                let sx = px * cos_a + py * sin_a + c;
                let sy = -px * sin_a + py * cos_a + c;
                let x0 = sx.floor();
                let y0 = sy.floor();
                let (fx, fy) = (sx - x0, sy - y0);
                let mut acc = 0.0;
                for (dy, dx, w) in [
                    (0i64, 0i64, (1.0 - fx) * (1.0 - fy)),
                    (0, 1, fx * (1.0 - fy)),
                    (1, 0, (1.0 - fx) * fy),
                    (1, 1, fx * fy),
                ] {
                    let (ix, iy) = (x0 as i64 + dx, y0 as i64 + dy);
                    if ix >= 0 && (ix as usize) < size && iy >= 0 && (iy as usize) < size {
                        acc += w * img.get(iy as usize, ix as usize);
                    }
                }
                pixels[y * size + x] = acc;
            }
        }
        Image2D::new(size, img.pixel_spacing(), pixels).expect("rotation keeps values finite")
    }

    /// Direct sextuple-loop convolution, the oracle for the GEMM path.
    pub fn conv2d_naive<T: nn::Scalar>(x: &Tensor<T>, p: &ConvParams<T>) -> Tensor<T> {
        let [n, ic, h, w] = x.shape();
        let k = p.kernel();
        let pad = (k - 1) / 2;
        let oh = (h - 1) / p.stride + 1;
        let ow = (w - 1) / p.stride + 1;
        let oc = p.out_channels();
        let mut y = Tensor::zeros([n, oc, oh, ow]);
        for nn_ in 0..n {
            for o in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = p.bias.data()[o];
                        for c in 0..ic {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * p.stride + ky) as isize - pad as isize;
                                    let ix = (ox * p.stride + kx) as isize - pad as isize;
                                    if iy >= 0
                                        && (iy as usize) < h
                                        && ix >= 0
                                        && (ix as usize) < w
                                    {
                                        acc += p.weights.at(o, c, ky, kx)
                                            * x.at(nn_, c, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        y.set(nn_, o, oy, ox, acc);
                    }
                }
            }
        }
        y
    }

    /// Direct per-window partial convolution, the oracle for the fast path.
    pub fn pconv2d_naive<T: nn::Scalar>(
        x: &Tensor<T>,
        mask: &Tensor<T>,
        p: &ConvParams<T>,
    ) -> (Tensor<T>, Tensor<T>) {
        let [n, ic, h, w] = x.shape();
        let k = p.kernel();
        let pad = (k - 1) / 2;
        let oh = (h - 1) / p.stride + 1;
        let ow = (w - 1) / p.stride + 1;
        let oc = p.out_channels();
        let mut y = Tensor::zeros([n, oc, oh, ow]);
        let mut m_out = Tensor::zeros([n, 1, oh, ow]);
        for nn_ in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut area = 0usize;
                    let mut valid = 0usize;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * p.stride + ky) as isize - pad as isize;
                            let ix = (ox * p.stride + kx) as isize - pad as isize;
                            if iy >= 0 && (iy as usize) < h && ix >= 0 && (ix as usize) < w {
                                area += 1;
                                if mask.at(nn_, 0, iy as usize, ix as usize) == T::one() {
                                    valid += 1;
                                }
                            }
                        }
                    }
                    if valid == 0 {
                        continue;
                    }
                    m_out.set(nn_, 0, oy, ox, T::one());
                    let ratio = T::from_usize(area) / T::from_usize(valid);
                    for o in 0..oc {
                        let mut acc = T::zero();
                        for c in 0..ic {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * p.stride + ky) as isize - pad as isize;
                                    let ix = (ox * p.stride + kx) as isize - pad as isize;
                                    if iy >= 0
                                        && (iy as usize) < h
                                        && ix >= 0
                                        && (ix as usize) < w
                                        && mask.at(nn_, 0, iy as usize, ix as usize) == T::one()
                                    {
                                        acc += p.weights.at(o, c, ky, kx)
                                            * x.at(nn_, c, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        y.set(nn_, o, oy, ox, acc * ratio + p.bias.data()[o]);
                    }
                }
            }
        }
        (y, m_out)
    }

    /// Voxel count of a discrete Euclidean ball by exhaustive enumeration.
    pub fn ball_voxel_count(radius: i64) -> usize {
        let mut count = 0;
        for z in -radius..=radius {
            for y in -radius..=radius {
                for x in -radius..=radius {
                    if x * x + y * y + z * z <= radius * radius {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Brute-force closing with the same boundary conventions as the fast
    /// path: clipped dilation, erosion with out-of-grid treated as covered.
    pub fn close_bruteforce(m: &VoxelMask, radius: usize) -> VoxelMask {
        let dims = m.dims();
        let r = radius as i64;
        let mut se = Vec::new();
        for dz in -r..=r {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy + dz * dz <= r * r {
                        se.push((dx, dy, dz));
                    }
                }
            }
        }
        let inside = |x: i64, y: i64, z: i64| {
            x >= 0
                && (x as usize) < dims.0
                && y >= 0
                && (y as usize) < dims.1
                && z >= 0
                && (z as usize) < dims.2
        };
        let mut dil = VoxelMask::empty(dims);
        for z in 0..dims.2 as i64 {
            for y in 0..dims.1 as i64 {
                for x in 0..dims.0 as i64 {
                    let hit = se.iter().any(|&(dx, dy, dz)| {
                        inside(x - dx, y - dy, z - dz)
                            && m.get((x - dx) as usize, (y - dy) as usize, (z - dz) as usize)
                    });
                    if hit {
                        dil.set(x as usize, y as usize, z as usize, true);
                    }
                }
            }
        }
        let mut out = VoxelMask::empty(dims);
        for z in 0..dims.2 as i64 {
            for y in 0..dims.1 as i64 {
                for x in 0..dims.0 as i64 {
                    let ok = se.iter().all(|&(dx, dy, dz)| {
                        !inside(x + dx, y + dy, z + dz)
                            || dil.get((x + dx) as usize, (y + dy) as usize, (z + dz) as usize)
                    });
                    if ok {
                        out.set(x as usize, y as usize, z as usize, true);
                    }
                }
            }
        }
        out
    }

    /// Central finite differences of a scalar function, compared against an
    /// analytic gradient. Returns the max relative error.
    pub fn finite_diff_max_rel(
        mut eval: impl FnMut(&[f64]) -> f64,
        x0: &[f64],
        analytic: &[f64],
        h: f64,
    ) -> f64 {
        assert_eq!(x0.len(), analytic.len());
        let mut xs = x0.to_vec();
        let mut worst = 0.0f64;
        for i in 0..xs.len() {
            let keep = xs[i];
            xs[i] = keep + h;
            let fp = eval(&xs);
            xs[i] = keep - h;
            let fm = eval(&xs);
            xs[i] = keep;
            let numeric = (fp - fm) / (2.0 * h);
            let denom = numeric.abs().max(analytic[i].abs()).max(1e-3);
            worst = worst.max((numeric - analytic[i]).abs() / denom);
        }
        worst
    }
}

/// Result of one named verification check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn random_image(size: usize, rng: &mut SeedRng) -> Image2D {
    let pixels = (0..size * size)
        .map(|_| rng.uniform_f64(-1.0, 1.0))
        .collect();
    Image2D::new(size, 1.0, pixels).expect("valid image")
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Linearity of the four tomography operators plus the analytic disk and
/// round-trip oracles.
pub fn tomo_suite() -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = SeedRng::new(0xAD01);

    // Linearity of all four operators at 1e-9 relative.
    let geom = ProjectionGeometry::for_image(24, 14, 1.0).unwrap();
    let a = random_image(24, &mut rng);
    let b = random_image(24, &mut rng);
    let mut sum = a.clone();
    for (s, v) in sum.pixels_mut().iter_mut().zip(b.pixels()) {
        *s += v;
    }
    let (ra, rb, rs) = (
        radon(&a, &geom).unwrap(),
        radon(&b, &geom).unwrap(),
        radon(&sum, &geom).unwrap(),
    );
    let lin_radon = rel_l2(
        &ra.values()
            .iter()
            .zip(rb.values())
            .map(|(x, y)| x + y)
            .collect::<Vec<_>>(),
        rs.values(),
    );

    let sum_sino = Sinogram::new(
        ra.n_angles(),
        ra.n_bins(),
        ra.bin_spacing(),
        ra.values().iter().zip(rb.values()).map(|(x, y)| x + y).collect(),
    )
    .unwrap();
    let bp = |s: &Sinogram| backproject(s, &geom, 24, 1.0).unwrap();
    let lin_bp = rel_l2(
        &bp(&ra)
            .pixels()
            .iter()
            .zip(bp(&rb).pixels())
            .map(|(x, y)| x + y)
            .collect::<Vec<_>>(),
        bp(&sum_sino).pixels(),
    );
    let flt = |s: &Sinogram| fbp_filter(s, FilterKind::RamLak);
    let lin_flt = rel_l2(
        &flt(&ra)
            .values()
            .iter()
            .zip(flt(&rb).values())
            .map(|(x, y)| x + y)
            .collect::<Vec<_>>(),
        flt(&sum_sino).values(),
    );
    let ir = |s: &Sinogram| iradon_fbp(s, &geom, 24, 1.0, FilterKind::RamLak).unwrap();
    let lin_ir = rel_l2(
        &ir(&ra)
            .pixels()
            .iter()
            .zip(ir(&rb).pixels())
            .map(|(x, y)| x + y)
            .collect::<Vec<_>>(),
        ir(&sum_sino).pixels(),
    );
    let worst = lin_radon.max(lin_bp).max(lin_flt).max(lin_ir);
    out.push(Check::new(
        "tomo.linearity",
        worst < 1e-9,
        format!("max relative deviation {worst:.2e} (bound 1e-9)"),
    ));

    // Disk projections against the analytic chord length.
    let disk = {
        let size = 64;
        let c = (size as f64 - 1.0) / 2.0;
        let mut img = Image2D::zeros(size, 1.0).unwrap();
        for y in 0..size {
            for x in 0..size {
                let d = ((x as f64 - c).powi(2) + (y as f64 - c).powi(2)).sqrt();
                if d <= 10.0 {
                    img.set(y, x, 1.0);
                }
            }
        }
        img
    };
    let geom64 = ProjectionGeometry::for_image(64, 45, 1.0).unwrap();
    let sino = radon(&disk, &geom64).unwrap();
    let bc = (geom64.n_bins() - 1) as f64 / 2.0;
    let mut max_err = 0.0f64;
    for a_idx in 0..geom64.n_angles() {
        for j in 0..geom64.n_bins() {
            let s = (j as f64 - bc) * geom64.bin_spacing();
            max_err = max_err.max((sino.row(a_idx)[j] - reference::disk_chord_length(10.0, s)).abs());
        }
    }
    out.push(Check::new(
        "tomo.disk_chord",
        max_err < 0.5,
        format!("max abs error {max_err:.3} (bound 0.5)"),
    ));

    // FBP round-trip on a smooth 128 phantom at 180 angles.
    let phantom = reference::smooth_phantom(128);
    let geom128 = ProjectionGeometry::for_image(128, 180, 1.0).unwrap();
    let rec = iradon_fbp(
        &radon(&phantom, &geom128).unwrap(),
        &geom128,
        128,
        1.0,
        FilterKind::RamLak,
    )
    .unwrap();
    let rmse = reference::rmse_in_circle(&rec, &phantom);
    let range = reference::dynamic_range(&phantom);
    out.push(Check::new(
        "tomo.roundtrip",
        rmse < 0.03 * range,
        format!(
            "rmse {rmse:.2} = {:.2}% of range {range:.0} (bound 3%)",
            100.0 * rmse / range
        ),
    ));
    out
}

const FD_SEEDS: u64 = 20;
const FD_H: f64 = 1e-4;
const FD_BOUND: f64 = 1e-4;

fn random_tensor(shape: [usize; 4], rng: &mut SeedRng) -> Tensor<f64> {
    let data = (0..shape.iter().product())
        .map(|_| rng.uniform_f64(-1.0, 1.0))
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn random_binary(shape: [usize; 4], rng: &mut SeedRng, p_one: f64) -> Tensor<f64> {
    let data = (0..shape.iter().product())
        .map(|_| {
            if rng.uniform_f64(0.0, 1.0) < p_one {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Finite-difference checks for every differentiable operator, in f64.
pub fn gradient_suite() -> Vec<Check> {
    let mut out = Vec::new();

    // conv2d: gx, gw, gb against central differences of sum(y * r).
    let mut worst_conv = 0.0f64;
    for seed in 0..FD_SEEDS {
        let mut rng = SeedRng::new(0xC0 + seed);
        let stride = if seed % 2 == 0 { 1 } else { 2 };
        let (h, w) = if stride == 1 { (5, 5) } else { (6, 6) };
        let x = random_tensor([1, 2, h, w], &mut rng);
        let mut p = ConvParams::new(3, 2, 3, stride).unwrap();
        p.init_he(&mut rng);
        for b in p.bias.data_mut() {
            *b = rng.uniform_f64(-0.5, 0.5);
        }
        let y0 = conv2d_forward(&x, &p).unwrap();
        let r = random_tensor(y0.shape(), &mut rng);
        let proj = |y: &Tensor<f64>| -> f64 {
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let (gx, gw, gb) = conv2d_backward(&x, &p, &r).unwrap();

        let ef = |xs: &[f64]| {
            let xt = Tensor::from_vec(x.shape(), xs.to_vec()).unwrap();
            proj(&conv2d_forward(&xt, &p).unwrap())
        };
        worst_conv = worst_conv.max(reference::finite_diff_max_rel(ef, x.data(), gx.data(), FD_H));
        let ew = |ws: &[f64]| {
            let mut p2 = p.clone();
            p2.weights.data_mut().copy_from_slice(ws);
            proj(&conv2d_forward(&x, &p2).unwrap())
        };
        worst_conv =
            worst_conv.max(reference::finite_diff_max_rel(ew, p.weights.data(), gw.data(), FD_H));
        let eb = |bs: &[f64]| {
            let mut p2 = p.clone();
            p2.bias.data_mut().copy_from_slice(bs);
            proj(&conv2d_forward(&x, &p2).unwrap())
        };
        worst_conv =
            worst_conv.max(reference::finite_diff_max_rel(eb, p.bias.data(), gb.data(), FD_H));
    }
    out.push(Check::new(
        "grad.conv2d",
        worst_conv < FD_BOUND,
        format!("max relative error {worst_conv:.2e} (bound 1e-4, {FD_SEEDS} seeds)"),
    ));

    // partial conv: same scheme with a random mask.
    let mut worst_pc = 0.0f64;
    for seed in 0..FD_SEEDS {
        let mut rng = SeedRng::new(0xD0 + seed);
        let stride = if seed % 2 == 0 { 1 } else { 2 };
        let (h, w) = if stride == 1 { (5, 5) } else { (6, 6) };
        let x = random_tensor([1, 2, h, w], &mut rng);
        let m = random_binary([1, 1, h, w], &mut rng, 0.7);
        let mut p = ConvParams::new(3, 2, 3, stride).unwrap();
        p.init_he(&mut rng);
        for b in p.bias.data_mut() {
            *b = rng.uniform_f64(-0.5, 0.5);
        }
        let (y0, _) = partial_conv2d_forward(&x, &m, &p).unwrap();
        let r = random_tensor(y0.shape(), &mut rng);
        let proj = |y: &Tensor<f64>| -> f64 {
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let (gx, gw, gb) = partial_conv2d_backward(&x, &m, &p, &r).unwrap();

        let ef = |xs: &[f64]| {
            let xt = Tensor::from_vec(x.shape(), xs.to_vec()).unwrap();
            proj(&partial_conv2d_forward(&xt, &m, &p).unwrap().0)
        };
        worst_pc = worst_pc.max(reference::finite_diff_max_rel(ef, x.data(), gx.data(), FD_H));
        let ew = |ws: &[f64]| {
            let mut p2 = p.clone();
            p2.weights.data_mut().copy_from_slice(ws);
            proj(&partial_conv2d_forward(&x, &m, &p2).unwrap().0)
        };
        worst_pc =
            worst_pc.max(reference::finite_diff_max_rel(ew, p.weights.data(), gw.data(), FD_H));
        let eb = |bs: &[f64]| {
            let mut p2 = p.clone();
            p2.bias.data_mut().copy_from_slice(bs);
            proj(&partial_conv2d_forward(&x, &m, &p2).unwrap().0)
        };
        worst_pc =
            worst_pc.max(reference::finite_diff_max_rel(eb, p.bias.data(), gb.data(), FD_H));
    }
    out.push(Check::new(
        "grad.partial_conv2d",
        worst_pc < FD_BOUND,
        format!("max relative error {worst_pc:.2e} (bound 1e-4, {FD_SEEDS} seeds)"),
    ));

    // relu + maxpool composite.
    let mut worst_pool = 0.0f64;
    for seed in 0..FD_SEEDS {
        let mut rng = SeedRng::new(0xE0 + seed);
        let x = random_tensor([1, 2, 6, 6], &mut rng);
        let r = random_tensor([1, 2, 3, 3], &mut rng);
        let forward = |xs: &[f64]| -> f64 {
            let xt = Tensor::from_vec(x.shape(), xs.to_vec()).unwrap();
            let a = relu_forward(&xt);
            let (yp, _) = maxpool2x2_forward(&a).unwrap();
            yp.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let a = relu_forward(&x);
        let (_, idx) = maxpool2x2_forward(&a).unwrap();
        let g_pool = maxpool2x2_backward(&idx, &r);
        let gx = relu_backward(&x, &g_pool);
        worst_pool =
            worst_pool.max(reference::finite_diff_max_rel(forward, x.data(), gx.data(), FD_H));
    }
    out.push(Check::new(
        "grad.relu_maxpool",
        worst_pool < FD_BOUND,
        format!("max relative error {worst_pool:.2e} (bound 1e-4, {FD_SEEDS} seeds)"),
    ));

    // upsample (linear operator).
    let mut worst_up = 0.0f64;
    for seed in 0..FD_SEEDS {
        let mut rng = SeedRng::new(0xF0 + seed);
        let x = random_tensor([1, 2, 3, 3], &mut rng);
        let r = random_tensor([1, 2, 6, 6], &mut rng);
        let forward = |xs: &[f64]| -> f64 {
            let xt = Tensor::from_vec(x.shape(), xs.to_vec()).unwrap();
            nn::upsample_nearest2x(&xt)
                .data()
                .iter()
                .zip(r.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let gx = nn::upsample_nearest2x_backward(&r);
        worst_up =
            worst_up.max(reference::finite_diff_max_rel(forward, x.data(), gx.data(), FD_H));
    }
    out.push(Check::new(
        "grad.upsample",
        worst_up < FD_BOUND,
        format!("max relative error {worst_up:.2e} (bound 1e-4, {FD_SEEDS} seeds)"),
    ));

    // weighted L1 loss (away from ties).
    let mut worst_loss = 0.0f64;
    for seed in 0..FD_SEEDS {
        let mut rng = SeedRng::new(0x1F0 + seed);
        let pred = random_tensor([1, 1, 5, 5], &mut rng);
        let target = random_tensor([1, 1, 5, 5], &mut rng);
        let hole = random_binary([1, 1, 5, 5], &mut rng, 0.4);
        let (_, g) = l1_loss_weighted(&pred, &target, &hole, 6.0).unwrap();
        let forward = |ps: &[f64]| -> f64 {
            let pt = Tensor::from_vec(pred.shape(), ps.to_vec()).unwrap();
            l1_loss_weighted(&pt, &target, &hole, 6.0).unwrap().0
        };
        worst_loss =
            worst_loss.max(reference::finite_diff_max_rel(forward, pred.data(), g.data(), FD_H));
    }
    out.push(Check::new(
        "grad.l1_loss",
        worst_loss < FD_BOUND,
        format!("max relative error {worst_loss:.2e} (bound 1e-4, {FD_SEEDS} seeds)"),
    ));
    out
}

/// Bitwise partial-convolution contracts over 100 random instances.
pub fn pconv_contract_suite() -> Vec<Check> {
    let mut all_ones_ok = true;
    let mut independence_ok = true;
    let mut backward_ok = true;
    for seed in 0..100u64 {
        let mut rng = SeedRng::new(0xAB00 + seed);
        let stride = if seed % 2 == 0 { 1 } else { 2 };
        let (h, w) = (8, 8);
        let ic = 1 + (seed % 3) as usize;
        let oc = 1 + (seed % 4) as usize;
        let x = {
            let data = (0..ic * h * w).map(|_| rng.uniform_f64(-2.0, 2.0) as f32).collect();
            Tensor::<f32>::from_vec([1, ic, h, w], data).unwrap()
        };
        let mut p = ConvParams::<f32>::new(oc, ic, 3, stride).unwrap();
        p.init_he(&mut rng);
        for b in p.bias.data_mut() {
            *b = rng.uniform_f64(-0.5, 0.5) as f32;
        }

        // All-ones mask: bitwise equality with the standard convolution.
        let ones = Tensor::<f32>::filled([1, 1, h, w], 1.0);
        let (y, m2) = partial_conv2d_forward(&x, &ones, &p).unwrap();
        let y_ref = conv2d_forward(&x, &p).unwrap();
        if y.data() != y_ref.data() || m2.data().iter().any(|&v| v != 1.0) {
            all_ones_ok = false;
        }
        let up = {
            let data = (0..y.numel()).map(|_| rng.uniform_f64(-1.0, 1.0) as f32).collect();
            Tensor::<f32>::from_vec(y.shape(), data).unwrap()
        };
        let (gx, gw, gb) = partial_conv2d_backward(&x, &ones, &p, &up).unwrap();
        let (gx_r, gw_r, gb_r) = conv2d_backward(&x, &p, &up).unwrap();
        if gx.data() != gx_r.data() || gw.data() != gw_r.data() || gb.data() != gb_r.data() {
            backward_ok = false;
        }

        // Masked-value independence, bitwise.
        let m = {
            let data = (0..h * w)
                .map(|_| if rng.uniform_f64(0.0, 1.0) < 0.6 { 1.0f32 } else { 0.0 })
                .collect();
            Tensor::<f32>::from_vec([1, 1, h, w], data).unwrap()
        };
        let (y1, m1) = partial_conv2d_forward(&x, &m, &p).unwrap();
        let mut x2 = x.clone();
        for i in 0..h * w {
            if m.data()[i] == 0.0 {
                for c in 0..ic {
                    x2.data_mut()[c * h * w + i] = rng.uniform_f64(-50.0, 50.0) as f32;
                }
            }
        }
        let (y2, m2b) = partial_conv2d_forward(&x2, &m, &p).unwrap();
        if y1.data() != y2.data() || m1.data() != m2b.data() {
            independence_ok = false;
        }
    }
    vec![
        Check::new(
            "pconv.all_ones_equivalence",
            all_ones_ok,
            "bitwise equality with conv2d on 100 instances".into(),
        ),
        Check::new(
            "pconv.masked_independence",
            independence_ok,
            "bitwise invariance to masked inputs on 100 instances".into(),
        ),
        Check::new(
            "pconv.all_ones_backward",
            backward_ok,
            "bitwise gradient equality with conv2d on 100 instances".into(),
        ),
    ]
}

/// Li-MAR exactness on piecewise-linear rows and the no-overshoot invariant.
pub fn limar_suite() -> Vec<Check> {
    let mut exact_ok = true;
    let mut worst_exact = 0.0f64;
    let mut rng = SeedRng::new(0x11A7);
    for _ in 0..200 {
        let n = 48;
        let mut anchors = vec![0usize, n - 1];
        anchors.push(rng.uniform_usize(6, 18));
        anchors.push(rng.uniform_usize(24, 40));
        anchors.sort_unstable();
        let vals: Vec<f64> = anchors.iter().map(|_| rng.uniform_f64(-5.0, 5.0)).collect();
        let mut row = vec![0.0f64; n];
        for wnd in 0..anchors.len() - 1 {
            let (i0, i1) = (anchors[wnd], anchors[wnd + 1]);
            for i in i0..=i1 {
                let f = (i - i0) as f64 / (i1 - i0) as f64;
                row[i] = vals[wnd] + (vals[wnd + 1] - vals[wnd]) * f;
            }
        }
        let mut mask = vec![false; n];
        for wnd in 0..anchors.len() - 1 {
            for i in anchors[wnd] + 1..anchors[wnd + 1] {
                mask[i] = true;
            }
        }
        let sino = Sinogram::new(1, n, 1.0, row.clone()).unwrap();
        let trace = SinogramMask::from_bits(1, n, mask).unwrap();
        let out = limar_inpaint(&sino, &trace).unwrap();
        for i in 0..n {
            let err = (out.sino.values()[i] - row[i]).abs();
            worst_exact = worst_exact.max(err);
            if err > 1e-12 {
                exact_ok = false;
            }
        }
    }

    // No overshoot on 1000 random rows.
    let mut overshoot_ok = true;
    let mut off_trace_ok = true;
    for _ in 0..1000 {
        let n = 32;
        let row: Vec<f64> = (0..n).map(|_| rng.uniform_f64(-10.0, 10.0)).collect();
        let mask: Vec<bool> = (0..n).map(|_| rng.uniform_f64(0.0, 1.0) < 0.45).collect();
        if mask.iter().all(|&m| m) {
            continue;
        }
        let sino = Sinogram::new(1, n, 1.0, row.clone()).unwrap();
        let trace = SinogramMask::from_bits(1, n, mask.clone()).unwrap();
        let out = limar_inpaint(&sino, &trace).unwrap();
        let filled = out.sino.values();
        for i in 0..n {
            if !mask[i] {
                if filled[i] != row[i] {
                    off_trace_ok = false;
                }
                continue;
            }
            // Bracketing neighbors of the run containing i.
            let mut l = i;
            while l > 0 && mask[l - 1] {
                l -= 1;
            }
            let mut r = i;
            while r + 1 < n && mask[r + 1] {
                r += 1;
            }
            let left = if l > 0 { Some(row[l - 1]) } else { None };
            let right = if r + 1 < n { Some(row[r + 1]) } else { None };
            let (lo, hi) = match (left, right) {
                (Some(a), Some(b)) => (a.min(b), a.max(b)),
                (Some(a), None) | (None, Some(a)) => (a, a),
                (None, None) => unreachable!(),
            };
            if filled[i] < lo - 1e-12 || filled[i] > hi + 1e-12 {
                overshoot_ok = false;
            }
        }
    }
    vec![
        Check::new(
            "limar.piecewise_exact",
            exact_ok,
            format!("max abs recovery error {worst_exact:.2e} (bound 1e-12)"),
        ),
        Check::new(
            "limar.no_overshoot",
            overshoot_ok && off_trace_ok,
            "fills bounded by bracketing neighbors; identity off-trace (1000 rows)".into(),
        ),
    ]
}

/// All suites in order.
pub fn run_all() -> Vec<Check> {
    let mut out = tomo_suite();
    out.extend(gradient_suite());
    out.extend(pconv_contract_suite());
    out.extend(limar_suite());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chord_length_endpoints() {
        assert_eq!(reference::disk_chord_length(10.0, 10.0), 0.0);
        assert_eq!(reference::disk_chord_length(10.0, 0.0), 20.0);
    }

    #[test]
    fn ball_counts_small() {
        assert_eq!(reference::ball_voxel_count(0), 1);
        assert_eq!(reference::ball_voxel_count(1), 7);
    }

    #[test]
    fn rotation_by_zero_is_identity() {
        let img = reference::smooth_phantom(32);
        let rot = reference::rotate_image(&img, 0.0);
        for (a, b) in img.pixels().iter().zip(rot.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
