//! Plain UNet for residual-artifact removal in the image domain.

use super::UNetConfig;
use crate::error::Result;
use crate::nn::{
    clamp01, concat_channels, conv2d_backward, conv2d_forward, crop2d, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, split_channels, upsample_nearest2x,
    upsample_nearest2x_backward, ConvParams, MaxPoolIndices, Scalar, Tensor,
};
use crate::rng::SeedRng;

#[derive(Debug, Clone)]
pub(crate) struct ConvBlock<T> {
    pub conv1: ConvParams<T>,
    pub conv2: ConvParams<T>,
}

impl<T: Scalar> ConvBlock<T> {
    fn new(in_ch: usize, out_ch: usize, rng: &mut SeedRng) -> Result<Self> {
        let mut conv1 = ConvParams::new(out_ch, in_ch, 3, 1)?;
        conv1.init_he(rng);
        let mut conv2 = ConvParams::new(out_ch, out_ch, 3, 1)?;
        conv2.init_he(rng);
        Ok(ConvBlock { conv1, conv2 })
    }
}

pub(crate) struct BlockTape<T> {
    x_in: Tensor<T>,
    z1: Tensor<T>,
    a1: Tensor<T>,
    z2: Tensor<T>,
}

pub struct UNetTape<T> {
    enc: Vec<BlockTape<T>>,
    pools: Vec<MaxPoolIndices>,
    dec: Vec<BlockTape<T>>,
    pre_out: Tensor<T>,
}

/// Encoder/decoder image-to-image network; the output is a direct prediction
/// in normalized [0, 1] space (clamped at inference).
pub struct UNet<T> {
    pub cfg: UNetConfig,
    enc: Vec<ConvBlock<T>>,
    dec: Vec<ConvBlock<T>>,
    out: ConvParams<T>,
}

fn block_forward<T: Scalar>(
    block: &ConvBlock<T>,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, BlockTape<T>)> {
    let z1 = conv2d_forward(x, &block.conv1)?;
    let a1 = relu_forward(&z1);
    let z2 = conv2d_forward(&a1, &block.conv2)?;
    let a2 = relu_forward(&z2);
    Ok((
        a2,
        BlockTape {
            x_in: x.clone(),
            z1,
            a1,
            z2,
        },
    ))
}

fn block_backward<T: Scalar>(
    block: &mut ConvBlock<T>,
    tape: &BlockTape<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    let g_z2 = relu_backward(&tape.z2, upstream);
    let (g_a1, gw2, gb2) = conv2d_backward(&tape.a1, &block.conv2, &g_z2)?;
    block.conv2.weights.add_to_grad(gw2.data());
    block.conv2.bias.add_to_grad(gb2.data());
    let g_z1 = relu_backward(&tape.z1, &g_a1);
    let (g_x, gw1, gb1) = conv2d_backward(&tape.x_in, &block.conv1, &g_z1)?;
    block.conv1.weights.add_to_grad(gw1.data());
    block.conv1.bias.add_to_grad(gb1.data());
    Ok(g_x)
}

impl<T: Scalar> UNet<T> {
    pub fn new(cfg: UNetConfig, rng: &mut SeedRng) -> Result<Self> {
        cfg.validate()?;
        let mut enc = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let in_ch = if i == 0 {
                cfg.in_channels
            } else {
                cfg.channels(i - 1)
            };
            enc.push(ConvBlock::new(in_ch, cfg.channels(i), rng)?);
        }
        let mut dec = Vec::with_capacity(cfg.depth - 1);
        for j in 0..cfg.depth - 1 {
            let level = cfg.depth - 2 - j;
            let in_ch = cfg.channels(level + 1) + cfg.channels(level);
            dec.push(ConvBlock::new(in_ch, cfg.channels(level), rng)?);
        }
        let mut out = ConvParams::new(cfg.out_channels, cfg.base_channels, 1, 1)?;
        out.init_he(rng);
        Ok(UNet { cfg, enc, dec, out })
    }

    /// Unclamped prediction plus the tape for a backward pass. Input spatial
    /// dims must already be divisible by `2^depth`.
    pub fn forward_tape(&self, x: &Tensor<T>) -> Result<(Tensor<T>, UNetTape<T>)> {
        let depth = self.cfg.depth;
        let mut enc_tapes = Vec::with_capacity(depth);
        let mut pools = Vec::with_capacity(depth - 1);
        let mut skips: Vec<Tensor<T>> = Vec::with_capacity(depth - 1);
        let mut cur = x.clone();
        for i in 0..depth {
            let (a2, tape) = block_forward(&self.enc[i], &cur)?;
            enc_tapes.push(tape);
            if i < depth - 1 {
                skips.push(a2.clone());
                let (pooled, idx) = maxpool2x2_forward(&a2)?;
                pools.push(idx);
                cur = pooled;
            } else {
                cur = a2;
            }
        }
        let mut dec_tapes = Vec::with_capacity(depth - 1);
        for j in 0..depth - 1 {
            let level = depth - 2 - j;
            let up = upsample_nearest2x(&cur);
            let cat = concat_channels(&up, &skips[level])?;
            let (a2, tape) = block_forward(&self.dec[j], &cat)?;
            dec_tapes.push(tape);
            cur = a2;
        }
        let pred = conv2d_forward(&cur, &self.out)?;
        Ok((
            pred,
            UNetTape {
                enc: enc_tapes,
                pools,
                dec: dec_tapes,
                pre_out: cur,
            },
        ))
    }

    /// Accumulate parameter gradients for `d_pred` through the tape.
    pub fn backward(&mut self, tape: &UNetTape<T>, d_pred: &Tensor<T>) -> Result<()> {
        let depth = self.cfg.depth;
        let (mut g, gw, gb) = conv2d_backward(&tape.pre_out, &self.out, d_pred)?;
        self.out.weights.add_to_grad(gw.data());
        self.out.bias.add_to_grad(gb.data());

        let mut skip_grads: Vec<Option<Tensor<T>>> = (0..depth - 1).map(|_| None).collect();
        for j in (0..depth - 1).rev() {
            let level = depth - 2 - j;
            let g_cat = block_backward(&mut self.dec[j], &tape.dec[j], &g)?;
            let (g_up, g_skip) = split_channels(&g_cat, self.cfg.channels(level + 1));
            skip_grads[level] = Some(g_skip);
            g = upsample_nearest2x_backward(&g_up);
        }
        for i in (0..depth).rev() {
            if i < depth - 1 {
                let mut g_pool = maxpool2x2_backward(&tape.pools[i], &g);
                if let Some(sg) = &skip_grads[i] {
                    for (a, b) in g_pool.data_mut().iter_mut().zip(sg.data()) {
                        *a += *b;
                    }
                }
                g = g_pool;
            }
            g = block_backward(&mut self.enc[i], &tape.enc[i], &g)?;
        }
        Ok(())
    }

    /// Inference: pad to divisibility, forward, clamp to [0, 1], crop back.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (xp, (h, w)) = super::pad_to_divisible(x, self.cfg.divisor())?;
        let (pred, _) = self.forward_tape(&xp)?;
        Ok(crop2d(&clamp01(&pred), h, w))
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in self.enc.iter_mut().chain(self.dec.iter_mut()) {
            out.push(&mut b.conv1.weights);
            out.push(&mut b.conv1.bias);
            out.push(&mut b.conv2.weights);
            out.push(&mut b.conv2.bias);
        }
        out.push(&mut self.out.weights);
        out.push(&mut self.out.bias);
        out
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, blocks) in [("enc", &self.enc), ("dec", &self.dec)] {
            for (i, b) in blocks.iter().enumerate() {
                out.push((format!("{prefix}{i}.c1.w"), &b.conv1.weights));
                out.push((format!("{prefix}{i}.c1.b"), &b.conv1.bias));
                out.push((format!("{prefix}{i}.c2.w"), &b.conv2.weights));
                out.push((format!("{prefix}{i}.c2.b"), &b.conv2.bias));
            }
        }
        out.push(("out.w".to_string(), &self.out.weights));
        out.push(("out.b".to_string(), &self.out.bias));
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (prefix, blocks) in [("enc", &mut self.enc), ("dec", &mut self.dec)] {
            for (i, b) in blocks.iter_mut().enumerate() {
                out.push((format!("{prefix}{i}.c1.w"), &mut b.conv1.weights));
                out.push((format!("{prefix}{i}.c1.b"), &mut b.conv1.bias));
                out.push((format!("{prefix}{i}.c2.w"), &mut b.conv2.weights));
                out.push((format!("{prefix}{i}.c2.b"), &mut b.conv2.bias));
            }
        }
        out.push(("out.w".to_string(), &mut self.out.weights));
        out.push(("out.b".to_string(), &mut self.out.bias));
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.ensure_grad();
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::l1_loss_weighted;

    fn tiny_cfg() -> UNetConfig {
        UNetConfig {
            depth: 3,
            base_channels: 4,
            in_channels: 1,
            out_channels: 1,
        }
    }

    fn random_tensor(shape: [usize; 4], rng: &mut SeedRng) -> Tensor<f64> {
        let data = (0..shape.iter().product())
            .map(|_| rng.uniform_f64(0.0, 1.0))
            .collect();
        Tensor::from_vec(shape, data).unwrap()
    }

    #[test]
    fn infer_preserves_shape_and_clamps() {
        let mut rng = SeedRng::new(61);
        let model = UNet::<f64>::new(tiny_cfg(), &mut rng).unwrap();
        let x = random_tensor([1, 1, 24, 24], &mut rng);
        let y = model.infer(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
        assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn expected_param_count() {
        // Two 3x3 convs per level with channel doubling, one 1x1 head.
        let mut rng = SeedRng::new(62);
        let cfg = UNetConfig::default();
        let model = UNet::<f32>::new(cfg, &mut rng).unwrap();
        let conv = |oc: usize, ic: usize, k: usize| oc * ic * k * k + oc;
        let mut expect = 0;
        for i in 0..4 {
            let ic = if i == 0 { 1 } else { cfg.channels(i - 1) };
            expect += conv(cfg.channels(i), ic, 3) + conv(cfg.channels(i), cfg.channels(i), 3);
        }
        for level in (0..3).rev() {
            let ic = cfg.channels(level + 1) + cfg.channels(level);
            expect += conv(cfg.channels(level), ic, 3) + conv(cfg.channels(level), cfg.channels(level), 3);
        }
        expect += conv(1, 16, 1);
        assert_eq!(model.param_count(), expect);
        assert_eq!(model.param_count(), 487_009);
    }

    #[test]
    fn gradient_reaches_every_parameter() {
        let mut rng = SeedRng::new(63);
        let mut model = UNet::<f64>::new(tiny_cfg(), &mut rng).unwrap();
        let x = random_tensor([2, 1, 16, 16], &mut rng);
        let target = random_tensor([2, 1, 16, 16], &mut rng);
        let hole = Tensor::zeros([2, 1, 16, 16]);
        model.zero_grads();
        let (pred, tape) = model.forward_tape(&x).unwrap();
        let (_, dpred) = l1_loss_weighted(&pred, &target, &hole, 1.0).unwrap();
        model.backward(&tape, &dpred).unwrap();
        for (name, p) in model.named_params() {
            let norm: f64 = p.grad().unwrap().iter().map(|g| g * g).sum();
            assert!(norm > 0.0, "parameter {name} got zero gradient");
        }
    }

    #[test]
    fn zeroing_a_skip_changes_the_output() {
        let mut rng = SeedRng::new(64);
        let model = UNet::<f64>::new(tiny_cfg(), &mut rng).unwrap();
        let x = random_tensor([1, 1, 16, 16], &mut rng);
        let y_full = model.infer(&x).unwrap();
        // Kill the skip input channels of the last decoder block: columns
        // [channels(1)..] of dec[depth-2].conv1 read the level-0 skip.
        let mut ablated = UNet::<f64>::new(tiny_cfg(), &mut rng).unwrap();
        // copy weights from model
        let src = model.named_params();
        for ((_, dst), (_, s)) in ablated.named_params_mut().into_iter().zip(src) {
            dst.data_mut().copy_from_slice(s.data());
        }
        {
            let cfg = tiny_cfg();
            let b = &mut ablated.dec[cfg.depth - 2].conv1;
            let [oc, ic, kh, kw] = b.weights.shape();
            let skip_start = cfg.channels(1);
            for o in 0..oc {
                for c in skip_start..ic {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            b.weights.set(o, c, ky, kx, 0.0);
                        }
                    }
                }
            }
        }
        let y_ablated = ablated.infer(&x).unwrap();
        assert_ne!(y_full.data(), y_ablated.data());
    }

    #[test]
    fn model_gradient_passes_finite_difference_spot_check() {
        // End-to-end check through the whole tape on a small input.
        let mut rng = SeedRng::new(65);
        let cfg = UNetConfig {
            depth: 2,
            base_channels: 2,
            in_channels: 1,
            out_channels: 1,
        };
        let mut model = UNet::<f64>::new(cfg, &mut rng).unwrap();
        let x = random_tensor([1, 1, 4, 4], &mut rng);
        let target = random_tensor([1, 1, 4, 4], &mut rng);
        let hole = Tensor::zeros([1, 1, 4, 4]);
        model.zero_grads();
        let (pred, tape) = model.forward_tape(&x).unwrap();
        let (_, dpred) = l1_loss_weighted(&pred, &target, &hole, 1.0).unwrap();
        model.backward(&tape, &dpred).unwrap();

        // Check conv1 weights of enc0 by central differences.
        let analytic = model.enc[0].conv1.weights.grad().unwrap().to_vec();
        let w0 = model.enc[0].conv1.weights.data().to_vec();
        let h = 1e-5;
        for i in 0..w0.len() {
            let mut eval = |v: f64| {
                model.enc[0].conv1.weights.data_mut()[i] = v;
                let (p, _) = model.forward_tape(&x).unwrap();
                model.enc[0].conv1.weights.data_mut()[i] = w0[i];
                l1_loss_weighted(&p, &target, &hole, 1.0).unwrap().0
            };
            let num = (eval(w0[i] + h) - eval(w0[i] - h)) / (2.0 * h);
            let denom = num.abs().max(analytic[i].abs()).max(1e-3);
            assert!(
                (num - analytic[i]).abs() / denom < 1e-4,
                "w[{i}]: numeric {num} vs analytic {}",
                analytic[i]
            );
        }
    }
}
