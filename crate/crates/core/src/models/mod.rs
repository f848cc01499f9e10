//! The two network architectures: a partial-convolution UNet that fills
//! sinogram holes and a plain UNet that removes residual image artifacts.
//!
//! Both are fixed-topology encoder/decoder stacks with skip connections,
//! two 3x3 convolutions per resolution level and channel doubling per level.
//! Forward passes record an explicit tape; backward passes consume it and
//! accumulate parameter gradients, so no general autograd machinery exists.

pub mod punet;
pub mod unet;

pub use punet::PUNet;
pub use unet::UNet;

use crate::error::{MarError, Result};
use crate::nn::{reflect_pad2d, Scalar, Tensor};

/// UNet shape configuration. `depth` counts resolution levels: a depth-4
/// network downsamples three times. Spatial dims must be divisible by
/// `2^depth` after padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

/// The inpainting network shares the shape configuration; every convolution
/// is partial and the validity mask rides along the features.
pub type PUNetConfig = UNetConfig;

impl Default for UNetConfig {
    fn default() -> Self {
        UNetConfig {
            depth: 4,
            base_channels: 16,
            in_channels: 1,
            out_channels: 1,
        }
    }
}

impl UNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(MarError::config("depth must be at least 2"));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(MarError::config("channel counts must be positive"));
        }
        Ok(())
    }

    /// Required divisibility of input spatial dims.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }

    /// Feature channels at resolution level `i`.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }
}

/// Reflect-pad spatial dims up to the next multiple of `div`. Returns the
/// padded tensor and the original dims for cropping back.
pub fn pad_to_divisible<T: Scalar>(x: &Tensor<T>, div: usize) -> Result<(Tensor<T>, (usize, usize))> {
    let [_, _, h, w] = x.shape();
    let ph = (div - h % div) % div;
    let pw = (div - w % div) % div;
    if ph == 0 && pw == 0 {
        return Ok((x.clone(), (h, w)));
    }
    Ok((reflect_pad2d(x, ph, pw)?, (h, w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_divisor_and_channels() {
        let cfg = UNetConfig::default();
        assert_eq!(cfg.divisor(), 16);
        assert_eq!(cfg.channels(0), 16);
        assert_eq!(cfg.channels(3), 128);
    }

    #[test]
    fn pad_reaches_divisibility() {
        let x = Tensor::<f32>::filled([1, 1, 180, 183], 1.0);
        let (p, (h, w)) = pad_to_divisible(&x, 16).unwrap();
        assert_eq!(p.shape(), [1, 1, 192, 192]);
        assert_eq!((h, w), (180, 183));
    }
}
